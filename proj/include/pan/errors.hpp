#ifndef PAN_ERRORS_HPP
#define PAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pan {

/// Tensor shapes do not chain or do not match an operation's contract.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an API precondition (non-scalar loss, unknown parameter...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Label or tensor index outside its valid range.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Invalid or inconsistent configuration values.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file (IDX, model file, config file).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pan

#endif  // PAN_ERRORS_HPP
