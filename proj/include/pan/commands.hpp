#ifndef PAN_COMMANDS_HPP
#define PAN_COMMANDS_HPP

// Drivers behind the command-line subcommands. Each writes its artifacts into
// `out_dir` (created if missing) and logs progress to `log`.

#include <iosfwd>
#include <string>
#include <vector>

#include "pan/io.hpp"

namespace pan {

/// Applies a --seed override to every seeded stage except the data split.
void override_seed(RunConfig& config, std::uint64_t seed);

/// Trains with the configured multipliers. Writes encoder.panw, utility.panw,
/// reconstructor.panw, privacy.panw (when lambda3 > 0), history.csv and the
/// resolved config.txt.
TrainResult cmd_train(const RunConfig& config, const std::string& out_dir, std::ostream& log);

/// Loads the encoder weights from `encoder_path` into the configured
/// architecture and evaluates it with freshly trained attackers. Writes
/// evaluation.csv.
TradeoffPoint cmd_evaluate(const RunConfig& config, const std::string& encoder_path, const std::string& out_dir,
                           std::ostream& log);

/// Train + evaluate for every sweep point. Writes sweep.csv and pareto.csv.
std::vector<TradeoffPoint> cmd_sweep(const RunConfig& config, const std::string& out_dir, std::ostream& log);

/// name is dp, fl, dnn or hybrid. Writes baseline-<name>.csv.
std::vector<TradeoffPoint> cmd_baseline(const RunConfig& config, const std::string& name, const std::string& out_dir,
                                        std::ostream& log);

/// Encodes the first `count` test samples (all when count <= 0) and writes
/// features.panw. Returns the mean wall-clock seconds per sample.
double cmd_encode(const RunConfig& config, const std::string& encoder_path, Index count, const std::string& out_dir,
                  std::ostream& log);

/// Prints the per-layer report; returns true when every layer passes.
bool cmd_gradcheck(std::uint64_t seed, int cases, const std::string& corrupt, const std::string& out_dir,
                   std::ostream& log);

/// Architecture-only encoder for `data` with weights from `path`.
Model load_encoder(const RunConfig& config, const Dataset& data, const std::string& path);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace pan

#endif  // PAN_COMMANDS_HPP
