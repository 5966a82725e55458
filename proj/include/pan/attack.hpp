#ifndef PAN_ATTACK_HPP
#define PAN_ATTACK_HPP

// Third-party evaluation of a frozen encoder: independently trained utility
// discriminators, privacy discriminators and reconstructors, plus the
// utility/privacy tradeoff arithmetic.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pan/data.hpp"
#include "pan/zoo.hpp"

namespace pan {

/// Training budget shared by every attacker so compared encoders face the same
/// adversary.
struct AttackerBudget {
  int epochs = 15;
  Index batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 7;
  std::vector<std::vector<Index>> classifier_hidden{{128}, {256, 64}};
  std::vector<std::string> reconstructors{"deconv", "mirror"};
};

struct Attacker {
  std::string name;
  Model model;
};

/// Candidate discriminators and reconstructors trained on (E(I), target) pairs.
struct AttackerEnsemble {
  std::vector<Attacker> utility;
  std::vector<Attacker> privacy;  // empty without privacy labels
  std::vector<Attacker> reconstructors;
};

/// Evaluates `encoder` (in inference mode, never modified) on every sample of `data`.
TensorR encode(const Model& encoder, const TensorR& images);

/// Trains the ensemble on the train split of `data`. The mirror reconstructor
/// is always included; privacy discriminators are skipped when `data` has no
/// privacy labels.
AttackerEnsemble train_third_party_attackers(const Model& encoder, const Dataset& data, const AttackerBudget& budget,
                                             std::ostream* log = nullptr);

/// Same, for precomputed train-split features. `encoder` (optional) provides
/// the mirror architecture; without it only generic reconstructors are built.
AttackerEnsemble train_attackers_on_features(const TensorR& train_features, const Dataset& train,
                                             const Model* encoder, const AttackerBudget& budget,
                                             std::ostream* log = nullptr);

/// Top-1 accuracy in percent.
double accuracy(const Model& classifier, const TensorR& features, const std::vector<int>& labels);

/// Per-member held-out metrics on precomputed test features.
std::vector<double> utility_scores(const AttackerEnsemble& ensemble, const TensorR& features,
                                   const std::vector<int>& labels);
std::vector<double> reconstruction_errors(const AttackerEnsemble& ensemble, const TensorR& features,
                                          const TensorR& images);

/// u: best utility discriminator accuracy (%) on `test`.
double eval_utility(const Model& encoder, const AttackerEnsemble& ensemble, const Dataset& test);

/// p1: best privacy discriminator accuracy (%); absent without privacy labels
/// or privacy attackers.
std::optional<double> eval_privacy_p1(const Model& encoder, const AttackerEnsemble& ensemble, const Dataset& test);

struct ReconstructionPrivacy {
  double p2 = 0;
  double log_p2 = 0;
};

/// p2: lowest reconstruction MSE over the reconstructors, log_p2 = log10(1 + p2).
ReconstructionPrivacy eval_privacy_p2(const Model& encoder, const AttackerEnsemble& ensemble, const Dataset& test);

double log_normalize(double p2);

struct TradeoffPoint {
  std::string method;
  double lambda1 = 0, lambda2 = 0, lambda3 = 0;
  double u = 0;
  std::optional<double> p1;
  double p2 = 0;
  double log_p2 = 0;
  double score = 0;
};

/// lambda1*u + lambda2*(100 - p1) + sign*lambda3*log_p2; the p1 term is dropped
/// when p1 is absent. sign is '+' or '-'.
double tradeoff_score(const TradeoffPoint& point, const std::array<double, 3>& lambda, char sign = '+');

/// Points not dominated in (u, 100 - p1, log_p2), all maximized. When any
/// point lacks p1 the comparison uses (u, log_p2) only. Input order is kept.
std::vector<TradeoffPoint> pareto_front(const std::vector<TradeoffPoint>& points);

/// True when `a` is at least as good as `b` in every objective and better in one.
bool dominates(const TradeoffPoint& a, const TradeoffPoint& b, bool use_p1);

inline constexpr const char* kTradeoffHeader = "method,lambda1,lambda2,lambda3,utility,p1,p2,log_p2,score";
std::string to_csv_row(const TradeoffPoint& point);
std::string to_csv(const std::vector<TradeoffPoint>& points);

/// How a point is labelled and scored: `train_lambda` is recorded in the
/// lambda columns, `score_lambda` and `sign` feed tradeoff_score.
struct PointLabel {
  std::string method;
  std::array<double, 3> train_lambda{0, 0, 0};
  std::array<double, 3> score_lambda{0.4, 0.3, 0.3};
  char sign = '+';
};

/// Trains attackers against `encoder` and fills every metric of a point.
TradeoffPoint evaluate_encoder(const Model& encoder, const Dataset& data, const AttackerBudget& budget,
                               const PointLabel& label, std::ostream* log = nullptr);

/// Point with the label fields set and metrics zeroed.
TradeoffPoint labelled_point(const PointLabel& label);

}  // namespace pan

#endif  // PAN_ATTACK_HPP
