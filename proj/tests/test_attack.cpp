#include <cmath>

#include "doctest.h"
#include "pan/attack.hpp"
#include "pan/rng.hpp"

using namespace pan;

namespace {

// 1x8x8 images of small noise; `leak` writes the label as a bright pixel so
// an identity encoder exposes it.
Dataset leaky_dataset(Index n, std::uint64_t seed, bool leak_y, bool leak_z) {
  Rng rng(seed);
  Dataset d;
  d.images = TensorR({n, 1, 8, 8});
  d.labels.resize(std::size_t(n));
  d.privacy_labels.emplace(std::size_t(n));
  d.num_classes = 4;
  d.num_privacy_classes = 4;
  for (Index i = 0; i < n; ++i) {
    const int y = int(rng.below(4)), z = int(rng.below(4));
    d.labels[std::size_t(i)] = y;
    (*d.privacy_labels)[std::size_t(i)] = z;
    for (Index p = 0; p < 64; ++p) d.images[i * 64 + p] = Real(0.1 * rng.uniform());
    if (leak_y) d.images[i * 64 + y] = 1;
    if (leak_z) d.images[i * 64 + 32 + z] = 1;
  }
  return split(d, 0.75, seed);
}

AttackerBudget small_budget() {
  AttackerBudget b;
  b.epochs = 8;
  b.batch_size = 32;
  b.lr = 3e-3;
  b.classifier_hidden = {{16}, {32}};
  b.reconstructors = {"deconv"};
  return b;
}

TradeoffPoint point(double u, std::optional<double> p1, double log_p2) {
  TradeoffPoint p;
  p.u = u;
  p.p1 = p1;
  p.log_p2 = log_p2;
  return p;
}

bool brute_dominated(const TradeoffPoint& b, const std::vector<TradeoffPoint>& all, bool use_p1) {
  for (const auto& a : all) {
    std::vector<double> av{a.u, a.log_p2}, bv{b.u, b.log_p2};
    if (use_p1) {
      av.push_back(100 - *a.p1);
      bv.push_back(100 - *b.p1);
    }
    bool ge = true, gt = false;
    for (std::size_t i = 0; i < av.size(); ++i) {
      ge = ge && av[i] >= bv[i];
      gt = gt || av[i] > bv[i];
    }
    if (ge && gt) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("tradeoff score") {
  const TradeoffPoint p = point(99.1, 23.1, 0.163);
  CHECK(tradeoff_score(p, {0.4, 0.3, 0.3}) == doctest::Approx(62.76).epsilon(1e-4));
  CHECK(tradeoff_score(p, {0.4, 0.3, 0.3}, '-') == doctest::Approx(0.4 * 99.1 + 0.3 * 76.9 - 0.3 * 0.163));
  CHECK(tradeoff_score(p, {0.4, 0, 0}) == doctest::Approx(0.4 * 99.1));
  CHECK(tradeoff_score(point(90, std::nullopt, 0.5), {0.5, 0.3, 0.2}) == doctest::Approx(45 + 0.1));
  CHECK_THROWS_AS(tradeoff_score(p, {0.4, 0.3, 0.3}, '*'), ConfigError);
}

TEST_CASE("log normalization") {
  CHECK(log_normalize(0) == 0);
  CHECK(log_normalize(0.035) == doctest::Approx(std::log10(1.035)));
  double prev = -1;
  for (double p2 = 0; p2 < 5; p2 += 0.25) {
    CHECK(log_normalize(p2) > prev);
    CHECK((log_normalize(p2) == 0) == (p2 == 0));
    prev = log_normalize(p2);
  }
}

TEST_CASE("pareto front") {
  const auto single = pareto_front({point(50, 30, 0.2)});
  CHECK(single.size() == 1);

  const auto two = pareto_front({point(90, std::nullopt, 0.1), point(80, std::nullopt, 0.05)});
  REQUIRE(two.size() == 1);
  CHECK(two[0].u == 90);

  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    const bool use_p1 = seed % 2 == 0;
    std::vector<TradeoffPoint> pts;
    for (int i = 0; i < 20; ++i) {
      // Coarse grid values so ties occur.
      pts.push_back(point(double(rng.below(10)) * 10, use_p1 ? std::optional<double>(double(rng.below(10)) * 10)
                                                             : std::nullopt,
                          double(rng.below(10)) / 10));
    }
    std::vector<TradeoffPoint> expect;
    for (const auto& p : pts) {
      if (!brute_dominated(p, pts, use_p1)) expect.push_back(p);
    }
    const auto front = pareto_front(pts);
    REQUIRE(front.size() == expect.size());
    for (std::size_t i = 0; i < front.size(); ++i) {
      CHECK(front[i].u == expect[i].u);
      CHECK(front[i].log_p2 == expect[i].log_p2);
      CHECK(front[i].p1 == expect[i].p1);
    }
  }
  // A point without p1 switches the whole set to two objectives.
  const auto mixed = pareto_front({point(90, 90, 0.1), point(90, std::nullopt, 0.1), point(80, 10, 0.1)});
  CHECK(mixed.size() == 2);
}

TEST_CASE("csv rows") {
  TradeoffPoint p = point(99.5, std::nullopt, 0.25);
  p.method = "pan";
  p.lambda1 = 0.4;
  p.score = 1.5;
  CHECK(to_csv_row(p) == "pan,0.4,0,0,99.5,,0,0.25,1.5");
  const std::string csv = to_csv({p, p});
  CHECK(csv.rfind(std::string(kTradeoffHeader) + "\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("chance-level utility for an untrained discriminator") {
  Rng rng(3);
  const Index n = 3000;
  TensorR features({n, 20});
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < features.size(); ++i) features[i] = Real(rng.normal());
  for (auto& l : labels) l = int(rng.below(10));
  const Model ud = build_mlp_classifier({20}, 10, {32}, 4);
  const double u = accuracy(ud, features, labels);
  CHECK(u >= 7);
  CHECK(u <= 13);
}

TEST_CASE("sanity datasets: leaked labels are found, independent ones are not") {
  const Model identity = build_encoder({1, 8, 8}, "identity", 1);
  const AttackerBudget budget = small_budget();

  const Dataset leak = leaky_dataset(1200, 1, true, true);
  const Model before = identity;
  const AttackerEnsemble e = train_third_party_attackers(identity, leak, budget);
  CHECK(same_weights(before, identity));
  CHECK(e.utility.size() == 2);
  CHECK(e.privacy.size() == 2);
  REQUIRE(e.reconstructors.size() == 2);
  CHECK(e.reconstructors.back().name == "reconstructor-mirror");
  const Dataset test = leak.test();
  CHECK(eval_utility(identity, e, test) >= 99);
  CHECK(*eval_privacy_p1(identity, e, test) >= 99);
  const auto errors = reconstruction_errors(e, encode(identity, test.images), test.images);
  CHECK(errors[0] != errors[1]);

  // The identity mirror reproduces its input exactly.
  const ReconstructionPrivacy p2 = eval_privacy_p2(identity, e, test);
  CHECK(p2.p2 == 0);
  CHECK(p2.log_p2 == 0);

  const Dataset hidden = leaky_dataset(1200, 2, true, false);
  const AttackerEnsemble h = train_third_party_attackers(identity, hidden, budget);
  const double p1 = *eval_privacy_p1(identity, h, hidden.test());
  CHECK(p1 >= 15);
  CHECK(p1 <= 35);

  Dataset no_z = hidden;
  no_z.privacy_labels.reset();
  const AttackerEnsemble nz = train_third_party_attackers(identity, no_z, budget);
  CHECK(nz.privacy.empty());
  CHECK_FALSE(eval_privacy_p1(identity, nz, no_z.test()));
}

TEST_CASE("constant reconstructor error equals the data variance") {
  Rng rng(5);
  Dataset d;
  d.images = TensorR({2000, 1, 8, 8});
  for (Index i = 0; i < d.images.size(); ++i) d.images[i] = Real(rng.normal());
  d.labels.assign(2000, 0);
  d.num_classes = 2;
  d.test_indices.resize(2000);
  for (Index i = 0; i < 2000; ++i) d.test_indices[std::size_t(i)] = i;

  const Model identity = build_encoder({1, 8, 8}, "identity", 1);
  Model zero = build_reconstructor({1, 8, 8}, {1, 8, 8}, "deconv", 2);
  for (auto& [name, t] : zero.parameters()) t.array().setZero();
  zero.set_mode(Mode::infer);
  AttackerEnsemble e;
  e.reconstructors.push_back({"zero", zero});
  const ReconstructionPrivacy r = eval_privacy_p2(identity, e, d.test());
  CHECK(r.p2 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(r.log_p2 == doctest::Approx(std::log10(1 + r.p2)));

  // Adding a stronger member never raises p2.
  e.reconstructors.push_back({"identity", mirror_of(identity, 3)});
  const ReconstructionPrivacy stronger = eval_privacy_p2(identity, e, d.test());
  CHECK(stronger.p2 <= r.p2);
  CHECK(stronger.p2 == 0);
}

TEST_CASE("adding a privacy discriminator never lowers p1") {
  const Model identity = build_encoder({1, 8, 8}, "identity", 1);
  const Dataset d = leaky_dataset(400, 3, false, true);
  const Dataset test = d.test();
  AttackerEnsemble e;
  e.privacy.push_back({"untrained", build_mlp_classifier({1, 8, 8}, 4, {8}, 1)});
  const double weak = *eval_privacy_p1(identity, e, test);
  AttackerBudget b = small_budget();
  b.classifier_hidden = {{16}};
  b.reconstructors.clear();
  const AttackerEnsemble trained = train_third_party_attackers(identity, d, b);
  e.privacy.push_back(trained.privacy.front());
  const double strong = *eval_privacy_p1(identity, e, test);
  CHECK(strong >= weak);
  CHECK(strong == doctest::Approx(std::max(weak, accuracy(trained.privacy.front().model, encode(identity, test.images),
                                                          *test.privacy_labels))));
}

TEST_CASE("evaluate_encoder fills a scored point") {
  const Dataset d = leaky_dataset(600, 4, true, false);
  const Model enc = build_encoder({1, 8, 8}, "custom", 2, {LayerSpec::conv(2, 3, 1, 1), LayerSpec::of(LayerKind::relu)});
  PointLabel label;
  label.method = "pan";
  label.train_lambda = {0.4, 0.3, 0.3};
  const TradeoffPoint p = evaluate_encoder(enc, d, small_budget(), label);
  CHECK(p.method == "pan");
  CHECK(p.lambda2 == 0.3);
  CHECK(p.u >= 0);
  CHECK(p.u <= 100);
  REQUIRE(p.p1);
  CHECK(*p.p1 <= 100);
  CHECK(p.p2 >= 0);
  CHECK(p.log_p2 == doctest::Approx(std::log10(1 + p.p2)));
  CHECK(p.score == doctest::Approx(tradeoff_score(p, label.score_lambda, label.sign)));
}
