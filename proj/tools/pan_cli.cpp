// Command-line front end: train | evaluate | sweep | baseline | encode | gradcheck.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pan/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "key=value config file (defaults apply when omitted)");
  cmd->add_option("--seed", common.seed, "overrides train.seed, eval.seed and baseline.seed");
  cmd->add_option("--out", common.out, "output directory")->capture_default_str();
}

pan::RunConfig resolve(const Common& common) {
  pan::RunConfig config = common.config.empty() ? pan::RunConfig() : pan::load_config(common.config);
  if (common.seed) pan::override_seed(config, *common.seed);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy adversarial network: training, attacker evaluation and baselines"};
  app.require_subcommand(1);

  Common train_opts, eval_opts, sweep_opts, base_opts, enc_opts, grad_opts;
  std::string eval_encoder, enc_encoder, baseline_name, corrupt;
  pan::Index count = 1000;
  int cases = 20;

  auto* train = app.add_subcommand("train", "train encoder, discriminators and reconstructor");
  add_common(train, train_opts);
  auto* evaluate = app.add_subcommand("evaluate", "attack a frozen encoder with fresh third-party models");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--encoder", eval_encoder, "encoder weight file")->required();
  auto* sweep = app.add_subcommand("sweep", "train and evaluate every sweep.points multiplier triple");
  add_common(sweep, sweep_opts);
  auto* baseline = app.add_subcommand("baseline", "run a comparison scheme over its grid");
  add_common(baseline, base_opts);
  baseline->add_option("--name", baseline_name, "dp, fl, dnn or hybrid")
      ->required()
      ->check(CLI::IsMember({"dp", "fl", "dnn", "hybrid"}));
  auto* enc = app.add_subcommand("encode", "encode test samples with a trained encoder");
  add_common(enc, enc_opts);
  enc->add_option("--encoder", enc_encoder, "encoder weight file")->required();
  enc->add_option("--count", count, "number of test samples (0 = all)")->capture_default_str();
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every layer gradient");
  add_common(grad, grad_opts);
  grad->add_option("--cases", cases, "random cases per layer")->capture_default_str();
  grad->add_option("--corrupt", corrupt, "scale one layer's analytic gradient (fault injection)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      pan::cmd_train(resolve(train_opts), train_opts.out, std::cout);
    } else if (*evaluate) {
      pan::cmd_evaluate(resolve(eval_opts), eval_encoder, eval_opts.out, std::cout);
    } else if (*sweep) {
      pan::cmd_sweep(resolve(sweep_opts), sweep_opts.out, std::cout);
    } else if (*baseline) {
      pan::cmd_baseline(resolve(base_opts), baseline_name, base_opts.out, std::cout);
    } else if (*enc) {
      pan::cmd_encode(resolve(enc_opts), enc_encoder, count, enc_opts.out, std::cout);
    } else if (*grad) {
      const auto config = resolve(grad_opts);
      return pan::cmd_gradcheck(grad_opts.seed.value_or(config.train.seed), cases, corrupt,
                                grad_opts.out, std::cout)
                 ? 0
                 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
