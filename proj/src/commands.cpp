#include "pan/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pan/format.hpp"
#include "pan/gradcheck.hpp"

namespace pan {

namespace fs = std::filesystem;

namespace {

std::string in_dir(const std::string& dir, const std::string& file) {
  if (dir.empty()) return file;
  fs::create_directories(dir);
  return (fs::path(dir) / file).string();
}

PointLabel label_for(const RunConfig& config, const std::string& method, const std::array<double, 3>& train_lambda) {
  return {method, train_lambda, config.score_lambda, config.score_sign};
}

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ConfigError("cannot write '" + path + "'");
}

void override_seed(RunConfig& config, std::uint64_t seed) {
  config.train.seed = seed;
  config.eval.seed = seed;
  config.baseline.seed = seed;
}

TrainResult cmd_train(const RunConfig& config, const std::string& out_dir, std::ostream& log) {
  const Dataset data = load_dataset(config.dataset);
  log << "training on " << data.train_indices.size() << " samples, lambda=(" << config.train.lambda1 << ","
      << config.train.lambda2 << "," << config.train.lambda3 << ")" << std::endl;
  TrainResult result = train_pan(data.train(), config.train, config.model, &log);
  save_model_file(to_model_file(result.models.encoder), in_dir(out_dir, "encoder.panw"));
  save_model_file(to_model_file(result.models.utility), in_dir(out_dir, "utility.panw"));
  save_model_file(to_model_file(result.models.reconstructor), in_dir(out_dir, "reconstructor.panw"));
  if (result.models.privacy) save_model_file(to_model_file(*result.models.privacy), in_dir(out_dir, "privacy.panw"));
  write_text(in_dir(out_dir, "history.csv"), result.history.to_csv());
  write_text(in_dir(out_dir, "config.txt"), serialize_config(config));
  return result;
}

Model load_encoder(const RunConfig& config, const Dataset& data, const std::string& path) {
  Model encoder = build_encoder(data.sample_shape(), config.model.encoder, 0, config.model.encoder_layers);
  load_into(encoder, load_model_file(path));
  encoder.set_mode(Mode::infer);
  return encoder;
}

TradeoffPoint cmd_evaluate(const RunConfig& config, const std::string& encoder_path, const std::string& out_dir,
                           std::ostream& log) {
  const Dataset data = load_dataset(config.dataset);
  const Model encoder = load_encoder(config, data, encoder_path);
  const auto& t = config.train;
  const TradeoffPoint point =
      evaluate_encoder(encoder, data, config.eval, label_for(config, "pan", {t.lambda1, t.lambda2, t.lambda3}), &log);
  write_text(in_dir(out_dir, "evaluation.csv"), to_csv({point}));
  log << to_csv_row(point) << std::endl;
  return point;
}

std::vector<TradeoffPoint> cmd_sweep(const RunConfig& config, const std::string& out_dir, std::ostream& log) {
  if (config.sweep.points.empty()) throw ConfigError("sweep.points is empty");
  const Dataset data = load_dataset(config.dataset);
  std::vector<TradeoffPoint> points;
  for (const auto& lambda : config.sweep.points) {
    TrainingConfig train = config.train;
    train.lambda1 = lambda[0];
    train.lambda2 = lambda[1];
    train.lambda3 = lambda[2];
    log << "sweep point lambda=(" << format_number(lambda[0]) << "," << format_number(lambda[1]) << ","
        << format_number(lambda[2]) << ")" << std::endl;
    const TrainResult trained = train_pan(data.train(), train, config.model, &log);
    points.push_back(evaluate_encoder(trained.models.encoder, data, config.eval, label_for(config, "pan", lambda), &log));
    log << to_csv_row(points.back()) << std::endl;
    write_text(in_dir(out_dir, "sweep.csv"), to_csv(points));
  }
  write_text(in_dir(out_dir, "pareto.csv"), to_csv(pareto_front(points)));
  return points;
}

std::vector<TradeoffPoint> cmd_baseline(const RunConfig& config, const std::string& name, const std::string& out_dir,
                                        std::ostream& log) {
  const Dataset data = load_dataset(config.dataset);
  const BaselineConfig& b = config.baseline;
  std::vector<TradeoffPoint> points;
  if (name == "dp") {
    for (double factor : b.dp_factors) {
      const TensorR noisy = dp_laplace(data.images, {NoiseMechanism::laplace, factor, b.seed});
      points.push_back(evaluate_perturbation(data, noisy, config.eval,
                                             label_for(config, "dp-" + format_number(factor), {0, 0, 0}), &log));
      log << to_csv_row(points.back()) << std::endl;
    }
  } else if (name == "fl") {
    const double sigma = normalized_sigma(b.fl_sigma, b.pixel_range);
    const TensorR noisy = fl_gaussian(data.images, {NoiseMechanism::gaussian, sigma, b.seed});
    points.push_back(evaluate_perturbation(data, noisy, config.eval,
                                           label_for(config, "fl-" + format_number(b.fl_sigma), {0, 0, 0}), &log));
    log << to_csv_row(points.back()) << std::endl;
  } else if (name == "dnn" || name == "hybrid") {
    const TrainResult dnn = train_plain_dnn(data.train(), config.train, config.model, &log);
    const std::array<double, 3> lambda{config.train.lambda1, 0, 0};
    if (name == "dnn") {
      points.push_back(evaluate_encoder(dnn.models.encoder, data, config.eval, label_for(config, "dnn", lambda), &log));
      log << to_csv_row(points.back()) << std::endl;
    } else {
      const TensorR features = encode(dnn.models.encoder, data.images);
      const Dataset train = data.train();
      const TensorR train_features = encode(dnn.models.encoder, train.images);
      for (Index d : b.hybrid_components) {
        const PcaBasis basis = fit_pca(train_features, d);
        for (double factor : b.hybrid_factors) {
          const TensorR perturbed = hybrid_transform(features, {d, factor, b.seed}, basis);
          const std::string method = "hybrid-d" + std::to_string(d) + "-b" + format_number(factor);
          points.push_back(
              evaluate_features(data, dnn.models.encoder, perturbed, config.eval, label_for(config, method, lambda), &log));
          log << to_csv_row(points.back()) << std::endl;
        }
      }
    }
  } else {
    throw ConfigError("unknown baseline '" + name + "' (expected dp, fl, dnn or hybrid)");
  }
  write_text(in_dir(out_dir, "baseline-" + name + ".csv"), to_csv(points));
  return points;
}

double cmd_encode(const RunConfig& config, const std::string& encoder_path, Index count, const std::string& out_dir,
                  std::ostream& log) {
  const Dataset data = load_dataset(config.dataset);
  const Model encoder = load_encoder(config, data, encoder_path);
  Dataset test = data.test();
  if (count > 0 && count < test.size()) {
    std::vector<Index> first(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) first[std::size_t(i)] = i;
    test = test.subset(first);
  }
  const auto started = std::chrono::steady_clock::now();
  const TensorR features = encoder.predict(test.images);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  TensorR labels({test.size()});
  for (Index i = 0; i < test.size(); ++i) labels[i] = Real(test.labels[std::size_t(i)]);
  save_model_file({"features", {{"features", features}, {"labels", labels}}}, in_dir(out_dir, "features.panw"));
  const double per_sample = test.size() ? seconds / double(test.size()) : 0.0;
  log << "encoded " << test.size() << " samples to " << shape_string(features.shape()) << " in " << seconds
      << " s (" << per_sample * 1e3 << " ms per sample)" << std::endl;
  return per_sample;
}

bool cmd_gradcheck(std::uint64_t seed, int cases, const std::string& corrupt, const std::string& out_dir,
                   std::ostream& log) {
  const auto report = run_gradcheck(seed, cases, corrupt);
  std::ostringstream text;
  bool ok = true;
  text << std::left << std::setw(20) << "layer" << std::setw(8) << "cases" << std::setw(16) << "max_rel_error"
       << "status\n";
  for (const auto& r : report) {
    ok = ok && r.passed;
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << r.max_relative_error;
    text << std::left << std::setw(20) << r.layer << std::setw(8) << r.cases << std::setw(16) << err.str()
         << (r.passed ? "ok" : "FAIL") << "\n";
  }
  text << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << kGradcheckTolerance << ")\n";
  log << text.str() << std::flush;
  if (!out_dir.empty()) write_text(in_dir(out_dir, "gradcheck.txt"), text.str());
  return ok;
}

}  // namespace pan
