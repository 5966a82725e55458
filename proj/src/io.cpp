#include "pan/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <algorithm>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "pan/format.hpp"

namespace pan {

// ---------------------------------------------------------------------------
// Model files

namespace {

constexpr char kMagic[4] = {'P', 'A', 'N', 'W'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }

  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  Reader(std::span<const unsigned char> bytes, const std::string& what) : bytes_(bytes), what_(what) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(const char* field) {
    const std::uint32_t n = u32(field);
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  void magic() {
    need(4, "magic");
    if (std::memcmp(bytes_.data(), kMagic, 4) != 0) fail("bad magic, expected \"PANW\"");
    pos_ += 4;
  }
  void expect_end() {
    if (pos_ != bytes_.size()) fail(std::to_string(bytes_.size() - pos_) + " trailing bytes");
  }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& msg) const { fail_at(pos_, msg); }
  [[noreturn]] void fail_at(std::size_t offset, const std::string& msg) const {
    throw ParseError(what_ + ": " + msg + " at byte offset " + std::to_string(offset));
  }

 private:
  void need(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated ") + field);
  }

  std::span<const unsigned char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_model_file(const ModelFile& file) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kModelFileVersion);
  w.str(file.name);
  w.u32(std::uint32_t(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    w.str(name);
    w.u32(std::uint32_t(t.rank()));
    for (Index d : t.shape()) w.u32(std::uint32_t(d));
    for (Index i = 0; i < t.size(); ++i) w.f32(t[i]);
  }
  return std::move(w.bytes);
}

ModelFile parse_model_file(std::span<const unsigned char> bytes, const std::string& what) {
  Reader r(bytes, what);
  r.magic();
  const std::size_t version_at = r.pos();
  if (const auto version = r.u32("version"); version != kModelFileVersion) {
    r.fail_at(version_at, "unsupported version " + std::to_string(version));
  }
  ModelFile file;
  file.name = r.str("model name");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str("tensor name");
    Shape shape(r.u32("rank"));
    for (auto& d : shape) {
      d = r.u32("dimension");
      if (d == 0) r.fail("zero dimension in tensor '" + name + "'");
    }
    TensorR t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = r.f32("tensor payload");
    file.tensors.emplace_back(std::move(name), std::move(t));
  }
  r.expect_end();
  return file;
}

void save_model_file(const ModelFile& file, const std::string& path) {
  const auto bytes = serialize_model_file(file);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw ConfigError("cannot write '" + path + "'");
}

ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model_file(bytes, path);
}

ModelFile to_model_file(const Model& model) {
  ModelFile file{model.name(), {}};
  for (const auto& [name, t] : model.state()) file.tensors.emplace_back(name, *t);
  return file;
}

void load_into(Model& model, const ModelFile& file) {
  const auto state = model.state();
  if (state.size() != file.tensors.size()) {
    throw DimensionError("model '" + model.name() + "' has " + std::to_string(state.size()) + " tensors, file '" +
                         file.name + "' has " + std::to_string(file.tensors.size()));
  }
  for (const auto& [name, t] : file.tensors) model.set_tensor(name, t);
}

// ---------------------------------------------------------------------------
// Run configuration

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  if (s.empty()) return parts;
  std::string::size_type start = 0;
  while (true) {
    const auto end = s.find(sep, start);
    parts.push_back(trim(s.substr(start, end - start)));
    if (end == std::string::npos) return parts;
    start = end + 1;
  }
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("'" + text + "' is not a valid number");
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  for (const auto& part : split_on(text, ',')) out.push_back(parse_number<T>(part));
  return out;
}

template <typename T>
std::string format_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_number(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

// Lists of hidden-width lists: "128;256,64". A lone "-" is the empty list.
std::vector<std::vector<Index>> parse_widths(const std::string& text) {
  std::vector<std::vector<Index>> out;
  for (const auto& part : split_on(text, ';')) out.push_back(part == "-" ? std::vector<Index>{} : parse_list<Index>(part));
  return out;
}

std::string format_widths(const std::vector<std::vector<Index>>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += ";";
    out += widths[i].empty() ? "-" : format_list(widths[i]);
  }
  return out;
}

std::vector<std::array<double, 3>> parse_points(const std::string& text) {
  std::vector<std::array<double, 3>> out;
  for (const auto& part : split_on(text, ';')) {
    const auto v = split_on(part, ':');
    if (v.size() != 3) throw ConfigError("sweep point '" + part + "' is not lambda1:lambda2:lambda3");
    out.push_back({parse_number<double>(v[0]), parse_number<double>(v[1]), parse_number<double>(v[2])});
  }
  return out;
}

std::string format_points(const std::vector<std::array<double, 3>>& points) {
  std::string out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) out += ";";
    out += format_number(points[i][0]) + ":" + format_number(points[i][1]) + ":" + format_number(points[i][2]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define PAN_FIELD_NUM(KEY, EXPR, TYPE)                                                     \
  Field {                                                                                  \
    KEY, [](const RunConfig& c) { return format_value(c.EXPR); },                          \
        [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<TYPE>(v); }         \
  }
#define PAN_FIELD_STR(KEY, EXPR)                                                           \
  Field {                                                                                  \
    KEY, [](const RunConfig& c) { return c.EXPR; }, [](RunConfig& c, const std::string& v) { c.EXPR = v; } \
  }

std::string format_value(double v) { return format_number(v); }
std::string format_value(long v) { return std::to_string(v); }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      PAN_FIELD_STR("dataset.name", dataset.name),
      PAN_FIELD_STR("dataset.images", dataset.images),
      PAN_FIELD_STR("dataset.labels", dataset.labels),
      PAN_FIELD_NUM("dataset.size", dataset.size, Index),
      PAN_FIELD_NUM("dataset.train_fraction", dataset.train_fraction, double),
      PAN_FIELD_NUM("dataset.seed", dataset.seed, std::uint64_t),
      PAN_FIELD_STR("model.encoder", model.encoder),
      {"model.encoder_layers", [](const RunConfig& c) { return format_layers(c.model.encoder_layers); },
       [](RunConfig& c, const std::string& v) { c.model.encoder_layers = parse_layers(v); }},
      {"model.ud_hidden", [](const RunConfig& c) { return format_list(c.model.utility_hidden); },
       [](RunConfig& c, const std::string& v) { c.model.utility_hidden = parse_list<Index>(v); }},
      {"model.pd_hidden", [](const RunConfig& c) { return format_list(c.model.privacy_hidden); },
       [](RunConfig& c, const std::string& v) { c.model.privacy_hidden = parse_list<Index>(v); }},
      PAN_FIELD_STR("model.pr", model.reconstructor),
      PAN_FIELD_NUM("train.lambda1", train.lambda1, double),
      PAN_FIELD_NUM("train.lambda2", train.lambda2, double),
      PAN_FIELD_NUM("train.lambda3", train.lambda3, double),
      PAN_FIELD_NUM("train.k", train.inner_steps, int),
      PAN_FIELD_NUM("train.epochs", train.epochs, int),
      PAN_FIELD_NUM("train.batch", train.batch_size, Index),
      PAN_FIELD_NUM("train.lr1", train.lr_utility, double),
      PAN_FIELD_NUM("train.lr2", train.lr_privacy, double),
      PAN_FIELD_NUM("train.lr3", train.lr_reconstructor, double),
      PAN_FIELD_NUM("train.lr4", train.lr_adversarial, double),
      PAN_FIELD_NUM("train.seed", train.seed, std::uint64_t),
      PAN_FIELD_NUM("eval.epochs", eval.epochs, int),
      PAN_FIELD_NUM("eval.batch", eval.batch_size, Index),
      PAN_FIELD_NUM("eval.lr", eval.lr, double),
      PAN_FIELD_NUM("eval.seed", eval.seed, std::uint64_t),
      {"eval.hidden", [](const RunConfig& c) { return format_widths(c.eval.classifier_hidden); },
       [](RunConfig& c, const std::string& v) { c.eval.classifier_hidden = parse_widths(v); }},
      {"eval.reconstructors",
       [](const RunConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.eval.reconstructors.size(); ++i) out += (i ? "," : "") + c.eval.reconstructors[i];
         return out;
       },
       [](RunConfig& c, const std::string& v) { c.eval.reconstructors = split_on(v, ','); }},
      PAN_FIELD_NUM("eval.lambda1", score_lambda[0], double),
      PAN_FIELD_NUM("eval.lambda2", score_lambda[1], double),
      PAN_FIELD_NUM("eval.lambda3", score_lambda[2], double),
      {"eval.sign", [](const RunConfig& c) { return std::string(1, c.score_sign); },
       [](RunConfig& c, const std::string& v) {
         if (v != "+" && v != "-") throw ConfigError("sign must be '+' or '-'");
         c.score_sign = v[0];
       }},
      {"sweep.points", [](const RunConfig& c) { return format_points(c.sweep.points); },
       [](RunConfig& c, const std::string& v) { c.sweep.points = parse_points(v); }},
      {"baseline.dp_factors", [](const RunConfig& c) { return format_list(c.baseline.dp_factors); },
       [](RunConfig& c, const std::string& v) { c.baseline.dp_factors = parse_list<double>(v); }},
      PAN_FIELD_NUM("baseline.fl_sigma", baseline.fl_sigma, double),
      PAN_FIELD_NUM("baseline.pixel_range", baseline.pixel_range, double),
      {"baseline.hybrid_components", [](const RunConfig& c) { return format_list(c.baseline.hybrid_components); },
       [](RunConfig& c, const std::string& v) { c.baseline.hybrid_components = parse_list<Index>(v); }},
      {"baseline.hybrid_factors", [](const RunConfig& c) { return format_list(c.baseline.hybrid_factors); },
       [](RunConfig& c, const std::string& v) { c.baseline.hybrid_factors = parse_list<double>(v); }},
      PAN_FIELD_NUM("baseline.seed", baseline.seed, std::uint64_t),
  };
  return table;
}

#undef PAN_FIELD_NUM
#undef PAN_FIELD_STR

}  // namespace

RunConfig::RunConfig() {
  for (double l1 : {0.1, 0.3, 0.5, 0.7, 0.9}) sweep.points.push_back({l1, 1.0 - l1, 0.0});
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string content = trim(line.substr(0, line.find('#')));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected key=value, got '" + content + "'");
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(number) + ": unknown key '" + key + "'");
    try {
      it->set(config, value);
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(number) + ": key '" + key + "': " + e.what());
    }
  }
  return config;
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(config) + "\n";
  return out;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

Dataset load_dataset(const DatasetConfig& config) {
  Dataset data;
  if (config.name == "synthetic") {
    data = make_synthetic_dual(config.size > 0 ? config.size : 5000, config.seed);
  } else if (config.name == "mnist-desk" || config.name == "idx") {
    data = load_idx(config.images, config.labels);
    if (config.size > 0 && config.size < data.size()) data = subsample(data, config.size, config.seed);
  } else {
    throw ConfigError("unknown dataset '" + config.name + "' (expected mnist-desk, idx or synthetic)");
  }
  return split(std::move(data), config.train_fraction, config.seed);
}

}  // namespace pan
