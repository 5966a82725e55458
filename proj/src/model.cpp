#include "pan/model.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "pan/rng.hpp"

namespace pan {

namespace {

const std::pair<LayerKind, const char*> kKindNames[] = {
    {LayerKind::conv, "conv"},       {LayerKind::maxpool, "maxpool"},
    {LayerKind::batchnorm, "batchnorm"}, {LayerKind::dense, "dense"},
    {LayerKind::relu, "relu"},       {LayerKind::softmax, "softmax"},
    {LayerKind::transposed_conv, "tconv"}, {LayerKind::unpool, "unpool"},
    {LayerKind::flatten, "flatten"},
};

std::string layer_label(std::size_t index, const LayerSpec& layer) {
  return "layer " + std::to_string(index) + " (" + format_layer(layer) + ")";
}

std::string prefix(std::size_t index, LayerKind kind) { return to_string(kind) + std::to_string(index); }

Index parse_index(const std::string& field, const std::string& whole) {
  Index value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ConfigError("bad integer '" + field + "' in layer '" + whole + "'");
  }
  return value;
}

void he_uniform(TensorR& t, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(std::max<Index>(fan_in, 1)));
  for (Index i = 0; i < t.size(); ++i) t[i] = Real(rng.uniform(-bound, bound));
}

}  // namespace

const char* to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

LayerSpec LayerSpec::conv(Index out_channels, Index kernel, Index stride, Index padding) {
  return {LayerKind::conv, out_channels, kernel, stride, padding, 1};
}
LayerSpec LayerSpec::transposed_conv(Index out_channels, Index kernel, Index stride, Index padding) {
  return {LayerKind::transposed_conv, out_channels, kernel, stride, padding, 1};
}
LayerSpec LayerSpec::maxpool(Index window, Index stride) { return {LayerKind::maxpool, 0, window, stride, 0, 1}; }
LayerSpec LayerSpec::unpool(Index scale) { return {LayerKind::unpool, 0, 0, 1, 0, scale}; }
LayerSpec LayerSpec::dense(Index units) { return {LayerKind::dense, units, 0, 1, 0, 1}; }
LayerSpec LayerSpec::of(LayerKind kind) { return {kind, 0, 0, 1, 0, 1}; }

std::string format_layer(const LayerSpec& l) {
  std::ostringstream os;
  os << to_string(l.kind);
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::transposed_conv:
      os << ':' << l.channels << ':' << l.kernel << ':' << l.stride << ':' << l.padding;
      break;
    case LayerKind::maxpool:
      os << ':' << l.kernel << ':' << l.stride;
      break;
    case LayerKind::unpool:
      os << ':' << l.scale;
      break;
    case LayerKind::dense:
      os << ':' << l.channels;
      break;
    default:
      break;
  }
  return os.str();
}

LayerSpec parse_layer(const std::string& text) {
  std::vector<std::string> fields;
  std::stringstream ss(text);
  for (std::string f; std::getline(ss, f, ':');) fields.push_back(f);
  if (fields.empty()) throw ConfigError("empty layer description");
  const std::string& kind = fields[0];
  auto arity = [&](std::size_t n) {
    if (fields.size() != n + 1) {
      throw ConfigError("layer '" + text + "' expects " + std::to_string(n) + " parameters");
    }
  };
  auto field = [&](std::size_t i) { return parse_index(fields[i], text); };
  if (kind == "conv" || kind == "tconv") {
    arity(4);
    LayerSpec l = kind == "conv" ? LayerSpec::conv(field(1), field(2), field(3), field(4))
                                 : LayerSpec::transposed_conv(field(1), field(2), field(3), field(4));
    return l;
  }
  if (kind == "maxpool") {
    arity(2);
    return LayerSpec::maxpool(field(1), field(2));
  }
  if (kind == "unpool") {
    arity(1);
    return LayerSpec::unpool(field(1));
  }
  if (kind == "dense") {
    arity(1);
    return LayerSpec::dense(field(1));
  }
  for (const auto& [k, name] : kKindNames) {
    if (kind == name) {
      arity(0);
      return LayerSpec::of(k);
    }
  }
  throw ConfigError("unknown layer kind '" + kind + "'");
}

std::string format_layers(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) out += (i ? "," : "") + format_layer(layers[i]);
  return out;
}

std::vector<LayerSpec> parse_layers(const std::string& text) {
  std::vector<LayerSpec> layers;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) layers.push_back(parse_layer(item));
  }
  return layers;
}

std::vector<Shape> infer_shapes(const Shape& input_shape, const std::vector<LayerSpec>& layers) {
  std::vector<Shape> shapes{input_shape};
  for (Index d : input_shape) {
    if (d < 1) throw DimensionError("input shape " + shape_string(input_shape) + " has a non-positive dimension");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const Shape& in = shapes.back();
    auto fail = [&](const std::string& why) -> DimensionError {
      return DimensionError(layer_label(i, l) + ": " + why + " (input " + shape_string(in) + ")");
    };
    auto need_rank = [&](std::size_t r) {
      if (in.size() != r) throw fail("expects rank " + std::to_string(r));
    };
    Shape out;
    try {
      switch (l.kind) {
        case LayerKind::conv:
          need_rank(3);
          if (l.channels < 1) throw fail("needs at least one output channel");
          out = {l.channels, conv_output_size(in[1], l.kernel, l.stride, l.padding),
                 conv_output_size(in[2], l.kernel, l.stride, l.padding)};
          break;
        case LayerKind::transposed_conv:
          need_rank(3);
          if (l.channels < 1) throw fail("needs at least one output channel");
          out = {l.channels, transposed_conv_output_size(in[1], l.kernel, l.stride, l.padding),
                 transposed_conv_output_size(in[2], l.kernel, l.stride, l.padding)};
          break;
        case LayerKind::maxpool:
          need_rank(3);
          if (l.kernel < 1 || l.kernel > in[1] || l.kernel > in[2]) throw fail("pooling window does not fit");
          out = {in[0], conv_output_size(in[1], l.kernel, l.stride, 0),
                 conv_output_size(in[2], l.kernel, l.stride, 0)};
          break;
        case LayerKind::unpool:
          need_rank(3);
          if (l.scale < 1) throw fail("scale must be >= 1");
          out = {in[0], in[1] * l.scale, in[2] * l.scale};
          break;
        case LayerKind::batchnorm:
          if (in.size() != 3 && in.size() != 1) throw fail("expects rank 1 or 3");
          out = in;
          break;
        case LayerKind::dense:
          need_rank(1);
          if (l.channels < 1) throw fail("needs at least one unit");
          out = {l.channels};
          break;
        case LayerKind::softmax:
          need_rank(1);
          out = in;
          break;
        case LayerKind::relu:
          out = in;
          break;
        case LayerKind::flatten:
          out = {shape_size(in)};
          break;
      }
    } catch (const DimensionError& e) {
      const std::string what = e.what();
      if (what.rfind("layer ", 0) == 0) throw;
      throw fail(what);
    }
    shapes.push_back(std::move(out));
  }
  return shapes;
}

Model::Model(std::string name, Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed)
    : name_(std::move(name)), input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  shapes_ = infer_shapes(input_shape_, layers_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Shape& in = shapes_[i];
    const std::string p = prefix(i, l.kind);
    Rng rng(derive_seed(seed, i));
    switch (l.kind) {
      case LayerKind::conv: {
        TensorR w({l.channels, in[0], l.kernel, l.kernel});
        he_uniform(w, in[0] * l.kernel * l.kernel, rng);
        parameters_[p + ".weight"] = std::move(w);
        parameters_[p + ".bias"] = TensorR({l.channels});
        break;
      }
      case LayerKind::transposed_conv: {
        TensorR w({in[0], l.channels, l.kernel, l.kernel});
        he_uniform(w, in[0] * l.kernel * l.kernel, rng);
        parameters_[p + ".weight"] = std::move(w);
        parameters_[p + ".bias"] = TensorR({l.channels});
        break;
      }
      case LayerKind::dense: {
        TensorR w({in[0], l.channels});
        he_uniform(w, in[0], rng);
        parameters_[p + ".weight"] = std::move(w);
        parameters_[p + ".bias"] = TensorR({l.channels});
        break;
      }
      case LayerKind::batchnorm: {
        const Index c = in[0];
        parameters_[p + ".gamma"] = TensorR::constant({c}, 1);
        parameters_[p + ".beta"] = TensorR({c});
        buffers_[p + ".running_mean"] = TensorR({c});
        buffers_[p + ".running_var"] = TensorR::constant({c}, 1);
        break;
      }
      default:
        break;
    }
  }
}

Index Model::parameter_count() const {
  Index n = 0;
  for (const auto& [name, t] : parameters_) n += t.size();
  return n;
}

std::vector<std::pair<std::string, const TensorR*>> Model::state() const {
  std::map<std::string, const TensorR*> all;
  for (const auto& [name, t] : parameters_) all[name] = &t;
  for (const auto& [name, t] : buffers_) all[name] = &t;
  return {all.begin(), all.end()};
}

void Model::set_tensor(const std::string& name, TensorR value) {
  TensorR* target = nullptr;
  if (auto it = parameters_.find(name); it != parameters_.end()) target = &it->second;
  if (auto it = buffers_.find(name); it != buffers_.end()) target = &it->second;
  if (!target) throw ContractError("model '" + name_ + "' has no tensor named '" + name + "'");
  if (target->shape() != value.shape()) {
    throw DimensionError("tensor '" + name + "' expects shape " + shape_string(target->shape()) + ", got " +
                         shape_string(value.shape()));
  }
  *target = std::move(value);
}

namespace {

VarR run_layers(const Model& model, TapeR& tape, VarR x, NamedVars* bound, ForwardOptions options,
                ParameterMap<Real>& buffers) {
  Shape expected{x.shape().empty() ? 0 : x.shape()[0]};
  expected.insert(expected.end(), model.input_shape().begin(), model.input_shape().end());
  if (x.shape() != expected) {
    throw DimensionError("model '" + model.name() + "' expects input " + shape_string(expected) + ", got " +
                         shape_string(x.shape()));
  }
  auto bind = [&](const std::string& name) {
    const TensorR& value = model.parameters().at(name);
    if (!options.trainable) return tape.constant(value);
    VarR v = tape.variable(value);
    if (bound) bound->emplace_back(name, v);
    return v;
  };
  const bool training = model.mode() == Mode::train;
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string p = prefix(i, l.kind);
    switch (l.kind) {
      case LayerKind::conv:
        x = conv2d(x, bind(p + ".weight"), bind(p + ".bias"), l.stride, l.padding);
        break;
      case LayerKind::transposed_conv:
        x = transposed_conv2d(x, bind(p + ".weight"), bind(p + ".bias"), l.stride, l.padding);
        break;
      case LayerKind::maxpool:
        x = maxpool2d(x, l.kernel, l.stride);
        break;
      case LayerKind::unpool:
        x = unpool_nearest(x, l.scale);
        break;
      case LayerKind::batchnorm: {
        VarR gamma = bind(p + ".gamma");
        VarR beta = bind(p + ".beta");
        x = batchnorm(x, gamma, beta, training, buffers.at(p + ".running_mean"), buffers.at(p + ".running_var"),
                      options.update_running);
        break;
      }
      case LayerKind::dense:
        x = dense(x, bind(p + ".weight"), bind(p + ".bias"));
        break;
      case LayerKind::relu:
        x = relu(x);
        break;
      case LayerKind::softmax:
        x = softmax(x);
        break;
      case LayerKind::flatten:
        x = flatten(x);
        break;
    }
  }
  return x;
}

}  // namespace

VarR Model::forward(TapeR& tape, VarR input, NamedVars* bound, ForwardOptions options) {
  return run_layers(*this, tape, input, bound, options, buffers_);
}

VarR Model::forward(TapeR& tape, VarR input) const {
  ParameterMap<Real> scratch = buffers_;
  return run_layers(*this, tape, input, nullptr, {.trainable = false, .update_running = false}, scratch);
}

TensorR Model::forward(const TensorR& input) const {
  TapeR tape;
  ParameterMap<Real> scratch = buffers_;
  VarR out = run_layers(*this, tape, tape.constant(input), nullptr, {.trainable = false, .update_running = false},
                        scratch);
  return out.value();
}

TensorR Model::predict(const TensorR& input, Index chunk) const {
  const Index n = input.rank() > 0 ? input.dim(0) : 0;
  if (mode_ == Mode::train || n <= chunk) return forward(input);
  const Index per_in = shape_size(input_shape_);
  const Index per_out = shape_size(output_shape());
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), output_shape().begin(), output_shape().end());
  TensorR out(out_shape);
  for (Index start = 0; start < n; start += chunk) {
    const Index m = std::min(chunk, n - start);
    Shape in_shape{m};
    in_shape.insert(in_shape.end(), input_shape_.begin(), input_shape_.end());
    TensorR part(in_shape, input.array().segment(start * per_in, m * per_in));
    out.array().segment(start * per_out, m * per_out) = forward(part).array();
  }
  return out;
}

bool same_weights(const Model& a, const Model& b) {
  const auto sa = a.state();
  const auto sb = b.state();
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].first != sb[i].first || !(*sa[i].second == *sb[i].second)) return false;
  }
  return true;
}

}  // namespace pan
