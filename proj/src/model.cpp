#include "advarena/model.hpp"

#include <cmath>
#include <sstream>

#include "advarena/rng.hpp"
#include "advarena/weights_io.hpp"

namespace advarena {

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

std::vector<Shape> ModelSpec::output_shapes() const {
  if (channels == 0 || height == 0 || width == 0) throw std::invalid_argument("model spec: zero input extent");
  if (classes < 2) throw std::invalid_argument("model spec: need at least 2 classes");
  if (layers.empty()) throw std::invalid_argument("model spec: no layers");
  std::vector<Shape> shapes;
  Shape cur = input_shape();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::visit(overloaded{[&](const ConvLayer& c) {
                            if (cur.size() != 3)
                              throw std::invalid_argument("model spec: conv layer " + std::to_string(i) +
                                                          " follows a dense layer");
                            if (c.out_channels == 0) throw std::invalid_argument("model spec: conv with 0 channels");
                            const auto g = ops::conv_geometry(cur[1], cur[2], c.kernel, c.stride, c.pad);
                            cur = {c.out_channels, g.out_h, g.out_w};
                          },
                          [&](const DenseLayer& d) {
                            if (d.width == 0) throw std::invalid_argument("model spec: dense with width 0");
                            cur = {d.width};
                          },
                          [&](const ReluLayer&) {}},
               layers[i]);
    shapes.push_back(cur);
  }
  if (cur != Shape{classes})
    throw std::invalid_argument("model spec: final layer produces " + shape_str(cur) + ", expected [" +
                                std::to_string(classes) + "] logits");
  return shapes;
}

std::vector<Shape> ModelSpec::weight_shapes() const {
  const auto outs = output_shapes();
  std::vector<Shape> w;
  Shape cur = input_shape();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::visit(overloaded{[&](const ConvLayer& c) {
                            w.push_back({c.out_channels, cur[0], c.kernel, c.kernel});
                            w.push_back({c.out_channels});
                          },
                          [&](const DenseLayer& d) {
                            w.push_back({d.width, shape_size(cur)});
                            w.push_back({d.width});
                          },
                          [&](const ReluLayer&) {}},
               layers[i]);
    cur = outs[i];
  }
  return w;
}

void ModelSpec::validate() const { (void)output_shapes(); }

std::optional<std::size_t> ModelSpec::topmost_conv_feature() const {
  std::optional<std::size_t> level;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<ConvLayer>(layers[i])) {
      level = i + 1;
      if (i + 1 < layers.size() && std::holds_alternative<ReluLayer>(layers[i + 1])) level = i + 2;
    }
  }
  return level;
}

std::string ModelSpec::to_text() const {
  std::ostringstream os;
  os << "input " << channels << ' ' << height << ' ' << width << '\n';
  os << "classes " << classes << '\n';
  for (const auto& l : layers)
    std::visit(overloaded{[&](const ConvLayer& c) {
                            os << "conv " << c.out_channels << ' ' << c.kernel << ' ' << c.stride << ' ' << c.pad
                               << '\n';
                          },
                          [&](const DenseLayer& d) { os << "dense " << d.width << '\n'; },
                          [&](const ReluLayer&) { os << "relu\n"; }},
               l);
  return os.str();
}

ModelSpec ModelSpec::from_text(std::string_view text) {
  ModelSpec spec;
  spec.layers.clear();
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool saw_input = false, saw_classes = false;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument("model spec line " + std::to_string(line_no) + ": " + why);
    };
    if (key == "kind" || key == "name") continue;
    if (key == "input") {
      if (!(ls >> spec.channels >> spec.height >> spec.width)) fail("expected 'input C H W'");
      saw_input = true;
    } else if (key == "classes") {
      if (!(ls >> spec.classes)) fail("expected 'classes C'");
      saw_classes = true;
    } else if (key == "conv") {
      ConvLayer c{};
      if (!(ls >> c.out_channels >> c.kernel >> c.stride >> c.pad)) fail("expected 'conv out kernel stride pad'");
      spec.layers.emplace_back(c);
    } else if (key == "dense") {
      DenseLayer d{};
      if (!(ls >> d.width)) fail("expected 'dense width'");
      spec.layers.emplace_back(d);
    } else if (key == "relu") {
      spec.layers.emplace_back(ReluLayer{});
    } else {
      fail("unknown layer '" + key + "'");
    }
  }
  if (!saw_input || !saw_classes) throw std::invalid_argument("model spec: missing input or classes line");
  spec.validate();
  return spec;
}

// ---- classifier ------------------------------------------------------------------------------------

Classifier::Classifier(std::string name, ModelSpec spec, std::vector<Tensor> weights)
    : name_(std::move(name)), spec_(std::move(spec)), weights_(std::move(weights)) {
  const auto shapes = spec_.weight_shapes();
  if (shapes.size() != weights_.size())
    throw std::invalid_argument("classifier " + name_ + ": expected " + std::to_string(shapes.size()) +
                                " weight tensors, got " + std::to_string(weights_.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (weights_[i].shape() != shapes[i])
      throw std::invalid_argument("classifier " + name_ + ": weight " + std::to_string(i) + " has shape " +
                                  shape_str(weights_[i].shape()) + ", spec requires " + shape_str(shapes[i]));
  std::size_t off = 0;
  for (const auto& l : spec_.layers) {
    param_offset_.push_back(off);
    if (!std::holds_alternative<ReluLayer>(l)) off += 2;
  }
}

Classifier Classifier::build(std::string name, const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> weights;
  for (const auto& shape : spec.weight_shapes()) {
    Tensor t(shape);
    if (shape.size() > 1) {
      const std::size_t fan_in = shape_size(shape) / shape[0];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : t.data()) v = rng.uniform(-bound, bound);
    }
    weights.push_back(std::move(t));
  }
  return Classifier(std::move(name), spec, std::move(weights));
}

void Classifier::check_input(const Tensor& x) const {
  if (x.shape() != spec_.input_shape())
    throw std::invalid_argument("classifier " + name_ + ": input shape " + shape_str(x.shape()) + ", expected " +
                                shape_str(spec_.input_shape()));
}

Trace Classifier::forward(const Tensor& x) const {
  check_input(x);
  Trace t;
  t.acts.reserve(spec_.layers.size() + 1);
  t.acts.push_back(x);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const Tensor& in = t.acts.back();
    const std::size_t p = param_offset_[i];
    Tensor out = std::visit(
        overloaded{[&](const ConvLayer& c) {
                     return ops::add_channel_bias(ops::conv2d(in, weights_[p], c.stride, c.pad), weights_[p + 1]);
                   },
                   [&](const DenseLayer&) { return ops::dense(in, weights_[p], weights_[p + 1]); },
                   [&](const ReluLayer&) { return ops::relu(in); }},
        spec_.layers[i]);
    t.acts.push_back(std::move(out));
  }
  return t;
}

Tensor Classifier::logits(const Tensor& x) const { return forward(x).acts.back(); }

std::size_t Classifier::predict(const Tensor& x) const { return argmax(logits(x).data()); }

Tensor Classifier::probabilities(const Tensor& x) const { return ops::softmax(logits(x)); }

ops::LossGrad Classifier::loss_grad_input(const Tensor& x, std::size_t label) const {
  if (label >= spec_.classes)
    throw std::invalid_argument("classifier " + name_ + ": label " + std::to_string(label) + " out of range");
  const Trace t = forward(x);
  auto lg = ops::softmax_cross_entropy(t.logits(), label);
  ops::LossGrad r;
  r.loss = lg.loss;
  r.grad = backward_input(t, t.acts.size() - 1, std::move(lg.grad));
  return r;
}

Tensor Classifier::backward_input(const Trace& trace, std::size_t level, Tensor upstream) const {
  if (level >= trace.acts.size()) throw std::invalid_argument("backward_input: level out of range");
  if (upstream.size() != trace.acts[level].size())
    throw std::invalid_argument("backward_input: upstream does not match activation at level " +
                                std::to_string(level));
  for (std::size_t i = level; i-- > 0;) {
    const Tensor& in = trace.acts[i];
    const std::size_t p = param_offset_[i];
    upstream = std::visit(
        overloaded{[&](const ConvLayer& c) {
                     return ops::conv2d_backward_input(in.shape(), weights_[p], c.stride, c.pad,
                                                       upstream.reshaped(trace.acts[i + 1].shape()));
                   },
                   [&](const DenseLayer&) { return ops::dense_backward_input(in.shape(), weights_[p], upstream); },
                   [&](const ReluLayer&) { return ops::relu_backward(in, upstream.reshaped(in.shape())); }},
        spec_.layers[i]);
  }
  return upstream;
}

std::vector<Tensor> Classifier::backward_params(const Trace& trace, const Tensor& upstream_logits,
                                                Tensor* grad_input) const {
  std::vector<Tensor> grads(weights_.size());
  Tensor up = upstream_logits;
  for (std::size_t i = spec_.layers.size(); i-- > 0;) {
    const Tensor& in = trace.acts[i];
    const std::size_t p = param_offset_[i];
    const bool need_input = i > 0 || grad_input != nullptr;
    std::visit(overloaded{[&](const ConvLayer& c) {
                            Tensor u = up.reshaped(trace.acts[i + 1].shape());
                            grads[p + 1] = ops::channel_bias_backward(u);
                            auto g = ops::conv2d_backward(in, weights_[p], c.stride, c.pad, u);
                            grads[p] = std::move(g.kernels);
                            if (need_input) up = std::move(g.input);
                          },
                          [&](const DenseLayer&) {
                            auto g = ops::dense_backward(in, weights_[p], up);
                            grads[p] = std::move(g.weights);
                            grads[p + 1] = std::move(g.bias);
                            if (need_input) up = std::move(g.input);
                          },
                          [&](const ReluLayer&) { up = ops::relu_backward(in, up.reshaped(in.shape())); }},
               spec_.layers[i]);
  }
  if (grad_input) *grad_input = std::move(up);
  return grads;
}

std::uint64_t Classifier::weights_hash() const { return hash_tensors(weights_); }

void Classifier::save(const std::filesystem::path& path) const {
  WeightsFile f;
  f.spec_text = "kind classifier\nname " + name_ + "\n" + spec_.to_text();
  f.tensors = weights_;
  write_weights_file(path, f);
}

Classifier Classifier::load(const std::filesystem::path& path) {
  auto f = read_weights_file(path);
  std::istringstream is(f.spec_text);
  std::string line, kind, name;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") ls >> kind;
    if (key == "name") ls >> name;
  }
  if (kind != "classifier")
    throw FormatError(path.string() + ": spec tag is '" + kind + "', expected 'classifier'");
  try {
    return Classifier(name, ModelSpec::from_text(f.spec_text), std::move(f.tensors));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace advarena
