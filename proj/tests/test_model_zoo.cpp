#include <doctest.h>

#include "advarena/attacks.hpp"
#include "advarena/ops.hpp"
#include "advarena/weights_io.hpp"
#include "helpers.hpp"

using namespace advarena;
using namespace testutil;

namespace {

ModelSpec tiny_spec(std::size_t classes = 3) {
  ModelSpec s;
  s.channels = 1;
  s.height = 4;
  s.width = 4;
  s.classes = classes;
  s.layers = {ConvLayer{2, 3, 1, 1}, ReluLayer{}, DenseLayer{classes}};
  return s;
}

ModelSpec logreg_small() {
  ModelSpec s;
  s.channels = 1;
  s.height = 3;
  s.width = 3;
  s.classes = 4;
  s.layers = {DenseLayer{4}};
  return s;
}

// Two classes separated by mean brightness.
std::vector<ImageRecord> separable_set(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImageRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    Tensor x({1, 4, 4});
    for (auto& v : x.data()) v = label ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.4);
    out.push_back({"t" + std::to_string(i), x, label, 1 - label});
  }
  return out;
}

}  // namespace

TEST_CASE("build is deterministic per seed") {
  const auto a = Classifier::build("m", tiny_spec(), 5);
  const auto b = Classifier::build("m", tiny_spec(), 5);
  const auto c = Classifier::build("m", tiny_spec(), 6);
  CHECK(a.weights() == b.weights());
  CHECK(a.weights() != c.weights());
  Rng rng(1);
  const Tensor x = random_image(1, 4, 4, rng);
  CHECK(a.logits(x).size() == 3);
  CHECK(a.predict(x) < 3);
  CHECK(a.logits(x) == a.logits(x));
}

TEST_CASE("spec validation and text round trip") {
  ModelSpec bad = tiny_spec();
  bad.layers.back() = DenseLayer{5};  // final width must equal classes
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ModelSpec frac = tiny_spec();
  frac.layers.front() = ConvLayer{2, 3, 2, 1};  // (4 + 2 - 3) / 2 is fractional
  CHECK_THROWS_AS(frac.validate(), std::invalid_argument);
  CHECK_THROWS(Classifier::build("bad", bad, 1));
  for (const auto& s : {tiny_spec(), logreg_spec(), mlp2_spec(), cnn_a_spec(), cnn_b_spec(), holdout_cnn_spec()}) {
    CHECK_NOTHROW(s.validate());
    CHECK(ModelSpec::from_text(s.to_text()) == s);
  }
  CHECK(tiny_spec().topmost_conv_feature() == std::optional<std::size_t>(2));
  CHECK_FALSE(logreg_spec().topmost_conv_feature().has_value());
}

TEST_CASE("argmax ties resolve to the lowest index") {
  auto m = Classifier::build("z", tiny_spec(), 1);
  for (auto& w : m.mutable_weights()) w.fill(0.0);
  Rng rng(2);
  CHECK(m.predict(random_image(1, 4, 4, rng)) == 0);
}

TEST_CASE("logistic regression gradient matches the closed form") {
  const auto m = Classifier::build("lr", logreg_small(), 3);
  Rng rng(4);
  const Tensor x = random_image(1, 3, 3, rng);
  const std::size_t y = 2;
  const Tensor& W = m.weights()[0];
  const Tensor& b = m.weights()[1];
  Tensor p = ops::softmax(ops::dense(x, W, b));
  p[y] -= 1.0;
  const auto lg = m.loss_grad_input(x, y);
  for (std::size_t j = 0; j < 9; ++j) {
    double expect = 0;
    for (std::size_t i = 0; i < 4; ++i) expect += W[i * 9 + j] * p[i];
    CHECK(lg.grad[j] == doctest::Approx(expect).epsilon(1e-12));
  }
  // all-zero weights: uniform softmax and W^T (p - onehot) = 0
  auto z = m;
  for (auto& w : z.mutable_weights()) w.fill(0.0);
  const auto zg = z.loss_grad_input(x, 1);
  CHECK(linf_norm(zg.grad) == 0.0);
  CHECK(zg.loss == doctest::Approx(std::log(4.0)));
  CHECK_THROWS_AS(m.loss_grad_input(x, 4), std::invalid_argument);
  CHECK_THROWS_AS(m.logits(Tensor({1, 4, 4})), std::invalid_argument);
}

TEST_CASE("training separates a separable toy set and is deterministic") {
  const auto data = separable_set(200, 7);
  ModelSpec spec = tiny_spec(2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 0.05;
  const auto m1 = train("toy", spec, data, cfg);
  const auto m2 = train("toy", spec, data, cfg);
  CHECK(m1.weights() == m2.weights());
  CHECK(accuracy(data, [&](const Tensor& x) { return m1.predict(x); }) >= 0.99);
  CHECK_THROWS_AS(train("toy", spec, std::span<const ImageRecord>{}, cfg), std::invalid_argument);
  TrainConfig bad = cfg;
  bad.adversarial_fraction = 1.5;
  CHECK_THROWS_AS(train("toy", spec, data, bad), std::invalid_argument);
}

TEST_CASE("self-FGSM with fraction 0 is bit-identical to clean training") {
  const auto data = separable_set(64, 8);
  TrainConfig none;
  none.epochs = 2;
  TrainConfig self = none;
  self.mode = AdvMode::self_fgsm;
  self.adversarial_fraction = 0.0;
  CHECK(train("a", tiny_spec(2), data, none).weights() == train("a", tiny_spec(2), data, self).weights());
}

TEST_CASE("ensemble adversarial training leaves the sources untouched") {
  const auto data = separable_set(64, 9);
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto src = train("src", tiny_spec(2), data, cfg);
  const auto before = src.weights_hash();
  TrainConfig ens = cfg;
  ens.mode = AdvMode::ensemble_fgsm;
  ens.source_models = {"src"};
  const Classifier* sources[] = {&src};
  (void)train("ens", tiny_spec(2), data, ens, sources);
  CHECK(src.weights_hash() == before);
  CHECK_THROWS_AS(train("ens", tiny_spec(2), data, ens), std::invalid_argument);
}

TEST_CASE("weights file round trip and corruption") {
  const auto m = Classifier::build("rt", tiny_spec(), 11);
  const auto dir = temp_dir("weights");
  m.save(dir / "a.advw");
  const auto back = Classifier::load(dir / "a.advw");
  CHECK(back.weights() == m.weights());
  CHECK(back.spec() == m.spec());
  CHECK(back.name() == "rt");
  back.save(dir / "b.advw");
  CHECK(read_bytes(dir / "a.advw") == read_bytes(dir / "b.advw"));

  auto bytes = read_bytes(dir / "a.advw");
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  try {
    decode_weights(cut);
    FAIL("truncated file accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    CHECK(std::string(e.what()).find("tensor") != std::string::npos);
  }
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_weights(extra), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_weights(magic), FormatError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(decode_weights(version), FormatError);
}

TEST_CASE("default zoo: accuracy floor and adversarial training effect") {
  const auto& f = fixture();
  for (const auto& name : {"logreg", "mlp2", "cnn_a", "cnn_b", "cnn_a_adv", "cnn_a_ensadv", "holdout_cnn"}) {
    REQUIRE(f.zoo.contains(name));
    const auto& m = f.zoo.get(name);
    const double acc = accuracy(f.dev.records, [&](const Tensor& x) { return m.predict(x); });
    INFO(name << " dev accuracy " << acc);
    CHECK(acc >= 5.0 / 10.0);
  }
  // the small CNNs are well above 0.95 on a held-out slice
  const auto& cnn = f.zoo.get("cnn_a");
  CHECK(accuracy(f.dev.records, [&](const Tensor& x) { return cnn.predict(x); }) >= 0.95);

  auto robust = [&](const Classifier& m) {
    std::size_t ok = 0;
    for (const auto& r : f.dev.records) ok += m.predict(fgsm(m, r.pixels, r.true_label, 8.0 / 255.0)) == r.true_label;
    return static_cast<double>(ok) / static_cast<double>(f.dev.size());
  };
  CHECK(robust(f.zoo.get("cnn_a_adv")) > robust(f.zoo.get("cnn_a")));
  CHECK(is_adversarially_trained("cnn_a_adv"));
  CHECK_FALSE(is_adversarially_trained("cnn_a"));
}

TEST_CASE("zoo save and load") {
  const auto& f = fixture();
  const auto dir = temp_dir("zoo");
  ModelZoo z;
  z.add(f.zoo.get("logreg"));
  z.add(f.zoo.get("mlp2"));
  z.save(dir);
  const auto back = ModelZoo::load(dir);
  CHECK(back.names() == std::vector<std::string>{"logreg", "mlp2"});
  CHECK(back.get("mlp2").weights() == f.zoo.get("mlp2").weights());
  CHECK_THROWS_AS(back.get("nope"), std::out_of_range);
  CHECK_THROWS(ModelZoo::load(dir / "missing"));
}
