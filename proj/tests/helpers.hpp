#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "advarena/dataset.hpp"
#include "advarena/model.hpp"
#include "advarena/rng.hpp"
#include "advarena/tensor.hpp"
#include "advarena/zoo.hpp"

namespace testutil {

using namespace advarena;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_image(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  return random_tensor({c, h, w}, rng, 0.0, 1.0);
}

/// Max relative error between an analytic gradient and central differences of f at x (step 1e-6).
/// Relative error uses max(|a|, |n|, 1e-3) as the denominator so near-zero entries are compared absolutely.
inline double fd_max_rel_error(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               const Tensor& analytic, double h = 1e-6) {
  double worst = 0.0;
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    const double num = (fp - fm) / (2 * h);
    const double den = std::max({std::abs(num), std::abs(analytic[i]), 1e-3});
    worst = std::max(worst, std::abs(num - analytic[i]) / den);
  }
  return worst;
}

/// Relative mismatch of <Ax, y> and <x, A^T y>.
inline double adjoint_gap(const Tensor& x, const Tensor& ax, const Tensor& y, const Tensor& aty) {
  const double l = dot(ax, y), r = dot(x, aty);
  return std::abs(l - r) / std::max({std::abs(l), std::abs(r), 1.0});
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("advarena_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Train split, dev split and default zoo shared by the slower tests. The zoo is trained once per build tree
/// and cached under ADVARENA_TEST_CACHE.
struct Fixture {
  DatasetSplit train;
  DatasetSplit dev;
  ModelZoo zoo;
};

const Fixture& fixture();

}  // namespace testutil
