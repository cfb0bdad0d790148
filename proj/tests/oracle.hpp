#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "advarena/arena.hpp"
#include "advarena/rng.hpp"

namespace testutil {

using namespace advarena;

// Straight from the definitions, without sharing any helper with the library.
struct Oracle {
  std::vector<long long> raw;
  std::vector<double> normalized, worst;
};

inline Oracle brute_force(const OutcomeMatrix& m) {
  const std::size_t nA = m.attack_ids.size(), nD = m.defense_ids.size(), N = m.n_images();
  std::vector<bool> A(nA), D(nD);
  for (std::size_t a = 0; a < nA; ++a) {
    A[a] = true;
    for (std::size_t k = 0; k < N; ++k) A[a] = A[a] && m.attack_present[a][k];
  }
  for (std::size_t d = 0; d < nD; ++d) {
    D[d] = true;
    for (std::size_t a = 0; a < nA; ++a)
      for (std::size_t k = 0; k < N; ++k)
        if (m.attack_present[a][k] && m.label(a, d, k) < 0) D[d] = false;
  }
  const double cntA = static_cast<double>(std::count(A.begin(), A.end(), true));
  const double cntD = static_cast<double>(std::count(D.begin(), D.end(), true));
  Oracle o;
  for (std::size_t a = 0; a < nA; ++a) {
    long long total = 0;
    double worst = 2.0;
    for (std::size_t d = 0; d < nD; ++d) {
      if (!D[d]) continue;
      long long hits = 0;
      for (std::size_t k = 0; k < N; ++k) {
        if (!m.attack_present[a][k]) continue;
        const int l = m.label(a, d, k);
        if (m.attack_kinds[a] == SubmissionKind::targeted_attack)
          hits += l == static_cast<int>(m.target_labels[k]);
        else
          hits += l != static_cast<int>(m.true_labels[k]);
      }
      total += hits;
      worst = std::min(worst, static_cast<double>(hits) / static_cast<double>(N));
    }
    o.raw.push_back(total);
    o.normalized.push_back(cntD > 0 ? static_cast<double>(total) / (cntD * static_cast<double>(N)) : 0.0);
    o.worst.push_back(worst > 1.0 ? 0.0 : worst);
  }
  for (std::size_t d = 0; d < nD; ++d) {
    long long total = 0;
    double worst = 2.0;
    for (std::size_t a = 0; a < nA; ++a) {
      if (!A[a]) continue;
      long long ok = 0;
      for (std::size_t k = 0; k < N; ++k)
        ok += !m.attack_present[a][k] || m.label(a, d, k) == static_cast<int>(m.true_labels[k]);
      total += ok;
      worst = std::min(worst, static_cast<double>(ok) / static_cast<double>(N));
    }
    o.raw.push_back(total);
    o.normalized.push_back(cntA > 0 ? static_cast<double>(total) / (cntA * static_cast<double>(N)) : 0.0);
    o.worst.push_back(worst > 1.0 ? 0.0 : worst);
  }
  return o;
}

/// nA, nD and N are drawn from [1, max] unless fixed is set.
inline OutcomeMatrix random_matrix(Rng& rng, std::size_t max_a = 4, std::size_t max_d = 4, std::size_t max_n = 6,
                                   bool fixed = false) {
  OutcomeMatrix m;
  const std::size_t N = fixed ? max_n : 1 + rng.uniform_int(max_n);
  const std::size_t nA = fixed ? max_a : 1 + rng.uniform_int(max_a);
  const std::size_t nD = fixed ? max_d : 1 + rng.uniform_int(max_d);
  const std::size_t C = 3;
  for (std::size_t k = 0; k < N; ++k) {
    m.image_ids.push_back("img" + std::to_string(k));
    m.true_labels.push_back(rng.uniform_int(C));
    m.target_labels.push_back((m.true_labels.back() + 1 + rng.uniform_int(C - 1)) % C);
  }
  for (std::size_t a = 0; a < nA; ++a) {
    m.attack_ids.push_back("atk" + std::to_string(a));
    m.attack_kinds.push_back(rng.uniform() < 0.5 ? SubmissionKind::nontargeted_attack
                                                 : SubmissionKind::targeted_attack);
  }
  for (std::size_t d = 0; d < nD; ++d) m.defense_ids.push_back("def" + std::to_string(d));
  m.resize();
  // some attacks drop images and some defenses emit null labels; the rest are complete
  for (std::size_t a = 0; a < nA; ++a) {
    const bool lossy = rng.uniform() < 0.4;
    for (std::size_t k = 0; k < N; ++k) m.attack_present[a][k] = !lossy || rng.uniform() < 0.8;
  }
  for (std::size_t d = 0; d < nD; ++d) {
    const bool lossy = rng.uniform() < 0.4;
    for (std::size_t a = 0; a < nA; ++a)
      for (std::size_t k = 0; k < N; ++k)
        m.label(a, d, k) = lossy && rng.uniform() < 0.1 ? kNullLabel : static_cast<int>(rng.uniform_int(C));
  }
  return m;
}

}  // namespace testutil
