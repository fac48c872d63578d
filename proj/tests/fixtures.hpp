#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hetpref/rewards.hpp"

namespace hetpref::testing {

/// Catalog with explicit per-prompt feature matrices.
inline Catalog catalog_of(const std::vector<Matrix>& features) {
  std::vector<Prompt> prompts;
  for (std::size_t p = 0; p < features.size(); ++p) {
    Prompt pr;
    pr.id = "p" + std::to_string(p);
    pr.features = features[p];
    for (Eigen::Index r = 0; r < features[p].rows(); ++r) pr.response_ids.push_back("r" + std::to_string(r));
    prompts.push_back(std::move(pr));
  }
  return Catalog(static_cast<std::size_t>(features.front().cols()), std::move(prompts));
}

/// Random catalog: `prompts` prompts with sizes in [min_n, max_n], features uniform in [-scale, scale].
inline Catalog random_catalog(std::mt19937_64& gen, std::size_t prompts, std::size_t min_n, std::size_t max_n,
                              std::size_t d, double scale = 1.0) {
  std::uniform_int_distribution<std::size_t> size(min_n, max_n);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Matrix> f;
  for (std::size_t p = 0; p < prompts; ++p) {
    Matrix m(static_cast<Eigen::Index>(size(gen)), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
    f.push_back(m);
  }
  return catalog_of(f);
}

inline Vector random_vector(std::mt19937_64& gen, Eigen::Index n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(gen);
  return v;
}

inline Vector random_simplex(std::mt19937_64& gen, Eigen::Index n) {
  std::exponential_distribution<double> e(1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = e(gen);
  return v / v.sum();
}

}  // namespace hetpref::testing
