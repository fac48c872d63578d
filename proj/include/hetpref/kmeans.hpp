#pragma once

#include <cstddef>
#include <vector>

#include "hetpref/math.hpp"
#include "hetpref/rng.hpp"

namespace hetpref {

struct KMeansResult {
  std::vector<std::size_t> labels;
  Matrix centers;  // K x d
  std::size_t empty_reassignments = 0;
};

/// Weighted Lloyd's algorithm on the rows of X with k-means++ seeding.
/// A cluster that ends an iteration empty is re-seeded at the point farthest
/// from its center (and a warning is emitted). Deterministic given `rng`.
KMeansResult kmeans(const Matrix& X, const Vector& weights, std::size_t K, Rng& rng, std::size_t iterations = 50);

}  // namespace hetpref
