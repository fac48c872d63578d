#include "hetpref/kmeans.hpp"

#include <limits>

#include "hetpref/error.hpp"
#include "hetpref/log.hpp"

namespace hetpref {

namespace {

std::vector<std::size_t> assign(const Matrix& X, const Matrix& C, Vector& dist) {
  const Eigen::Index n = X.rows();
  std::vector<std::size_t> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    dist[i] = (C.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return labels;
}

}  // namespace

KMeansResult kmeans(const Matrix& X, const Vector& weights, std::size_t K, Rng& rng, std::size_t iterations) {
  const Eigen::Index n = X.rows();
  if (K < 1) {
    throw ConfigError("kmeans: K must be >= 1");
  }
  if (n < 1 || weights.size() != n) {
    throw InputError("kmeans: need >= 1 point and one weight per point");
  }
  const auto k = static_cast<Eigen::Index>(K);
  KMeansResult out;
  out.centers.resize(k, X.cols());

  // k-means++ seeding; sampling mass is weight * squared distance
  std::vector<double> mass(weights.data(), weights.data() + n);
  out.centers.row(0) = X.row(static_cast<Eigen::Index>(rng.categorical(mass)));
  Vector dist = (X.rowwise() - out.centers.row(0)).rowwise().squaredNorm();
  for (Eigen::Index c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      mass[static_cast<std::size_t>(i)] = weights[i] * dist[i];
      total += mass[static_cast<std::size_t>(i)];
    }
    // every point already coincides with a center; fall back to weights
    const std::size_t pick = total > 0.0 ? rng.categorical(mass)
                                         : rng.categorical(std::span<const double>(weights.data(), static_cast<std::size_t>(n)));
    out.centers.row(c) = X.row(static_cast<Eigen::Index>(pick));
    dist = dist.cwiseMin((X.rowwise() - out.centers.row(c)).rowwise().squaredNorm());
  }

  for (std::size_t it = 0; it < iterations; ++it) {
    out.labels = assign(X, out.centers, dist);
    Matrix sums = Matrix::Zero(k, X.cols());
    Vector mass_k = Vector::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(out.labels[static_cast<std::size_t>(i)]);
      sums.row(c) += weights[i] * X.row(i);
      mass_k[c] += weights[i];
    }
    bool moved = false;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (mass_k[c] > 0.0) {
        const Eigen::RowVectorXd next = sums.row(c) / mass_k[c];
        moved = moved || next != out.centers.row(c);
        out.centers.row(c) = next;
        continue;
      }
      Eigen::Index far = 0;
      if (dist.maxCoeff(&far) <= 0.0) {
        // fewer distinct points than clusters; nothing to split off
        continue;
      }
      warn("kmeans: cluster " + std::to_string(c) + " is empty; reseeding at the farthest point");
      out.centers.row(c) = X.row(far);
      dist[far] = 0.0;
      ++out.empty_reassignments;
      moved = true;
    }
    if (!moved) break;
  }
  out.labels = assign(X, out.centers, dist);
  return out;
}

}  // namespace hetpref
