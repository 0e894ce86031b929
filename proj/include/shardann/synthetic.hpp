#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "shardann/core.hpp"

namespace shardann {

struct MixtureSpec {
  std::size_t dim = 32;
  std::size_t clusters = 64;
  /// Rank of the subspace holding cluster centers and within-cluster spread.
  std::size_t latent_dim = 8;
  /// Per-axis center spread decays geometrically across latent axes.
  double center_scale = 10.0;
  double center_decay = 0.8;
  double within_scale = 1.0;
  /// Isotropic noise added in the ambient space.
  double noise = 0.1;
  /// Constant added to every coordinate (non-centered data, like SIFT).
  double offset = 0.0;
  std::uint64_t seed = 1;
};

/// Gaussian mixture whose clusters live near a random low-dimensional
/// subspace. Draws with different seeds share the same clusters.
class GaussianMixture {
 public:
  explicit GaussianMixture(const MixtureSpec& spec);

  /// `count` points with ids first_id, first_id + 1, ...
  Dataset sample(std::size_t count, std::uint64_t seed, DocId first_id = 0) const;

  const MixtureSpec& spec() const { return spec_; }

 private:
  MixtureSpec spec_;
  std::vector<double> basis_;    // latent_dim x dim, orthonormal rows
  std::vector<double> centers_;  // clusters x latent_dim
};

/// Independent uniform vectors in [-1, 1]^dim with positional ids.
Dataset uniform_dataset(std::size_t count, std::size_t dim, std::uint64_t seed);

}  // namespace shardann
