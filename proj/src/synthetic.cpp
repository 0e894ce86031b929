#include "shardann/synthetic.hpp"

#include <cmath>

#include "shardann/random.hpp"

namespace shardann {

GaussianMixture::GaussianMixture(const MixtureSpec& spec) : spec_(spec) {
  if (spec.dim == 0 || spec.clusters == 0) throw Error("mixture: dim and clusters must be > 0");
  if (spec.latent_dim == 0 || spec.latent_dim > spec.dim) {
    throw Error("mixture: latent_dim must lie in [1, dim]");
  }
  Rng rng(spec.seed);
  const std::size_t d = spec.dim, r = spec.latent_dim;
  // Gram-Schmidt on Gaussian rows.
  basis_.assign(r * d, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double* row = &basis_[i * d];
    for (;;) {
      for (std::size_t j = 0; j < d; ++j) row[j] = rng.normal();
      for (std::size_t p = 0; p < i; ++p) {
        const double* prev = &basis_[p * d];
        double c = 0.0;
        for (std::size_t j = 0; j < d; ++j) c += row[j] * prev[j];
        for (std::size_t j = 0; j < d; ++j) row[j] -= c * prev[j];
      }
      double n = 0.0;
      for (std::size_t j = 0; j < d; ++j) n += row[j] * row[j];
      n = std::sqrt(n);
      if (n > 1e-6) {
        for (std::size_t j = 0; j < d; ++j) row[j] /= n;
        break;
      }
    }
  }
  centers_.assign(spec.clusters * r, 0.0);
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    double scale = spec.center_scale;
    for (std::size_t a = 0; a < r; ++a) {
      centers_[c * r + a] = scale * rng.normal();
      scale *= spec.center_decay;
    }
  }
}

Dataset GaussianMixture::sample(std::size_t count, std::uint64_t seed, DocId first_id) const {
  const std::size_t d = spec_.dim, r = spec_.latent_dim;
  Rng rng(mix_seed(seed ^ spec_.seed));
  Dataset out(d);
  out.reserve(count);
  std::vector<double> latent(r);
  std::vector<float> x(d);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = rng.below(spec_.clusters);
    for (std::size_t a = 0; a < r; ++a) {
      latent[a] = centers_[c * r + a] + spec_.within_scale * rng.normal();
    }
    for (std::size_t j = 0; j < d; ++j) {
      double v = spec_.offset + spec_.noise * rng.normal();
      for (std::size_t a = 0; a < r; ++a) v += latent[a] * basis_[a * d + j];
      x[j] = static_cast<float>(v);
    }
    out.add(first_id + i, x);
  }
  return out;
}

Dataset uniform_dataset(std::size_t count, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> data(count * dim);
  for (float& v : data) v = static_cast<float>(2.0 * rng.uniform() - 1.0);
  return Dataset::from_rows(dim, std::move(data));
}

}  // namespace shardann
