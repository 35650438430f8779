#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "kinetic/distributions.hpp"
#include "kinetic/linalg.hpp"

namespace kinetic {

// One realization of the multi-species Poisson field, restricted to a ball.
// Each particle's randomness comes from its own substream of (seed, species,
// index), so realizations are bit-identical across thread counts.
struct ParticleConfiguration {
  struct SpeciesParticles {
    double charge = 1.0;
    std::vector<Vec3> x, v;
  };
  std::vector<SpeciesParticles> species;
  double sampling_radius = 0.0;
  std::uint64_t seed = 0;
  // Set by free_flow: positions no longer fill the sampling ball, so the
  // radius is only historical metadata.
  bool radius_stale = false;

  std::size_t total_count() const;
};

// Counts are Poisson(n_l * (4/3) pi R^3) per species; positions uniform in
// the ball, velocities from g_l / n_l. Expected count above 1e9 is refused.
ParticleConfiguration sample_poisson(const SpeciesSet& set, double R,
                                     std::uint64_t seed);

// x -> x + v tau, velocities unchanged. The Poisson law with velocity
// marginal g is invariant under this map on all of space; on a finite ball
// it only transports the sampled window.
ParticleConfiguration free_flow(const ParticleConfiguration& config, double tau);

struct EmpiricalMoment {
  double mean_first = 0, mean_second = 0;
  double std_error_first = 0, std_error_second = 0;
  std::size_t n_samples = 0;
};

// Monte Carlo moments of <f, phi> where f is the rescaled empirical measure
// L^-3 sum_k delta_{(x_k/L, v_k)}; phi(y, w) must vanish for |y| >
// support_radius_y. The sampling ball is sized to contain the support.
EmpiricalMoment empirical_pair_moment(
    const SpeciesSet& set, double L,
    const std::function<double(const Vec3&, const Vec3&)>& phi,
    double support_radius_y, std::size_t n_samples, std::uint64_t seed);

// Columnar little-endian dump: u64 species count, then per species a u64
// particle count and f64 charge, then x[0..n) and v[0..n) as xyz triples.
void dump_particles(const ParticleConfiguration& config, std::ostream& os);
ParticleConfiguration load_particles(std::istream& is);

}  // namespace kinetic
