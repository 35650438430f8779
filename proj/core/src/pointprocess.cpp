#include "kinetic/pointprocess.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "kinetic/errors.hpp"
#include "kinetic/io.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/stats.hpp"

namespace kinetic {

namespace {

// Purpose tags keep the count draw and per-particle draws on disjoint streams.
constexpr std::uint64_t kPurposeCount = 0x636e74;  // "cnt"
constexpr std::uint64_t kPurposeBody = 0x626479;   // "bdy"

Vec3 uniform_in_ball(Substream& rng, double R) {
  // Isotropic direction from a normal triple; radius by inverse CDF.
  Vec3 dir = rng.normal3();
  double n = dir.norm();
  while (n < 1e-12) {
    dir = rng.normal3();
    n = dir.norm();
  }
  double r = R * std::cbrt(rng.uniform());
  return (r / n) * dir;
}

}  // namespace

std::size_t ParticleConfiguration::total_count() const {
  std::size_t n = 0;
  for (const auto& s : species) n += s.x.size();
  return n;
}

ParticleConfiguration sample_poisson(const SpeciesSet& set, double R,
                                     std::uint64_t seed) {
  const char* op = "pointprocess.sample_poisson";
  if (!(R > 0.0)) throw ConfigError(op, "radius must be > 0");
  double volume = 4.0 / 3.0 * M_PI * R * R * R;
  double expected_total = set.total_density() * volume;
  if (expected_total > 1e9)
    throw OverflowingCount(op, "expected count " + std::to_string(expected_total) +
                                   " exceeds 1e9");
  ParticleConfiguration config;
  config.sampling_radius = R;
  config.seed = seed;
  config.species.resize(set.species.size());
  for (std::size_t l = 0; l < set.species.size(); ++l) {
    const Species& sp = set.species[l];
    auto& out = config.species[l];
    out.charge = sp.charge;
    Substream count_stream(seed, stream_id(kPurposeCount, l));
    std::uint64_t n = count_stream.poisson(sp.dist.density() * volume);
    out.x.resize(n);
    out.v.resize(n);
    parallel_for(n, [&](std::size_t i) {
      Substream body(seed, stream_id(kPurposeBody, l, i));
      out.x[i] = uniform_in_ball(body, R);
      out.v[i] = sp.dist.sample(body);
    });
  }
  return config;
}

ParticleConfiguration free_flow(const ParticleConfiguration& config, double tau) {
  ParticleConfiguration out = config;
  for (auto& sp : out.species)
    for (std::size_t i = 0; i < sp.x.size(); ++i) sp.x[i] += tau * sp.v[i];
  out.radius_stale = true;
  return out;
}

EmpiricalMoment empirical_pair_moment(
    const SpeciesSet& set, double L,
    const std::function<double(const Vec3&, const Vec3&)>& phi,
    double support_radius_y, std::size_t n_samples, std::uint64_t seed) {
  const char* op = "pointprocess.empirical_pair_moment";
  if (!(L > 0.0) || !(support_radius_y > 0.0))
    throw ConfigError(op, "L and support radius must be > 0");
  double R = L * support_radius_y * 1.001;
  double volume = 4.0 / 3.0 * M_PI * R * R * R;
  if (set.total_density() * volume > 1e9)
    throw OverflowingCount(op, "expected count exceeds 1e9");
  double inv_l3 = 1.0 / (L * L * L);
  std::vector<double> firsts = parallel_map<double>(n_samples, [&](std::size_t s) {
    ParticleConfiguration config =
        sample_poisson(set, R, stream_id(seed, 0x706d, s));
    double acc = 0.0;
    for (const auto& sp : config.species)
      for (std::size_t i = 0; i < sp.x.size(); ++i) {
        Vec3 y = sp.x[i] / L;
        if (y.norm() > support_radius_y) {
          double v = phi(y, sp.v[i]);
          if (v != 0.0)
            throw SupportEscapesBall(op, "phi does not vanish outside its "
                                         "declared support radius");
          continue;
        }
        acc += phi(y, sp.v[i]);
      }
    return inv_l3 * acc;
  });
  RunningMoments m1, m2;
  for (double f : firsts) {
    m1.add(f);
    m2.add(f * f);
  }
  EmpiricalMoment out;
  out.mean_first = m1.mean;
  out.mean_second = m2.mean;
  out.std_error_first = m1.std_error();
  out.std_error_second = m2.std_error();
  out.n_samples = n_samples;
  return out;
}

void dump_particles(const ParticleConfiguration& config, std::ostream& os) {
  write_u64_le(os, config.species.size());
  write_f64_le(os, config.sampling_radius);
  write_u64_le(os, config.seed);
  write_u64_le(os, config.radius_stale ? 1 : 0);
  for (const auto& sp : config.species) {
    write_u64_le(os, sp.x.size());
    write_f64_le(os, sp.charge);
    for (const auto& x : sp.x)
      for (int a = 0; a < 3; ++a) write_f64_le(os, x[a]);
    for (const auto& v : sp.v)
      for (int a = 0; a < 3; ++a) write_f64_le(os, v[a]);
  }
}

ParticleConfiguration load_particles(std::istream& is) {
  ParticleConfiguration config;
  std::uint64_t n_species = read_u64_le(is);
  if (n_species > 1024)
    throw ConfigError("pointprocess.load_particles", "species count implausible");
  config.sampling_radius = read_f64_le(is);
  config.seed = read_u64_le(is);
  config.radius_stale = read_u64_le(is) != 0;
  config.species.resize(n_species);
  for (auto& sp : config.species) {
    std::uint64_t n = read_u64_le(is);
    sp.charge = read_f64_le(is);
    sp.x.resize(n);
    sp.v.resize(n);
    for (auto& x : sp.x)
      for (int a = 0; a < 3; ++a) x[a] = read_f64_le(is);
    for (auto& v : sp.v)
      for (int a = 0; a < 3; ++a) v[a] = read_f64_le(is);
  }
  return config;
}

}  // namespace kinetic
