#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"
#include "gibbsgof/models.hpp"
#include "gibbsgof/spatial_index.hpp"

namespace gibbsgof {

struct SamplerConfig {
  std::uint64_t seed = 0;
  long long sweeps = 500;
  double birth_fraction = 0.5;
  // The chain targets Papangelou intensity z·e^{-V}; z ≠ 1 is equivalent to
  // shifting the parameter by -log z along the model's unit combination.
  double reference_intensity = 1.0;
  // Optional displacement proposals; `move_fraction` of all proposals when enabled.
  bool moves = false;
  double move_fraction = 0.25;
  double move_scale = 0.0;  // 0 picks the model range (or a tenth of the side)
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

namespace detail {

template <std::size_t Dim>
Vec<Dim> uniform_in(const Box<Dim>& box, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec<Dim> x;
  for (std::size_t k = 0; k < Dim; ++k) x[k] = box.lower[k] + box.side * u(rng);
  return x;
}

inline Mark draw_mark(const MarkSet& marks, Rng& rng) {
  if (marks.size() == 1) return 0;
  std::discrete_distribution<Mark> pick(marks.weights().begin(), marks.weights().end());
  return pick(rng);
}

}  // namespace detail

/// Homogeneous marked Poisson process of intensity z on `window`.
template <std::size_t Dim>
Configuration<Dim> sample_poisson(const Box<Dim>& window, double z, const MarkSet& marks,
                                  std::uint64_t seed) {
  if (!(z > 0.0)) fail(ErrorKind::InvalidParameter, "Poisson intensity must be positive");
  const double mean = z * window.volume();
  if (!(mean > 0.0)) return {};
  auto rng = make_rng(seed);
  std::poisson_distribution<long long> count(mean);
  const long long n = count(rng);
  std::vector<MarkedPoint<Dim>> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    const Vec<Dim> x = detail::uniform_in(window, rng);
    pts.push_back({x, detail::draw_mark(marks, rng)});
  }
  return Configuration<Dim>(std::move(pts));
}

/// Metropolis-Hastings ratio for adding x to a configuration of n points,
/// given the local energy V(x|φ). The matching death ratio is its inverse.
inline double birth_ratio(double energy, std::size_t n, double z_volume, double birth_fraction) {
  if (energy == std::numeric_limits<double>::infinity()) return 0.0;
  return (1.0 - birth_fraction) / birth_fraction * z_volume / static_cast<double>(n + 1) *
         std::exp(-energy);
}

inline double death_ratio(double energy, std::size_t n_after, double z_volume, double birth_fraction) {
  if (energy == std::numeric_limits<double>::infinity()) return std::numeric_limits<double>::infinity();
  return birth_fraction / (1.0 - birth_fraction) * static_cast<double>(n_after + 1) / z_volume *
         std::exp(energy);
}

/// Birth-death chain on `window` (empty boundary condition) started from ∅,
/// run for sweeps·⌈z|W|⌉ proposals; returns the final state.
template <ExponentialModel Model>
Configuration<Model::dim> sample_gibbs(const Model& model, const ParameterVector<Model::num_stats>& theta,
                                       const Box<Model::dim>& window, const SamplerConfig& cfg) {
  constexpr std::size_t Dim = Model::dim;
  if (!model.admissible(theta)) fail(ErrorKind::InvalidParameter, "parameter is not admissible");
  if (cfg.sweeps < 0) fail(ErrorKind::InvalidParameter, "sweeps must be nonnegative");
  if (!(cfg.birth_fraction > 0.0 && cfg.birth_fraction < 1.0)) {
    fail(ErrorKind::InvalidParameter, "birth fraction must lie in (0, 1)");
  }
  if (!(cfg.reference_intensity > 0.0)) fail(ErrorKind::InvalidParameter, "reference intensity must be positive");

  const double z_volume = cfg.reference_intensity * window.volume();
  const auto per_sweep = static_cast<long long>(std::ceil(z_volume));
  const long long proposals = cfg.sweeps * per_sweep;
  if (proposals <= 0) return {};

  const double range = model.range();
  const double cell = range > 0.0 ? range : window.side / 16.0;
  DynamicGrid<Dim> state(cell);
  auto rng = make_rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double move_fraction = cfg.moves ? cfg.move_fraction : 0.0;
  const double move_scale =
      cfg.move_scale > 0.0 ? cfg.move_scale : (range > 0.0 ? range : window.side / 10.0);

  auto energy = [&](const MarkedPoint<Dim>& x, std::size_t exclude) {
    const GridNeighbors<Dim> nb{&state, exclude};
    if (model.forbidden(x, nb)) return std::numeric_limits<double>::infinity();
    return static_cast<double>(theta.dot(model.stats(x, nb)));
  };

  for (long long step = 0; step < proposals; ++step) {
    const double kind = u(rng);
    if (kind < move_fraction) {
      if (state.size() == 0) continue;
      const auto i = static_cast<std::size_t>(u(rng) * static_cast<double>(state.size())) % state.size();
      MarkedPoint<Dim> moved = state[i];
      for (std::size_t k = 0; k < Dim; ++k) moved.position[k] += move_scale * (2.0 * u(rng) - 1.0);
      const double accept_u = u(rng);
      if (!window.contains(moved.position)) continue;
      const double v_new = energy(moved, i);
      if (v_new == std::numeric_limits<double>::infinity()) continue;
      const double v_old = energy(state[i], i);
      if (accept_u < std::exp(v_old - v_new)) {
        state.erase(i);
        state.insert(moved);
      }
    } else if (u(rng) < cfg.birth_fraction) {
      MarkedPoint<Dim> x{detail::uniform_in(window, rng), detail::draw_mark(model.marks(), rng)};
      const double ratio = birth_ratio(energy(x, SpatialIndex<Dim>::npos), state.size(), z_volume,
                                       cfg.birth_fraction);
      if (u(rng) < ratio) state.insert(x);
    } else {
      if (state.size() == 0) continue;
      const auto i = static_cast<std::size_t>(u(rng) * static_cast<double>(state.size())) % state.size();
      const double ratio = death_ratio(energy(state[i], i), state.size() - 1, z_volume, cfg.birth_fraction);
      if (u(rng) < ratio) state.erase(i);
    }
  }
  return Configuration<Dim>(state.points());
}

template <ExponentialModel Model>
Configuration<Model::dim> sample_gibbs(const Model& model, const ParameterVector<Model::num_stats>& theta,
                                       const ObservationDomain<Model::dim>& domain, const SamplerConfig& cfg) {
  return sample_gibbs(model, theta, domain.extended(), cfg);
}

/// Runs f(i) for i in [0, n) on up to `threads` workers (0 = hardware concurrency).
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          f(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Independent chains with seeds base_seed + i.
template <ExponentialModel Model>
std::vector<Configuration<Model::dim>> sample_batch(const Model& model,
                                                    const ParameterVector<Model::num_stats>& theta,
                                                    const ObservationDomain<Model::dim>& domain,
                                                    std::size_t replicates, SamplerConfig cfg,
                                                    unsigned threads = 0) {
  if (replicates == 0) fail(ErrorKind::InvalidParameter, "need at least one replicate");
  std::vector<Configuration<Model::dim>> out(replicates);
  const std::uint64_t base = cfg.seed;
  parallel_for(replicates, threads, [&](std::size_t i) {
    SamplerConfig local = cfg;
    local.seed = base + i;
    out[i] = sample_gibbs(model, theta, domain, local);
  });
  return out;
}

}  // namespace gibbsgof
