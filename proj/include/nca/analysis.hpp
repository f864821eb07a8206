#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "nca/cartpole.hpp"
#include "nca/export.hpp"
#include "nca/grad.hpp"

namespace nca {

enum class DamageMode { none, after_input, uniform };

inline const char* damage_mode_name(DamageMode m) {
  switch (m) {
    case DamageMode::none: return "none";
    case DamageMode::after_input: return "after-input";
    case DamageMode::uniform: return "uniform";
  }
  return "?";
}

struct EvalConfig {
  bool noisy_update = false;
  double noise_amp = 0.02;
  DamageMode damage = DamageMode::none;
  // One damage every 2 input updates, and (for the harder uniformly
  // distributed variant) one every 4 input updates of ~55 CA steps each.
  double damage_after_input_prob = 0.5;
  double damage_uniform_prob = 1.0 / (4.0 * 55.0);
  double damage_radius_min = 3.0, damage_radius_max = 8.0;
  int ca_steps_min = 50, ca_steps_max = 60;
  double fire_rate = 0.5;
  long max_steps = 100000;  // safety cap; episodes have no fixed horizon
};

// Hooks into a running episode, for frame export and long-run statistics.
template <class T>
struct EpisodeObserver {
  // After the CA rollout and readout, before the environment advances.
  std::function<void(long env_step, const Grid<T>&, const std::array<T, 2>& q,
                     int action)>
      on_env_step;
  std::function<void(long total_ca_steps, const Grid<T>&)> on_ca_step;
};

namespace detail {

template <class T>
void damage_random_circle(Grid<T>& g, const IoLayout& l, double rmin,
                          double rmax, Rng& rng) {
  GridPos center{uniform_int(rng, 0, l.n - 1), uniform_int(rng, 0, l.n - 1)};
  apply_damage(g, l, center, uniform(rng, rmin, rmax), rng);
}

}  // namespace detail

// One evaluation episode: a single grid seeded once drives the cart-pole until
// termination or the step cap. Returns the number of environment steps.
template <class T>
long run_episode(const RuleParams<T>& params, const IoLayout& layout,
                 const ObsScaling& scaling, const EvalConfig& cfg,
                 std::uint64_t seed, const EpisodeObserver<T>* observer = nullptr) {
  Rng rng = make_rng(seed, 0x657069ULL);
  const std::vector<char> is_input = input_cell_mask(layout);
  Grid<T> g = seed_grid<T>(layout, rng);
  CartState s = reset_state(rng);
  StepConfig step_cfg{cfg.fire_rate, cfg.noisy_update ? cfg.noise_amp : 0.0};
  nca::detail::StepWork<T> work;
  long t = 0;
  long ca_steps_total = 0;
  while (t < cfg.max_steps) {
    set_observations(g, layout, scaling, observations(s));
    if (cfg.damage == DamageMode::after_input &&
        uniform(rng, 0.0, 1.0) < cfg.damage_after_input_prob)
      detail::damage_random_circle(g, layout, cfg.damage_radius_min,
                                   cfg.damage_radius_max, rng);
    const int steps = uniform_int(rng, cfg.ca_steps_min, cfg.ca_steps_max);
    for (int i = 0; i < steps; ++i) {
      if (cfg.damage == DamageMode::uniform &&
          uniform(rng, 0.0, 1.0) < cfg.damage_uniform_prob)
        detail::damage_random_circle(g, layout, cfg.damage_radius_min,
                                     cfg.damage_radius_max, rng);
      StepDraws<T> d = draw_step<T>(is_input, step_cfg, rng);
      ca_step_with(g, params, d, work);
      ++ca_steps_total;
      if (observer && observer->on_ca_step) observer->on_ca_step(ca_steps_total, g);
    }
    const auto q = readout(g, layout);
    const int a = greedy_action(q[0], q[1]);
    if (observer && observer->on_env_step) observer->on_env_step(t, g, q, a);
    const StepOutcome out = step(s, static_cast<Action>(a));
    ++t;
    if (out.done) break;
    s = out.state;
  }
  return t;
}

struct ScoreReport {
  std::vector<long> scores;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

// Independent seeded episodes; reproducible bit-exactly from the master seed.
template <class T>
ScoreReport evaluate(const RuleParams<T>& params, const IoLayout& layout,
                     const ObsScaling& scaling, const EvalConfig& cfg, int runs,
                     std::uint64_t master_seed) {
  ScoreReport rep;
  rep.scores.reserve(runs);
  for (int r = 0; r < runs; ++r)
    rep.scores.push_back(
        run_episode(params, layout, scaling, cfg, derive_seed(master_seed, 0x72756eULL, r)));
  for (long s : rep.scores) rep.mean += static_cast<double>(s);
  rep.mean /= std::max<size_t>(1, rep.scores.size());
  for (long s : rep.scores) {
    const double d = static_cast<double>(s) - rep.mean;
    rep.stddev += d * d;
  }
  rep.stddev = std::sqrt(rep.stddev / std::max<size_t>(1, rep.scores.size()));
  return rep;
}

// ---------------------------------------------------------------------------
// Influence fields

struct InfluenceOptions {
  int n_obs = 50;
  int n_grids = 4;
  int develop_steps = 55;  // shared developmental phase before probing
  int window_steps = 55;   // probe window compared between the two runs
  bool shared_rng = true;  // same fire masks and noise in both runs
  bool perturb = true;     // false measures the natural stochastic deviation
  double fire_rate = 0.5;
  double noise_amp = 0.02;
};

struct InfluenceMap {
  MatX<double> deviation;  // n x n, (row, col)
};

// Observations drawn from random-policy episodes of the environment.
inline std::vector<std::array<double, 4>> sample_environment_observations(
    int count, Rng& rng) {
  std::vector<std::array<double, 4>> out;
  out.reserve(count);
  CartState s = reset_state(rng);
  while (static_cast<int>(out.size()) < count) {
    out.push_back(observations(s));
    const StepOutcome o = step(s, static_cast<Action>(uniform_int(rng, 0, 1)));
    s = o.done ? reset_state(rng) : o.state;
  }
  return out;
}

// Relative per-cell deviation between a baseline rollout and one whose probed
// input is scaled by a random factor in [-1, 1]. Both runs share the seed
// grid and the developmental phase; with shared_rng they also share every
// fire mask and noise draw, so the map isolates the input's influence.
template <class T>
InfluenceMap influence_field(const RuleParams<T>& params, const IoLayout& layout,
                             const ObsScaling& scaling, int probe_input,
                             const InfluenceOptions& opts,
                             std::uint64_t master_seed) {
  if (probe_input < 0 || probe_input >= static_cast<int>(layout.inputs.size()))
    throw std::invalid_argument("influence_field: probe input out of range");
  const std::vector<char> is_input = input_cell_mask(layout);
  const IoInput probed = layout.inputs[probe_input];
  const int probe_idx = cell_index(layout, probed.pos);
  const int n = layout.n;
  StepConfig step_cfg{opts.fire_rate, opts.noise_amp};

  Rng obs_rng = make_rng(master_seed, 0x6f6273ULL);
  const auto obs_pool = sample_environment_observations(1000, obs_rng);

  ArrX<double> num = ArrX<double>::Zero(n * n);
  ArrX<double> den = ArrX<double>::Zero(n * n);
  for (int s = 0; s < opts.n_obs; ++s) {
    const auto& obs =
        obs_pool[uniform_int(obs_rng, 0, static_cast<int>(obs_pool.size()) - 1)];
    for (int gi = 0; gi < opts.n_grids; ++gi) {
      const std::uint64_t base = derive_seed(master_seed, probe_input, s, gi);
      Rng seed_rng = make_rng(base, 0x67726964ULL);
      Grid<T> g0 = seed_grid<T>(layout, seed_rng);
      set_observations(g0, layout, scaling, obs);
      Rng dev_rng = make_rng(base, 0x646576ULL);
      rollout(g0, params, step_cfg, is_input, opts.develop_steps, dev_rng);

      Grid<T> gb = g0;
      Grid<T> gp = g0;
      set_observations(gb, layout, scaling, obs);
      set_observations(gp, layout, scaling, obs);
      if (opts.perturb) {
        Rng pert_rng = make_rng(base, 0x70657274ULL);
        const double u = uniform(pert_rng, -1.0, 1.0);
        gp.cells(kInfo, probe_idx) =
            static_cast<T>(obs[probed.obs] * scaling.factor[probed.obs] * u);
      }
      Rng wb = make_rng(base, 0x77696e30ULL);
      Rng wp = opts.shared_rng ? make_rng(base, 0x77696e30ULL)
                               : make_rng(base, 0x77696e31ULL);
      rollout(gb, params, step_cfg, is_input, opts.window_steps, wb);
      rollout(gp, params, step_cfg, is_input, opts.window_steps, wp);

      for (int i = 0; i < n * n; ++i) {
        const double nd =
            (gb.cells.col(i) - gp.cells.col(i)).template cast<double>().norm();
        const double nb = gb.cells.col(i).template cast<double>().norm();
        const double np = gp.cells.col(i).template cast<double>().norm();
        num[i] += nd;
        den[i] += 0.5 * (nb + np);
      }
    }
  }

  InfluenceMap map;
  map.deviation.setZero(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) {
      const int i = r + c * n;
      map.deviation(r, c) = den[i] > 0 ? num[i] / den[i] : 0.0;
    }
  return map;
}

// Log-scaled image of a deviation map; zeros floored at 1e-6.
inline void write_influence_image(const std::string& path,
                                  const InfluenceMap& map) {
  MatX<double> logmap = map.deviation.unaryExpr(
      [](double v) { return std::log10(std::max(v, 1e-6)); });
  write_pgm(path, logmap, -6.0, 0.0);
}

inline void write_influence_dump(const std::string& path,
                                 const InfluenceMap& map) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write influence map: " + path);
  nlohmann::json j;
  j["n"] = map.deviation.rows();
  j["order"] = "row-major";
  j["dtype"] = "f32";
  f << j.dump() << "\n";
  for (Eigen::Index r = 0; r < map.deviation.rows(); ++r)
    for (Eigen::Index c = 0; c < map.deviation.cols(); ++c) {
      const float v = static_cast<float>(map.deviation(r, c));
      f.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
}

// ---------------------------------------------------------------------------
// Frame export (stand-in for the interactive videos)

struct FramesConfig {
  EvalConfig eval;
  long env_steps = 10;
  int every_n_ca_steps = 55;
  bool raw_dumps = false;
};

// Writes per-channel images every N CA steps plus a per-env-step readout
// trace (q_left, q_right, chosen action).
template <class T>
void export_frames(const RuleParams<T>& params, const IoLayout& layout,
                   const ObsScaling& scaling, const FramesConfig& cfg,
                   const std::string& out_dir, std::uint64_t seed) {
  std::ofstream trace(out_dir + "/readout.csv");
  if (!trace) throw std::runtime_error("cannot write readout trace in " + out_dir);
  trace << "env_step,q_left,q_right,action\n";

  long frames = 0;
  EpisodeObserver<T> obs;
  obs.on_ca_step = [&](long total, const Grid<T>& g) {
    if (total % cfg.every_n_ca_steps != 0) return;
    char name[64];
    std::snprintf(name, sizeof(name), "/frame_%06ld", frames);
    write_grid_images(out_dir + name, g);
    if (cfg.raw_dumps) write_grid_dump(out_dir + name + ".grid", g, layout);
    ++frames;
  };
  obs.on_env_step = [&](long env_step, const Grid<T>&,
                        const std::array<T, 2>& q, int action) {
    char line[128];
    std::snprintf(line, sizeof(line), "%ld,%.9g,%.9g,%d\n", env_step,
                  static_cast<double>(q[0]), static_cast<double>(q[1]), action);
    trace << line;
  };

  EvalConfig ecfg = cfg.eval;
  ecfg.max_steps = cfg.env_steps;
  run_episode(params, layout, scaling, ecfg, seed, &obs);
}

}  // namespace nca
