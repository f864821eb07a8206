#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nca/cartpole.hpp"
#include "nca/grad.hpp"

namespace nca {

// One replay-memory record.
struct Transition {
  std::array<double, 4> obs_t{};
  int action = 0;
  double reward = 0.0;
  std::array<double, 4> obs_next{};
  bool final_step = false;
};

class ReplayMemory {
 public:
  explicit ReplayMemory(size_t capacity = 10000) : capacity_(capacity) {}

  void push(const Transition& t) {
    if (buf_.size() == capacity_) buf_.pop_front();
    buf_.push_back(t);
  }
  size_t size() const { return buf_.size(); }
  const Transition& sample(Rng& rng) const {
    return buf_[uniform_int(rng, 0, static_cast<int>(buf_.size()) - 1)];
  }
  const Transition& operator[](size_t i) const { return buf_[i]; }
  size_t capacity() const { return capacity_; }
  void set_capacity(size_t c) { capacity_ = c; }

 private:
  std::deque<Transition> buf_;
  size_t capacity_;
};

// Persistent CA states sampled, evolved in place, and reseeded occasionally so
// the rule keeps working from both raw and long-lived grids.
template <class T>
struct GridPool {
  std::vector<Grid<T>> grids;
  long resets = 0;

  void init(int size, const IoLayout& l, Rng& rng) {
    grids.clear();
    grids.reserve(size);
    for (int i = 0; i < size; ++i) grids.push_back(seed_grid<T>(l, rng));
  }
  int sample_index(Rng& rng) const {
    return uniform_int(rng, 0, static_cast<int>(grids.size()) - 1);
  }
  void inject_reset(const IoLayout& l, Rng& rng) {
    const int i = sample_index(rng);
    grids[i] = seed_grid<T>(l, rng);
    ++resets;
  }
};

// Persistent, never-terminal cart-pole states with their episode age.
struct EnvPool {
  struct Entry {
    CartState state;
    long age = 0;
  };
  std::vector<Entry> entries;

  void init(int size, Rng& rng) {
    entries.clear();
    entries.reserve(size);
    for (int i = 0; i < size; ++i) entries.push_back({reset_state(rng), 0});
  }
  int sample_index(Rng& rng) const {
    return uniform_int(rng, 0, static_cast<int>(entries.size()) - 1);
  }
};

inline std::vector<int> sample_distinct(Rng& rng, int n, int k) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) std::swap(idx[i], idx[uniform_int(rng, i, n - 1)]);
  idx.resize(k);
  return idx;
}

struct TrainConfig {
  int k_env_steps = 2;              // env steps per exploration episode
  int ca_steps_min = 50, ca_steps_max = 60;
  int batch = 16;
  double gamma = 0.95;
  double eps_start = 1.0, eps_end = 0.05;
  long eps_decay_env_steps = 1500;
  long grad_steps = 15000;
  long env_steps = 3000;
  int grid_pool_size = 256;
  int env_pool_size = 64;
  double damage_fraction = 0.5;      // of the grids sampled per train step
  double reset_inject_prob = 0.05;   // per exploration episode
  size_t memory_capacity = 10000;
  int warmup_env_steps = 200;        // random-policy transitions before training
  bool damage_in_explore = false;
  double damage_radius_min = 3.0, damage_radius_max = 8.0;
  StepConfig step{0.5, 0.02};
  double lambda = 100.0, bound = 5.0;
  AdamConfig adam;
  long max_episode_age = 100000;  // safety cap, no fixed horizon otherwise
};

struct TrainMetrics {
  long grad_step = 0;
  long env_step = 0;
  double eps = 0, lr = 0;
  double loss = 0, task = 0, overflow = 0;
  size_t replay_size = 0;
  long episodes_done = 0;
  double mean_episode_len = 0;
  long pool_resets = 0;
};
using TrainMetricsFn = std::function<void(const TrainMetrics&)>;

// Optional per-step introspection for tests.
struct TrainStepTrace {
  std::vector<int> pool_indices;
  int damaged = 0;
  int ca_steps = 0;
  std::vector<double> targets;
};

template <class T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, IoLayout layout, ObsScaling scaling,
          RuleParams<T> params, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        layout_(std::move(layout)),
        scaling_(scaling),
        is_input_(input_cell_mask(layout_)),
        params_(std::move(params)),
        memory_(cfg_.memory_capacity),
        rng_(derive_seed(seed, 0x7261696eULL)) {
    grid_pool_.init(cfg_.grid_pool_size, layout_, rng_);
    env_pool_.init(cfg_.env_pool_size, rng_);
  }

  double epsilon_at(long env_step) const {
    if (env_step >= cfg_.eps_decay_env_steps) return cfg_.eps_end;
    return cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) *
                                static_cast<double>(env_step) /
                                static_cast<double>(cfg_.eps_decay_env_steps);
  }

  // Random-policy transitions so the first gradient steps have a full batch.
  void warmup() {
    CartState s = reset_state(rng_);
    for (int i = 0; i < cfg_.warmup_env_steps; ++i) {
      const int a = uniform_int(rng_, 0, 1);
      StepOutcome out = step(s, static_cast<Action>(a));
      memory_.push({observations(s), a, reward(out.state, out.done),
                    observations(out.state), out.done});
      s = out.done ? reset_state(rng_) : out.state;
    }
  }

  // One exploration episode: K env steps driven by pool-sampled grids, with
  // the cart-pole state itself carried across steps and committed back.
  void explore_phase() {
    const int e = env_pool_.sample_index(rng_);
    CartState s = env_pool_.entries[e].state;
    long age = env_pool_.entries[e].age;
    for (int k = 0; k < cfg_.k_env_steps; ++k) {
      const int gi = grid_pool_.sample_index(rng_);
      Grid<T>& g = grid_pool_.grids[gi];
      if (cfg_.damage_in_explore) damage_random_circle(g);
      set_observations(g, layout_, scaling_, observations(s));
      const int steps = uniform_int(rng_, cfg_.ca_steps_min, cfg_.ca_steps_max);
      rollout(g, params_, cfg_.step, is_input_, steps, rng_);
      const auto q = readout(g, layout_);
      const int a = pick_action(q[0], q[1], epsilon_at(env_step_), rng_);
      StepOutcome out = step(s, static_cast<Action>(a));
      memory_.push({observations(s), a, reward(out.state, out.done),
                    observations(out.state), out.done});
      ++env_step_;
      ++age;
      if (out.done || age >= cfg_.max_episode_age) {
        record_episode(age);
        s = reset_state(rng_);
        age = 0;
      } else {
        s = out.state;
      }
    }
    env_pool_.entries[e] = {s, age};
    if (uniform(rng_, 0.0, 1.0) < cfg_.reset_inject_prob)
      grid_pool_.inject_reset(layout_, rng_);
  }

  // DQN target for one transition; a gradient-free rollout on a copy of a
  // pooled grid estimates max_a' Q(o_next, a').
  double compute_target(const Transition& t, Rng& rng) const {
    if (t.final_step) return t.reward;
    Grid<T> g = grid_pool_.grids[grid_pool_.sample_index(rng)];
    set_observations(g, layout_, scaling_, t.obs_next);
    const int steps = uniform_int(rng, cfg_.ca_steps_min, cfg_.ca_steps_max);
    rollout(g, params_, cfg_.step, is_input_, steps, rng);
    const auto q = readout(g, layout_);
    return t.reward +
           cfg_.gamma * std::max(static_cast<double>(q[0]),
                                 static_cast<double>(q[1]));
  }

  // One gradient step: transitions matched with pool grids, half the grids
  // damaged, recorded rollouts, DQN targets, BPTT, Adam, commit.
  TrainMetrics train_step(TrainStepTrace* trace = nullptr) {
    if (memory_.size() < static_cast<size_t>(cfg_.batch))
      throw std::runtime_error("train_step: replay memory smaller than batch");
    const int batch = cfg_.batch;
    std::vector<const Transition*> trans(batch);
    for (int i = 0; i < batch; ++i) trans[i] = &memory_.sample(rng_);
    const std::vector<int> pool_idx =
        sample_distinct(rng_, static_cast<int>(grid_pool_.grids.size()), batch);
    const int steps = uniform_int(rng_, cfg_.ca_steps_min, cfg_.ca_steps_max);
    const int n_damage =
        static_cast<int>(std::lround(batch * cfg_.damage_fraction));
    for (int i = 0; i < n_damage; ++i)
      damage_random_circle(grid_pool_.grids[pool_idx[i]]);

    tapes_.resize(batch);
    std::vector<const Tape<T>*> tape_ptrs(batch);
    std::vector<const CellMat<T>*> finals(batch);
    for (int i = 0; i < batch; ++i) {
      Grid<T>& g = grid_pool_.grids[pool_idx[i]];
      set_observations(g, layout_, scaling_, trans[i]->obs_t);
      rollout_recorded(g, params_, cfg_.step, is_input_, steps, rng_, tapes_[i]);
      tape_ptrs[i] = &tapes_[i];
      finals[i] = &tapes_[i].final_state();
    }

    std::vector<OutputTarget<T>> targets(batch);
    for (int i = 0; i < batch; ++i) {
      const double y = compute_target(*trans[i], rng_);
      targets[i].supervised[trans[i]->action] = true;
      targets[i].y[trans[i]->action] = static_cast<T>(y);
      if (trace) trace->targets.push_back(y);
    }

    LossConfig<T> lcfg;
    lcfg.lambda = static_cast<T>(cfg_.lambda);
    lcfg.bound = static_cast<T>(cfg_.bound);
    std::vector<CellMat<T>> dfinals;
    const LossBreakdown<T> loss =
        loss_batch<T>(finals, layout_.n, layout_, targets, lcfg, &dfinals);
    if (!std::isfinite(static_cast<double>(loss.total)))
      throw std::runtime_error("loss diverged (non-finite) at gradient step " +
                               std::to_string(grad_step_));
    const VecX<T> grads = backward<T>(tape_ptrs, params_, dfinals);
    TrainMetrics m;
    m.lr = lr_at(adam_.step, cfg_.adam);
    adam_step(params_.raw, grads, adam_, cfg_.adam);
    ++grad_step_;

    m.grad_step = grad_step_;
    m.env_step = env_step_;
    m.eps = epsilon_at(env_step_);
    m.loss = loss.total;
    m.task = loss.task;
    m.overflow = loss.overflow;
    m.replay_size = memory_.size();
    m.episodes_done = episodes_done_;
    m.mean_episode_len = mean_recent_episode_len();
    m.pool_resets = grid_pool_.resets;
    if (trace) {
      trace->pool_indices = pool_idx;
      trace->damaged = n_damage;
      trace->ca_steps = steps;
    }
    return m;
  }

  // Full run: warmup, then exploration and gradient steps interleaved at the
  // configured ratio (default 5 gradient steps per env step).
  void train(const TrainMetricsFn& on_metrics = nullptr,
             const std::function<void(long)>& on_checkpoint = nullptr,
             long checkpoint_every = 1000) {
    if (memory_.size() < static_cast<size_t>(cfg_.batch)) warmup();
    const long phases = cfg_.env_steps / cfg_.k_env_steps;
    // Checkpoints fire only at phase boundaries so a resumed run replays the
    // exact remaining stream.
    long next_ckpt = checkpoint_every > 0
                         ? (grad_step_ / checkpoint_every + 1) * checkpoint_every
                         : cfg_.grad_steps + 1;
    for (long phase = phase_; phase < phases; ++phase) {
      explore_phase();
      const long due = (phase + 1) * cfg_.grad_steps / phases;
      while (grad_step_ < due) {
        TrainMetrics m = train_step();
        if (on_metrics) on_metrics(m);
      }
      phase_ = phase + 1;
      if (on_checkpoint && grad_step_ >= next_ckpt) {
        on_checkpoint(grad_step_);
        next_ckpt = (grad_step_ / checkpoint_every + 1) * checkpoint_every;
      }
    }
    while (grad_step_ < cfg_.grad_steps) {
      TrainMetrics m = train_step();
      if (on_metrics) on_metrics(m);
    }
  }

  const RuleParams<T>& params() const { return params_; }
  RuleParams<T>& params() { return params_; }
  const GridPool<T>& grid_pool() const { return grid_pool_; }
  const EnvPool& env_pool() const { return env_pool_; }
  const ReplayMemory& memory() const { return memory_; }
  long grad_step() const { return grad_step_; }
  long env_step() const { return env_step_; }
  const TrainConfig& config() const { return cfg_; }

  // ---- resume support: the full mutable state, bit-exact ----

  void save_state(std::ostream& os) const {
    write_u64(os, 0x4e43415452414e31ULL);  // "NCATRAN1"
    write_vec(os, params_.raw);
    write_vec(os, adam_.m);
    write_vec(os, adam_.v);
    write_i64(os, adam_.step);
    write_i64(os, grad_step_);
    write_i64(os, env_step_);
    write_i64(os, phase_);
    write_i64(os, episodes_done_);
    write_i64(os, grid_pool_.resets);
    std::ostringstream rs;
    rs << rng_;
    write_str(os, rs.str());
    write_i64(os, static_cast<long>(grid_pool_.grids.size()));
    for (const auto& g : grid_pool_.grids) write_cells(os, g.cells);
    write_i64(os, static_cast<long>(env_pool_.entries.size()));
    for (const auto& e : env_pool_.entries) {
      write_pod(os, e.state);
      write_i64(os, e.age);
    }
    write_i64(os, static_cast<long>(memory_.size()));
    for (size_t i = 0; i < memory_.size(); ++i) write_pod(os, memory_[i]);
    write_i64(os, static_cast<long>(recent_episode_lengths_.size()));
    for (long v : recent_episode_lengths_) write_i64(os, v);
  }

  void load_state(std::istream& is) {
    if (read_u64(is) != 0x4e43415452414e31ULL)
      throw std::runtime_error("bad training-state file");
    read_vec(is, params_.raw);
    read_vec(is, adam_.m);
    read_vec(is, adam_.v);
    adam_.step = read_i64(is);
    grad_step_ = read_i64(is);
    env_step_ = read_i64(is);
    phase_ = read_i64(is);
    episodes_done_ = read_i64(is);
    grid_pool_.resets = read_i64(is);
    std::istringstream rs(read_str(is));
    rs >> rng_;
    grid_pool_.grids.assign(read_i64(is), Grid<T>{});
    for (auto& g : grid_pool_.grids) {
      g.n = layout_.n;
      read_cells(is, g.cells);
    }
    env_pool_.entries.assign(read_i64(is), EnvPool::Entry{});
    for (auto& e : env_pool_.entries) {
      read_pod(is, e.state);
      e.age = read_i64(is);
    }
    const long mem = read_i64(is);
    memory_ = ReplayMemory(cfg_.memory_capacity);
    for (long i = 0; i < mem; ++i) {
      Transition t;
      read_pod(is, t);
      memory_.push(t);
    }
    recent_episode_lengths_.clear();
    const long nrec = read_i64(is);
    for (long i = 0; i < nrec; ++i)
      recent_episode_lengths_.push_back(read_i64(is));
    if (!is) throw std::runtime_error("truncated training-state file");
  }

 private:
  void damage_random_circle(Grid<T>& g) {
    GridPos center{uniform_int(rng_, 0, layout_.n - 1),
                   uniform_int(rng_, 0, layout_.n - 1)};
    const double radius =
        uniform(rng_, cfg_.damage_radius_min, cfg_.damage_radius_max);
    apply_damage(g, layout_, center, radius, rng_);
  }

  void record_episode(long len) {
    ++episodes_done_;
    recent_episode_lengths_.push_back(len);
    if (recent_episode_lengths_.size() > 50) recent_episode_lengths_.pop_front();
  }

  double mean_recent_episode_len() const {
    if (recent_episode_lengths_.empty()) return 0.0;
    return std::accumulate(recent_episode_lengths_.begin(),
                           recent_episode_lengths_.end(), 0.0) /
           static_cast<double>(recent_episode_lengths_.size());
  }

  static void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_i64(std::ostream& os, long v) {
    const std::int64_t x = v;
    os.write(reinterpret_cast<const char*>(&x), sizeof(x));
  }
  template <class P>
  static void write_pod(std::ostream& os, const P& p) {
    os.write(reinterpret_cast<const char*>(&p), sizeof(P));
  }
  static void write_str(std::ostream& os, const std::string& s) {
    write_i64(os, static_cast<long>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static void write_vec(std::ostream& os, const VecX<T>& v) {
    write_i64(os, static_cast<long>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(sizeof(T) * v.size()));
  }
  void write_cells(std::ostream& os, const CellMat<T>& c) const {
    os.write(reinterpret_cast<const char*>(c.data()),
             static_cast<std::streamsize>(sizeof(T) * c.size()));
  }
  static std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static long read_i64(std::istream& is) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return static_cast<long>(v);
  }
  template <class P>
  static void read_pod(std::istream& is, P& p) {
    is.read(reinterpret_cast<char*>(&p), sizeof(P));
  }
  static std::string read_str(std::istream& is) {
    std::string s(static_cast<size_t>(read_i64(is)), '\0');
    is.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
  }
  static void read_vec(std::istream& is, VecX<T>& v) {
    v.resize(read_i64(is));
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(T) * v.size()));
  }
  void read_cells(std::istream& is, CellMat<T>& c) const {
    c.resize(kChannels, layout_.n * layout_.n);
    is.read(reinterpret_cast<char*>(c.data()),
            static_cast<std::streamsize>(sizeof(T) * c.size()));
  }

  TrainConfig cfg_;
  IoLayout layout_;
  ObsScaling scaling_;
  std::vector<char> is_input_;
  RuleParams<T> params_;
  AdamState<T> adam_;
  GridPool<T> grid_pool_;
  EnvPool env_pool_;
  ReplayMemory memory_;
  Rng rng_;
  long grad_step_ = 0;
  long env_step_ = 0;
  long phase_ = 0;
  long episodes_done_ = 0;
  std::deque<long> recent_episode_lengths_;
  std::vector<Tape<T>> tapes_;
};

// ---------------------------------------------------------------------------
// Curriculum initialization: both outputs learn the mean of the scaled inputs.

struct PretrainConfig {
  long max_steps = 5000;
  int batch = 16;
  int ca_steps_min = 50, ca_steps_max = 60;
  int grid_pool_size = 256;
  double damage_fraction = 0.5;
  double reset_inject_prob = 0.05;
  double damage_radius_min = 3.0, damage_radius_max = 8.0;
  double mse_threshold = 0.01;   // in info-channel units
  double early_stop_mse = 0.005;
  long val_every = 100;
  int val_batch = 32;
  int val_steps = 55;
  StepConfig step{0.5, 0.02};
  double lambda = 100.0, bound = 5.0;
  AdamConfig adam;
  // Observation ranges mirroring the scaling table, so inputs span ~[-1,1].
  std::array<double, 4> obs_lo = {-2.4, -3.0, -0.21, -3.0};
  std::array<double, 4> obs_hi = {2.4, 3.0, 0.21, 3.0};
};

struct PretrainMetrics {
  long step = 0;
  double lr = 0, loss = 0, task = 0, overflow = 0;
  double val_mse = 0;
  bool has_val = false;
};
using PretrainMetricsFn = std::function<void(const PretrainMetrics&)>;

struct PretrainResult {
  long steps = 0;
  double val_mse = 1e30;
  bool converged = false;
};

namespace detail {

template <class T>
T mean_input_info(const CellMat<T>& cells, const IoLayout& l) {
  T sum = 0;
  for (const auto& in : l.inputs) sum += cells(kInfo, cell_index(l, in.pos));
  return sum / static_cast<T>(l.inputs.size());
}

// Mean squared error of both outputs against the input mean, in info units,
// over a fixed deterministic validation set of fresh grids.
template <class T>
double pretrain_validation_mse(const RuleParams<T>& params,
                               const PretrainConfig& cfg, const IoLayout& layout,
                               const ObsScaling& scaling,
                               const std::vector<char>& is_input,
                               std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x76616cULL));
  StepConfig step_cfg = cfg.step;
  step_cfg.noise_amp = 0.0;
  double se = 0.0;
  for (int i = 0; i < cfg.val_batch; ++i) {
    Grid<T> g = seed_grid<T>(layout, rng);
    std::array<double, 4> obs;
    for (int k = 0; k < 4; ++k) obs[k] = uniform(rng, cfg.obs_lo[k], cfg.obs_hi[k]);
    set_observations(g, layout, scaling, obs);
    const double target = static_cast<double>(mean_input_info(g.cells, layout));
    rollout(g, params, step_cfg, is_input, cfg.val_steps, rng);
    const auto q = readout(g, layout);
    const double e0 = q[0] / 100.0 - target;
    const double e1 = q[1] / 100.0 - target;
    se += e0 * e0 + e1 * e1;
  }
  return se / (2.0 * cfg.val_batch);
}

}  // namespace detail

// Trains the rule to output the mean of its scaled inputs on both output
// cells, using the same pool/damage regime as the main task. Returns early
// once the validation error is safely below the threshold.
template <class T>
PretrainResult pretrain_mean(RuleParams<T>& params, const PretrainConfig& cfg,
                             const IoLayout& layout, const ObsScaling& scaling,
                             std::uint64_t seed,
                             const PretrainMetricsFn& on_metrics = nullptr) {
  Rng rng = make_rng(seed, 0x707265ULL);
  const std::vector<char> is_input = input_cell_mask(layout);
  GridPool<T> pool;
  pool.init(cfg.grid_pool_size, layout, rng);
  AdamState<T> adam;
  LossConfig<T> lcfg;
  lcfg.lambda = static_cast<T>(cfg.lambda);
  lcfg.bound = static_cast<T>(cfg.bound);
  const int n_damage =
      static_cast<int>(std::lround(cfg.batch * cfg.damage_fraction));

  PretrainResult res;
  std::vector<Tape<T>> tapes(cfg.batch);
  for (long it = 0; it < cfg.max_steps; ++it) {
    const std::vector<int> pool_idx =
        sample_distinct(rng, cfg.grid_pool_size, cfg.batch);
    const int steps = uniform_int(rng, cfg.ca_steps_min, cfg.ca_steps_max);
    for (int i = 0; i < n_damage; ++i) {
      GridPos center{uniform_int(rng, 0, layout.n - 1),
                     uniform_int(rng, 0, layout.n - 1)};
      const double radius =
          uniform(rng, cfg.damage_radius_min, cfg.damage_radius_max);
      apply_damage(pool.grids[pool_idx[i]], layout, center, radius, rng);
    }

    std::vector<const Tape<T>*> tape_ptrs(cfg.batch);
    std::vector<const CellMat<T>*> finals(cfg.batch);
    std::vector<OutputTarget<T>> targets(cfg.batch);
    for (int i = 0; i < cfg.batch; ++i) {
      Grid<T>& g = pool.grids[pool_idx[i]];
      std::array<double, 4> obs;
      for (int k = 0; k < 4; ++k)
        obs[k] = uniform(rng, cfg.obs_lo[k], cfg.obs_hi[k]);
      set_observations(g, layout, scaling, obs);
      const T y = T(100) * detail::mean_input_info(g.cells, layout);
      targets[i].supervised = {true, true};
      targets[i].y = {y, y};
      rollout_recorded(g, params, cfg.step, is_input, steps, rng, tapes[i]);
      tape_ptrs[i] = &tapes[i];
      finals[i] = &tapes[i].final_state();
    }

    std::vector<CellMat<T>> dfinals;
    const LossBreakdown<T> loss =
        loss_batch<T>(finals, layout.n, layout, targets, lcfg, &dfinals);
    if (!std::isfinite(static_cast<double>(loss.total)))
      throw std::runtime_error("pretraining loss diverged at step " +
                               std::to_string(it));
    const VecX<T> grads = backward<T>(tape_ptrs, params, dfinals);
    PretrainMetrics m;
    m.step = it + 1;
    m.lr = lr_at(adam.step, cfg.adam);
    adam_step(params.raw, grads, adam, cfg.adam);
    m.loss = loss.total;
    m.task = loss.task;
    m.overflow = loss.overflow;

    if (uniform(rng, 0.0, 1.0) < cfg.reset_inject_prob)
      pool.inject_reset(layout, rng);

    res.steps = it + 1;
    if ((it + 1) % cfg.val_every == 0 || it + 1 == cfg.max_steps) {
      res.val_mse = detail::pretrain_validation_mse(params, cfg, layout,
                                                    scaling, is_input, seed);
      m.val_mse = res.val_mse;
      m.has_val = true;
    }
    if (on_metrics) on_metrics(m);
    if (m.has_val && res.val_mse < cfg.early_stop_mse) break;
  }
  res.converged = res.val_mse < cfg.mse_threshold;
  return res;
}

}  // namespace nca
