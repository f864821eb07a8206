#pragma once

#include <array>
#include <vector>

#include "nca/grid.hpp"
#include "nca/rng.hpp"
#include "nca/types.hpp"

namespace nca {

// Learnable update rule: 20 3x3x6 perception filters feeding a 30-unit ReLU
// hidden layer and a 4-channel residual head, biases on every layer.
template <class T>
struct RuleParams {
  static constexpr int kFilters = 20;
  static constexpr int kPatch = 3 * 3 * kChannels;  // 54
  static constexpr int kHidden = 30;
  static constexpr int kHead = kNumModifiable;  // one delta per writable channel

  static constexpr int kPwOff = 0;
  static constexpr int kPbOff = kPwOff + kPatch * kFilters;
  static constexpr int kHwOff = kPbOff + kFilters;
  static constexpr int kHbOff = kHwOff + kFilters * kHidden;
  static constexpr int kOwOff = kHbOff + kHidden;
  static constexpr int kObOff = kOwOff + kHidden * kHead;
  static constexpr int kCount = kObOff + kHead;
  static_assert(kCount == 1854);

  VecX<T> raw = VecX<T>::Zero(kCount);

  using Map = Eigen::Map<MatX<T>>;
  using CMap = Eigen::Map<const MatX<T>>;
  using VMap = Eigen::Map<VecX<T>>;
  using CVMap = Eigen::Map<const VecX<T>>;

  Map pw() { return {raw.data() + kPwOff, kPatch, kFilters}; }
  CMap pw() const { return {raw.data() + kPwOff, kPatch, kFilters}; }
  VMap pb() { return {raw.data() + kPbOff, kFilters}; }
  CVMap pb() const { return {raw.data() + kPbOff, kFilters}; }
  Map hw() { return {raw.data() + kHwOff, kFilters, kHidden}; }
  CMap hw() const { return {raw.data() + kHwOff, kFilters, kHidden}; }
  VMap hb() { return {raw.data() + kHbOff, kHidden}; }
  CVMap hb() const { return {raw.data() + kHbOff, kHidden}; }
  Map ow() { return {raw.data() + kOwOff, kHidden, kHead}; }
  CMap ow() const { return {raw.data() + kOwOff, kHidden, kHead}; }
  VMap ob() { return {raw.data() + kObOff, kHead}; }
  CVMap ob() const { return {raw.data() + kObOff, kHead}; }

  // Small uniform weights, zero biases: the initial CA is near-identity.
  static RuleParams init(Rng& rng, T weight_range = T(0.03)) {
    RuleParams p;
    std::uniform_real_distribution<T> u(-weight_range, weight_range);
    auto fill = [&](int off, int count) {
      for (int i = 0; i < count; ++i) p.raw[off + i] = u(rng);
    };
    fill(kPwOff, kPatch * kFilters);
    fill(kHwOff, kFilters * kHidden);
    fill(kOwOff, kHidden * kHead);
    return p;
  }

  template <class U>
  RuleParams<U> cast() const {
    RuleParams<U> q;
    q.raw = raw.template cast<U>();
    return q;
  }
};

struct StepConfig {
  double fire_rate = 0.5;  // per-cell update probability
  double noise_amp = 0.0;  // uniform noise added to each applied update
};

// Randomness of one CA step, recorded so the step can be replayed exactly.
template <class T>
struct StepDraws {
  ArrX<T> fire;   // n*n entries in {0,1}; forced 0 at input cells
  MatX<T> noise;  // 4 x n*n, or empty when noise_amp == 0
};

template <class T>
StepDraws<T> draw_step(const std::vector<char>& is_input, const StepConfig& cfg,
                       Rng& rng) {
  const int n_cells = static_cast<int>(is_input.size());
  StepDraws<T> d;
  d.fire.resize(n_cells);
  std::uniform_real_distribution<T> u01(T(0), T(1));
  for (int i = 0; i < n_cells; ++i)
    d.fire[i] = u01(rng) < static_cast<T>(cfg.fire_rate) ? T(1) : T(0);
  for (int i = 0; i < n_cells; ++i)
    if (is_input[i]) d.fire[i] = T(0);
  if (cfg.noise_amp > 0) {
    d.noise.resize(kNumModifiable, n_cells);
    std::uniform_real_distribution<T> un(static_cast<T>(-cfg.noise_amp),
                                         static_cast<T>(cfg.noise_amp));
    for (int i = 0; i < n_cells; ++i)
      for (int m = 0; m < kNumModifiable; ++m) d.noise(m, i) = un(rng);
  }
  return d;
}

namespace detail {

// Patch rows (3x3 neighborhood, all channels, zero padding) for the listed
// cells. P is row-major so each cell's 54 taps are contiguous.
template <class T>
void im2col_rows(const CellMat<T>& cells, int n, const std::vector<int>& rows,
                 MatXR<T>& P) {
  P.setZero(static_cast<Eigen::Index>(rows.size()), 3 * 3 * kChannels);
  for (size_t k = 0; k < rows.size(); ++k) {
    const int idx = rows[k];
    const int r = idx % n;
    const int c = idx / n;
    int tap = 0;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc, ++tap) {
        const int nr = r + dr;
        const int nc = c + dc;
        if (nr < 0 || nr >= n || nc < 0 || nc >= n) continue;
        P.row(k).template segment<kChannels>(tap * kChannels) =
            cells.col(nr + nc * n);
      }
    }
  }
}

// Forward activations of one step, evaluated only at the cells that fire.
template <class T>
struct StepWork {
  std::vector<int> fired;
  MatXR<T> patches;       // Nf x 54
  MatX<T> features;       // Nf x 20
  MatX<T> hidden_pre;     // Nf x 30
  MatX<T> hidden;         // Nf x 30
  MatX<T> delta;          // Nf x 4
};

template <class T>
void forward_delta(const CellMat<T>& cells, int n, const RuleParams<T>& p,
                   const StepDraws<T>& draws, StepWork<T>& w) {
  w.fired.clear();
  for (int i = 0; i < draws.fire.size(); ++i)
    if (draws.fire[i] > T(0)) w.fired.push_back(i);
  im2col_rows(cells, n, w.fired, w.patches);
  w.features.noalias() = w.patches * p.pw();
  w.features.rowwise() += p.pb().transpose();
  w.hidden_pre.noalias() = w.features * p.hw();
  w.hidden_pre.rowwise() += p.hb().transpose();
  w.hidden = w.hidden_pre.cwiseMax(T(0));
  w.delta.noalias() = w.hidden * p.ow();
  w.delta.rowwise() += p.ob().transpose();
}

}  // namespace detail

// Applies one CA step with the given draws: every fired cell adds its head
// delta (plus noise) to the modifiable channels. Input cells never fire and
// identifier channels are never written, so both stay fixed.
template <class T>
void ca_step_with(Grid<T>& g, const RuleParams<T>& p, const StepDraws<T>& draws,
                  detail::StepWork<T>& work) {
  detail::forward_delta(g.cells, g.n, p, draws, work);
  const bool noisy = draws.noise.size() > 0;
  for (size_t k = 0; k < work.fired.size(); ++k) {
    const int idx = work.fired[k];
    for (int m = 0; m < kNumModifiable; ++m) {
      T d = work.delta(static_cast<Eigen::Index>(k), m);
      if (noisy) d += draws.noise(m, idx);
      g.cells(kModifiable[m], idx) += d;
    }
  }
}

template <class T>
StepDraws<T> ca_step(Grid<T>& g, const RuleParams<T>& p, const StepConfig& cfg,
                     const std::vector<char>& is_input, Rng& rng) {
  StepDraws<T> draws = draw_step<T>(is_input, cfg, rng);
  detail::StepWork<T> work;
  ca_step_with(g, p, draws, work);
  return draws;
}

// Full perception field (one row per cell, one column per filter).
template <class T>
MatXR<T> perceive(const Grid<T>& g, const RuleParams<T>& p) {
  std::vector<int> all(static_cast<size_t>(g.n) * g.n);
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  MatXR<T> patches;
  detail::im2col_rows(g.cells, g.n, all, patches);
  MatXR<T> features = patches * p.pw();
  features.rowwise() += p.pb().transpose();
  return features;
}

// Q-value estimates: the output cells' info values scaled by 100,
// in (left action, right action) order.
template <class T>
std::array<T, 2> readout(const Grid<T>& g, const IoLayout& l) {
  return {T(100) * g.cells(kInfo, cell_index(l, l.outputs[0])),
          T(100) * g.cells(kInfo, cell_index(l, l.outputs[1]))};
}

inline int greedy_action(double q_left, double q_right) {
  return q_left >= q_right ? 0 : 1;
}

// Epsilon-greedy choice; epsilon = 1 ignores the Q-values entirely.
inline int pick_action(double q_left, double q_right, double eps, Rng& rng) {
  if (uniform(rng, 0.0, 1.0) < eps) return uniform_int(rng, 0, 1);
  return greedy_action(q_left, q_right);
}

}  // namespace nca
