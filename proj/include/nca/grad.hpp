#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nca/rule.hpp"

namespace nca {

// Recorded forward computation of one rollout: the grid before every step
// plus the step's randomness. Replaying it reproduces the final grid
// bit-identically, and backward() differentiates through it.
template <class T>
struct Tape {
  int n = 0;
  std::vector<CellMat<T>> states;      // size steps+1; states[t] precedes step t
  std::vector<StepDraws<T>> draws;     // size steps
  // Forward activations, kept when memory allows so backward() skips the
  // recompute; empty otherwise.
  std::vector<detail::StepWork<T>> work;

  int steps() const { return static_cast<int>(draws.size()); }
  const CellMat<T>& final_state() const { return states.back(); }
};

template <class T>
void rollout_recorded(Grid<T>& g, const RuleParams<T>& p, const StepConfig& cfg,
                      const std::vector<char>& is_input, int steps, Rng& rng,
                      Tape<T>& tape, bool keep_activations = false) {
  tape.n = g.n;
  tape.states.clear();
  tape.draws.clear();
  tape.work.clear();
  tape.states.reserve(steps + 1);
  tape.draws.reserve(steps);
  tape.states.push_back(g.cells);
  if (keep_activations) {
    tape.work.resize(steps);
    for (int t = 0; t < steps; ++t) {
      StepDraws<T> d = draw_step<T>(is_input, cfg, rng);
      ca_step_with(g, p, d, tape.work[t]);
      tape.draws.push_back(std::move(d));
      tape.states.push_back(g.cells);
    }
  } else {
    detail::StepWork<T> work;
    for (int t = 0; t < steps; ++t) {
      StepDraws<T> d = draw_step<T>(is_input, cfg, rng);
      ca_step_with(g, p, d, work);
      tape.draws.push_back(std::move(d));
      tape.states.push_back(g.cells);
    }
  }
}

// Rollout without recording (exploration, evaluation, bootstrap targets).
template <class T>
void rollout(Grid<T>& g, const RuleParams<T>& p, const StepConfig& cfg,
             const std::vector<char>& is_input, int steps, Rng& rng) {
  detail::StepWork<T> work;
  for (int t = 0; t < steps; ++t) {
    StepDraws<T> d = draw_step<T>(is_input, cfg, rng);
    ca_step_with(g, p, d, work);
  }
}

// Forward pass from a stored initial state under fixed draws. Used to replay
// tapes and by the finite-difference checks, which perturb only the params.
template <class T>
CellMat<T> forward_with_draws(const CellMat<T>& init, int n,
                              const RuleParams<T>& p,
                              const std::vector<StepDraws<T>>& draws) {
  Grid<T> g;
  g.n = n;
  g.cells = init;
  detail::StepWork<T> work;
  for (const auto& d : draws) ca_step_with(g, p, d, work);
  return g.cells;
}

template <class T>
CellMat<T> replay(const Tape<T>& tape, const RuleParams<T>& p) {
  return forward_with_draws(tape.states.front(), tape.n, p, tape.draws);
}

// ---------------------------------------------------------------------------
// Loss (task L2 on supervised outputs + out-of-bound penalty on all channels)

template <class T>
struct LossConfig {
  T lambda = T(100);  // overflow penalty weight
  T bound = T(5);
};

// Per-grid supervision: a Q-space target for each output cell that is part of
// the loss. DQN supervises the selected action only; pretraining both.
template <class T>
struct OutputTarget {
  std::array<T, 2> y = {T(0), T(0)};
  std::array<bool, 2> supervised = {false, false};
};

template <class T>
struct LossBreakdown {
  T total = T(0);
  T task = T(0);
  T overflow = T(0);
};

// Batch-mean loss over final grid states; optionally also the gradient with
// respect to each final state.
template <class T>
LossBreakdown<T> loss_batch(const std::vector<const CellMat<T>*>& finals, int n,
                            const IoLayout& layout,
                            const std::vector<OutputTarget<T>>& targets,
                            const LossConfig<T>& cfg,
                            std::vector<CellMat<T>>* dfinals = nullptr) {
  if (finals.size() != targets.size())
    throw std::invalid_argument("loss_batch: one target per grid required");
  const T batch = static_cast<T>(finals.size());
  const T coeff = cfg.lambda / static_cast<T>(n) / static_cast<T>(n);
  const int out_idx[2] = {cell_index(layout, layout.outputs[0]),
                          cell_index(layout, layout.outputs[1])};
  LossBreakdown<T> loss;
  if (dfinals) dfinals->assign(finals.size(), CellMat<T>());
  for (size_t i = 0; i < finals.size(); ++i) {
    const CellMat<T>& cells = *finals[i];
    CellMat<T>* dc = nullptr;
    if (dfinals) {
      (*dfinals)[i].setZero(kChannels, cells.cols());
      dc = &(*dfinals)[i];
    }
    for (int o = 0; o < 2; ++o) {
      if (!targets[i].supervised[o]) continue;
      const T q = T(100) * cells(kInfo, out_idx[o]);
      const T err = q - targets[i].y[o];
      loss.task += err * err / batch;
      if (dc) (*dc)(kInfo, out_idx[o]) += T(2) * err * T(100) / batch;
    }
    // Overflow: sum over every cell and channel of (clip(v) - v)^2.
    auto clipped = cells.array().min(cfg.bound).max(-cfg.bound);
    auto excess = cells.array() - clipped;
    loss.overflow += coeff * excess.square().sum() / batch;
    if (dc) dc->array() += (T(2) * coeff / batch) * excess;
  }
  loss.total = loss.task + loss.overflow;
  return loss;
}

// ---------------------------------------------------------------------------
// Reverse-mode BPTT through recorded rollouts

// Accumulates dLoss/dparams over a batch of tapes, given the gradient of the
// loss with respect to each tape's final state. Forward activations are
// recomputed per step from the stored grids. Noise draws are constants; cells
// that never fired contribute only through their neighbors' perception.
template <class T>
VecX<T> backward(const std::vector<const Tape<T>*>& tapes,
                 const RuleParams<T>& p,
                 const std::vector<CellMat<T>>& dfinals) {
  if (tapes.size() != dfinals.size())
    throw std::invalid_argument("backward: tape/loss-gradient count mismatch");
  VecX<T> grads = VecX<T>::Zero(RuleParams<T>::kCount);
  auto gpw = typename RuleParams<T>::Map(grads.data() + RuleParams<T>::kPwOff,
                                         RuleParams<T>::kPatch,
                                         RuleParams<T>::kFilters);
  auto gpb = typename RuleParams<T>::VMap(grads.data() + RuleParams<T>::kPbOff,
                                          RuleParams<T>::kFilters);
  auto ghw = typename RuleParams<T>::Map(grads.data() + RuleParams<T>::kHwOff,
                                         RuleParams<T>::kFilters,
                                         RuleParams<T>::kHidden);
  auto ghb = typename RuleParams<T>::VMap(grads.data() + RuleParams<T>::kHbOff,
                                          RuleParams<T>::kHidden);
  auto gow = typename RuleParams<T>::Map(grads.data() + RuleParams<T>::kOwOff,
                                         RuleParams<T>::kHidden,
                                         RuleParams<T>::kHead);
  auto gob = typename RuleParams<T>::VMap(grads.data() + RuleParams<T>::kObOff,
                                          RuleParams<T>::kHead);

  detail::StepWork<T> work;
  MatX<T> d_delta, d_hidden, d_hidden_pre, d_features;
  MatXR<T> d_patches;
  for (size_t i = 0; i < tapes.size(); ++i) {
    const Tape<T>& tape = *tapes[i];
    if (dfinals[i].cols() != tape.final_state().cols())
      throw std::invalid_argument("backward: gradient shape mismatch");
    const int n = tape.n;
    const bool recorded = tape.work.size() == tape.draws.size();
    CellMat<T> dc = dfinals[i];
    for (int t = tape.steps() - 1; t >= 0; --t) {
      if (!recorded)
        detail::forward_delta(tape.states[t], n, p, tape.draws[t], work);
      const detail::StepWork<T>& w = recorded ? tape.work[t] : work;
      const auto nf = static_cast<Eigen::Index>(w.fired.size());
      if (nf == 0) continue;  // identity step
      // Gather the update gradient at the fired cells.
      d_delta.resize(nf, RuleParams<T>::kHead);
      for (Eigen::Index k = 0; k < nf; ++k)
        for (int m = 0; m < kNumModifiable; ++m)
          d_delta(k, m) = dc(kModifiable[m], w.fired[k]);
      gob += d_delta.colwise().sum().transpose();
      gow.noalias() += w.hidden.transpose() * d_delta;
      d_hidden.noalias() = d_delta * p.ow().transpose();
      d_hidden_pre =
          (w.hidden_pre.array() > T(0)).template cast<T>() * d_hidden.array();
      ghb += d_hidden_pre.colwise().sum().transpose();
      ghw.noalias() += w.features.transpose() * d_hidden_pre;
      d_features.noalias() = d_hidden_pre * p.hw().transpose();
      gpb += d_features.colwise().sum().transpose();
      gpw.noalias() += w.patches.transpose() * d_features;
      d_patches.noalias() = d_features * p.pw().transpose();
      // Residual identity already carried by dc; add the perception term.
      for (Eigen::Index k = 0; k < nf; ++k) {
        const int idx = w.fired[k];
        const int r = idx % n;
        const int c = idx / n;
        int tap = 0;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dcidx = -1; dcidx <= 1; ++dcidx, ++tap) {
            const int nr = r + dr;
            const int nc = c + dcidx;
            if (nr < 0 || nr >= n || nc < 0 || nc >= n) continue;
            dc.col(nr + nc * n) +=
                d_patches.row(k).template segment<kChannels>(tap * kChannels);
          }
        }
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Adam with the staged learning-rate schedule

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr0 = 5e-3, lr1 = 5e-4, lr2 = 5e-5;
  long decay1 = 1000, decay2 = 10000;
};

inline double lr_at(long global_step, const AdamConfig& cfg = {}) {
  if (global_step < cfg.decay1) return cfg.lr0;
  if (global_step < cfg.decay2) return cfg.lr1;
  return cfg.lr2;
}

template <class T>
struct AdamState {
  VecX<T> m, v;
  long step = 0;  // number of updates applied so far
};

template <class T>
void adam_step(VecX<T>& params, const VecX<T>& grads, AdamState<T>& st,
               const AdamConfig& cfg = {}) {
  if (st.m.size() == 0) {
    st.m = VecX<T>::Zero(params.size());
    st.v = VecX<T>::Zero(params.size());
  }
  const double lr = lr_at(st.step, cfg);
  st.step += 1;
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  st.m = b1 * st.m + (T(1) - b1) * grads;
  st.v = b2 * st.v.array() + (T(1) - b2) * grads.array().square();
  const T corr1 = T(1) - static_cast<T>(std::pow(cfg.beta1, st.step));
  const T corr2 = T(1) - static_cast<T>(std::pow(cfg.beta2, st.step));
  params.array() -= static_cast<T>(lr) * (st.m.array() / corr1) /
                    ((st.v.array() / corr2).sqrt() + static_cast<T>(cfg.eps));
}

}  // namespace nca
