// Rough timing of the training hot path: recorded rollouts and BPTT.
#include <chrono>
#include <cstdio>

#include "nca/denormals.hpp"
#include "nca/grad.hpp"

using namespace nca;
using Clock = std::chrono::steady_clock;

int main() {
  flush_denormals();
  IoLayout layout = IoLayout::standard();
  Rng rng(1);
  RuleParams<float> params = RuleParams<float>::init(rng);
  const auto mask = input_cell_mask(layout);
  StepConfig cfg;
  cfg.noise_amp = 0.02;

  const int batch = 16;
  const int steps = 55;

  std::vector<Grid<float>> grids;
  for (int i = 0; i < batch; ++i) grids.push_back(seed_grid<float>(layout, rng));

  // Unrecorded forward (exploration / targets / evaluation path).
  auto t0 = Clock::now();
  for (auto& g : grids) rollout(g, params, cfg, mask, steps, rng);
  auto t1 = Clock::now();
  const double fwd_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  std::printf("forward   %5.1f ms per %d-grid batch (%.2f ms per rollout)\n",
              fwd_ms, batch, fwd_ms / batch);

  // Recorded forward + backward.
  std::vector<Tape<float>> tapes(batch);
  t0 = Clock::now();
  for (int i = 0; i < batch; ++i)
    rollout_recorded(grids[i], params, cfg, mask, steps, rng, tapes[i]);
  t1 = Clock::now();
  const double rec_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  std::printf("recorded  %5.1f ms per %d-grid batch\n", rec_ms, batch);

  std::vector<const Tape<float>*> tape_ptrs;
  std::vector<const CellMat<float>*> finals;
  std::vector<OutputTarget<float>> targets(batch);
  for (int i = 0; i < batch; ++i) {
    tape_ptrs.push_back(&tapes[i]);
    finals.push_back(&tapes[i].final_state());
    targets[i].supervised[i % 2] = true;
    targets[i].y[i % 2] = 1.0f;
  }
  std::vector<CellMat<float>> dfin;
  LossConfig<float> lcfg;
  t0 = Clock::now();
  loss_batch<float>(finals, layout.n, layout, targets, lcfg, &dfin);
  VecX<float> grads = backward<float>(tape_ptrs, params, dfin);
  t1 = Clock::now();
  const double bwd_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  std::printf("backward  %5.1f ms per %d-grid batch\n", bwd_ms, batch);
  std::printf("train step estimate: %.0f ms (record + backward + targets)\n",
              rec_ms + bwd_ms + fwd_ms);
  std::printf("grad norm %g\n", static_cast<double>(grads.norm()));
  return 0;
}
