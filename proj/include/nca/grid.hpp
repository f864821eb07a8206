#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "nca/rng.hpp"
#include "nca/types.hpp"

namespace nca {

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

// One input cell: where it sits and which observation it transmits.
struct IoInput {
  GridPos pos;
  int obs = 0;  // 0 position, 1 velocity, 2 angle, 3 angular velocity
};

struct IoLayout {
  int n = 32;
  std::vector<IoInput> inputs;
  std::array<GridPos, 2> outputs;  // readout order: (left action, right action)

  // The 8 inputs sit on an octagon around the grid center, two cells per
  // observation at opposite vertices; "first" is the left-half cell. The two
  // outputs are offset two cells left/right of the center.
  static IoLayout standard() {
    IoLayout l;
    l.n = 32;
    l.inputs = {
        {{8, 13}, 0},  {{24, 19}, 0},   // cart position
        {{24, 13}, 1}, {{8, 19}, 1},    // cart velocity
        {{13, 8}, 2},  {{19, 24}, 2},   // pole angle
        {{19, 8}, 3},  {{13, 24}, 3},   // pole angular velocity
    };
    l.outputs = {GridPos{16, 14}, GridPos{16, 18}};
    return l;
  }
};

// Per-observation factors chosen so typical observations land in ~[-1, 1].
struct ObsScaling {
  std::array<double, 4> factor = {1.0 / 2.4, 1.0 / 3.0, 1.0 / 0.21, 1.0 / 3.0};
};

template <class T>
struct Grid {
  int n = 0;
  CellMat<T> cells;  // 6 x n*n, cell (r,c) at column r + c*n

  T& at(int row, int col, int chan) { return cells(chan, row + col * n); }
  T at(int row, int col, int chan) const { return cells(chan, row + col * n); }
};

inline int cell_index(const IoLayout& l, GridPos p) { return p.row + p.col * l.n; }

// Flags marking the input cells; their state is owned by set_observations and
// must never be touched by updates or damage.
inline std::vector<char> input_cell_mask(const IoLayout& l) {
  std::vector<char> m(static_cast<size_t>(l.n) * l.n, 0);
  for (const auto& in : l.inputs) m[cell_index(l, in.pos)] = 1;
  return m;
}

template <class T>
void fix_identifier_channels(Grid<T>& g, const IoLayout& l) {
  g.cells.row(kIdIn).setZero();
  g.cells.row(kIdOut).setZero();
  for (const auto& in : l.inputs) g.cells(kIdIn, cell_index(l, in.pos)) = T(1);
  for (const auto& out : l.outputs) g.cells(kIdOut, cell_index(l, out)) = T(1);
}

// Fresh grid: modifiable channels uniform in [-1,1], identifiers from the
// layout, input cells held at info = 0 and hidden = 1 until the first
// observation arrives.
template <class T>
Grid<T> seed_grid(const IoLayout& l, Rng& rng) {
  Grid<T> g;
  g.n = l.n;
  g.cells.setZero(kChannels, l.n * l.n);
  const std::vector<char> is_input = input_cell_mask(l);
  std::uniform_real_distribution<T> u(T(-1), T(1));
  for (int idx = 0; idx < l.n * l.n; ++idx) {
    if (is_input[idx]) {
      g.cells(kInfo, idx) = T(0);
      g.cells(kHidden0, idx) = T(1);
      g.cells(kHidden1, idx) = T(1);
      g.cells(kHidden2, idx) = T(1);
    } else {
      for (int m : kModifiable) g.cells(m, idx) = u(rng);
    }
  }
  fix_identifier_channels(g, l);
  return g;
}

// Writes one observation vector into the input cells (scaled), refreshing the
// full fixed state of every input cell. Idempotent for fixed obs.
template <class T>
void set_observations(Grid<T>& g, const IoLayout& l, const ObsScaling& s,
                      const std::array<double, 4>& obs) {
  for (const auto& in : l.inputs) {
    const int idx = cell_index(l, in.pos);
    g.cells(kInfo, idx) = static_cast<T>(obs[in.obs] * s.factor[in.obs]);
    g.cells(kIdIn, idx) = T(1);
    g.cells(kIdOut, idx) = T(0);
    g.cells(kHidden0, idx) = T(1);
    g.cells(kHidden1, idx) = T(1);
    g.cells(kHidden2, idx) = T(1);
  }
}

// Replaces the modifiable channels of every cell within `radius` of `center`
// with uniform random values in [-1,1]. Input cells are immune; output cells
// are not. Identifier channels are re-fixed afterward.
template <class T>
void apply_damage(Grid<T>& g, const IoLayout& l, GridPos center, double radius,
                  Rng& rng) {
  const std::vector<char> is_input = input_cell_mask(l);
  std::uniform_real_distribution<T> u(T(-1), T(1));
  const int r0 = std::max(0, center.row - static_cast<int>(radius));
  const int r1 = std::min(g.n - 1, center.row + static_cast<int>(radius));
  const int c0 = std::max(0, center.col - static_cast<int>(radius));
  const int c1 = std::min(g.n - 1, center.col + static_cast<int>(radius));
  for (int c = c0; c <= c1; ++c) {
    for (int r = r0; r <= r1; ++r) {
      const double dr = r - center.row;
      const double dc = c - center.col;
      if (dr * dr + dc * dc > radius * radius) continue;
      const int idx = r + c * g.n;
      if (is_input[idx]) continue;
      for (int m : kModifiable) g.cells(m, idx) = u(rng);
    }
  }
  fix_identifier_channels(g, l);
}

struct DeleteInputsResult {
  IoLayout layout;
  bool observation_blinded = false;  // some observation lost all of its cells
};

// Removes the chosen input cells (indices into the canonical order); they
// become ordinary intermediate cells in grids seeded afterwards.
inline DeleteInputsResult delete_inputs(const IoLayout& l,
                                        const std::vector<int>& which) {
  DeleteInputsResult res;
  res.layout = l;
  res.layout.inputs.clear();
  for (int i = 0; i < static_cast<int>(l.inputs.size()); ++i) {
    if (std::find(which.begin(), which.end(), i) == which.end())
      res.layout.inputs.push_back(l.inputs[i]);
  }
  std::array<int, 4> remaining = {0, 0, 0, 0};
  for (const auto& in : res.layout.inputs) remaining[in.obs]++;
  for (const auto& in : l.inputs)
    if (remaining[in.obs] == 0) res.observation_blinded = true;
  return res;
}

}  // namespace nca
