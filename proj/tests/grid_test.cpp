#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nca/grid.hpp"

using namespace nca;

TEST_CASE("standard layout places 8 inputs and 2 outputs inside the grid") {
  IoLayout l = IoLayout::standard();
  CHECK(l.inputs.size() == 8);
  int per_obs[4] = {0, 0, 0, 0};
  for (const auto& in : l.inputs) {
    CHECK(in.pos.row > 0);
    CHECK(in.pos.row < l.n - 1);
    CHECK(in.pos.col > 0);
    CHECK(in.pos.col < l.n - 1);
    per_obs[in.obs]++;
  }
  for (int k = 0; k < 4; ++k) CHECK(per_obs[k] == 2);
}

TEST_CASE("seeded grid has exactly the layout's identifier cells") {
  IoLayout l = IoLayout::standard();
  Rng rng(11);
  Grid<float> g = seed_grid<float>(l, rng);
  CHECK((g.cells.row(kIdIn).array() == 1.0f).count() == 8);
  CHECK((g.cells.row(kIdIn).array() == 0.0f).count() == 32 * 32 - 8);
  CHECK((g.cells.row(kIdOut).array() == 1.0f).count() == 2);
}

TEST_CASE("seeding is deterministic and bounded") {
  IoLayout l = IoLayout::standard();
  Rng a(42), b(42);
  Grid<float> ga = seed_grid<float>(l, a);
  Grid<float> gb = seed_grid<float>(l, b);
  CHECK(ga.cells == gb.cells);
  CHECK((ga.cells.row(kInfo).array().abs() <= 1.0f).all());
  for (int ch : {kHidden0, kHidden1, kHidden2})
    CHECK((ga.cells.row(ch).array().abs() <= 1.0f).all());
}

TEST_CASE("input cells start neutral: info 0, hidden 1") {
  IoLayout l = IoLayout::standard();
  Rng rng(3);
  Grid<float> g = seed_grid<float>(l, rng);
  for (const auto& in : l.inputs) {
    const int idx = cell_index(l, in.pos);
    CHECK(g.cells(kInfo, idx) == 0.0f);
    CHECK(g.cells(kHidden0, idx) == 1.0f);
    CHECK(g.cells(kHidden1, idx) == 1.0f);
    CHECK(g.cells(kHidden2, idx) == 1.0f);
  }
}

TEST_CASE("observations are scaled into the info channel") {
  IoLayout l = IoLayout::standard();
  ObsScaling s;
  Rng rng(4);
  Grid<float> g = seed_grid<float>(l, rng);

  set_observations(g, l, s, {0.0, 0.0, 0.0, 0.0});
  for (const auto& in : l.inputs) CHECK(g.cells(kInfo, cell_index(l, in.pos)) == 0.0f);

  set_observations(g, l, s, {2.4, 0.0, 0.0, 0.0});
  for (const auto& in : l.inputs) {
    const float v = g.cells(kInfo, cell_index(l, in.pos));
    if (in.obs == 0)
      CHECK(v == doctest::Approx(1.0f));
    else
      CHECK(v == 0.0f);
  }
}

TEST_CASE("sister cells always hold equal info values") {
  IoLayout l = IoLayout::standard();
  ObsScaling s;
  Rng rng(5);
  Grid<float> g = seed_grid<float>(l, rng);
  set_observations(g, l, s, {1.3, -2.0, 0.1, 0.7});
  for (int k = 0; k < 4; ++k) {
    float vals[2];
    int found = 0;
    for (const auto& in : l.inputs)
      if (in.obs == k) vals[found++] = g.cells(kInfo, cell_index(l, in.pos));
    REQUIRE(found == 2);
    CHECK(vals[0] == vals[1]);
  }
}

TEST_CASE("set_observations is idempotent") {
  IoLayout l = IoLayout::standard();
  ObsScaling s;
  Rng rng(6);
  Grid<float> g = seed_grid<float>(l, rng);
  set_observations(g, l, s, {0.5, 1.0, -0.05, 2.0});
  CellMat<float> once = g.cells;
  set_observations(g, l, s, {0.5, 1.0, -0.05, 2.0});
  CHECK(g.cells == once);
}

TEST_CASE("damage redraws the circle but spares input cells") {
  IoLayout l = IoLayout::standard();
  Rng rng(7);
  Grid<float> g = seed_grid<float>(l, rng);
  set_observations(g, l, ObsScaling{}, {1.0, 1.0, 1.0, 1.0});
  CellMat<float> before = g.cells;

  // Circle centered on an input cell, radius large enough to engulf it.
  const GridPos target = l.inputs[0].pos;
  apply_damage(g, l, target, 2.5, rng);
  const int idx = cell_index(l, target);
  CHECK(g.cells.col(idx) == before.col(idx));

  // Every changed cell lies within the circle.
  for (int c = 0; c < l.n; ++c) {
    for (int r = 0; r < l.n; ++r) {
      const int i = r + c * l.n;
      const double dr = r - target.row, dc = c - target.col;
      if (dr * dr + dc * dc > 2.5 * 2.5) CHECK(g.cells.col(i) == before.col(i));
    }
  }
}

TEST_CASE("zero-radius damage touches exactly one cell") {
  IoLayout l = IoLayout::standard();
  Rng rng(8);
  Grid<float> g = seed_grid<float>(l, rng);
  CellMat<float> before = g.cells;
  apply_damage(g, l, {5, 5}, 0.0, rng);
  int changed = 0;
  for (int i = 0; i < l.n * l.n; ++i)
    if (g.cells.col(i) != before.col(i)) ++changed;
  CHECK(changed == 1);
  CHECK(g.cells.col(5 + 5 * l.n) != before.col(5 + 5 * l.n));
  CHECK(g.cells(kIdIn, 5 + 5 * l.n) == 0.0f);
}

TEST_CASE("identifier channels survive damage") {
  IoLayout l = IoLayout::standard();
  Rng rng(9);
  Grid<float> g = seed_grid<float>(l, rng);
  apply_damage(g, l, {16, 16}, 6.0, rng);
  CHECK((g.cells.row(kIdIn).array() == 1.0f).count() == 8);
  CHECK((g.cells.row(kIdOut).array() == 1.0f).count() == 2);
  for (const auto& out : l.outputs) CHECK(g.cells(kIdOut, cell_index(l, out)) == 1.0f);
}

TEST_CASE("deleting inputs demotes them to intermediate cells") {
  IoLayout l = IoLayout::standard();

  auto res = delete_inputs(l, {0, 1});  // both cart-position cells
  CHECK(res.layout.inputs.size() == 6);
  CHECK(res.observation_blinded);
  for (const auto& in : res.layout.inputs) CHECK(in.obs != 0);

  auto none = delete_inputs(l, {});
  CHECK(none.layout.inputs.size() == 8);
  CHECK_FALSE(none.observation_blinded);

  auto one = delete_inputs(l, {4});
  CHECK(one.layout.inputs.size() == 7);
  CHECK_FALSE(one.observation_blinded);

  // A deleted position seeds as a normal cell.
  Rng rng(10);
  Grid<float> g = seed_grid<float>(res.layout, rng);
  for (int i : {0, 1})
    CHECK(g.cells(kIdIn, cell_index(l, l.inputs[i].pos)) == 0.0f);
  CHECK((g.cells.row(kIdIn).array() == 1.0f).count() == 6);
}
