#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "nca/grid.hpp"
#include "nca/image.hpp"

namespace nca {

// Raw grid snapshot: JSON header line, then the cell values as little-endian
// float32 in row-major (row, col, channel) order.
template <class T>
void write_grid_dump(const std::string& path, const Grid<T>& g,
                     const IoLayout& l) {
  nlohmann::json j;
  j["n"] = g.n;
  j["channels"] = kChannels;
  j["order"] = "row-major [row][col][channel]";
  j["dtype"] = "f32";
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& in : l.inputs) inputs.push_back({in.pos.row, in.pos.col, in.obs});
  j["layout"] = {{"inputs", inputs},
                 {"outputs",
                  {{l.outputs[0].row, l.outputs[0].col},
                   {l.outputs[1].row, l.outputs[1].col}}}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write grid dump: " + path);
  f << j.dump() << "\n";
  for (int r = 0; r < g.n; ++r) {
    for (int c = 0; c < g.n; ++c) {
      for (int ch = 0; ch < kChannels; ++ch) {
        const float v = static_cast<float>(g.cells(ch, r + c * g.n));
        f.write(reinterpret_cast<const char*>(&v), sizeof(float));
      }
    }
  }
  if (!f) throw std::runtime_error("short write on grid dump: " + path);
}

// One signed-colormap image per channel, scaled to the loss bound.
template <class T>
void write_grid_images(const std::string& prefix, const Grid<T>& g,
                       double vmax = 5.0) {
  for (int ch = 0; ch < kChannels; ++ch) {
    MatX<double> plane(g.n, g.n);
    for (int c = 0; c < g.n; ++c)
      for (int r = 0; r < g.n; ++r)
        plane(r, c) = static_cast<double>(g.cells(ch, r + c * g.n));
    write_ppm_signed(prefix + "_ch" + std::to_string(ch) + ".ppm", plane, vmax);
  }
}

}  // namespace nca
