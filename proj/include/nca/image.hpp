#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "nca/types.hpp"

namespace nca {

// Binary PGM, values mapped linearly from [lo, hi] to [0, 255].
template <class Derived>
void write_pgm(const std::string& path, const Eigen::MatrixBase<Derived>& m,
               double lo, double hi) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write image: " + path);
  f << "P5\n" << m.cols() << " " << m.rows() << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = (static_cast<double>(m(r, c)) - lo) / span;
      const int byte = static_cast<int>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
      f.put(static_cast<char>(static_cast<unsigned char>(byte)));
    }
  }
  if (!f) throw std::runtime_error("short write on image: " + path);
}

// Binary PPM with a blue-white-red diverging map over [-vmax, vmax]:
// negative values blue, positive red.
template <class Derived>
void write_ppm_signed(const std::string& path,
                      const Eigen::MatrixBase<Derived>& m, double vmax) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write image: " + path);
  f << "P6\n" << m.cols() << " " << m.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double t =
          std::clamp(static_cast<double>(m(r, c)) / vmax, -1.0, 1.0);
      unsigned char rgb[3];
      if (t >= 0) {
        rgb[0] = 255;
        rgb[1] = static_cast<unsigned char>(255.0 * (1.0 - t) + 0.5);
        rgb[2] = rgb[1];
      } else {
        rgb[2] = 255;
        rgb[1] = static_cast<unsigned char>(255.0 * (1.0 + t) + 0.5);
        rgb[0] = rgb[1];
      }
      f.write(reinterpret_cast<const char*>(rgb), 3);
    }
  }
  if (!f) throw std::runtime_error("short write on image: " + path);
}

}  // namespace nca
