#pragma once

#include <Eigen/Dense>

namespace nca {

template <class T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using MatXR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using ArrX = Eigen::Array<T, Eigen::Dynamic, 1>;

// Cell-state storage: one column per cell, one row per channel.
// Spatial index of cell (row r, col c) on an n-by-n grid is r + c*n.
template <class T>
using CellMat = Eigen::Matrix<T, 6, Eigen::Dynamic>;

inline constexpr int kChannels = 6;

// Channel roles.
enum Chan : int {
  kInfo = 0,   // task inputs / outputs transit here
  kIdIn = 1,   // 1 at input cells, 0 elsewhere
  kIdOut = 2,  // 1 at output cells, 0 elsewhere
  kHidden0 = 3,
  kHidden1 = 4,
  kHidden2 = 5,
};

// Channels the update rule may write (everything except the identifiers).
inline constexpr int kModifiable[4] = {kInfo, kHidden0, kHidden1, kHidden2};
inline constexpr int kNumModifiable = 4;

}  // namespace nca
