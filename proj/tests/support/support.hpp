#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "modee/autodiff.hpp"
#include "modee/rng.hpp"

namespace modee::testing {

inline ad::Matrix random_matrix(Rng& rng, ad::Index rows, ad::Index cols, double scale = 1.0) {
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.uniform(-1.0, 1.0);
  return m;
}

/// ||a - b|| / max(||a||, ||b||, 1e-6). The floor keeps finite-difference
/// noise around exactly-zero gradients (dead ReLU units) from reading as 100%.
inline double relative_error(const ad::Matrix& a, const ad::Matrix& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-6});
  return (a - b).norm() / denom;
}

/// Central differences of f with respect to every entry of leaf.
inline ad::Matrix numeric_gradient(const std::function<double()>& f, ad::Var& leaf, double h = 1e-5) {
  ad::Matrix g(leaf.rows(), leaf.cols());
  ad::Matrix& w = leaf.mutable_value();
  for (ad::Index i = 0; i < w.size(); ++i) {
    const double saved = w.data()[i];
    w.data()[i] = saved + h;
    const double up = f();
    w.data()[i] = saved - h;
    const double down = f();
    w.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Gradient held by leaf, or zeros when nothing reached it.
inline ad::Matrix grad_or_zero(const ad::Var& leaf) {
  if (leaf.grad().size() == 0) return ad::Matrix::Zero(leaf.rows(), leaf.cols());
  return leaf.grad();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  static std::random_device rd;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("modee-" + name + "-" + std::to_string(rd()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace modee::testing
