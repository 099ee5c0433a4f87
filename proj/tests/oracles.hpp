#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library's solvers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "collab/types.hpp"

namespace oracle {

using collab::Matrix;
using collab::Vector;

/// Euclidean projection onto {w ≥ 0, Σw = 1} over the coordinates j ≠ owner.
inline Vector project_simplex(const Vector& v, std::size_t owner) {
  std::vector<double> u;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (static_cast<std::size_t>(j) != owner) u.push_back(v(j));
  }
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumsum += u[k];
    const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) tau = t;
  }
  Vector w = Vector::Zero(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (static_cast<std::size_t>(j) != owner) w(j) = std::max(v(j) - tau, 0.0);
  }
  return w;
}

/// Projected gradient on λ1‖w‖² + λ2 dᵀw over the simplex, step 1/(2λ1)
/// scaled down by half for safety, until successive iterates differ by < tol.
inline Vector simplex_qp(const Vector& d, std::size_t owner, double lambda1, double lambda2, double tol = 1e-10) {
  const auto n = d.size();
  Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n - 1));
  w(static_cast<Eigen::Index>(owner)) = 0.0;
  const double step = 0.5 / (2.0 * lambda1);
  for (int it = 0; it < 2000000; ++it) {
    const Vector grad = 2.0 * lambda1 * w + lambda2 * d;
    const Vector next = project_simplex(w - step * grad, owner);
    const double diff = (next - w).cwiseAbs().maxCoeff();
    w = next;
    if (diff < tol) break;
  }
  return w;
}

/// KKT solution by enumerating every candidate support (small N only).
inline std::optional<Vector> simplex_qp_kkt(const Vector& d, std::size_t owner, double lambda1, double lambda2) {
  const auto n = static_cast<std::size_t>(d.size());
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != owner) others.push_back(j);
  }
  for (unsigned mask = 1; mask < (1u << others.size()); ++mask) {
    double dsum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < others.size(); ++k) {
      if (mask & (1u << k)) {
        dsum += d(static_cast<Eigen::Index>(others[k]));
        ++count;
      }
    }
    // Stationarity on the support: 2λ1 w_j + λ2 d_j + ν = 0, Σ w_j = 1.
    const double nu = -(2.0 * lambda1 + lambda2 * dsum) / count;
    Vector w = Vector::Zero(static_cast<Eigen::Index>(n));
    bool ok = true;
    for (std::size_t k = 0; k < others.size() && ok; ++k) {
      const double dj = d(static_cast<Eigen::Index>(others[k]));
      if (mask & (1u << k)) {
        w(static_cast<Eigen::Index>(others[k])) = -(lambda2 * dj + nu) / (2.0 * lambda1);
        ok = w(static_cast<Eigen::Index>(others[k])) >= -1e-12;
      } else {
        ok = lambda2 * dj + nu >= -1e-12;  // dual feasibility off the support
      }
    }
    if (ok) return w;
  }
  return std::nullopt;
}

/// Central-difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x;
    Vector b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian of a vector function (columns = inputs).
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x;
    Vector b = x;
    a(i) += h;
    b(i) -= h;
    j.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

/// Gradient descent on ½(θ−α)ᵀH(θ−α) + λ2 Σ_j w_j‖θ − θ_j‖².
inline Vector surrogate_minimizer(const Vector& alpha, const Matrix& h, double lambda2, const Vector& weights,
                                  const std::vector<Vector>& neighbors, double tol = 1e-13) {
  const double wsum = weights.sum();
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const double lmax = es.eigenvalues().maxCoeff() + 2.0 * lambda2 * wsum;
  const double lmin = es.eigenvalues().minCoeff() + 2.0 * lambda2 * wsum;
  // Optimal fixed step for a strongly convex quadratic.
  const double step = 2.0 / (lmax + lmin);
  Vector theta = alpha;
  for (int it = 0; it < 5000000; ++it) {
    Vector grad = h * (theta - alpha);
    for (std::size_t j = 0; j < neighbors.size(); ++j) {
      grad += 2.0 * lambda2 * weights(static_cast<Eigen::Index>(j)) * (theta - neighbors[j]);
    }
    if (grad.norm() < tol) break;
    theta -= step * grad;
  }
  return theta;
}

inline Matrix random_spd(std::size_t m, std::mt19937_64& rng, double min_eig = 0.1) {
  std::normal_distribution<double> g;
  Matrix a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = g(rng);
  return a * a.transpose() / static_cast<double>(m) + min_eig * Matrix::Identity(a.rows(), a.cols());
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix a(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < a.cols(); ++c)
    for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, c) = g(rng);
  return a;
}

inline bool close_rel(double a, double b, double rtol, double atol = 0.0) {
  return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

}  // namespace oracle
