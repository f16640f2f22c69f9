#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lifegen/errors.hpp"

namespace lifegen {

// Small dense symmetric-matrix helpers in double precision, sized for the
// feature dimensions used by the metrics (d <= a few hundred).

using Matrix = std::vector<double>;  // row-major d x d

inline void check_symmetric(const Matrix& m, int d, double tol = 1e-6) {
  if (static_cast<std::size_t>(d) * d != m.size())
    throw DimensionMismatch("matrix storage does not match dimension " +
                            std::to_string(d));
  double scale = 0;
  for (double v : m) scale = std::max(scale, std::abs(v));
  const double bound = tol * std::max(1.0, scale);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(m[i * d + j] - m[j * d + i]) > bound)
        throw NotSymmetric("entry (" + std::to_string(i) + "," +
                           std::to_string(j) + ") differs from its mirror");
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
// eigenvalues; `q` receives the eigenvectors as columns (q[i*d+k] is
// component i of eigenvector k), so A = Q diag(w) Q^T.
inline std::vector<double> jacobi_eigen(Matrix a, int d, Matrix& q) {
  check_symmetric(a, d);
  q.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) q[i * d + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
    if (off < 1e-24) break;

    for (int p = 0; p < d; ++p)
      for (int r = p + 1; r < d; ++r) {
        const double apr = a[p * d + r];
        if (std::abs(apr) < 1e-300) continue;
        const double app = a[p * d + p], arr = a[r * d + r];
        const double theta = (arr - app) / (2.0 * apr);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (int k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akr = a[k * d + r];
          a[k * d + p] = c * akp - s * akr;
          a[k * d + r] = s * akp + c * akr;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = a[p * d + k], ark = a[r * d + k];
          a[p * d + k] = c * apk - s * ark;
          a[r * d + k] = s * apk + c * ark;
        }
        for (int k = 0; k < d; ++k) {
          const double qkp = q[k * d + p], qkr = q[k * d + r];
          q[k * d + p] = c * qkp - s * qkr;
          q[k * d + r] = s * qkp + c * qkr;
        }
      }
  }

  std::vector<double> w(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) w[static_cast<std::size_t>(i)] = a[i * d + i];
  return w;
}

// Principal square root of a symmetric PSD matrix; negative eigenvalues from
// roundoff are clamped to zero.
inline Matrix psd_sqrt(const Matrix& m, int d) {
  Matrix q;
  std::vector<double> w = jacobi_eigen(m, d, q);
  for (auto& v : w) v = v > 0 ? std::sqrt(v) : 0.0;
  Matrix out(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double s = 0;
      for (int k = 0; k < d; ++k)
        s += q[i * d + k] * w[static_cast<std::size_t>(k)] * q[j * d + k];
      out[i * d + j] = s;
    }
  return out;
}

inline Matrix mat_mul(const Matrix& a, const Matrix& b, int d) {
  Matrix out(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double v = a[i * d + k];
      if (v == 0.0) continue;
      for (int j = 0; j < d; ++j) out[i * d + j] += v * b[k * d + j];
    }
  return out;
}

inline double trace(const Matrix& m, int d) {
  double t = 0;
  for (int i = 0; i < d; ++i) t += m[i * d + i];
  return t;
}

}  // namespace lifegen
