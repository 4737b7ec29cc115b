#include "support/oracles.hpp"

#include <cmath>

namespace uaopf::oracle {

using Cplx = std::complex<double>;

std::vector<Cplx> complex_injections(const NetworkCase& c, const VectorXd& x) {
  const int n = c.n_bus(), np = c.phase_count;
  std::vector<Cplx> V(n * np);
  for (int b = 0; b < n; ++b)
    for (int p = 0; p < np; ++p) V[b * np + p] = Cplx(x[c.var_e(b, p)], x[c.var_f(b, p)]);

  std::vector<std::vector<Cplx>> Y(n * np, std::vector<Cplx>(n * np, Cplx(0, 0)));
  for (const auto& br : c.branches) {
    const int i = c.bus_index(br.from), j = c.bus_index(br.to);
    for (int r = 0; r < np; ++r) {
      for (int s = 0; s < np; ++s) {
        const Cplx ys(br.g(r, s), br.b(r, s));
        const Cplx ysh(br.g_shunt(r, s), br.b_shunt(r, s));
        Y[i * np + r][i * np + s] += ys + ysh;
        Y[j * np + r][j * np + s] += Cplx(br.g(s, r), br.b(s, r)) +
                                     Cplx(br.g_shunt(s, r), br.b_shunt(s, r));
        Y[i * np + r][j * np + s] -= ys;
        Y[j * np + r][i * np + s] -= Cplx(br.g(s, r), br.b(s, r));
      }
    }
  }
  std::vector<Cplx> S(n * np);
  for (int a = 0; a < n * np; ++a) {
    Cplx current(0, 0);
    for (int b = 0; b < n * np; ++b) current += Y[a][b] * V[b];
    S[a] = V[a] * std::conj(current);
  }
  return S;
}

Cplx complex_flow(const NetworkCase& c, const VectorXd& x, int branch, bool from_side, int phase) {
  const auto& br = c.branches[branch];
  const int np = c.phase_count;
  int i = c.bus_index(br.from), j = c.bus_index(br.to);
  MatrixXd G = br.g, B = br.b;
  if (!from_side) {
    std::swap(i, j);
    G.transposeInPlace();
    B.transposeInPlace();
  }
  Cplx total(0, 0);
  const Cplx vi(x[c.var_e(i, phase)], x[c.var_f(i, phase)]);
  for (int pp = 0; pp < np; ++pp) {
    const Cplx dv(x[c.var_e(j, pp)] - x[c.var_e(i, pp)], x[c.var_f(j, pp)] - x[c.var_f(i, pp)]);
    total += Cplx(G(phase, pp), B(phase, pp)) * dv;
  }
  return vi * std::conj(total);
}

void jacobi_eigen(const MatrixXd& symmetric, VectorXd& values, MatrixXd& vectors) {
  const int n = static_cast<int>(symmetric.rows());
  MatrixXd A = symmetric;
  vectors = MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cth = 1.0 / std::sqrt(t * t + 1.0);
        const double sth = t * cth;
        for (int k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = cth * akp - sth * akq;
          A(k, q) = sth * akp + cth * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = cth * apk - sth * aqk;
          A(q, k) = sth * apk + cth * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = vectors(k, p), vkq = vectors(k, q);
          vectors(k, p) = cth * vkp - sth * vkq;
          vectors(k, q) = sth * vkp + cth * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (int i = 0; i < n; ++i) values[i] = A(i, i);
  // sort ascending
  for (int i = 0; i < n; ++i) {
    int best = i;
    for (int j = i + 1; j < n; ++j)
      if (values[j] < values[best]) best = j;
    if (best != i) {
      std::swap(values[i], values[best]);
      vectors.col(i).swap(vectors.col(best));
    }
  }
}

MatrixXd jacobi_project_psd(const MatrixXd& symmetric) {
  VectorXd d;
  MatrixXd U;
  jacobi_eigen(symmetric, d, U);
  for (int i = 0; i < d.size(); ++i) d[i] = std::max(0.0, d[i]);
  return U * d.asDiagonal() * U.transpose();
}

TwoBusSolution solve_two_bus(Cplx y_series, Cplx s2) {
  // With V1 = 1, I2 = y (V2 - V1) and S2 = V2 conj(I2):
  //   S2 / conj(y) = |V2|^2 - V2 = (m - e) - jf,   m = e^2 + f^2.
  // So f = -Im(w), m - e = Re(w), and e solves e^2 - e + (f^2 - Re(w)) = 0.
  const Cplx w = s2 / std::conj(y_series);
  const double R = w.real();
  const double f = -w.imag();
  TwoBusSolution sol;
  const double disc = 1.0 - 4.0 * (f * f - R);
  if (disc < 0.0) return sol;
  sol.exists = true;
  sol.e2 = 0.5 * (1.0 + std::sqrt(disc));  // high-voltage root
  sol.f2 = f;
  return sol;
}

GridFit grid_fit_1d(const std::vector<double>& x, const std::vector<double>& y_act,
                    const std::vector<double>& y_obj, double p_max, double span, double step) {
  GridFit best;
  const int N = static_cast<int>(x.size());
  for (double p = 0.0; p <= p_max + 1e-12; p += step) {
    for (double b = -span; b <= span + 1e-12; b += step) {
      // For fixed (p, b) the optimal c solves a 1-D constrained least squares:
      // c* = clamp(mean residual target, -inf, min slack).
      double cap = std::numeric_limits<double>::infinity();
      double mean = 0.0;
      for (int k = 0; k < N; ++k) {
        const double base = p * x[k] * x[k] + b * x[k];
        cap = std::min(cap, y_act[k] - base);
        mean += y_obj[k] - base;
      }
      mean /= N;
      const double c = std::min(mean, cap);
      double obj = 0.0;
      for (int k = 0; k < N; ++k) {
        const double m = p * x[k] * x[k] + b * x[k] + c - y_obj[k];
        obj += m * m;
      }
      obj /= N;
      if (obj < best.objective) {
        best.objective = obj;
        best.p = p;
        best.b = b;
        best.c = c;
      }
    }
  }
  return best;
}

}  // namespace uaopf::oracle
