#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "pdeopt/csr.hpp"

namespace pdeopt {

struct SolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  double wall_time = 0.0;  // seconds
};

/// Matrix-free operator contract: apply() must be linear; precondition(),
/// when set, is applied on the right for GMRES and must be SPD for
/// MINRES/CG.
template <class T>
struct LinearOperator {
  Eigen::Index n = 0;
  std::function<void(const Vector<T>&, Vector<T>&)> apply;
  std::function<void(const Vector<T>&, Vector<T>&)> precondition;

  bool has_preconditioner() const { return static_cast<bool>(precondition); }
};

template <class T>
LinearOperator<T> make_operator(const CsrMatrix<T>& a) {
  if (a.n_rows != a.n_cols) throw ContractError("make_operator: matrix not square");
  LinearOperator<T> op;
  op.n = a.n_rows;
  op.apply = [&a](const Vector<T>& x, Vector<T>& y) { a.apply(x, y); };
  return op;
}

namespace detail {

class WallTimer {
 public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

template <class T>
bool all_finite(const Vector<T>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(std::abs(v[i]))) return false;
  }
  return true;
}

inline double conj_value(double x) { return x; }
inline Complex conj_value(const Complex& x) { return std::conj(x); }

// Givens rotation zeroing h2 against h1; c real, s may be complex.
template <class T>
void make_givens(T h1, T h2, double& c, T& s) {
  const double a1 = std::abs(h1), a2 = std::abs(h2);
  if (a2 == 0.0) {
    c = 1.0;
    s = T(0);
    return;
  }
  if (a1 == 0.0) {
    c = 0.0;
    s = T(1);
    return;
  }
  const double t = std::hypot(a1, a2);
  c = a1 / t;
  s = (h1 / T(a1)) * (conj_value(h2) / T(t));
}

}  // namespace detail

struct GmresOptions {
  double tol = 1e-10;       // true relative residual ||b - Ax|| / ||b||
  int restart = 200;        // effectively unrestarted at the scales used here
  int max_iter = 2000;
  // Flexible (FGMRES) storage for preconditioners that are themselves inner
  // iterations and hence not a fixed linear operator.
  bool flexible = false;
  std::vector<double>* residual_history = nullptr;  // Arnoldi estimates, optional
};

/// Restarted GMRES with right preconditioning, so the convergence test and
/// the reported residual are the true residual of the original system.
/// Returns the best iterate with converged=false when max_iter is hit;
/// throws NumericalError on NaN/Inf breakdown in the Arnoldi process.
template <class T>
std::pair<Vector<T>, SolveStats> gmres(const LinearOperator<T>& op, const Vector<T>& b,
                                       const GmresOptions& opt = {}) {
  detail::WallTimer timer;
  SolveStats stats;
  if (b.size() != op.n) throw ContractError("gmres: rhs dimension mismatch");
  Vector<T> x = Vector<T>::Zero(op.n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    stats.converged = true;
    stats.wall_time = timer.seconds();
    return {x, stats};
  }

  Vector<T> r(op.n), w(op.n), z(op.n);
  op.apply(x, r);
  r = b - r;
  Vector<T> best_x = x;
  double best_res = r.norm() / bnorm;

  const int m = std::max(1, opt.restart);
  const bool flexible = opt.flexible && op.has_preconditioner();
  std::vector<Vector<T>> basis(m + 1);
  std::vector<Vector<T>> zbasis(flexible ? m : 0);
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> hess =
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>::Zero(m + 1, m);
  std::vector<double> giv_c(m);
  std::vector<T> giv_s(m);
  Vector<T> g(m + 1);

  while (true) {
    double rnorm = r.norm();
    stats.relative_residual = rnorm / bnorm;
    if (stats.relative_residual < best_res) {
      best_res = stats.relative_residual;
      best_x = x;
    }
    if (stats.relative_residual <= opt.tol) {
      stats.converged = true;
      break;
    }
    if (stats.iterations >= opt.max_iter) break;

    basis[0] = r / T(rnorm);
    g.setZero();
    g[0] = T(rnorm);
    int k = 0;  // columns completed this cycle
    bool happy = false;

    for (int j = 0; j < m && stats.iterations < opt.max_iter; ++j) {
      if (op.has_preconditioner()) {
        op.precondition(basis[j], z);
        if (flexible) zbasis[j] = z;
        op.apply(z, w);
      } else {
        op.apply(basis[j], w);
      }
      const double wnorm_pre = w.norm();
      for (int i = 0; i <= j; ++i) {
        const T hij = basis[i].dot(w);
        hess(i, j) = hij;
        w -= hij * basis[i];
      }
      const double hnext = w.norm();
      if (!std::isfinite(hnext) || !detail::all_finite(w))
        throw NumericalError("gmres: breakdown (NaN/Inf in Arnoldi)");
      hess(j + 1, j) = T(hnext);

      for (int i = 0; i < j; ++i) {
        const T t1 = hess(i, j), t2 = hess(i + 1, j);
        hess(i, j) = T(giv_c[i]) * t1 + giv_s[i] * t2;
        hess(i + 1, j) = -detail::conj_value(giv_s[i]) * t1 + T(giv_c[i]) * t2;
      }
      detail::make_givens(hess(j, j), hess(j + 1, j), giv_c[j], giv_s[j]);
      hess(j, j) = T(giv_c[j]) * hess(j, j) + giv_s[j] * hess(j + 1, j);
      hess(j + 1, j) = T(0);
      g[j + 1] = -detail::conj_value(giv_s[j]) * g[j];
      g[j] = T(giv_c[j]) * g[j];

      ++stats.iterations;
      k = j + 1;
      const double est = std::abs(g[j + 1]);
      if (opt.residual_history) opt.residual_history->push_back(est / bnorm);

      happy = hnext <= 1e-14 * std::max(wnorm_pre, 1e-300);
      if (happy || est <= opt.tol * bnorm) break;
      basis[j + 1] = w / T(hnext);
    }

    // Solve the small triangular system and update the iterate.
    Vector<T> y(k);
    for (int i = k - 1; i >= 0; --i) {
      T acc = g[i];
      for (int j2 = i + 1; j2 < k; ++j2) acc -= hess(i, j2) * y[j2];
      y[i] = acc / hess(i, i);
    }
    Vector<T> t = Vector<T>::Zero(op.n);
    if (flexible) {
      for (int i = 0; i < k; ++i) t += y[i] * zbasis[i];
      x += t;
    } else {
      for (int i = 0; i < k; ++i) t += y[i] * basis[i];
      if (op.has_preconditioner()) {
        op.precondition(t, z);
        x += z;
      } else {
        x += t;
      }
    }
    op.apply(x, r);
    r = b - r;
  }

  op.apply(x, w);
  stats.relative_residual = (b - w).norm() / bnorm;
  if (stats.relative_residual > best_res) {
    x = best_x;
    stats.relative_residual = best_res;
  }
  stats.converged = stats.relative_residual <= opt.tol;
  stats.wall_time = timer.seconds();
  return {x, stats};
}

struct MinresOptions {
  double tol = 1e-10;
  int max_iter = 2000;
  bool check_symmetry = true;
  std::vector<double>* residual_history = nullptr;  // true relative residuals
};

namespace detail {

template <class T>
void probe_symmetry(const LinearOperator<T>& op) {
  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector<T> x(op.n), y(op.n), ax(op.n), ay(op.n);
  for (Eigen::Index i = 0; i < op.n; ++i) {
    x[i] = T(dist(rng));
    y[i] = T(dist(rng));
  }
  op.apply(x, ax);
  op.apply(y, ay);
  const T lhs = x.dot(ay);
  const T rhs = y.dot(ax);
  const double scale = x.norm() * ay.norm() + y.norm() * ax.norm() + 1e-30;
  if (std::abs(lhs - rhs) > 1e-10 * scale)
    throw ContractError("minres: operator failed the symmetry probe x'Ay == y'Ax");
}

}  // namespace detail

/// Preconditioned MINRES for real symmetric (possibly indefinite) systems.
/// The preconditioner, when present, must be SPD; convergence is declared
/// on the true relative residual, recomputed every iteration.
inline std::pair<Vec, SolveStats> minres(const LinearOperator<double>& op, const Vec& b,
                                         const MinresOptions& opt = {}) {
  detail::WallTimer timer;
  SolveStats stats;
  if (b.size() != op.n) throw ContractError("minres: rhs dimension mismatch");
  Vec x = Vec::Zero(op.n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    stats.converged = true;
    stats.wall_time = timer.seconds();
    return {x, stats};
  }
  if (opt.check_symmetry && op.n >= 2) detail::probe_symmetry(op);

  // Paige--Saunders recurrences with an SPD preconditioner.
  Vec r1 = b, r2 = b, y(op.n);
  if (op.has_preconditioner())
    op.precondition(b, y);
  else
    y = b;
  double beta1 = r1.dot(y);
  if (beta1 < 0.0) throw ContractError("minres: preconditioner is not positive definite");
  if (beta1 == 0.0) {
    stats.converged = true;
    stats.wall_time = timer.seconds();
    return {x, stats};
  }
  beta1 = std::sqrt(beta1);

  double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
  double cs = -1.0, sn = 0.0;
  Vec w = Vec::Zero(op.n), w2 = Vec::Zero(op.n), w1(op.n), v(op.n), tmp(op.n);

  Vec best_x = x;
  double best_res = 1.0;

  for (int itn = 1; itn <= opt.max_iter; ++itn) {
    v = y / beta;
    op.apply(v, y);
    if (itn >= 2) y -= (beta / oldb) * r1;
    const double alfa = v.dot(y);
    y -= (alfa / beta) * r2;
    r1 = r2;
    r2 = y;
    if (op.has_preconditioner())
      op.precondition(r2, y);
    else
      y = r2;
    oldb = beta;
    beta = r2.dot(y);
    if (beta < 0.0) throw ContractError("minres: preconditioner is not positive definite");
    beta = std::sqrt(beta);
    const bool lanczos_exhausted = beta < 1e-300;

    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;
    double gamma = std::hypot(gbar, beta);
    gamma = std::max(gamma, 1e-300);
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;

    w1 = w2;
    w2 = w;
    w = (v - oldeps * w1 - delta * w2) / gamma;
    x += phi * w;
    ++stats.iterations;

    op.apply(x, tmp);
    const double true_res = (b - tmp).norm() / bnorm;
    if (opt.residual_history) opt.residual_history->push_back(true_res);
    if (true_res < best_res) {
      best_res = true_res;
      best_x = x;
    }
    if (true_res <= opt.tol || lanczos_exhausted) break;
    if (!std::isfinite(true_res)) throw NumericalError("minres: breakdown (NaN/Inf residual)");
  }

  stats.relative_residual = best_res;
  stats.converged = best_res <= opt.tol;
  stats.wall_time = timer.seconds();
  return {best_x, stats};
}

struct CgOptions {
  double tol = 1e-12;
  int max_iter = 5000;
};

/// Preconditioned conjugate gradients for SPD systems.
inline std::pair<Vec, SolveStats> cg(const LinearOperator<double>& op, const Vec& b,
                                     const CgOptions& opt = {}) {
  detail::WallTimer timer;
  SolveStats stats;
  if (b.size() != op.n) throw ContractError("cg: rhs dimension mismatch");
  Vec x = Vec::Zero(op.n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    stats.converged = true;
    stats.wall_time = timer.seconds();
    return {x, stats};
  }
  Vec r = b, z(op.n), p(op.n), ap(op.n);
  if (op.has_preconditioner())
    op.precondition(r, z);
  else
    z = r;
  p = z;
  double rz = r.dot(z);
  for (int it = 0; it < opt.max_iter; ++it) {
    op.apply(p, ap);
    const double alpha = rz / p.dot(ap);
    x += alpha * p;
    r -= alpha * ap;
    ++stats.iterations;
    if (r.norm() / bnorm <= opt.tol) break;
    if (op.has_preconditioner())
      op.precondition(r, z);
    else
      z = r;
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  op.apply(x, ap);
  stats.relative_residual = (b - ap).norm() / bnorm;
  stats.converged = stats.relative_residual <= opt.tol;
  stats.wall_time = timer.seconds();
  return {x, stats};
}

struct RefinementResult {
  Vec x;
  int sweeps = 0;
  bool stagnated = false;
  double relative_residual = 0.0;
};

/// Classical residual-correction iterative refinement around an approximate
/// solver (standard precision). Stops early once the residual no longer
/// improves; two consecutive growths return the best iterate with a
/// stagnation flag.
inline RefinementResult iterative_refinement(
    const std::function<Vec(const Vec&)>& approximate_solve, const LinearOperator<double>& op,
    const Vec& b, int sweeps) {
  RefinementResult out;
  out.x = Vec::Zero(op.n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) return out;

  Vec r = b, ax(op.n);
  Vec best_x = out.x;
  double best_res = 1.0, prev_res = 1.0;
  int growth_streak = 0;
  for (int k = 0; k < sweeps; ++k) {
    const Vec d = approximate_solve(r);
    if (!detail::all_finite(d)) throw NumericalError("iterative_refinement: non-finite correction");
    out.x += d;
    op.apply(out.x, ax);
    r = b - ax;
    const double res = r.norm() / bnorm;
    ++out.sweeps;
    if (res < best_res) {
      best_res = res;
      best_x = out.x;
    }
    if (res <= 1e-14) break;  // at the double-precision floor
    growth_streak = res > prev_res ? growth_streak + 1 : 0;
    if (growth_streak >= 2) {
      out.stagnated = true;
      break;
    }
    if (res >= prev_res * 0.999999 && k > 0) break;  // no further progress
    prev_res = res;
  }
  out.x = best_x;
  out.relative_residual = best_res;
  return out;
}

}  // namespace pdeopt
