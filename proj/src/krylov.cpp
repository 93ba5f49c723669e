#include "proximh/krylov.hpp"

#include <cmath>

namespace pimh {

KrylovResult conjugate_gradient(const LinearMap& apply, const Vector& b,
                                const CgSettings& settings) {
  if (!(settings.tolerance > 0)) throw ParameterError("conjugate_gradient: tolerance must be positive");
  KrylovResult out;
  out.x = Vector::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) return out;

  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  for (int it = 1; it <= settings.max_iterations; ++it) {
    const Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0)) {
      throw SolverError("conjugate_gradient: operator is not positive definite",
                        out.residual_history);
    }
    const double alpha = rr / pap;
    out.x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    out.iterations = it;
    out.residual_history.push_back(std::sqrt(rr_next) / bnorm);
    if (std::sqrt(rr_next) <= settings.tolerance * bnorm) {
      // confirm against the true residual
      const double true_res = (b - apply(out.x)).norm() / bnorm;
      if (true_res <= settings.tolerance) return out;
      r = b - apply(out.x);
      p = r;
      rr = r.squaredNorm();
      continue;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  throw SolverError("conjugate_gradient: no convergence within " +
                        std::to_string(settings.max_iterations) + " iterations",
                    out.residual_history);
}

KrylovResult gmres_solve(const LinearMap& apply, const LinearMap* precondition, const Vector& b,
                         const GmresSettings& settings) {
  if (!(settings.tolerance > 0)) throw ParameterError("gmres_solve: tolerance must be positive");
  if (settings.restart < 1) throw ParameterError("gmres_solve: restart must be positive");
  const auto prec = [&](const Vector& v) { return precondition ? (*precondition)(v) : v; };

  KrylovResult out;
  const Eigen::Index n = b.size();
  out.x = Vector::Zero(n);
  const Vector pb = prec(b);
  const double pbnorm = pb.norm();
  if (pbnorm == 0.0) return out;

  const int m = settings.restart;
  Matrix v(n, m + 1);
  Matrix h = Matrix::Zero(m + 1, m);
  Vector cs(m), sn(m), g(m + 1);

  while (out.iterations < settings.max_iterations) {
    const Vector r = prec(b - apply(out.x));
    double beta = r.norm();
    if (beta <= settings.tolerance * pbnorm) return out;
    v.col(0) = r / beta;
    g.setZero();
    g[0] = beta;
    h.setZero();

    int j = 0;
    bool converged = false;
    for (; j < m && out.iterations < settings.max_iterations; ++j) {
      Vector w = prec(apply(v.col(j)));
      for (int i = 0; i <= j; ++i) {
        h(i, j) = w.dot(v.col(i));
        w -= h(i, j) * v.col(i);
      }
      h(j + 1, j) = w.norm();
      if (h(j + 1, j) > 0) v.col(j + 1) = w / h(j + 1, j);
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * h(i, j) + sn[i] * h(i + 1, j);
        h(i + 1, j) = -sn[i] * h(i, j) + cs[i] * h(i + 1, j);
        h(i, j) = t;
      }
      const double denom = std::hypot(h(j, j), h(j + 1, j));
      if (denom == 0.0) throw SolverError("gmres_solve: Krylov breakdown", out.residual_history);
      cs[j] = h(j, j) / denom;
      sn[j] = h(j + 1, j) / denom;
      h(j, j) = denom;
      h(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++out.iterations;
      const double rel = std::abs(g[j + 1]) / pbnorm;
      out.residual_history.push_back(rel);
      if (rel <= settings.tolerance) {
        converged = true;
        ++j;
        break;
      }
    }
    // back substitution on the j × j triangle
    Vector yk = h.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    out.x += v.leftCols(j) * yk;
    if (converged) {
      const double true_rel = prec(b - apply(out.x)).norm() / pbnorm;
      if (true_rel <= settings.tolerance) return out;
    }
  }
  throw SolverError("gmres_solve: no convergence within " +
                        std::to_string(settings.max_iterations) + " iterations",
                    out.residual_history);
}

}  // namespace pimh
