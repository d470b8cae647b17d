#pragma once

// Time evolution under L = L_vn + L_rel, vectorised Liouvillian assembly and
// steady-state / spectral-gap analysis.

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qfriction/dissipator.hpp"
#include "qfriction/hilbert.hpp"

namespace qfriction {

/// Raised when the adaptive integrator cannot keep the local error below
/// tolerance without shrinking the step under its floor.
class IntegrationFailure : public NumericalError {
 public:
  IntegrationFailure(const std::string& what, double t, Matrix last_good)
      : NumericalError(what), t_(t), last_good_(std::move(last_good)) {}
  double time() const { return t_; }
  const Matrix& last_good_state() const { return last_good_; }

 private:
  double t_;
  Matrix last_good_;
};

enum class Method { rk4, rk45 };

struct Observable {
  std::string name;
  Matrix op;
};

struct IntegrateOptions {
  Method method = Method::rk4;
  double dt = 0.0;    // rk4 step (required > 0 for rk4)
  double tol = 1e-8;  // rk45 absolute tolerance on max |error entry|
  double initial_step = 0.0;
  double min_step = 1e-12;
  long max_steps = 50'000'000;
  bool keep_states = false;
  bool monitor_min_eig = true;
  std::vector<Observable> observables;
};

struct Trajectory {
  HilbertSpace space;
  std::vector<double> times;
  std::vector<Matrix> states;  // empty unless keep_states
  std::vector<double> trace;
  std::vector<double> herm_defect;  // largest pre-correction defect since the previous snapshot
  std::vector<double> min_eig;      // NaN when not monitored
  std::vector<std::string> observable_names;
  std::vector<std::vector<Complex>> observables;  // [observable][time]
  long steps = 0;
  long rejected = 0;
  Matrix final_state;

  std::size_t size() const { return times.size(); }

  const std::vector<Complex>& series(const std::string& name) const {
    for (std::size_t k = 0; k < observable_names.size(); ++k)
      if (observable_names[k] == name) return observables[k];
    throw InvalidArgument("Trajectory: no observable named '" + name + "'");
  }
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b*, the embedded fourth-order error weights.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

class Integrator {
 public:
  Integrator(const LindbladGenerator& gen, const IntegrateOptions& opt, Trajectory& traj)
      : gen_(gen), opt_(opt), traj_(traj) {}

  void record(double t, const Matrix& rho) {
    traj_.times.push_back(t);
    traj_.trace.push_back(rho.trace().real());
    traj_.herm_defect.push_back(pending_defect_);
    pending_defect_ = 0.0;
    traj_.min_eig.push_back(opt_.monitor_min_eig ? min_eigenvalue(rho) : std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < opt_.observables.size(); ++k)
      traj_.observables[k].push_back(trace_product(opt_.observables[k].op, rho));
    if (opt_.keep_states) traj_.states.push_back(rho);
  }

  void symmetrize(Matrix& rho) {
    pending_defect_ = std::max(pending_defect_, hermiticity_defect(rho));
    rho = 0.5 * (rho + rho.adjoint()).eval();
  }

  void rhs(const Matrix& rho, Matrix& out) { gen_.apply_hermitian(rho, out, work_); }

  void rk4_step(Matrix& rho, double h) {
    const auto n = rho.rows();
    k1_.resize(n, n);
    rhs(rho, k1_);
    tmp_ = rho + (0.5 * h) * k1_;
    rhs(tmp_, k2_);
    tmp_ = rho + (0.5 * h) * k2_;
    rhs(tmp_, k3_);
    tmp_ = rho + h * k3_;
    rhs(tmp_, k4_);
    rho += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
    symmetrize(rho);
    ++traj_.steps;
  }

  /// One Dormand-Prince attempt; returns the scaled error, leaves the
  /// candidate in y5_ and its derivative in k7_.
  double dp_attempt(const Matrix& rho, double h) {
    using D = DormandPrince;
    tmp_ = rho + h * D::a21 * k1_;
    rhs(tmp_, k2_);
    tmp_ = rho + h * (D::a31 * k1_ + D::a32 * k2_);
    rhs(tmp_, k3_);
    tmp_ = rho + h * (D::a41 * k1_ + D::a42 * k2_ + D::a43 * k3_);
    rhs(tmp_, k4_);
    tmp_ = rho + h * (D::a51 * k1_ + D::a52 * k2_ + D::a53 * k3_ + D::a54 * k4_);
    rhs(tmp_, k5_);
    tmp_ = rho + h * (D::a61 * k1_ + D::a62 * k2_ + D::a63 * k3_ + D::a64 * k4_ + D::a65 * k5_);
    rhs(tmp_, k6_);
    y5_ = rho + h * (D::b1 * k1_ + D::b3 * k3_ + D::b4 * k4_ + D::b5 * k5_ + D::b6 * k6_);
    rhs(y5_, k7_);
    err_ = h * (D::e1 * k1_ + D::e3 * k3_ + D::e4 * k4_ + D::e5 * k5_ + D::e6 * k6_ + D::e7 * k7_);
    return max_abs(err_) / opt_.tol;
  }

  void run(Matrix rho, const std::vector<double>& times) {
    double t = times.front();
    record(t, rho);
    if (opt_.method == Method::rk4) {
      for (std::size_t i = 1; i < times.size(); ++i) {
        const double span = times[i] - times[i - 1];
        const long nsub = std::max(1L, static_cast<long>(std::ceil(span / opt_.dt - 1e-9)));
        const double h = span / static_cast<double>(nsub);
        for (long k = 0; k < nsub; ++k) rk4_step(rho, h);
        if (!rho.allFinite()) throw IntegrationFailure("integrate: state became non-finite", times[i], rho);
        record(times[i], rho);
      }
    } else {
      const auto n = rho.rows();
      k1_.resize(n, n);
      rhs(rho, k1_);
      double h = opt_.initial_step > 0.0 ? opt_.initial_step : std::min(1e-2, times.back() - times.front());
      for (std::size_t i = 1; i < times.size(); ++i) {
        const double target = times[i];
        while (t < target) {
          const bool last = t + h >= target * (1.0 - 1e-15);
          const double step = last ? target - t : h;
          if (step < opt_.min_step * std::max(1.0, std::abs(t))) {
            throw IntegrationFailure("integrate: step size fell below the rejection floor at t=" + std::to_string(t),
                                     t, rho);
          }
          if (traj_.steps + traj_.rejected > opt_.max_steps) {
            throw IntegrationFailure("integrate: step budget exhausted at t=" + std::to_string(t), t, rho);
          }
          const double err = dp_attempt(rho, step);
          if (!std::isfinite(err)) {
            ++traj_.rejected;
            h = 0.2 * step;
            continue;
          }
          const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
          if (err <= 1.0) {
            t = last ? target : t + step;
            rho = y5_;
            symmetrize(rho);
            k1_ = 0.5 * (k7_ + k7_.adjoint());
            ++traj_.steps;
            // Keep the proposal from the unclamped step when the output
            // grid forced a short final step.
            h = last ? std::max(h, step * factor) : step * factor;
          } else {
            ++traj_.rejected;
            h = step * factor;
          }
        }
        record(target, rho);
      }
    }
    traj_.final_state = std::move(rho);
  }

 private:
  const LindbladGenerator& gen_;
  const IntegrateOptions& opt_;
  Trajectory& traj_;
  double pending_defect_ = 0.0;
  Matrix work_, tmp_, k1_, k2_, k3_, k4_, k5_, k6_, k7_, y5_, err_;
};

}  // namespace detail

/// Uniform output grid t0, t0 + (t1 - t0)/n, ..., t1.
inline std::vector<double> uniform_times(double t0, double t1, int intervals) {
  if (intervals < 1 || !(t1 > t0)) throw InvalidArgument("uniform_times: need t1 > t0 and at least one interval");
  std::vector<double> t(static_cast<std::size_t>(intervals) + 1);
  for (int k = 0; k <= intervals; ++k) t[static_cast<std::size_t>(k)] = t0 + (t1 - t0) * k / intervals;
  return t;
}

/// Integrates d rho/dt = L[rho], recording monitors at each requested time.
/// rho is re-symmetrised after every accepted step; the pre-correction
/// hermiticity defect is what the herm_defect monitor reports.
inline Trajectory integrate(const DensityMatrix& rho0, const Operator& h, const DissipatorSpec& spec,
                            const std::vector<double>& times, const IntegrateOptions& opt) {
  if (times.size() < 2) throw InvalidArgument("integrate: need at least two output times");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw InvalidArgument("integrate: output times must be strictly increasing");
  if (opt.method == Method::rk4 && !(opt.dt > 0.0)) throw InvalidArgument("integrate: rk4 needs dt > 0");
  if (opt.method == Method::rk45 && !(opt.tol > 0.0 && opt.tol <= 1e-2)) {
    throw InvalidArgument("integrate: rk45 tolerance must lie in (0, 1e-2]");
  }
  rho0.op().check_same(h, "integrate");
  for (const auto& o : opt.observables) {
    if (o.op.rows() != h.dim() || o.op.cols() != h.dim()) {
      throw InvalidArgument("integrate: observable '" + o.name + "' has the wrong dimension");
    }
  }
  const LindbladGenerator gen(&h, spec);
  Trajectory traj;
  traj.space = h.space();
  for (const auto& o : opt.observables) traj.observable_names.push_back(o.name);
  traj.observables.resize(opt.observables.size());
  detail::Integrator integ(gen, opt, traj);
  integ.run(rho0.matrix(), times);
  return traj;
}

// ---------------------------------------------------------------------------
// Vectorised Liouvillian
// ---------------------------------------------------------------------------

/// Matrix of L acting on column-stacked vec(rho), using
/// vec(X Y Z) = (Z^T (x) X) vec(Y):
///   L = 1 (x) K + conj(K) (x) 1 + sum_k conj(A_k) (x) A_k.
struct LiouvillianMatrix {
  Matrix matrix;
  int dim = 0;  // Hilbert-space dimension; matrix is dim^2 x dim^2
};

inline constexpr long long kDefaultLiouvillianCap = 4096LL * 4096LL;

inline Vector vectorize(const Matrix& rho) { return Eigen::Map<const Vector>(rho.data(), rho.size()); }

inline Matrix unvectorize(const Vector& v, int dim) { return Eigen::Map<const Matrix>(v.data(), dim, dim); }

inline LiouvillianMatrix assemble_liouvillian(const Operator& h, const DissipatorSpec& spec,
                                              long long cap_entries = kDefaultLiouvillianCap) {
  const int d = h.dim();
  const long long n = static_cast<long long>(d) * d;
  if (n * n > cap_entries) {
    throw ResourceLimit("assemble_liouvillian: " + std::to_string(n) + "^2 entries exceed the cap of " +
                        std::to_string(cap_entries));
  }
  const LindbladGenerator gen(&h, spec);
  const Matrix id = Matrix::Identity(d, d);
  const Matrix& k = gen.effective();
  LiouvillianMatrix out;
  out.dim = d;
  out.matrix = Eigen::kroneckerProduct(id, k).eval();
  out.matrix += Eigen::kroneckerProduct(k.conjugate(), id).eval();
  for (const auto& a : gen.jumps()) out.matrix += Eigen::kroneckerProduct(a.conjugate(), a).eval();
  return out;
}

struct SteadyStateResult {
  Vector eigenvalues;
  std::vector<Matrix> kernel;  // Hermitised, trace-normalised where the trace is non-zero
  double spectral_gap = 0.0;
  int kernel_dim() const { return static_cast<int>(kernel.size()); }
};

/// Full eigen-decomposition of L (LAPACK zgeev). Eigenvalues with
/// |lambda| <= kernel_tol span the kernel; the spectral gap is
/// -max Re(lambda) over the rest.
inline SteadyStateResult steady_state_analysis(const LiouvillianMatrix& lm, double kernel_tol = 1e-9) {
  const int n = static_cast<int>(lm.matrix.rows());
  Matrix a = lm.matrix;
  Vector w(n);
  Matrix vr(n, n);
  const lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'V', n, reinterpret_cast<lapack_complex_double*>(a.data()),
                                        n, reinterpret_cast<lapack_complex_double*>(w.data()), nullptr, 1,
                                        reinterpret_cast<lapack_complex_double*>(vr.data()), n);
  if (info != 0) throw NumericalError("steady_state_analysis: zgeev failed with info=" + std::to_string(info));

  SteadyStateResult out;
  out.eigenvalues = w;
  std::vector<int> kernel_idx;
  double max_re = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (std::abs(w(i)) <= kernel_tol) {
      kernel_idx.push_back(i);
    } else {
      max_re = std::max(max_re, w(i).real());
    }
  }
  out.spectral_gap = std::isfinite(max_re) ? -max_re : 0.0;
  if (kernel_idx.empty()) return out;

  Matrix kv(n, static_cast<long>(kernel_idx.size()));
  for (std::size_t k = 0; k < kernel_idx.size(); ++k) kv.col(static_cast<long>(k)) = vr.col(kernel_idx[k]);
  Eigen::HouseholderQR<Matrix> qr(kv);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, kv.cols());
  for (long k = 0; k < q.cols(); ++k) {
    Matrix x = unvectorize(q.col(k), lm.dim);
    const Complex tr = x.trace();
    if (std::abs(tr) > 1e-8 * std::max(1e-300, x.norm())) {
      x /= tr;
      x = 0.5 * (x + x.adjoint()).eval();
    } else {
      Matrix herm = 0.5 * (x + x.adjoint());
      if (herm.norm() < 1e-8 * x.norm()) herm = Complex(0.0, -0.5) * (x - x.adjoint());
      x = herm / herm.norm();
    }
    out.kernel.push_back(std::move(x));
  }
  return out;
}

}  // namespace qfriction
