#pragma once

// Finite-dimensional operator algebra on composite spaces built from boson
// modes, internal level sets and momentum grids.
//
// Index convention: composite basis states are ordered row-major with the
// LAST factor fastest, so for factors (d0, d1, ..., dk) the multi-index
// (i0, ..., ik) maps to ((i0*d1 + i1)*d2 + ...)*dk + ik. An operator acting on
// factor f alone is embedded as 1_{d0..d(f-1)} (x) op (x) 1_{d(f+1)..dk}.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "qfriction/errors.hpp"

namespace qfriction {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

struct BosonMode {
  int truncation = 2;
  bool operator==(const BosonMode&) const = default;
};

struct InternalLevels {
  int levels = 1;
  bool operator==(const InternalLevels&) const = default;
};

struct MomentumGrid {
  int points = 2;
  double p_min = 0.0;
  double dp = 1.0;

  double momentum(int j) const { return p_min + j * dp; }
  double p_max() const { return momentum(points - 1); }
  bool operator==(const MomentumGrid&) const = default;
};

using Factor = std::variant<BosonMode, InternalLevels, MomentumGrid>;

inline int factor_dim(const Factor& f) {
  return std::visit(
      [](const auto& x) -> int {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, BosonMode>) return x.truncation;
        if constexpr (std::is_same_v<T, InternalLevels>) return x.levels;
        if constexpr (std::is_same_v<T, MomentumGrid>) return x.points;
      },
      f);
}

inline std::string factor_name(const Factor& f) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, BosonMode>) return "BosonMode(" + std::to_string(x.truncation) + ")";
        if constexpr (std::is_same_v<T, InternalLevels>) return "InternalLevels(" + std::to_string(x.levels) + ")";
        if constexpr (std::is_same_v<T, MomentumGrid>) return "MomentumGrid(" + std::to_string(x.points) + ")";
      },
      f);
}

class HilbertSpace {
 public:
  HilbertSpace() = default;

  /// Validates and builds a composite space. Throws InvalidArgument on an empty
  /// factor list or invalid factor parameters.
  explicit HilbertSpace(std::vector<Factor> factors) {
    if (factors.empty()) throw InvalidArgument("make_space: factor list is empty");
    for (std::size_t k = 0; k < factors.size(); ++k) {
      const auto& f = factors[k];
      const int d = factor_dim(f);
      const bool internal = std::holds_alternative<InternalLevels>(f);
      if (d < (internal ? 1 : 2)) {
        throw InvalidArgument("make_space: factor " + std::to_string(k) + " (" + factor_name(f) +
                              ") has invalid dimension " + std::to_string(d));
      }
      if (const auto* g = std::get_if<MomentumGrid>(&f)) {
        if (!(g->dp > 0.0) || !std::isfinite(g->dp) || !std::isfinite(g->p_min)) {
          throw InvalidArgument("make_space: momentum grid needs finite p_min and dp > 0");
        }
      }
    }
    auto data = std::make_shared<Data>();
    data->factors = std::move(factors);
    data->dims.reserve(data->factors.size());
    data->dim = 1;
    for (const auto& f : data->factors) {
      data->dims.push_back(factor_dim(f));
      data->dim *= data->dims.back();
    }
    data_ = std::move(data);
  }

  bool valid() const { return static_cast<bool>(data_); }
  int dim() const { return data_ ? data_->dim : 0; }
  std::size_t num_factors() const { return data_ ? data_->factors.size() : 0; }
  const std::vector<Factor>& factors() const { return data_->factors; }
  const Factor& factor(std::size_t k) const { return data_->factors.at(k); }
  const std::vector<int>& dims() const { return data_->dims; }

  /// Product of the dimensions of the factors before / after factor k.
  int dim_before(std::size_t k) const {
    return std::accumulate(dims().begin(), dims().begin() + static_cast<long>(k), 1, std::multiplies<>());
  }
  int dim_after(std::size_t k) const {
    return std::accumulate(dims().begin() + static_cast<long>(k) + 1, dims().end(), 1, std::multiplies<>());
  }

  int index(std::span<const int> multi) const {
    if (multi.size() != num_factors()) throw InvalidArgument("index: multi-index rank mismatch");
    int idx = 0;
    for (std::size_t k = 0; k < multi.size(); ++k) idx = idx * dims()[k] + multi[k];
    return idx;
  }

  std::vector<int> multi_index(int idx) const {
    std::vector<int> out(num_factors());
    for (std::size_t k = num_factors(); k-- > 0;) {
      out[k] = idx % dims()[k];
      idx /= dims()[k];
    }
    return out;
  }

  /// Embeds a single-factor operator into the full space.
  Matrix embed(std::size_t k, const Matrix& local) const {
    const int d = dims().at(k);
    if (local.rows() != d || local.cols() != d) {
      throw InvalidArgument("embed: local operator is " + std::to_string(local.rows()) + "x" +
                            std::to_string(local.cols()) + ", factor dimension is " + std::to_string(d));
    }
    const Matrix left = Matrix::Identity(dim_before(k), dim_before(k));
    const Matrix right = Matrix::Identity(dim_after(k), dim_after(k));
    Matrix tmp = Eigen::kroneckerProduct(left, local).eval();
    return Eigen::kroneckerProduct(tmp, right).eval();
  }

  std::string describe() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t k = 0; k < num_factors(); ++k) os << (k ? ", " : "") << factor_name(factor(k));
    os << "]";
    return os.str();
  }

  friend bool operator==(const HilbertSpace& a, const HilbertSpace& b) {
    if (a.data_ == b.data_) return true;
    if (!a.data_ || !b.data_) return false;
    return a.data_->factors == b.data_->factors;
  }

 private:
  struct Data {
    std::vector<Factor> factors;
    std::vector<int> dims;
    int dim = 0;
  };
  std::shared_ptr<const Data> data_;
};

inline HilbertSpace make_space(std::vector<Factor> factors) { return HilbertSpace(std::move(factors)); }

/// A dense operator bound to a space.
class Operator {
 public:
  Operator() = default;
  Operator(HilbertSpace space, Matrix m) : space_(std::move(space)), m_(std::move(m)) {
    if (m_.rows() != space_.dim() || m_.cols() != space_.dim()) {
      throw InvalidArgument("Operator: matrix is " + std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()) +
                            " but space dimension is " + std::to_string(space_.dim()));
    }
  }

  static Operator identity(const HilbertSpace& s) { return {s, Matrix::Identity(s.dim(), s.dim())}; }
  static Operator zero(const HilbertSpace& s) { return {s, Matrix::Zero(s.dim(), s.dim())}; }

  const HilbertSpace& space() const { return space_; }
  const Matrix& matrix() const { return m_; }
  Matrix& matrix() { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }

  Operator adjoint() const { return {space_, m_.adjoint()}; }

  Operator& operator+=(const Operator& o) {
    check_same(o, "+=");
    m_ += o.m_;
    return *this;
  }
  Operator& operator-=(const Operator& o) {
    check_same(o, "-=");
    m_ -= o.m_;
    return *this;
  }
  Operator& operator*=(Complex c) {
    m_ *= c;
    return *this;
  }

  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(const Operator& a, const Operator& b) {
    a.check_same(b, "*");
    return {a.space_, a.m_ * b.m_};
  }
  friend Operator operator*(Complex c, Operator a) { return a *= c; }
  friend Operator operator*(Operator a, Complex c) { return a *= c; }
  friend Operator operator-(Operator a) {
    a.m_ = -a.m_;
    return a;
  }

  void check_same(const Operator& o, const char* what) const {
    if (!(space_ == o.space_)) {
      throw InvalidArgument(std::string("space mismatch in ") + what + ": " + space_.describe() + " vs " +
                            o.space_.describe());
    }
  }

 private:
  HilbertSpace space_;
  Matrix m_;
};

inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline double hermiticity_defect(const Matrix& m) { return max_abs(m - m.adjoint()); }

/// Smallest eigenvalue of the Hermitian part of m.
inline double min_eigenvalue(const Matrix& m) {
  const Matrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Tr[a b] without forming the product.
inline Complex trace_product(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b.transpose()).sum(); }

struct DensityTolerance {
  double hermiticity = 1e-9;
  double trace = 1e-9;
  double min_eigenvalue = -1e-8;
};

/// Hermitian, unit-trace, positive semidefinite operator.
class DensityMatrix {
 public:
  DensityMatrix() = default;

  /// Validates the density-matrix invariants; throws InvalidArgument with the
  /// violated one otherwise.
  explicit DensityMatrix(Operator op, const DensityTolerance& tol = {}) : op_(std::move(op)) {
    const Matrix& m = op_.matrix();
    if (!m.allFinite()) throw InvalidArgument("DensityMatrix: non-finite entries");
    const double herm = hermiticity_defect(m);
    if (herm > tol.hermiticity) {
      throw InvalidArgument("DensityMatrix: hermiticity defect " + std::to_string(herm));
    }
    const double tr_err = std::abs(m.trace() - Complex(1.0));
    if (tr_err > tol.trace) throw InvalidArgument("DensityMatrix: |Tr rho - 1| = " + std::to_string(tr_err));
    const double lmin = min_eigenvalue(m);
    if (lmin < tol.min_eigenvalue) {
      throw InvalidArgument("DensityMatrix: minimum eigenvalue " + std::to_string(lmin));
    }
  }

  /// Pure state |psi><psi| / <psi|psi>.
  static DensityMatrix pure(const HilbertSpace& s, const Vector& psi) {
    if (psi.size() != s.dim()) throw InvalidArgument("DensityMatrix::pure: state size mismatch");
    const double n = psi.squaredNorm();
    if (!(n > 0.0)) throw InvalidArgument("DensityMatrix::pure: zero state vector");
    return DensityMatrix(Operator(s, psi * psi.adjoint() / n));
  }

  const Operator& op() const { return op_; }
  const Matrix& matrix() const { return op_.matrix(); }
  const HilbertSpace& space() const { return op_.space(); }

 private:
  Operator op_;
};

inline Complex expectation(const Operator& o, const DensityMatrix& rho) {
  o.check_same(rho.op(), "expectation");
  return trace_product(o.matrix(), rho.matrix());
}

// ---------------------------------------------------------------------------
// Matrix exponential
// ---------------------------------------------------------------------------

namespace detail {
inline double relative_defect(const Matrix& a, const Matrix& b) {
  const double scale = std::max(1.0, max_abs(a));
  return max_abs(a - b) / scale;
}
}  // namespace detail

/// exp(X). Hermitian and anti-Hermitian inputs go through a Hermitian
/// eigendecomposition (which keeps unitaries unitary to rounding); everything
/// else uses Eigen's scaling-and-squaring Pade approximant.
inline Matrix expm(const Matrix& x) {
  if (x.rows() != x.cols()) throw InvalidArgument("matrix_exponential: matrix is not square");
  if (!x.allFinite()) throw InvalidArgument("matrix_exponential: non-finite entries");
  if (x.size() == 0) return x;
  constexpr double normal_tol = 1e-14;
  if (detail::relative_defect(x, x.adjoint()) <= normal_tol) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (x + x.adjoint()));
    const RealVector w = es.eigenvalues().array().exp();
    return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
  }
  if (detail::relative_defect(x, -x.adjoint()) <= normal_tol) {
    const Matrix k = (-kI) * 0.5 * (x - x.adjoint());  // Hermitian, x = i k
    Eigen::SelfAdjointEigenSolver<Matrix> es(k);
    const Vector w = (kI * es.eigenvalues().cast<Complex>()).array().exp();
    return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
  }
  return x.exp();
}

inline Operator matrix_exponential(const Operator& x) { return {x.space(), expm(x.matrix())}; }

// ---------------------------------------------------------------------------
// Mode and grid operators
// ---------------------------------------------------------------------------

/// Ladder and quadrature operators of one boson mode, embedded in the full
/// space. x = hbar sqrt(beta/2) (a + a^dag), p = -i (a - a^dag) / sqrt(2 beta).
struct ModeOperators {
  Operator a;
  Operator adag;
  Operator x;
  Operator p;
  Operator number;
};

inline Matrix ladder_matrix(int n) {
  Matrix a = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

inline ModeOperators mode_operators(const HilbertSpace& space, std::size_t factor, double beta, double hbar = 1.0) {
  if (factor >= space.num_factors() || !std::holds_alternative<BosonMode>(space.factor(factor))) {
    throw InvalidArgument("mode_operators: factor " + std::to_string(factor) + " is not a BosonMode");
  }
  if (!(beta > 0.0)) throw InvalidArgument("mode_operators: beta must be > 0");
  if (!(hbar > 0.0)) throw InvalidArgument("mode_operators: hbar must be > 0");
  const int n = space.dims()[factor];
  const Matrix a = ladder_matrix(n);
  const Matrix ad = a.adjoint();
  const Matrix x = hbar * std::sqrt(beta / 2.0) * (a + ad);
  const Matrix p = (-kI) * (a - ad) / std::sqrt(2.0 * beta);
  return {Operator(space, space.embed(factor, a)), Operator(space, space.embed(factor, ad)),
          Operator(space, space.embed(factor, x)), Operator(space, space.embed(factor, p)),
          Operator(space, space.embed(factor, ad * a))};
}

/// Momentum-grid operators. On a grid the position translation e^{-i kappa x}
/// is exactly the cyclic index shift by -hbar kappa / dp.
class GridOperators {
 public:
  GridOperators(HilbertSpace space, std::size_t factor) : space_(std::move(space)), factor_(factor) {
    if (factor >= space_.num_factors() || !std::holds_alternative<MomentumGrid>(space_.factor(factor))) {
      throw InvalidArgument("grid_operators: factor " + std::to_string(factor) + " is not a MomentumGrid");
    }
    grid_ = std::get<MomentumGrid>(space_.factor(factor));
  }

  const MomentumGrid& grid() const { return grid_; }
  std::size_t factor() const { return factor_; }

  Matrix local_momentum() const {
    Matrix p = Matrix::Zero(grid_.points, grid_.points);
    for (int j = 0; j < grid_.points; ++j) p(j, j) = grid_.momentum(j);
    return p;
  }

  Operator momentum() const { return {space_, space_.embed(factor_, local_momentum())}; }

  /// Permutation |p_j> -> |p_{j+s}> (cyclic), local to the grid factor.
  Matrix local_shift(int s) const {
    const int n = grid_.points;
    Matrix m = Matrix::Zero(n, n);
    for (int j = 0; j < n; ++j) m(((j + s) % n + n) % n, j) = 1.0;
    return m;
  }

  Operator shift(int s) const { return {space_, space_.embed(factor_, local_shift(s))}; }

  /// Number of grid steps s with hbar kappa = s dp. Throws InvalidArgument
  /// (reporting the nearest admissible kappa) when the kick is not integral.
  int kick_steps(double kappa, double hbar = 1.0) const {
    const double ratio = hbar * kappa / grid_.dp;
    const double nearest = std::round(ratio);
    if (std::abs(ratio - nearest) > 1e-9 * std::max(1.0, std::abs(ratio))) {
      std::ostringstream os;
      os.precision(17);
      os << "grid kick hbar*kappa/dp = " << ratio << " is not integral; nearest integral kappa = "
         << nearest * grid_.dp / hbar;
      throw InvalidArgument(os.str());
    }
    return static_cast<int>(nearest);
  }

  /// e^{-i kappa x}: maps |p> to |p - hbar kappa>, i.e. shift(-s).
  Operator kick(double kappa, double hbar = 1.0) const { return shift(-kick_steps(kappa, hbar)); }

 private:
  HilbertSpace space_;
  std::size_t factor_;
  MomentumGrid grid_;
};

inline GridOperators grid_operators(const HilbertSpace& space, std::size_t factor) { return {space, factor}; }

}  // namespace qfriction
