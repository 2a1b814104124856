#include "cacc/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "cacc/parallel.hpp"

namespace cacc::lmi {

// ---------------------------------------------------------------------------
// Expr

Expr::Expr(int rows, int cols) : c0_(MatrixXd::Zero(rows, cols)) {}

Expr::Expr(const MatrixXd& constant) : c0_(constant) {}

void Expr::push_term(int index, MatrixXd coef) {
  auto it = std::lower_bound(terms_.begin(), terms_.end(), index,
                             [](const Term& t, int i) { return t.index < i; });
  if (it != terms_.end() && it->index == index)
    it->coef += coef;
  else
    terms_.insert(it, Term{index, std::move(coef)});
}

Expr Expr::transpose() const {
  Expr r(MatrixXd(c0_.transpose()));
  r.terms_.reserve(terms_.size());
  for (const auto& t : terms_) r.terms_.push_back({t.index, t.coef.transpose()});
  return r;
}

Expr Expr::symmetrized() const {
  Expr r(MatrixXd(0.5 * (c0_ + c0_.transpose())));
  r.terms_.reserve(terms_.size());
  for (const auto& t : terms_) r.terms_.push_back({t.index, 0.5 * (t.coef + t.coef.transpose())});
  return r;
}

MatrixXd Expr::eval(const VectorXd& x) const {
  MatrixXd m = c0_;
  for (const auto& t : terms_) m += x(t.index) * t.coef;
  return m;
}

Expr& Expr::operator+=(const Expr& o) {
  if (o.rows() != rows() || o.cols() != cols()) throw StructuralError("Expr size mismatch in +");
  c0_ += o.c0_;
  std::vector<Term> merged;
  merged.reserve(terms_.size() + o.terms_.size());
  auto a = terms_.begin();
  auto b = o.terms_.begin();
  while (a != terms_.end() || b != o.terms_.end()) {
    if (b == o.terms_.end() || (a != terms_.end() && a->index < b->index)) {
      merged.push_back(std::move(*a++));
    } else if (a == terms_.end() || b->index < a->index) {
      merged.push_back(*b++);
    } else {
      merged.push_back({a->index, a->coef + b->coef});
      ++a;
      ++b;
    }
  }
  terms_ = std::move(merged);
  return *this;
}

Expr& Expr::operator-=(const Expr& o) { return *this += -o; }

Expr Expr::operator-() const { return -1.0 * *this; }

Expr operator*(double s, const Expr& e) {
  Expr r(MatrixXd(s * e.c0_));
  r.terms_.reserve(e.terms_.size());
  for (const auto& t : e.terms_) r.terms_.push_back({t.index, s * t.coef});
  return r;
}

Expr operator*(const MatrixXd& M, const Expr& e) {
  if (M.cols() != e.rows()) throw StructuralError("Expr size mismatch in M*e");
  Expr r(MatrixXd(M * e.c0_));
  r.terms_.reserve(e.terms_.size());
  for (const auto& t : e.terms_) r.terms_.push_back({t.index, M * t.coef});
  return r;
}

Expr operator*(const Expr& e, const MatrixXd& M) {
  if (e.cols() != M.rows()) throw StructuralError("Expr size mismatch in e*M");
  Expr r(MatrixXd(e.c0_ * M));
  r.terms_.reserve(e.terms_.size());
  for (const auto& t : e.terms_) r.terms_.push_back({t.index, t.coef * M});
  return r;
}

Expr scale(const Expr& s, const MatrixXd& M) {
  if (s.rows() != 1 || s.cols() != 1) throw StructuralError("scale() expects a 1x1 expression");
  Expr r(MatrixXd(s.constant()(0, 0) * M));
  for (const auto& t : s.terms()) r.push_term(t.index, t.coef(0, 0) * M);
  return r;
}

// ---------------------------------------------------------------------------
// BlockLMI

BlockLMI::BlockLMI(std::vector<int> sizes, Sense sense) : sizes_(std::move(sizes)), sense_(sense) {
  const size_t n = sizes_.size();
  blocks_.resize(n);
  set_.assign(n, std::vector<bool>(n, false));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j <= i; ++j) blocks_[i].emplace_back(sizes_[i], sizes_[j]);
}

void BlockLMI::set(int i, int j, const Expr& e) {
  if (i < j) throw StructuralError("BlockLMI::set expects the lower triangle (i >= j)");
  if (i >= static_cast<int>(sizes_.size())) throw StructuralError("BlockLMI::set index out of range");
  if (e.rows() != sizes_[i] || e.cols() != sizes_[j])
    throw StructuralError("BlockLMI block (" + std::to_string(i) + "," + std::to_string(j) +
                          ") has wrong size");
  blocks_[i][j] = (i == j) ? e.symmetrized() : e;
  set_[i][j] = true;
}

Expr BlockLMI::assemble() const {
  int n = 0;
  std::vector<int> off;
  for (int s : sizes_) {
    off.push_back(n);
    n += s;
  }
  auto place = [&](Expr& out, const Expr& b, int r0, int c0) {
    MatrixXd c = out.constant();
    c.block(r0, c0, b.rows(), b.cols()) += b.constant();
    Expr tmp{MatrixXd(c)};
    for (const auto& t : out.terms()) tmp.push_term(t.index, t.coef);
    for (const auto& t : b.terms()) {
      MatrixXd m = MatrixXd::Zero(n, n);
      m.block(r0, c0, b.rows(), b.cols()) = t.coef;
      tmp.push_term(t.index, std::move(m));
    }
    out = std::move(tmp);
  };
  Expr out(n, n);
  for (size_t i = 0; i < sizes_.size(); ++i)
    for (size_t j = 0; j <= i; ++j) {
      if (!set_[i][j]) continue;
      place(out, blocks_[i][j], off[i], off[j]);
      if (i != j) place(out, blocks_[i][j].transpose(), off[j], off[i]);
    }
  return out;
}

Expr BlockLMI::as_psd() const {
  Expr m = assemble();
  return sense_ == Sense::psd ? m : -m;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::numerical_failure: return "numerical_failure";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Problem

Variable& Problem::declare(const std::string& name, VarKind kind, int rows, int cols, int size) {
  for (const auto& v : vars_)
    if (v.name == name) throw StructuralError("variable declared twice: " + name);
  vars_.push_back({name, kind, rows, cols, nvars_, size});
  nvars_ += size;
  return vars_.back();
}

Expr Problem::add_symmetric(const std::string& name, int n) {
  const Variable& v = declare(name, VarKind::symmetric, n, n, n * (n + 1) / 2);
  Expr e(n, n);
  int k = v.offset;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      MatrixXd c = MatrixXd::Zero(n, n);
      c(i, j) = 1;
      c(j, i) = 1;
      e.push_term(k++, std::move(c));
    }
  return e;
}

Expr Problem::add_full(const std::string& name, int rows, int cols) {
  const Variable& v = declare(name, VarKind::full, rows, cols, rows * cols);
  Expr e(rows, cols);
  int k = v.offset;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      MatrixXd c = MatrixXd::Zero(rows, cols);
      c(i, j) = 1;
      e.push_term(k++, std::move(c));
    }
  return e;
}

Expr Problem::add_scalar(const std::string& name) {
  const Variable& v = declare(name, VarKind::scalar, 1, 1, 1);
  Expr e(1, 1);
  e.push_term(v.offset, MatrixXd::Ones(1, 1));
  return e;
}

void Problem::check_expr(const Expr& e, const char* what) const {
  for (const auto& t : e.terms())
    if (t.index < 0 || t.index >= nvars_)
      throw StructuralError(std::string(what) + " references an undeclared variable");
}

void Problem::add_constraint(const BlockLMI& lmi, std::string label) {
  Expr F = lmi.as_psd();
  check_expr(F, "constraint");
  cons_.push_back({std::move(F), std::move(label)});
}

void Problem::add_constraint(const Expr& F, Sense sense, std::string label) {
  if (F.rows() != F.cols()) throw StructuralError("constraint matrix must be square");
  check_expr(F, "constraint");
  Expr s = F.symmetrized();
  cons_.push_back({sense == Sense::psd ? s : -s, std::move(label)});
}

void Problem::add_lower_bound(const Expr& s, double lo, std::string label) {
  add_constraint(s - Expr(MatrixXd::Constant(1, 1, lo)), Sense::psd, std::move(label));
}

void Problem::add_upper_bound(const Expr& s, double hi, std::string label) {
  add_constraint(Expr(MatrixXd::Constant(1, 1, hi)) - s, Sense::psd, std::move(label));
}

void Problem::minimize(const Expr& linear) {
  if (linear.rows() != 1 || linear.cols() != 1) throw StructuralError("objective must be 1x1");
  check_expr(linear, "objective");
  obj_ = linear;
}

void Problem::minimize_neg_logdet(const std::string& var, double weight) {
  const Variable& v = variable(var);
  if (v.kind != VarKind::symmetric)
    throw StructuralError("-logdet objective needs a symmetric variable: " + var);
  if (!(weight > 0)) throw StructuralError("-logdet weight must be positive");
  Expr V(v.rows, v.cols);
  int k = v.offset;
  for (int i = 0; i < v.rows; ++i)
    for (int j = i; j < v.rows; ++j) {
      MatrixXd c = MatrixXd::Zero(v.rows, v.rows);
      c(i, j) = 1;
      c(j, i) = 1;
      V.push_term(k++, std::move(c));
    }
  logdets_.push_back({std::move(V), weight, var});
}

const Variable& Problem::variable(const std::string& name) const {
  for (const auto& v : vars_)
    if (v.name == name) return v;
  throw StructuralError("unknown variable: " + name);
}

MatrixXd Problem::unpack(const VectorXd& x, const std::string& name) const {
  const Variable& v = variable(name);
  MatrixXd m(v.rows, v.cols);
  int k = v.offset;
  if (v.kind == VarKind::symmetric) {
    for (int i = 0; i < v.rows; ++i)
      for (int j = i; j < v.rows; ++j) m(i, j) = m(j, i) = x(k++);
  } else {
    for (int i = 0; i < v.rows; ++i)
      for (int j = 0; j < v.cols; ++j) m(i, j) = x(k++);
  }
  return m;
}

double Problem::objective(const VectorXd& x) const {
  double f = obj_.eval(x)(0, 0);
  for (const auto& ld : logdets_) {
    Eigen::LLT<MatrixXd> llt(ld.V.eval(x));
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    f -= ld.weight * 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  return f;
}

std::string Problem::to_sdpa() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "\"sdpa dump: " << nvars_ << " variables, " << cons_.size() << " blocks\n";
  for (const auto& ld : logdets_)
    os << "\"objective also has -" << ld.weight << "*logdet(" << ld.var << ") (not encoded)\n";
  for (const auto& v : vars_)
    os << "\"var " << v.name << " offset " << v.offset << " size " << v.size << "\n";
  os << nvars_ << "\n" << cons_.size() << "\n";
  for (size_t b = 0; b < cons_.size(); ++b) os << (b ? " " : "") << cons_[b].F.rows();
  os << "\n";
  VectorXd c = VectorXd::Zero(nvars_);
  for (const auto& t : obj_.terms()) c(t.index) += t.coef(0, 0);
  for (int i = 0; i < nvars_; ++i) os << (i ? " " : "") << c(i);
  os << "\n";
  auto emit = [&](int mat, int blk, const MatrixXd& M, double sign) {
    for (int i = 0; i < M.rows(); ++i)
      for (int j = i; j < M.cols(); ++j)
        if (M(i, j) != 0.0) os << mat << " " << blk << " " << i + 1 << " " << j + 1 << " " << sign * M(i, j) << "\n";
  };
  for (size_t b = 0; b < cons_.size(); ++b) {
    emit(0, static_cast<int>(b) + 1, cons_[b].F.constant(), -1.0);
    for (const auto& t : cons_[b].F.terms()) emit(t.index + 1, static_cast<int>(b) + 1, t.coef, 1.0);
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Interior-point solver

namespace {

// F(x) = F0 + sum_k x[idx_k] Fi_k
struct Block {
  MatrixXd F0;
  std::vector<int> idx;
  std::vector<MatrixXd> Fi;
  // Log-det blocks keep S Z = weight I instead of driving S Z to zero; that is the optimality
  // condition of  -weight * logdet F(x).
  bool logdet = false;
  double weight = 0.0;
};

Block make_block(const Expr& e, double scale, int extra_index = -1) {
  Block b;
  b.F0 = e.constant() / scale;
  for (const auto& t : e.terms()) {
    b.idx.push_back(t.index);
    b.Fi.push_back(t.coef / scale);
  }
  if (extra_index >= 0) {
    b.idx.push_back(extra_index);
    b.Fi.push_back(MatrixXd::Identity(e.rows(), e.cols()));
  }
  return b;
}

MatrixXd eval_block(const Block& b, const VectorXd& x) {
  MatrixXd m = b.F0;
  for (size_t k = 0; k < b.idx.size(); ++k) m += x(b.idx[k]) * b.Fi[k];
  return m;
}

MatrixXd eval_dir(const Block& b, const VectorXd& dx) {
  MatrixXd m = MatrixXd::Zero(b.F0.rows(), b.F0.cols());
  for (size_t k = 0; k < b.idx.size(); ++k) m += dx(b.idx[k]) * b.Fi[k];
  return m;
}

MatrixXd sym(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

double min_eig(const MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(sym(m), Eigen::EigenvaluesOnly).eigenvalues()(0);
}

// Largest a with X + a dX >= 0 (+inf if unbounded), for positive definite X.
double max_step(const MatrixXd& X, const MatrixXd& dX) {
  Eigen::LLT<MatrixXd> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  const MatrixXd H = llt.matrixL().solve(dX);
  const MatrixXd T = llt.matrixL().solve(H.transpose());
  const double lmin = min_eig(T);
  return lmin >= 0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

struct Program {
  int n = 0;
  VectorXd c;
  std::vector<Block> blocks;
};

struct PdResult {
  enum class Outcome { converged, stopped, failed } outcome = Outcome::failed;
  VectorXd x;
  int iterations = 0;
  double gap = 0;
  double pinf = 0;
  double dinf = 0;
  std::string message;
};

// Infeasible-start primal-dual path following for
//   minimize c'x - sum_logdet w logdet F(x)  subject to  F(x) >= 0 for the other blocks,
// with slacks S = F(x) and multipliers Z, NT scaling and Mehrotra's corrector.
PdResult pd_solve(const Program& P, const SolverOptions& opt,
                  const std::function<bool(const VectorXd&)>& stop = {}) {
  PdResult res;
  const int n = P.n;
  const size_t K = P.blocks.size();
  int m_cone = 0;
  double f0norm = 0.0;
  for (const auto& b : P.blocks) {
    if (!b.logdet) m_cone += static_cast<int>(b.F0.rows());
    f0norm = std::max(f0norm, b.F0.norm());
  }
  const double cnorm = P.c.norm();

  VectorXd x = VectorXd::Zero(n);
  std::vector<MatrixXd> S(K), Z(K);
  for (size_t k = 0; k < K; ++k) {
    const Block& b = P.blocks[k];
    const int m = static_cast<int>(b.F0.rows());
    double fmax = 0.0;
    for (const auto& F : b.Fi) fmax = std::max(fmax, F.norm());
    double xi = std::max(10.0, std::sqrt(static_cast<double>(m)));
    for (size_t q = 0; q < b.idx.size(); ++q)
      xi = std::max(xi, m * (1.0 + std::abs(P.c(b.idx[q]))) / (1.0 + b.Fi[q].norm()));
    const double eta = std::max({10.0, std::sqrt(static_cast<double>(m)), fmax, b.F0.norm()});
    S[k] = eta * MatrixXd::Identity(m, m);
    Z[k] = (b.logdet ? b.weight / eta : xi) * MatrixXd::Identity(m, m);
  }

  auto adjoint = [&](const std::vector<MatrixXd>& W) {
    VectorXd a = VectorXd::Zero(n);
    for (size_t k = 0; k < K; ++k)
      for (size_t q = 0; q < P.blocks[k].idx.size(); ++q)
        a(P.blocks[k].idx[q]) += P.blocks[k].Fi[q].cwiseProduct(W[k]).sum();
    return a;
  };

  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it;
    res.x = x;
    std::vector<MatrixXd> Rp(K);
    double pn = 0.0, gap = 0.0, cent = 0.0;
    for (size_t k = 0; k < K; ++k) {
      Eigen::LLT<MatrixXd> llt(S[k]);
      if (llt.info() != Eigen::Success) {
        res.message = "slack lost definiteness";
        return res;
      }
      Rp[k] = eval_block(P.blocks[k], x) - S[k];
      pn = std::max(pn, Rp[k].norm());
      if (P.blocks[k].logdet) {
        const MatrixXd L = llt.matrixL();
        const MatrixXd C = L.transpose() * Z[k] * L / P.blocks[k].weight;
        cent = std::max(cent, (C - MatrixXd::Identity(C.rows(), C.cols())).norm());
      } else {
        gap += S[k].cwiseProduct(Z[k]).sum();
      }
    }
    const VectorXd rd = P.c - adjoint(Z);
    res.gap = gap / (1.0 + std::abs(P.c.dot(x)));
    res.pinf = pn / (1.0 + f0norm);
    res.dinf = rd.norm() / (1.0 + cnorm);
    if (stop && stop(x)) {
      res.outcome = PdResult::Outcome::stopped;
      return res;
    }
    if (res.gap <= opt.opt_tol && res.pinf <= opt.feas_tol && res.dinf <= opt.feas_tol &&
        cent <= std::sqrt(opt.opt_tol)) {
      res.outcome = PdResult::Outcome::converged;
      return res;
    }
    const double mu = m_cone > 0 ? gap / m_cone : 0.0;

    // Nesterov-Todd scaling per block: R^-1 S R^-T = R' Z R = diag(lam).
    std::vector<MatrixXd> R(K), Rinv(K), V(K);
    std::vector<VectorXd> lam(K);
    for (size_t k = 0; k < K; ++k) {
      const MatrixXd Ls = Eigen::LLT<MatrixXd>(S[k]).matrixL();
      Eigen::LLT<MatrixXd> zl(Z[k]);
      if (zl.info() != Eigen::Success) {
        res.message = "multiplier lost definiteness";
        return res;
      }
      const MatrixXd Lz = zl.matrixL();
      Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
      lam[k] = svd.singularValues();
      if (!(lam[k].minCoeff() > 0)) {
        res.message = "degenerate scaling";
        return res;
      }
      const VectorXd rs = lam[k].cwiseSqrt();
      R[k] = Ls * svd.matrixV() * rs.cwiseInverse().asDiagonal();
      Rinv[k] = rs.asDiagonal() * svd.matrixV().transpose() *
                Ls.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(Ls.rows(), Ls.cols()));
      V[k] = Rinv[k].transpose() * Rinv[k];
    }

    // Schur complement matrix M_pq = sum_k tr(F_p V F_q V).
    MatrixXd M = MatrixXd::Zero(n, n);
    for (size_t k = 0; k < K; ++k) {
      const Block& b = P.blocks[k];
      std::vector<MatrixXd> U(b.idx.size());
      for (size_t q = 0; q < b.idx.size(); ++q) U[q] = V[k] * b.Fi[q] * V[k];
      for (size_t p = 0; p < b.idx.size(); ++p)
        for (size_t q = 0; q < b.idx.size(); ++q) M(b.idx[p], b.idx[q]) += b.Fi[p].cwiseProduct(U[q]).sum();
    }
    M = sym(M);
    const VectorXd d = M.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const MatrixXd Ms = d.asDiagonal() * M * d.asDiagonal();
    Eigen::LLT<MatrixXd> Mllt(Ms);
    Eigen::LDLT<MatrixXd> Mldlt;
    const bool use_llt = Mllt.info() == Eigen::Success;
    if (!use_llt) Mldlt.compute(Ms);
    auto msolve = [&](const VectorXd& r) -> VectorXd {
      const VectorXd rs = d.asDiagonal() * r;
      const VectorXd z = use_llt ? VectorXd(Mllt.solve(rs)) : VectorXd(Mldlt.solve(rs));
      return d.asDiagonal() * z;
    };

    // Scaled complementarity:  lam o (ds~ + dz~) = tau I - lam^2 - corr~.
    std::vector<MatrixXd> dS(K), dZ(K), E(K);
    auto direction = [&](double sigma, const std::vector<MatrixXd>* corr) {
      std::vector<MatrixXd> W(K);
      for (size_t k = 0; k < K; ++k) {
        const double tau = P.blocks[k].logdet ? P.blocks[k].weight : sigma * mu;
        const VectorXd& l = lam[k];
        MatrixXd T = -MatrixXd(l.cwiseAbs2().asDiagonal());
        T.diagonal().array() += tau;
        if (corr) T -= (*corr)[k];
        for (int i = 0; i < T.rows(); ++i)
          for (int j = 0; j < T.cols(); ++j) T(i, j) *= 2.0 / (l(i) + l(j));
        E[k] = Rinv[k].transpose() * T * Rinv[k];
        W[k] = E[k] - V[k] * Rp[k] * V[k] + Z[k];
      }
      const VectorXd rhs = adjoint(W) - P.c;
      const VectorXd dx = msolve(rhs);
      for (size_t k = 0; k < K; ++k) {
        dS[k] = eval_dir(P.blocks[k], dx) + Rp[k];
        dZ[k] = sym(E[k] - V[k] * dS[k] * V[k]);
      }
      return dx;
    };
    auto step_lengths = [&](double& ap, double& ad) {
      ap = ad = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < K; ++k) {
        ap = std::min(ap, max_step(S[k], dS[k]));
        ad = std::min(ad, max_step(Z[k], dZ[k]));
      }
    };

    VectorXd dx = direction(0.0, nullptr);
    if (!dx.allFinite()) {
      res.message = "singular Newton system";
      return res;
    }
    double ap, ad;
    step_lengths(ap, ad);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double gap_aff = 0.0;
    for (size_t k = 0; k < K; ++k)
      if (!P.blocks[k].logdet) gap_aff += (S[k] + ap * dS[k]).cwiseProduct(Z[k] + ad * dZ[k]).sum();
    const double sigma = gap > 0 ? std::clamp(std::pow(std::max(gap_aff, 0.0) / gap, 3.0), 0.0, 1.0) : 0.0;

    std::vector<MatrixXd> corr(K);
    for (size_t k = 0; k < K; ++k) {
      const MatrixXd ds = Rinv[k] * dS[k] * Rinv[k].transpose();
      const MatrixXd dz = R[k].transpose() * dZ[k] * R[k];
      // Log-det blocks are driven straight to S Z = w I; a second-order term there stalls the steps.
      corr[k] = P.blocks[k].logdet ? MatrixXd::Zero(ds.rows(), ds.cols()) : MatrixXd(sym(ds * dz));
    }
    dx = direction(sigma, &corr);
    if (!dx.allFinite()) {
      res.message = "singular Newton system";
      return res;
    }
    step_lengths(ap, ad);
    const double gamma = 0.9 + 0.09 * std::min({1.0, ap, ad});
    ap = std::min(1.0, gamma * ap);
    ad = std::min(1.0, gamma * ad);

    x += ap * dx;
    for (size_t k = 0; k < K; ++k) {
      S[k] = sym(S[k] + ap * dS[k]);
      Z[k] = sym(Z[k] + ad * dZ[k]);
    }
    if (!x.allFinite() || x.norm() > opt.radius) {
      res.message = "iterates diverged";
      return res;
    }
    if (ap < 1e-12 && ad < 1e-12) {
      res.message = "step length vanished";
      return res;
    }
  }
  res.iterations = opt.max_iter;
  res.message = "iteration limit reached";
  return res;
}

// Homogeneous self-dual embedding for programs without log-det blocks:
//   minimize c'x  subject to  S = F0 + A x >= 0,  dual  A*(Z) = c,  Z >= 0,
// embedded with tau, kappa so that infeasible programs produce certificates. NT scaling, one
// step length for all variables.
struct HsdResult {
  enum class Outcome { optimal, stopped, primal_infeasible, dual_infeasible, failed } outcome = Outcome::failed;
  VectorXd x;
  int iterations = 0;
  double gap = 0;
  double pres = 0;
  double dres = 0;
  std::string message;
};

HsdResult hsd_solve(const Program& P, const SolverOptions& opt,
                    const std::function<bool(const VectorXd&)>& stop = {}) {
  HsdResult res;
  const int n = P.n;
  const size_t K = P.blocks.size();
  int m_cone = 0;
  for (const auto& b : P.blocks) m_cone += static_cast<int>(b.F0.rows());

  auto adjoint = [&](const std::vector<MatrixXd>& W) {
    VectorXd a = VectorXd::Zero(n);
    for (size_t k = 0; k < K; ++k)
      for (size_t q = 0; q < P.blocks[k].idx.size(); ++q)
        a(P.blocks[k].idx[q]) += P.blocks[k].Fi[q].cwiseProduct(W[k]).sum();
    return a;
  };
  auto inner = [&](const std::vector<MatrixXd>& X, const std::vector<MatrixXd>& Y) {
    double s = 0.0;
    for (size_t k = 0; k < K; ++k) s += X[k].cwiseProduct(Y[k]).sum();
    return s;
  };
  auto norm = [&](const std::vector<MatrixXd>& X) { return std::sqrt(inner(X, X)); };
  std::vector<MatrixXd> F0(K);
  for (size_t k = 0; k < K; ++k) F0[k] = P.blocks[k].F0;

  // Gram matrix of the constraint map, used for the starting point.
  MatrixXd G0 = MatrixXd::Zero(n, n);
  for (const auto& b : P.blocks)
    for (size_t p = 0; p < b.idx.size(); ++p)
      for (size_t q = 0; q < b.idx.size(); ++q) G0(b.idx[p], b.idx[q]) += b.Fi[p].cwiseProduct(b.Fi[q]).sum();
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> g0(G0);
  auto shift_into_cone = [&](std::vector<MatrixXd>& X) {
    double lmin = std::numeric_limits<double>::infinity();
    for (const auto& B : X) lmin = std::min(lmin, min_eig(B));
    const double nrm = std::max(1.0, norm(X));
    if (lmin <= 1e-8 * nrm) {
      const double a = 1.0 + std::max(0.0, -lmin);
      for (auto& B : X) B.diagonal().array() += a;
    }
  };

  // Least-norm primal and dual points, shifted into the cone.
  VectorXd x = g0.solve(-adjoint(F0));
  std::vector<MatrixXd> S(K), Z(K);
  for (size_t k = 0; k < K; ++k) S[k] = sym(eval_block(P.blocks[k], x));
  const VectorXd y0 = g0.solve(P.c);
  for (size_t k = 0; k < K; ++k) Z[k] = sym(eval_dir(P.blocks[k], y0));
  shift_into_cone(S);
  shift_into_cone(Z);
  double tau = 1.0, kappa = 1.0;

  const double resx0 = std::max(1.0, P.c.norm());
  const double resz0 = std::max(1.0, norm(F0));

  for (int it = 0; it <= opt.max_iter; ++it) {
    res.iterations = it;
    res.x = x / tau;

    // Residuals of  A*(Z) = c tau,  S = F0 tau + A x,  kappa = -c'x - <F0, Z>.
    const VectorXd az = adjoint(Z);
    const VectorXd rx = P.c * tau - az;
    std::vector<MatrixXd> rz(K), ax(K);
    for (size_t k = 0; k < K; ++k) {
      ax[k] = eval_dir(P.blocks[k], x);
      rz[k] = S[k] - ax[k] - F0[k] * tau;
    }
    const double cx = P.c.dot(x), hz = inner(F0, Z);
    const double rt = kappa + cx + hz;
    const double sz = inner(S, Z);
    const double pcost = cx / tau, dcost = -hz / tau;
    const double gap = sz / (tau * tau);
    double relgap = std::numeric_limits<double>::infinity();
    if (pcost < 0.0) relgap = gap / -pcost;
    else if (dcost > 0.0) relgap = gap / dcost;
    res.pres = norm(rz) / tau / resz0;
    res.dres = rx.norm() / tau / resx0;
    res.gap = std::min(gap, relgap);

    if (stop && stop(res.x)) {
      res.outcome = HsdResult::Outcome::stopped;
      return res;
    }
    if (res.pres <= opt.feas_tol && res.dres <= opt.feas_tol && (gap <= opt.opt_tol || relgap <= opt.opt_tol)) {
      res.outcome = HsdResult::Outcome::optimal;
      return res;
    }
    if (hz < 0.0 && az.norm() / resx0 / -hz <= opt.feas_tol) {
      res.outcome = HsdResult::Outcome::primal_infeasible;
      res.message = "primal infeasibility certificate";
      return res;
    }
    if (cx < 0.0) {
      double r = 0.0;
      for (size_t k = 0; k < K; ++k) r += (S[k] - ax[k]).squaredNorm();
      if (std::sqrt(r) / resz0 / -cx <= opt.feas_tol) {
        res.outcome = HsdResult::Outcome::dual_infeasible;
        res.message = "dual infeasibility certificate";
        return res;
      }
    }
    if (it == opt.max_iter) break;

    const double mu = (sz + tau * kappa) / (m_cone + 1);

    std::vector<MatrixXd> R(K), Rinv(K), V(K);
    std::vector<VectorXd> lam(K);
    for (size_t k = 0; k < K; ++k) {
      Eigen::LLT<MatrixXd> sl(S[k]), zl(Z[k]);
      if (sl.info() != Eigen::Success || zl.info() != Eigen::Success) {
        res.message = "iterate left the cone";
        return res;
      }
      const MatrixXd Ls = sl.matrixL();
      const MatrixXd Lz = zl.matrixL();
      Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
      lam[k] = svd.singularValues();
      if (!(lam[k].minCoeff() > 0)) {
        res.message = "degenerate scaling";
        return res;
      }
      const VectorXd rs = lam[k].cwiseSqrt();
      R[k] = Ls * svd.matrixV() * rs.cwiseInverse().asDiagonal();
      Rinv[k] = rs.asDiagonal() * svd.matrixV().transpose() *
                Ls.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(Ls.rows(), Ls.cols()));
      V[k] = Rinv[k].transpose() * Rinv[k];
    }

    MatrixXd M = MatrixXd::Zero(n, n);
    std::vector<MatrixXd> VF0(K);
    for (size_t k = 0; k < K; ++k) {
      const Block& b = P.blocks[k];
      VF0[k] = V[k] * F0[k] * V[k];
      std::vector<MatrixXd> U(b.idx.size());
      for (size_t q = 0; q < b.idx.size(); ++q) U[q] = V[k] * b.Fi[q] * V[k];
      for (size_t p = 0; p < b.idx.size(); ++p)
        for (size_t q = 0; q < b.idx.size(); ++q) M(b.idx[p], b.idx[q]) += b.Fi[p].cwiseProduct(U[q]).sum();
    }
    M = sym(M);
    const VectorXd d = M.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const MatrixXd Ms = d.asDiagonal() * M * d.asDiagonal();
    Eigen::LLT<MatrixXd> Mllt(Ms);
    Eigen::LDLT<MatrixXd> Mldlt;
    const bool use_llt = Mllt.info() == Eigen::Success;
    if (!use_llt) Mldlt.compute(Ms);
    auto msolve = [&](const VectorXd& r) -> VectorXd {
      const VectorXd rs = d.asDiagonal() * r;
      VectorXd z = use_llt ? VectorXd(Mllt.solve(rs)) : VectorXd(Mldlt.solve(rs));
      z = d.asDiagonal() * z;
      // One step of iterative refinement.
      const VectorXd e = r - M * z;
      const VectorXd rs2 = d.asDiagonal() * e;
      const VectorXd z2 = use_llt ? VectorXd(Mllt.solve(rs2)) : VectorXd(Mldlt.solve(rs2));
      return VectorXd(z + d.asDiagonal() * z2);
    };
    const VectorXd g = adjoint(VF0);
    const double h2 = inner(F0, VF0);
    const VectorXd q = msolve(g + P.c);

    std::vector<MatrixXd> dS(K), dZ(K);
    VectorXd dx;
    double dtau = 0.0, dkappa = 0.0;
    // Linearised residual reduction by (1 - sigma); complementarity target sigma mu.
    auto direction = [&](double sigma, const std::vector<MatrixXd>* corr, double corr_t) {
      std::vector<MatrixXd> E(K), W(K);
      for (size_t k = 0; k < K; ++k) {
        const VectorXd& l = lam[k];
        MatrixXd T = -MatrixXd(l.cwiseAbs2().asDiagonal());
        T.diagonal().array() += sigma * mu;
        if (corr) T -= (*corr)[k];
        for (int i = 0; i < T.rows(); ++i)
          for (int j = 0; j < T.cols(); ++j) T(i, j) *= 2.0 / (l(i) + l(j));
        E[k] = Rinv[k].transpose() * T * Rinv[k];
        W[k] = E[k] + (1.0 - sigma) * V[k] * rz[k] * V[k];
      }
      const VectorXd b1 = adjoint(W) - (1.0 - sigma) * rx;
      const VectorXd p = msolve(b1);
      const double rtc = sigma * mu - tau * kappa - corr_t;
      double f0e = 0.0, f0r = 0.0;
      for (size_t k = 0; k < K; ++k) {
        f0e += F0[k].cwiseProduct(E[k]).sum();
        f0r += VF0[k].cwiseProduct(rz[k]).sum();
      }
      const VectorXd gc = g - P.c;
      const double lhs = -kappa / tau + gc.dot(q) - h2;
      const double rhs = -(1.0 - sigma) * rt - f0e - (1.0 - sigma) * f0r + gc.dot(p) - rtc / tau;
      dtau = rhs / lhs;
      dx = p - q * dtau;
      for (size_t k = 0; k < K; ++k) {
        dS[k] = eval_dir(P.blocks[k], dx) + F0[k] * dtau - (1.0 - sigma) * rz[k];
        dZ[k] = sym(E[k] - V[k] * dS[k] * V[k]);
      }
      dkappa = (rtc - kappa * dtau) / tau;
    };
    auto max_common_step = [&]() {
      double a = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < K; ++k) a = std::min({a, max_step(S[k], dS[k]), max_step(Z[k], dZ[k])});
      if (dtau < 0) a = std::min(a, -tau / dtau);
      if (dkappa < 0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    direction(0.0, nullptr, 0.0);
    if (!dx.allFinite() || !std::isfinite(dtau)) {
      res.message = "singular Newton system";
      return res;
    }
    const double a_aff = std::min(1.0, max_common_step());
    const double sigma = std::pow(1.0 - a_aff, 3.0);
    std::vector<MatrixXd> corr(K);
    for (size_t k = 0; k < K; ++k) {
      const MatrixXd ds = Rinv[k] * dS[k] * Rinv[k].transpose();
      const MatrixXd dz = R[k].transpose() * dZ[k] * R[k];
      corr[k] = sym(ds * dz);
    }
    const double corr_t = dtau * dkappa;
    direction(sigma, &corr, corr_t);
    if (!dx.allFinite() || !std::isfinite(dtau)) {
      res.message = "singular Newton system";
      return res;
    }
    const double a = std::min(1.0, 0.99 * max_common_step());

    x += a * dx;
    for (size_t k = 0; k < K; ++k) {
      S[k] = sym(S[k] + a * dS[k]);
      Z[k] = sym(Z[k] + a * dZ[k]);
    }
    tau += a * dtau;
    kappa += a * dkappa;
    if (!x.allFinite() || !(tau > 0) || !(kappa > 0)) {
      res.message = "iterates left the domain";
      return res;
    }
    if (a < 1e-12) {
      res.message = "step length vanished";
      return res;
    }
  }
  res.message = "iteration limit reached";
  return res;
}

double balance_scale(const Expr& e) {
  double s = e.constant().norm();
  for (const auto& t : e.terms()) s = std::max(s, t.coef.norm());
  return s > 0 ? s : 1.0;
}

}  // namespace

SdpSolution solve(const Problem& p, const SolverOptions& opt) {
  SdpSolution sol;
  const int n = p.num_vars();

  std::vector<double> scales;
  for (const auto& c : p.constraints()) scales.push_back(opt.balance ? balance_scale(c.F) : 1.0);
  std::vector<double> ld_scales;
  for (const auto& ld : p.logdet_terms()) ld_scales.push_back(opt.balance ? balance_scale(ld.V) : 1.0);

  const bool has_logdet = !p.logdet_terms().empty();

  Program P;
  P.n = n;
  for (size_t j = 0; j < p.constraints().size(); ++j) P.blocks.push_back(make_block(p.constraints()[j].F, scales[j]));
  for (size_t l = 0; l < p.logdet_terms().size(); ++l) {
    // -w logdet(V/s) differs from -w logdet V by a constant.
    Block b = make_block(p.logdet_terms()[l].V, ld_scales[l]);
    b.logdet = true;
    b.weight = p.logdet_terms()[l].weight;
    P.blocks.push_back(std::move(b));
  }
  P.c = VectorXd::Zero(n);
  for (const auto& t : p.linear_objective().terms()) P.c(t.index) += t.coef(0, 0);

  // Phase I, used to classify a failed log-det solve: minimize s subject to F_j(x) + s I >= 0,
  // also for the log-det arguments, and s >= -1. Returns true when the program has no strictly
  // feasible point.
  auto no_interior = [&](std::string& why) {
    Program P1;
    P1.n = n + 1;
    const int si = n;
    for (size_t j = 0; j < p.constraints().size(); ++j) P1.blocks.push_back(make_block(p.constraints()[j].F, scales[j], si));
    for (size_t l = 0; l < p.logdet_terms().size(); ++l)
      P1.blocks.push_back(make_block(p.logdet_terms()[l].V, ld_scales[l], si));
    Block lb;
    lb.F0 = MatrixXd::Ones(1, 1);
    lb.idx = {si};
    lb.Fi = {MatrixXd::Ones(1, 1)};
    P1.blocks.push_back(std::move(lb));
    P1.c = VectorXd::Zero(n + 1);
    P1.c(si) = 1.0;
    const size_t nb = P1.blocks.size() - 1;
    auto strictly_feasible = [&](const VectorXd& y) {
      for (size_t k = 0; k < nb; ++k) {
        const Block& b = P1.blocks[k];
        MatrixXd F = b.F0;
        for (size_t q = 0; q + 1 < b.idx.size(); ++q) F += y(b.idx[q]) * b.Fi[q];  // drop the s column
        if (!(min_eig(F) > 0.0)) return false;
      }
      return true;
    };
    SolverOptions o1 = opt;
    o1.opt_tol = std::min(opt.opt_tol, 1e-9);
    o1.feas_tol = std::min(opt.feas_tol, 1e-9);
    const HsdResult r1 = hsd_solve(P1, o1, strictly_feasible);
    sol.iterations += r1.iterations;
    std::ostringstream os;
    if (r1.outcome == HsdResult::Outcome::failed) {
      os << "phase I: " << r1.message;
      why = os.str();
      return false;
    }
    if (r1.outcome == HsdResult::Outcome::stopped || strictly_feasible(r1.x)) return false;
    os << "phase I optimum s = " << r1.x(si);
    why = os.str();
    // s <= 0 up to rounding leaves the interior undecided
    return r1.x(si) > o1.feas_tol;
  };

  bool converged = false;
  std::string message;
  VectorXd x;
  if (has_logdet) {
    const PdResult r = pd_solve(P, opt);
    sol.iterations += r.iterations;
    sol.gap = r.gap;
    sol.dual_residual = r.dinf;
    converged = r.outcome == PdResult::Outcome::converged;
    message = r.message;
    x = r.x;
  } else {
    const HsdResult r = hsd_solve(P, opt);
    sol.iterations += r.iterations;
    sol.gap = r.gap;
    sol.dual_residual = r.dres;
    if (r.outcome == HsdResult::Outcome::primal_infeasible) {
      sol.status = Status::infeasible;
      sol.message = r.message;
      return sol;
    }
    if (r.outcome == HsdResult::Outcome::dual_infeasible) {
      sol.status = Status::unbounded;
      sol.message = r.message;
      return sol;
    }
    converged = r.outcome == HsdResult::Outcome::optimal;
    message = r.message;
    x = r.x;
  }

  sol.x = x;
  for (const auto& v : p.variables()) sol.values[v.name] = p.unpack(x, v.name);
  sol.objective_value = p.objective(x);
  bool feasible = true;
  for (const auto& c : p.constraints()) {
    const double e = min_eig(c.F.eval(x));
    sol.min_eig.push_back(e);
    if (e < -opt.feas_tol) feasible = false;
  }
  if (!x.allFinite() || !std::isfinite(sol.objective_value) || !feasible) {
    sol.status = Status::numerical_failure;
    sol.message = converged ? "solution violates constraints or is not finite" : message;
  } else if (!converged) {
    sol.status = Status::numerical_failure;
    sol.message = message;
  } else {
    sol.status = Status::optimal;
  }
  if (has_logdet && sol.status != Status::optimal) {
    std::string why;
    if (no_interior(why)) {
      sol.status = Status::infeasible;
      sol.message = why;
    } else if (!why.empty()) {
      sol.message += "; " + why;
    }
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Grid search

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(lo < hi) || !(step > 0)) throw ValidationError("grid", "need lo < hi and step > 0");
  std::vector<double> g;
  const long n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) g.push_back(lo + static_cast<double>(i) * step);
  return g;
}

LineSearchResult line_search_scalar(const ScalarProgram& obj, const std::vector<double>& grid,
                                    const SolutionKey& key, int threads) {
  if (grid.empty()) throw ValidationError("grid", "empty grid");
  std::vector<SdpSolution> sols(grid.size());
  parallel_for(static_cast<int>(grid.size()), threads, [&](int i) {
    try {
      sols[i] = obj(grid[i]);
    } catch (const InfeasibleError& e) {
      sols[i].status = Status::infeasible;
      sols[i].message = e.what();
    } catch (const NumericalError& e) {
      sols[i].status = Status::numerical_failure;
      sols[i].message = e.what();
    }
  });
  LineSearchResult res;
  int best = -1;
  double best_key = 0.0;
  for (size_t i = 0; i < grid.size(); ++i) {
    GridPoint gp{grid[i], sols[i].status, 0.0};
    if (sols[i].status == Status::optimal) {
      gp.key = key ? key(grid[i], sols[i]) : sols[i].objective_value;
      const double tie = 1e-12 * (1.0 + std::abs(best_key));
      if (best < 0 || gp.key < best_key - tie) {
        best = static_cast<int>(i);
        best_key = gp.key;
      }
    }
    res.points.push_back(gp);
  }
  if (best < 0) {
    std::ostringstream os;
    os << "no grid point was solved to optimality (";
    int infeas = 0, fail = 0;
    for (const auto& p : res.points) (p.status == Status::infeasible ? infeas : fail)++;
    os << infeas << " infeasible, " << fail << " numerical failures)";
    throw GridInfeasibleError(os.str(), res.points);
  }
  res.best = grid[best];
  res.solution = std::move(sols[best]);
  return res;
}

LineSearchResult line_search_scalar(const ScalarProgram& obj, double lo, double hi, double step,
                                    const SolutionKey& key, int threads) {
  return line_search_scalar(obj, make_grid(lo, hi, step), key, threads);
}

}  // namespace cacc::lmi

