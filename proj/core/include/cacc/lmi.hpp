#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cacc/errors.hpp"

namespace cacc::lmi {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class VarKind { symmetric, full, scalar };

struct Variable {
  std::string name;
  VarKind kind;
  int rows = 0;
  int cols = 0;
  int offset = 0;  // first index in the flat decision vector
  int size = 0;
};

// Affine matrix expression  C0 + sum_k x[index_k] * C_k  in the flat decision vector x.
class Expr {
 public:
  struct Term {
    int index;
    MatrixXd coef;
  };

  Expr() = default;
  Expr(int rows, int cols);
  explicit Expr(const MatrixXd& constant);

  int rows() const { return static_cast<int>(c0_.rows()); }
  int cols() const { return static_cast<int>(c0_.cols()); }
  const MatrixXd& constant() const { return c0_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_constant() const { return terms_.empty(); }

  Expr transpose() const;
  Expr symmetrized() const;
  MatrixXd eval(const VectorXd& x) const;

  Expr& operator+=(const Expr& o);
  Expr& operator-=(const Expr& o);
  Expr operator-() const;

  friend Expr operator+(Expr a, const Expr& b) { return a += b; }
  friend Expr operator-(Expr a, const Expr& b) { return a -= b; }
  friend Expr operator*(double s, const Expr& e);
  friend Expr operator*(const MatrixXd& M, const Expr& e);
  friend Expr operator*(const Expr& e, const MatrixXd& M);

  // Used by Problem when declaring variables.
  void push_term(int index, MatrixXd coef);

 private:
  MatrixXd c0_;
  std::vector<Term> terms_;  // sorted by index, unique
};

// s * M for a 1x1 expression s.
Expr scale(const Expr& s, const MatrixXd& M);

enum class Sense { psd, nsd };

// Symmetric block matrix given by its lower triangle; the upper triangle is mirrored.
class BlockLMI {
 public:
  BlockLMI(std::vector<int> sizes, Sense sense);
  void set(int i, int j, const Expr& e);
  Expr assemble() const;  // the matrix as written
  Expr as_psd() const;    // assemble() or its negation, so that the constraint reads >= 0
  Sense sense() const { return sense_; }
  const std::vector<int>& sizes() const { return sizes_; }

 private:
  std::vector<int> sizes_;
  Sense sense_;
  std::vector<std::vector<Expr>> blocks_;
  std::vector<std::vector<bool>> set_;
};

enum class Status { optimal, infeasible, unbounded, numerical_failure };
const char* to_string(Status s);

class Problem {
 public:
  Expr add_symmetric(const std::string& name, int n);
  Expr add_full(const std::string& name, int rows, int cols);
  Expr add_scalar(const std::string& name);

  void add_constraint(const BlockLMI& lmi, std::string label = {});
  void add_constraint(const Expr& F, Sense sense, std::string label = {});
  // lo <= s for a 1x1 expression s
  void add_lower_bound(const Expr& s, double lo, std::string label = {});
  void add_upper_bound(const Expr& s, double hi, std::string label = {});

  void minimize(const Expr& linear);
  // Adds -weight * logdet(V) to the objective; V must be a declared symmetric variable.
  void minimize_neg_logdet(const std::string& var, double weight = 1.0);

  struct Constraint {
    Expr F;  // F >= 0
    std::string label;
  };
  struct LogdetTerm {
    Expr V;
    double weight;
    std::string var;
  };

  int num_vars() const { return nvars_; }
  const std::vector<Variable>& variables() const { return vars_; }
  const Variable& variable(const std::string& name) const;
  const std::vector<Constraint>& constraints() const { return cons_; }
  const std::vector<LogdetTerm>& logdet_terms() const { return logdets_; }
  const Expr& linear_objective() const { return obj_; }

  MatrixXd unpack(const VectorXd& x, const std::string& name) const;
  double objective(const VectorXd& x) const;

  // SDPA sparse format (minimize c'x s.t. sum x_i F_i - F_0 >= 0). Log-det terms are not
  // representable and are listed in a comment header only.
  std::string to_sdpa() const;

 private:
  Variable& declare(const std::string& name, VarKind kind, int rows, int cols, int size);
  void check_expr(const Expr& e, const char* what) const;

  std::vector<Variable> vars_;
  int nvars_ = 0;
  std::vector<Constraint> cons_;
  std::vector<LogdetTerm> logdets_;
  Expr obj_{1, 1};
};

struct SolverOptions {
  double feas_tol = 1e-7;  // dual residual, relative
  double opt_tol = 1e-7;   // complementarity gap, relative
  double radius = 1e8;     // iterates leaving this ball are reported as a numerical failure
  int max_iter = 300;
  bool balance = true;     // scale each constraint by its largest coefficient norm
};

struct SdpSolution {
  Status status = Status::numerical_failure;
  std::map<std::string, MatrixXd> values;
  double objective_value = 0.0;
  VectorXd x;
  std::vector<double> min_eig;  // per constraint, of F(x) as stated (>= 0 sense)
  int iterations = 0;
  double gap = 0.0;
  double dual_residual = 0.0;
  std::string message;

  double scalar(const std::string& name) const { return values.at(name)(0, 0); }
};

// Primal-dual interior-point method with Nesterov-Todd scaling and Mehrotra's corrector.
// Purely linear programs use a homogeneous self-dual embedding, which also certifies
// infeasibility. With log-det terms each log-det block is kept at fixed centrality S Z = w I;
// when that solve does not converge a phase I program decides whether an interior exists.
SdpSolution solve(const Problem& p, const SolverOptions& opt = {});

struct GridPoint {
  double s = 0.0;
  Status status = Status::numerical_failure;
  double key = 0.0;
};

struct LineSearchResult {
  double best = 0.0;
  SdpSolution solution;
  std::vector<GridPoint> points;
};

class GridInfeasibleError : public InfeasibleError {
 public:
  GridInfeasibleError(const std::string& what, std::vector<GridPoint> pts)
      : InfeasibleError(what), points_(std::move(pts)) {}
  const std::vector<GridPoint>& points() const { return points_; }

 private:
  std::vector<GridPoint> points_;
};

std::vector<double> make_grid(double lo, double hi, double step);

using ScalarProgram = std::function<SdpSolution(double)>;
using SolutionKey = std::function<double(double, const SdpSolution&)>;

// Solves one program per grid point and keeps the optimal one with the smallest key
// (objective_value unless `key` is given). Ties go to the smaller scalar.
LineSearchResult line_search_scalar(const ScalarProgram& obj, const std::vector<double>& grid,
                                    const SolutionKey& key = {}, int threads = 1);
LineSearchResult line_search_scalar(const ScalarProgram& obj, double lo, double hi, double step,
                                    const SolutionKey& key = {}, int threads = 1);

}  // namespace cacc::lmi
