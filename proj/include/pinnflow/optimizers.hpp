#pragma once

// Adam, L-BFGS with a Hager-Zhang line search, and the two-phase training
// driver over a flat parameter vector.

#include "pinnflow/error.hpp"
#include "pinnflow/loss_breakdown.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pinnflow {

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamHyper&) const = default;
};

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::size_t step_count = 0;
  AdamHyper hyper;

  static AdamState zeros(Eigen::Index n, const AdamHyper& hyper = {});
};

/// One bias-corrected Adam update in place. Throws step_rejected on a
/// non-finite gradient, leaving params and state untouched.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state);

// ---------------------------------------------------------------------------
// L-BFGS

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double sy = 0.0;
};

class LbfgsState {
 public:
  explicit LbfgsState(std::size_t memory = 10) : memory_(memory) {}

  /// Stores (s, y) if it satisfies the curvature condition; returns whether
  /// it was stored. The oldest pair is dropped once memory is full.
  bool push(Eigen::VectorXd s, Eigen::VectorXd y);
  void clear() { history_.clear(); }

  const std::deque<CurvaturePair>& history() const { return history_; }
  std::size_t memory() const { return memory_; }
  std::size_t rejected() const { return rejected_; }

 private:
  std::size_t memory_;
  std::deque<CurvaturePair> history_;
  std::size_t rejected_ = 0;
};

/// Two-loop recursion with initial Hessian scaling s'y / y'y of the newest
/// pair; -grad when the history is empty.
Eigen::VectorXd lbfgs_direction(const LbfgsState& state, const Eigen::VectorXd& grad);

// ---------------------------------------------------------------------------
// Hager-Zhang line search

struct LineSearchConfig {
  double wolfe_delta = 0.1;   ///< sufficient decrease
  double wolfe_sigma = 0.9;   ///< curvature
  double epsilon = 1e-6;      ///< approximate-Wolfe energy slack, relative to |phi(0)|
  double theta = 0.5;         ///< bisection point in the bracket update
  double gamma = 0.66;        ///< required bracket shrink per secant step
  double expansion = 5.0;     ///< growth factor while bracketing
  double psi0 = 0.01;         ///< scale of the first trial step when no step is known
  double max_step = 1e10;
  std::size_t max_iterations = 50;

  void validate() const;
  bool operator==(const LineSearchConfig&) const = default;
};

/// phi(alpha) and phi'(alpha) along the search direction.
struct LinePoint {
  double alpha = 0.0;
  double value = 0.0;
  double slope = 0.0;
};

using LineFunction = std::function<LinePoint(double alpha)>;

enum class LineSearchStatus { wolfe, approximate_wolfe, hit_max_step, max_iterations };

struct LineSearchResult {
  LinePoint accepted;
  LineSearchStatus status = LineSearchStatus::wolfe;
  std::size_t evaluations = 0;
  std::string warning;

  bool satisfied() const {
    return status == LineSearchStatus::wolfe || status == LineSearchStatus::approximate_wolfe;
  }
};

/// Standard Wolfe test (sufficient decrease and curvature).
bool wolfe_conditions(const LinePoint& at_zero, const LinePoint& c, const LineSearchConfig& config);
/// Approximate Wolfe test, accepted when phi(c) <= phi(0) + epsilon |phi(0)|.
bool approximate_wolfe_conditions(const LinePoint& at_zero, const LinePoint& c, const LineSearchConfig& config);

/// Bracketing, double-secant and bisection steps. Requires at_zero.slope < 0
/// (not_a_descent_direction otherwise). When the evaluation budget runs out
/// the lowest point seen is returned with a warning.
LineSearchResult hager_zhang_search(const LineFunction& phi, const LinePoint& at_zero, double initial_alpha,
                                    const LineSearchConfig& config = {});

// ---------------------------------------------------------------------------
// Two-phase training

struct Evaluation {
  LossBreakdown loss;
  Eigen::VectorXd gradient;
};

class Objective {
 public:
  virtual ~Objective() = default;
  /// Full-batch loss and gradient; must be deterministic.
  virtual Evaluation evaluate(const Eigen::VectorXd& x) = 0;
  /// Loss on the next mini-batch (Adam phase). Defaults to the full batch.
  virtual Evaluation evaluate_batch(const Eigen::VectorXd& x) { return evaluate(x); }
};

/// Adapter for plain scalar functions.
class FunctionObjective : public Objective {
 public:
  using Fn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;
  explicit FunctionObjective(Fn fn) : fn_(std::move(fn)) {}
  Evaluation evaluate(const Eigen::VectorXd& x) override;

 private:
  Fn fn_;
};

enum class Phase { adam, lbfgs };
std::string_view to_string(Phase phase);

struct LossRecord {
  std::size_t iteration = 0;
  Phase phase = Phase::adam;
  LossBreakdown loss;
  std::optional<double> alpha;
};

struct TrainingSchedule {
  std::size_t adam_iterations = 5000;
  AdamHyper adam;
  bool adam_batches = false;
  std::size_t lbfgs_max_iterations = 50000;
  std::size_t lbfgs_memory = 10;
  LineSearchConfig line_search;
  double gradient_tolerance = 1e-8;
  double relative_loss_tolerance = 1e-9;
  std::size_t plateau_window = 10;

  bool operator==(const TrainingSchedule&) const = default;
};

enum class Termination { none, gradient_norm, loss_plateau, max_iterations, no_decrease, line_search_failed };
std::string_view to_string(Termination t);

/// Line search bookkeeping for one accepted L-BFGS step.
struct LbfgsStep {
  LinePoint at_zero;
  LineSearchResult search;
  bool pair_stored = false;
};

struct TrainingResult {
  Eigen::VectorXd params;
  std::vector<LossRecord> history;
  std::size_t adam_iterations = 0;
  std::size_t lbfgs_iterations = 0;
  Termination termination = Termination::none;
  std::vector<LbfgsStep> lbfgs_steps;
  /// Smallest s'y over all stored curvature pairs (infinity if none).
  double min_stored_curvature = 0.0;
  std::size_t rejected_pairs = 0;
};

/// Raised when the loss becomes non-finite; carries the last finite state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, Eigen::VectorXd last_finite, std::vector<LossRecord> history)
      : Error(ErrorCode::divergence, message), last_finite_(std::move(last_finite)), history_(std::move(history)) {}

  const Eigen::VectorXd& last_finite() const { return last_finite_; }
  const std::vector<LossRecord>& history() const { return history_; }

 private:
  Eigen::VectorXd last_finite_;
  std::vector<LossRecord> history_;
};

/// Optional per-iteration callback (progress reporting).
using TrainingObserver = std::function<void(const LossRecord&)>;

/// Adam for adam_iterations, then L-BFGS until the gradient infinity norm
/// falls below gradient_tolerance, the relative loss change stays below
/// relative_loss_tolerance for plateau_window consecutive iterations, or
/// lbfgs_max_iterations is reached.
TrainingResult train_phase(Objective& objective, Eigen::VectorXd initial, const TrainingSchedule& schedule,
                           const TrainingObserver& observer = {});

}  // namespace pinnflow
