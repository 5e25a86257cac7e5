#include "pinnflow/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace pinnflow {

namespace {

bool finite(const LinePoint& p) { return std::isfinite(p.value) && std::isfinite(p.slope); }

}  // namespace

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::zeros(Eigen::Index n, const AdamHyper& hyper) {
  return AdamState{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0, hyper};
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state) {
  if (grad.size() != params.size() || state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: length mismatch");
  }
  if (!grad.allFinite()) fail(ErrorCode::step_rejected, "non-finite gradient");
  const AdamHyper& h = state.hyper;
  state.step_count += 1;
  state.first_moment = h.beta1 * state.first_moment + (1.0 - h.beta1) * grad;
  state.second_moment = h.beta2 * state.second_moment + (1.0 - h.beta2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  params.array() -= h.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + h.epsilon);
}

// ---------------------------------------------------------------------------
// L-BFGS

bool LbfgsState::push(Eigen::VectorXd s, Eigen::VectorXd y) {
  const double sy = s.dot(y);
  if (!(sy > 0.0) || !(sy > 1e-12 * s.norm() * y.norm()) || !std::isfinite(sy)) {
    ++rejected_;
    return false;
  }
  if (memory_ == 0) return false;
  if (history_.size() == memory_) history_.pop_front();
  history_.push_back(CurvaturePair{std::move(s), std::move(y), sy});
  return true;
}

Eigen::VectorXd lbfgs_direction(const LbfgsState& state, const Eigen::VectorXd& grad) {
  const auto& hist = state.history();
  if (hist.empty()) return -grad;
  Eigen::VectorXd q = grad;
  std::vector<double> alpha(hist.size());
  for (std::size_t i = hist.size(); i-- > 0;) {
    alpha[i] = hist[i].s.dot(q) / hist[i].sy;
    q -= alpha[i] * hist[i].y;
  }
  const CurvaturePair& newest = hist.back();
  q *= newest.sy / newest.y.squaredNorm();
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double beta = hist[i].y.dot(q) / hist[i].sy;
    q += (alpha[i] - beta) * hist[i].s;
  }
  return -q;
}

// ---------------------------------------------------------------------------
// Hager-Zhang

void LineSearchConfig::validate() const {
  if (!(0.0 < wolfe_delta && wolfe_delta < wolfe_sigma && wolfe_sigma < 1.0)) {
    fail(ErrorCode::configuration, "line search needs 0 < delta < sigma < 1");
  }
  if (!(0.0 < theta && theta < 1.0) || !(0.0 < gamma && gamma < 1.0) || !(expansion > 1.0)) {
    fail(ErrorCode::configuration, "bad line search bracketing constants");
  }
  if (max_iterations == 0) fail(ErrorCode::configuration, "line search needs at least one evaluation");
}

bool wolfe_conditions(const LinePoint& z, const LinePoint& c, const LineSearchConfig& cfg) {
  return c.alpha > 0.0 && finite(c) && c.value - z.value <= cfg.wolfe_delta * c.alpha * z.slope &&
         c.slope >= cfg.wolfe_sigma * z.slope;
}

bool approximate_wolfe_conditions(const LinePoint& z, const LinePoint& c, const LineSearchConfig& cfg) {
  return c.alpha > 0.0 && finite(c) && (2.0 * cfg.wolfe_delta - 1.0) * z.slope >= c.slope &&
         c.slope >= cfg.wolfe_sigma * z.slope && c.value <= z.value + cfg.epsilon * std::abs(z.value);
}

namespace {

class HagerZhang {
 public:
  HagerZhang(const LineFunction& phi, const LinePoint& z, const LineSearchConfig& cfg)
      : phi_(phi), z_(z), cfg_(cfg), eps_k_(cfg.epsilon * std::abs(z.value)), best_(z) {}

  LineSearchResult run(double initial_alpha) {
    double c = std::min(initial_alpha, cfg_.max_step);
    if (!(c > 0.0)) c = 1.0;
    LinePoint pc;
    do {
      if (!budget()) return exhausted();
      pc = eval(c);
      c *= 0.1;
    } while (!finite(pc));
    if (done_) return result_;

    // Bracketing: expand until the slope turns non-negative or the value
    // rises above the energy level.
    LinePoint a = z_, b;
    LinePoint last_good = z_;
    while (true) {
      if (pc.slope >= 0.0) {
        a = last_good;
        b = pc;
        break;
      }
      if (pc.value > level()) {
        auto bracket = bisect(last_good, pc);
        if (done_) return result_;
        a = bracket.first;
        b = bracket.second;
        break;
      }
      last_good = pc;
      if (pc.alpha >= cfg_.max_step) {
        return finish(pc, LineSearchStatus::hit_max_step, "step reached the maximum without bracketing a minimizer");
      }
      double next = std::min(pc.alpha * cfg_.expansion, cfg_.max_step);
      if (!budget()) return exhausted();
      pc = eval(next);
      if (done_) return result_;
      while (!finite(pc)) {
        if (!budget()) return exhausted();
        next = 0.5 * (last_good.alpha + next);
        pc = eval(next);
        if (done_) return result_;
      }
    }

    while (true) {
      if (!budget()) return exhausted();
      auto [A, B] = secant2(a, b);
      if (done_) return result_;
      if (B.alpha - A.alpha > cfg_.gamma * (b.alpha - a.alpha)) {
        if (!budget()) return exhausted();
        const LinePoint mid = eval(0.5 * (A.alpha + B.alpha));
        if (done_) return result_;
        std::tie(A, B) = update(A, B, mid);
        if (done_) return result_;
      }
      a = A;
      b = B;
      if (b.alpha - a.alpha <= std::numeric_limits<double>::epsilon() * b.alpha) {
        return finish(best_, LineSearchStatus::max_iterations, "bracket collapsed without meeting Wolfe conditions");
      }
    }
  }

 private:
  using Bracket = std::pair<LinePoint, LinePoint>;

  double level() const { return z_.value + eps_k_; }
  bool budget() const { return evals_ < cfg_.max_iterations; }

  LinePoint eval(double alpha) {
    ++evals_;
    LinePoint p = phi_(alpha);
    p.alpha = alpha;
    if (finite(p) && p.value < best_.value) best_ = p;
    if (wolfe_conditions(z_, p, cfg_)) {
      finish(p, LineSearchStatus::wolfe, "");
    } else if (approximate_wolfe_conditions(z_, p, cfg_)) {
      finish(p, LineSearchStatus::approximate_wolfe, "");
    }
    return p;
  }

  LineSearchResult finish(const LinePoint& p, LineSearchStatus status, std::string warning) {
    done_ = true;
    result_ = LineSearchResult{p, status, evals_, std::move(warning)};
    return result_;
  }

  LineSearchResult exhausted() {
    return finish(best_, LineSearchStatus::max_iterations, "line search evaluation budget exhausted");
  }

  // Shrinks [a, b] where b has a negative slope but too high a value (or is
  // not finite) until the slope changes sign.
  Bracket bisect(LinePoint a, LinePoint b) {
    while (!done_) {
      if (!budget()) {
        exhausted();
        break;
      }
      const LinePoint d = eval((1.0 - cfg_.theta) * a.alpha + cfg_.theta * b.alpha);
      if (done_) break;
      if (finite(d) && d.slope >= 0.0) return {a, d};
      if (finite(d) && d.value <= level()) {
        a = d;
      } else {
        b = d;
      }
      if (b.alpha - a.alpha <= std::numeric_limits<double>::epsilon() * b.alpha) {
        finish(best_, LineSearchStatus::max_iterations, "bisection collapsed without meeting Wolfe conditions");
      }
    }
    return {a, b};
  }

  Bracket update(const LinePoint& a, const LinePoint& b, const LinePoint& c) {
    if (!(c.alpha > a.alpha && c.alpha < b.alpha)) return {a, b};
    if (finite(c) && c.slope >= 0.0) return {a, c};
    if (finite(c) && c.value <= level()) return {c, b};
    return bisect(a, c);
  }

  static double secant(const LinePoint& a, const LinePoint& b) {
    const double denom = b.slope - a.slope;
    if (denom == 0.0 || !std::isfinite(denom)) return 0.5 * (a.alpha + b.alpha);
    return (a.alpha * b.slope - b.alpha * a.slope) / denom;
  }

  Bracket secant2(const LinePoint& a, const LinePoint& b) {
    const double c = secant(a, b);
    if (!(c > a.alpha && c < b.alpha)) return {a, b};
    const LinePoint pc = eval(c);
    if (done_) return {a, b};
    auto [A, B] = update(a, b, pc);
    if (done_) return {A, B};
    double cbar;
    if (pc.alpha == B.alpha) {
      cbar = secant(b, B);
    } else if (pc.alpha == A.alpha) {
      cbar = secant(a, A);
    } else {
      return {A, B};
    }
    if (!(cbar > A.alpha && cbar < B.alpha)) return {A, B};
    if (!budget()) {
      exhausted();
      return {A, B};
    }
    const LinePoint pbar = eval(cbar);
    if (done_) return {A, B};
    return update(A, B, pbar);
  }

  const LineFunction& phi_;
  LinePoint z_;
  LineSearchConfig cfg_;
  double eps_k_;
  LinePoint best_;
  std::size_t evals_ = 0;
  bool done_ = false;
  LineSearchResult result_;
};

}  // namespace

LineSearchResult hager_zhang_search(const LineFunction& phi, const LinePoint& at_zero, double initial_alpha,
                                    const LineSearchConfig& config) {
  config.validate();
  if (!(at_zero.slope < 0.0)) fail(ErrorCode::not_a_descent_direction, "phi'(0) must be negative");
  LinePoint z = at_zero;
  z.alpha = 0.0;
  return HagerZhang(phi, z, config).run(initial_alpha);
}

// ---------------------------------------------------------------------------
// Training driver

Evaluation FunctionObjective::evaluate(const Eigen::VectorXd& x) {
  Evaluation e;
  e.gradient = Eigen::VectorXd::Zero(x.size());
  e.loss = LossBreakdown::scalar(fn_(x, e.gradient));
  return e;
}

std::string_view to_string(Phase phase) { return phase == Phase::adam ? "adam" : "lbfgs"; }

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::none: return "none";
    case Termination::gradient_norm: return "gradient_norm";
    case Termination::loss_plateau: return "loss_plateau";
    case Termination::max_iterations: return "max_iterations";
    case Termination::no_decrease: return "no_decrease";
    case Termination::line_search_failed: return "line_search_failed";
  }
  return "?";
}

namespace {

bool finite(const Evaluation& e) { return std::isfinite(e.loss.total) && e.gradient.allFinite(); }

double initial_step_guess(const Eigen::VectorXd& x, double f, const Eigen::VectorXd& g, double psi0) {
  const double gmax = g.lpNorm<Eigen::Infinity>();
  if (gmax == 0.0) return 1.0;
  const double xmax = x.size() ? x.lpNorm<Eigen::Infinity>() : 0.0;
  if (xmax != 0.0) return psi0 * xmax / gmax;
  if (f != 0.0) return psi0 * std::abs(f) / g.squaredNorm();
  return 1.0;
}

}  // namespace

TrainingResult train_phase(Objective& objective, Eigen::VectorXd x, const TrainingSchedule& schedule,
                           const TrainingObserver& observer) {
  TrainingResult result;
  std::size_t iteration = 0;
  auto emit = [&](LossRecord rec) {
    if (observer) observer(rec);
    result.history.push_back(std::move(rec));
  };

  AdamState adam = AdamState::zeros(x.size(), schedule.adam);
  for (std::size_t k = 0; k < schedule.adam_iterations; ++k) {
    const Evaluation e = schedule.adam_batches ? objective.evaluate_batch(x) : objective.evaluate(x);
    if (!finite(e)) {
      throw DivergenceError("non-finite loss in Adam iteration " + std::to_string(k + 1), x, result.history);
    }
    emit(LossRecord{++iteration, Phase::adam, e.loss, std::nullopt});
    adam_step(x, e.gradient, adam);
    ++result.adam_iterations;
  }

  result.min_stored_curvature = std::numeric_limits<double>::infinity();
  if (schedule.lbfgs_max_iterations == 0) {
    result.params = std::move(x);
    result.termination = Termination::max_iterations;
    return result;
  }

  Evaluation current = objective.evaluate(x);
  if (!finite(current)) throw DivergenceError("non-finite loss entering L-BFGS", x, result.history);

  LbfgsState lbfgs(schedule.lbfgs_memory);
  std::size_t plateau = 0;
  result.termination = Termination::max_iterations;
  for (std::size_t k = 0; k < schedule.lbfgs_max_iterations; ++k) {
    if (current.gradient.lpNorm<Eigen::Infinity>() < schedule.gradient_tolerance) {
      result.termination = Termination::gradient_norm;
      break;
    }
    Eigen::VectorXd d = lbfgs_direction(lbfgs, current.gradient);
    double slope0 = current.gradient.dot(d);
    if (!(slope0 < 0.0)) {
      lbfgs.clear();
      d = -current.gradient;
      slope0 = current.gradient.dot(d);
      // Only an exactly zero gradient gets here.
      if (!(slope0 < 0.0)) {
        result.termination = Termination::gradient_norm;
        break;
      }
    }
    const double alpha0 = lbfgs.history().empty()
                              ? initial_step_guess(x, current.loss.total, current.gradient, schedule.line_search.psi0)
                              : 1.0;

    // Every trial is a full evaluation; keep them so the accepted one is reused.
    std::vector<std::pair<double, Evaluation>> trials;
    const LineFunction phi = [&](double alpha) {
      Evaluation e = objective.evaluate(x + alpha * d);
      LinePoint p{alpha, e.loss.total, e.gradient.allFinite() ? e.gradient.dot(d) : std::nan("")};
      trials.emplace_back(alpha, std::move(e));
      return p;
    };
    const LinePoint at_zero{0.0, current.loss.total, slope0};
    const LineSearchResult search = hager_zhang_search(phi, at_zero, alpha0, schedule.line_search);
    if (!(search.accepted.alpha > 0.0) || !(search.accepted.value < current.loss.total)) {
      result.termination = search.satisfied() ? Termination::no_decrease : Termination::line_search_failed;
      break;
    }
    auto it = std::find_if(trials.rbegin(), trials.rend(),
                           [&](const auto& t) { return t.first == search.accepted.alpha; });
    Evaluation next = std::move(it->second);
    Eigen::VectorXd x_next = x + search.accepted.alpha * d;

    LbfgsStep step{at_zero, search, false};
    step.pair_stored = lbfgs.push(x_next - x, next.gradient - current.gradient);
    if (step.pair_stored) result.min_stored_curvature = std::min(result.min_stored_curvature, lbfgs.history().back().sy);
    result.lbfgs_steps.push_back(step);

    const double rel = std::abs(current.loss.total - next.loss.total) /
                       std::max(std::abs(current.loss.total), std::numeric_limits<double>::min());
    x = std::move(x_next);
    current = std::move(next);
    ++result.lbfgs_iterations;
    emit(LossRecord{++iteration, Phase::lbfgs, current.loss, search.accepted.alpha});

    plateau = rel < schedule.relative_loss_tolerance ? plateau + 1 : 0;
    if (plateau >= schedule.plateau_window) {
      result.termination = Termination::loss_plateau;
      break;
    }
  }
  result.rejected_pairs = lbfgs.rejected();
  result.params = std::move(x);
  return result;
}

}  // namespace pinnflow
