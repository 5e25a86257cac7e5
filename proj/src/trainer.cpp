#include "pinnflow/trainer.hpp"

#include "pinnflow/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace pinnflow {

namespace {

using ad::Var;

// Points per tape. Fixed so that the reduction order never depends on the
// number of threads.
constexpr Eigen::Index kChunk = 256;
constexpr Eigen::Index kEvalChunk = 2048;
constexpr double kCutTolerance = 1e-12;

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) fail(ErrorCode::configuration, key + ": " + what);
}

bool positive(double v) { return v > 0.0 && std::isfinite(v); }
bool non_negative(double v) { return v >= 0.0 && std::isfinite(v); }

const DerivativeChannels& interior_channels(ResidualForm form) {
  static const DerivativeChannels sigma = DerivativeChannels::closure_of({"xx", "xy", "yy", "xt", "yt"});
  static const DerivativeChannels direct =
      DerivativeChannels::closure_of({"xx", "xy", "yy", "xt", "yt", "xxx", "xxy", "xyy", "yyy"});
  return form == ResidualForm::direct ? direct : sigma;
}

const DerivativeChannels& surface_channels() {
  static const DerivativeChannels set = DerivativeChannels::closure_of({"x", "y"});
  return set;
}

FlowJet<Var> flow_jet_vars(const OutputJet& jet, bool third) {
  FlowJet<Var> j;
  j.psi_x = ad::row(jet["x"], kPsi);
  j.psi_y = ad::row(jet["y"], kPsi);
  j.psi_xx = ad::row(jet["xx"], kPsi);
  j.psi_xy = ad::row(jet["xy"], kPsi);
  j.psi_yy = ad::row(jet["yy"], kPsi);
  j.psi_xt = ad::row(jet["xt"], kPsi);
  j.psi_yt = ad::row(jet["yt"], kPsi);
  if (third) {
    j.psi_xxx = ad::row(jet["xxx"], kPsi);
    j.psi_xxy = ad::row(jet["xxy"], kPsi);
    j.psi_xyy = ad::row(jet["xyy"], kPsi);
    j.psi_yyy = ad::row(jet["yyy"], kPsi);
    j.has_third = true;
  }
  j.p = ad::row(jet[""], kPressure);
  j.p_x = ad::row(jet["x"], kPressure);
  j.p_y = ad::row(jet["y"], kPressure);
  j.s11 = ad::row(jet[""], kSigma11);
  j.s11_x = ad::row(jet["x"], kSigma11);
  j.s12 = ad::row(jet[""], kSigma12);
  j.s12_x = ad::row(jet["x"], kSigma12);
  j.s12_y = ad::row(jet["y"], kSigma12);
  j.s22 = ad::row(jet[""], kSigma22);
  j.s22_y = ad::row(jet["y"], kSigma22);
  return j;
}

struct SurfaceFields {
  Var u, v, p;
};

SurfaceFields surface_fields(const OutputJet& jet) {
  return {ad::row(jet["y"], kPsi), -ad::row(jet["x"], kPsi), ad::row(jet[""], kPressure)};
}

Eigen::Matrix3Xd to_matrix(std::span<const SpaceTimePoint> pts) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) << pts[i].x, pts[i].y, pts[i].t;
  return m;
}

template <class F>
void parallel_for(std::size_t n, std::size_t threads, const F& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t extra = std::min(threads, n) - 1;
  pool.reserve(extra);
  for (std::size_t t = 0; t < extra; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Deterministic epoch-wise shuffling of one index list.
class BatchCursor {
 public:
  BatchCursor(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    reshuffle();
  }

  std::vector<std::size_t> take(std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  void reshuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_() % i]);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

struct TargetBlock {
  Eigen::Matrix3Xd points;
  Eigen::Matrix3Xd values;  // rows u, v, p
  Eigen::Matrix3Xd mask;    // 1 where the target applies
};

TargetBlock target_block(std::span<const TargetPoint> targets, std::span<const std::size_t> pick) {
  const auto n = static_cast<Eigen::Index>(pick.size());
  TargetBlock b{Eigen::Matrix3Xd(3, n), Eigen::Matrix3Xd::Zero(3, n), Eigen::Matrix3Xd::Zero(3, n)};
  for (Eigen::Index c = 0; c < n; ++c) {
    const TargetPoint& tp = targets[pick[static_cast<std::size_t>(c)]];
    b.points.col(c) << tp.at.x, tp.at.y, tp.at.t;
    const std::optional<double>* fields[3] = {&tp.u, &tp.v, &tp.p};
    for (int r = 0; r < 3; ++r) {
      if (*fields[r]) {
        b.values(r, c) = **fields[r];
        b.mask(r, c) = 1.0;
      }
    }
  }
  return b;
}

enum class UnitKind { interior, targets, interface };

struct WorkUnit {
  UnitKind kind = UnitKind::interior;
  std::size_t first = 0;   // owning network, or side a of an interface
  std::size_t second = 0;  // side b of an interface
  TargetBlock block;       // points (and targets for target units)
  Vec2 normal;
  double scale = 1.0;      // turns the chunk's sum of squares into its share of a mean
};

struct UnitResult {
  double g = 0.0, bc_ic = 0.0, interface = 0.0, flux = 0.0;
  Eigen::VectorXd grad_first, grad_second;
};

struct InterfacePair {
  std::size_t a = 0, b = 0;
  std::vector<SpaceTimePoint> points;
  Vec2 normal;
};

std::vector<InterfacePair> interface_pairs(std::span<const SubdomainSpec> subdomains) {
  std::vector<InterfacePair> pairs;
  for (const SubdomainSpec& s : subdomains) {
    for (const InterfaceLink& link : s.interfaces) {
      if (link.neighbor <= s.index) continue;
      if (link.neighbor >= subdomains.size()) fail(ErrorCode::consistency, "interface to a missing subdomain");
      const InterfaceLink* back = subdomains[link.neighbor].link_to(s.index);
      if (back == nullptr || back->points != link.points) {
        fail(ErrorCode::consistency, "interface " + std::to_string(s.index) + "-" + std::to_string(link.neighbor) +
                                         " has mismatched point lists");
      }
      pairs.push_back({s.index, link.neighbor, link.points, link.normal});
    }
  }
  return pairs;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// The joint objective: the sum over subdomains of each subdomain's weighted
// loss, over one flat vector holding every network's parameters.
class JointObjective : public Objective {
 public:
  JointObjective(const ExperimentConfig& config, std::span<const SubdomainSpec> subdomains,
                 std::vector<NetworkParams> layout, std::size_t threads)
      : flow_(config.flow),
        form_(config.residual_form),
        variant_(config.variant),
        weights_(config.effective_weights()),
        layout_(std::move(layout)),
        threads_(std::max<std::size_t>(threads, 1)),
        subdomains_(subdomains.begin(), subdomains.end()),
        pairs_(interface_pairs(subdomains)) {
    if (layout_.size() != subdomains_.size()) fail(ErrorCode::consistency, "one network per subdomain required");
    Eigen::Index offset = 0;
    for (const NetworkParams& p : layout_) {
      offsets_.push_back(offset);
      offset += static_cast<Eigen::Index>(p.parameter_count());
    }
    size_ = offset;
    full_units_ = make_units(nullptr);

    const std::size_t total = [&] {
      std::size_t n = 0;
      for (const SubdomainSpec& s : subdomains_) n += s.collocation.total();
      return n;
    }();
    if (config.batch_size > 0 && config.batch_size < total) {
      batch_fraction_ = static_cast<double>(config.batch_size) / static_cast<double>(total);
      std::uint64_t stream = 0;
      for (const SubdomainSpec& s : subdomains_) {
        const std::size_t sizes[3] = {s.collocation.interior.size(), s.collocation.boundary.size(),
                                      s.collocation.initial.size()};
        for (std::size_t n : sizes) cursors_.emplace_back(n, derive_seed(config.seed, 5000 + stream++));
      }
    }
  }

  Eigen::Index size() const { return size_; }

  Evaluation evaluate(const Eigen::VectorXd& x) override { return run(full_units_, x); }

  Evaluation evaluate_batch(const Eigen::VectorXd& x) override {
    if (cursors_.empty()) return evaluate(x);
    const std::vector<WorkUnit> units = make_units(&cursors_);
    return run(units, x);
  }

 private:
  std::vector<WorkUnit> make_units(std::vector<BatchCursor>* cursors) const {
    std::vector<WorkUnit> units;
    auto pick = [&](std::size_t cursor, std::size_t n) {
      if (cursors == nullptr || n == 0) return iota(n);
      const auto k = static_cast<std::size_t>(std::ceil(batch_fraction_ * static_cast<double>(n)));
      return (*cursors)[cursor].take(std::min(n, std::max<std::size_t>(k, 1)));
    };
    auto chunked = [&](UnitKind kind, std::size_t owner, const TargetBlock& all) {
      const Eigen::Index n = all.points.cols();
      if (n == 0) return;
      const double scale = 1.0 / static_cast<double>(n);
      for (Eigen::Index c0 = 0; c0 < n; c0 += kChunk) {
        const Eigen::Index len = std::min(kChunk, n - c0);
        WorkUnit u;
        u.kind = kind;
        u.first = owner;
        u.block = {all.points.middleCols(c0, len), all.values.middleCols(c0, len), all.mask.middleCols(c0, len)};
        u.scale = scale;
        units.push_back(std::move(u));
      }
    };
    for (std::size_t i = 0; i < subdomains_.size(); ++i) {
      const CollocationSet& set = subdomains_[i].collocation;
      const std::vector<std::size_t> interior = pick(3 * i, set.interior.size());
      TargetBlock block{Eigen::Matrix3Xd(3, static_cast<Eigen::Index>(interior.size())), {}, {}};
      for (std::size_t c = 0; c < interior.size(); ++c) {
        const SpaceTimePoint& p = set.interior[interior[c]];
        block.points.col(static_cast<Eigen::Index>(c)) << p.x, p.y, p.t;
      }
      block.values.setZero(3, block.points.cols());
      block.mask.setZero(3, block.points.cols());
      chunked(UnitKind::interior, i, block);
      chunked(UnitKind::targets, i, target_block(set.boundary, pick(3 * i + 1, set.boundary.size())));
      chunked(UnitKind::targets, i, target_block(set.initial, pick(3 * i + 2, set.initial.size())));
    }
    if (variant_ != Variant::wpinn) {
      for (const InterfacePair& pair : pairs_) {
        const Eigen::Matrix3Xd pts = to_matrix(pair.points);
        const Eigen::Index n = pts.cols();
        for (Eigen::Index c0 = 0; c0 < n; c0 += kChunk) {
          const Eigen::Index len = std::min(kChunk, n - c0);
          WorkUnit u;
          u.kind = UnitKind::interface;
          u.first = pair.a;
          u.second = pair.b;
          u.block.points = pts.middleCols(c0, len);
          u.normal = pair.normal;
          // Both sides see the same squared residuals, so the pair enters the
          // sum over subdomains twice.
          u.scale = 2.0 / static_cast<double>(n);
          units.push_back(std::move(u));
        }
      }
    }
    return units;
  }

  UnitResult evaluate_unit(const WorkUnit& unit, std::span<const NetworkParams> nets) const {
    ad::Tape tape;
    UnitResult r;
    Var loss;
    const NetworkVars first = register_parameters(tape, nets[unit.first], true);
    NetworkVars second;
    switch (unit.kind) {
      case UnitKind::interior: {
        const DerivativeChannels& channels = interior_channels(form_);
        const OutputJet jet = propagate_jet(tape, first, unit.block.points, channels);
        const auto res = governing_residuals(flow_jet_vars(jet, form_ == ResidualForm::direct), flow_, form_);
        const Var c = unit.scale * (ad::sum_squares(res.r_u) + ad::sum_squares(res.r_v) + ad::sum_squares(res.r_p) +
                                    ad::sum_squares(res.r_s11) + ad::sum_squares(res.r_s12) +
                                    ad::sum_squares(res.r_s22));
        r.g = c.value()(0, 0);
        loss = c;
        break;
      }
      case UnitKind::targets: {
        const OutputJet jet = propagate_jet(tape, first, unit.block.points, surface_channels());
        const SurfaceFields f = surface_fields(jet);
        const Var* pred[3] = {&f.u, &f.v, &f.p};
        Var c;
        for (int k = 0; k < 3; ++k) {
          if (unit.block.mask.row(k).isZero()) continue;
          const Var diff = (*pred[k] - tape.constant(unit.block.values.row(k))) * tape.constant(unit.block.mask.row(k));
          c = c.valid() ? c + ad::sum_squares(diff) : ad::sum_squares(diff);
        }
        if (!c.valid()) return r;
        c = unit.scale * c;
        r.bc_ic = c.value()(0, 0);
        loss = weights_.beta * c;
        break;
      }
      case UnitKind::interface: {
        second = register_parameters(tape, nets[unit.second], true);
        const SurfaceFields a = surface_fields(propagate_jet(tape, first, unit.block.points, surface_channels()));
        const SurfaceFields b = surface_fields(propagate_jet(tape, second, unit.block.points, surface_channels()));
        const Var c_if = unit.scale * (ad::sum_squares(0.5 * (a.u - b.u)) + ad::sum_squares(0.5 * (a.v - b.v)) +
                                       ad::sum_squares(0.5 * (a.p - b.p)));
        r.interface = c_if.value()(0, 0);
        loss = weights_.gamma * c_if;
        if (variant_ == Variant::wcpinn) {
          const double rho = flow_.density;
          const Var un_a = unit.normal.x * a.u + unit.normal.y * a.v;
          const Var un_b = unit.normal.x * b.u + unit.normal.y * b.v;
          const Var r_m = rho * (un_a - un_b);
          const Var r_mu = (rho * (un_a * un_a) + a.p) - (rho * (un_b * un_b) + b.p);
          const Var c_f = unit.scale * (ad::sum_squares(r_m) + ad::sum_squares(r_mu));
          r.flux = c_f.value()(0, 0);
          // With delta = 0 the flux is measured but left off the objective,
          // keeping the trajectory identical to WXPINN.
          if (weights_.delta != 0.0) loss = loss + weights_.delta * c_f;
        }
        break;
      }
    }
    if (!std::isfinite(loss.value()(0, 0))) {
      r.g = std::nan("");
      return r;
    }
    tape.backward(loss);
    r.grad_first = flat_gradient(tape, first, nets[unit.first]);
    if (unit.kind == UnitKind::interface) r.grad_second = flat_gradient(tape, second, nets[unit.second]);
    return r;
  }

  Evaluation run(const std::vector<WorkUnit>& units, const Eigen::VectorXd& x) const {
    const std::vector<NetworkParams> nets = split_parameters(x, layout_);
    std::vector<UnitResult> results(units.size());
    parallel_for(units.size(), threads_, [&](std::size_t i) { results[i] = evaluate_unit(units[i], nets); });

    double g = 0.0, bc = 0.0, inter = 0.0, flux = 0.0;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(size_);
    for (std::size_t i = 0; i < units.size(); ++i) {
      const UnitResult& r = results[i];
      g += r.g;
      bc += r.bc_ic;
      inter += r.interface;
      flux += r.flux;
      const WorkUnit& u = units[i];
      if (r.grad_first.size()) grad.segment(offsets_[u.first], r.grad_first.size()) += r.grad_first;
      if (r.grad_second.size()) grad.segment(offsets_[u.second], r.grad_second.size()) += r.grad_second;
    }
    Evaluation e;
    e.loss = LossBreakdown::from_components(g, bc, inter, variant_ == Variant::wcpinn ? flux : 0.0, weights_);
    e.gradient = std::move(grad);
    return e;
  }

  FlowConfig flow_;
  ResidualForm form_;
  Variant variant_;
  LossWeights weights_;
  std::vector<NetworkParams> layout_;
  std::size_t threads_;
  std::vector<SubdomainSpec> subdomains_;
  std::vector<InterfacePair> pairs_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index size_ = 0;
  std::vector<WorkUnit> full_units_;
  double batch_fraction_ = 1.0;
  std::vector<BatchCursor> cursors_;
};

Eigen::VectorXd concatenate(std::span<const NetworkParams> nets) {
  Eigen::Index n = 0;
  for (const NetworkParams& p : nets) n += static_cast<Eigen::Index>(p.parameter_count());
  Eigen::VectorXd flat(n);
  Eigen::Index pos = 0;
  for (const NetworkParams& p : nets) {
    const Eigen::VectorXd f = p.flatten();
    flat.segment(pos, f.size()) = f;
    pos += f.size();
  }
  return flat;
}

// Rows u, v, p, s11, s12, s22 of one network over a batch of points.
Eigen::MatrixXd network_fields(const NetworkParams& params, const Eigen::Matrix3Xd& pts) {
  Eigen::MatrixXd out(6, pts.cols());
  for (Eigen::Index c0 = 0; c0 < pts.cols(); c0 += kEvalChunk) {
    const Eigen::Index len = std::min(kEvalChunk, pts.cols() - c0);
    ad::Tape tape;
    const NetworkVars vars = register_parameters(tape, params, false);
    const OutputJet jet = propagate_jet(tape, vars, pts.middleCols(c0, len), surface_channels());
    const ad::Matrix& value = jet[""].value();
    out.block(0, c0, 1, len) = jet["y"].value().row(kPsi);
    out.block(1, c0, 1, len) = -jet["x"].value().row(kPsi);
    out.block(2, c0, 1, len) = value.row(kPressure);
    out.block(3, c0, 1, len) = value.row(kSigma11);
    out.block(4, c0, 1, len) = value.row(kSigma12);
    out.block(5, c0, 1, len) = value.row(kSigma22);
  }
  return out;
}

std::vector<Prediction> predictions(const NetworkParams& params, std::span<const SpaceTimePoint> pts) {
  const Eigen::MatrixXd f = network_fields(params, to_matrix(pts));
  std::vector<Prediction> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    out[i] = {f(0, c), f(1, c), f(2, c)};
  }
  return out;
}

void check_query(const Domain& domain, const SpaceTimePoint& q) {
  const double T = final_time(domain);
  if (!std::isfinite(q.x) || !std::isfinite(q.y) || !std::isfinite(q.t)) {
    fail(ErrorCode::out_of_domain, "non-finite query");
  }
  if (!contains(domain, q.x, q.y, 1e-9) || q.t < -1e-12 || q.t > T + 1e-12) {
    std::ostringstream msg;
    msg << "query (" << q.x << ", " << q.y << ", " << q.t << ") is outside the domain";
    fail(ErrorCode::out_of_domain, msg.str());
  }
}

std::string format_number(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

LossWeights ExperimentConfig::effective_weights() const {
  LossWeights w = weights;
  if (variant == Variant::wpinn) w.gamma = 0.0;
  if (variant != Variant::wcpinn) w.delta = 0.0;
  return w;
}

void ExperimentConfig::validate() const {
  pinnflow::validate(domain);
  flow.validate();
  require(subdomains >= 1, "decomposition.subdomains", "must be at least 1");
  require(positive(weights.beta), "training.beta", "must be positive");
  require(non_negative(weights.gamma), "decomposition.gamma", "must be non-negative");
  require(non_negative(weights.delta), "decomposition.delta", "must be non-negative");
  require(hidden_layers >= 1, "network.hidden_layers", "must be at least 1");
  require(width >= 1, "network.width", "must be at least 1");
  require(counts.total > counts.boundary + counts.inlet_outlet + counts.initial, "training.total_points",
          "must exceed wall + inlet_outlet + initial points");
  require(effective_subdomains() == 1 || interface_points >= 1, "decomposition.interface_points",
          "must be positive with more than one subdomain");
  require(positive(schedule.adam.learning_rate), "training.learning_rate", "must be positive");
  require(schedule.adam.beta1 >= 0.0 && schedule.adam.beta1 < 1.0, "training.adam_beta1", "must lie in [0, 1)");
  require(schedule.adam.beta2 >= 0.0 && schedule.adam.beta2 < 1.0, "training.adam_beta2", "must lie in [0, 1)");
  require(positive(schedule.adam.epsilon), "training.adam_epsilon", "must be positive");
  require(schedule.lbfgs_memory >= 1, "training.lbfgs_memory", "must be at least 1");
  require(non_negative(schedule.gradient_tolerance), "training.gradient_tolerance", "must be non-negative");
  require(non_negative(schedule.relative_loss_tolerance), "training.relative_loss_tolerance",
          "must be non-negative");
  require(schedule.plateau_window >= 1, "training.plateau_window", "must be at least 1");
  try {
    schedule.line_search.validate();
  } catch (const Error& e) {
    fail(ErrorCode::configuration, std::string("training.line_search: ") + e.what());
  }
  if (prediction.counts.total > 0) {
    const CollocationCounts& c = prediction.counts;
    require(c.total > c.boundary + c.inlet_outlet + c.initial, "output.prediction_total_points",
            "must exceed its wall + inlet_outlet + initial points");
  }
  const double T = final_time(domain);
  for (double t : prediction.snapshot_times) {
    require(std::isfinite(t) && t >= 0.0 && t <= T, "output.snapshot_times", "times must lie in [0, T]");
  }
}

// ---------------------------------------------------------------------------
// Training

CollocationSet build_collocation(const ExperimentConfig& config) {
  config.validate();
  return generate_collocation(config.domain, config.flow, config.counts, derive_seed(config.seed, 11));
}

CollocationSet build_prediction_set(const ExperimentConfig& config) {
  config.validate();
  const CollocationCounts& counts = config.prediction.counts.total > 0 ? config.prediction.counts : config.counts;
  return generate_collocation(config.domain, config.flow, counts, derive_seed(config.seed, 21));
}

std::vector<SubdomainSpec> build_subdomains(const ExperimentConfig& config) {
  const CollocationSet set = build_collocation(config);
  return partition_domain(config.domain, config.effective_subdomains(), set, config.interface_points,
                          derive_seed(config.seed, 12));
}

InputScaling input_scaling(const Domain& domain) {
  const double T = final_time(domain);
  if (const auto* rect = std::get_if<RectangleDomain>(&domain)) {
    return InputScaling::from_box({0.0, 0.0, 0.0}, {rect->length, rect->height, T});
  }
  const double r = std::get<SemiCircularDomain>(domain).max_outer_radius();
  return InputScaling::from_box({-r, 0.0, 0.0}, {r, r, T});
}

std::vector<NetworkParams> initial_networks(const ExperimentConfig& config) {
  const std::vector<int> arch = config.architecture();
  std::vector<NetworkParams> nets;
  for (std::size_t i = 0; i < config.effective_subdomains(); ++i) {
    nets.push_back(init_network(arch, derive_seed(config.seed, 100 + i)));
    nets.back().inputs = input_scaling(config.domain);
  }
  return nets;
}

std::vector<NetworkParams> split_parameters(const Eigen::VectorXd& flat, std::span<const NetworkParams> layout) {
  std::vector<NetworkParams> nets(layout.begin(), layout.end());
  Eigen::Index pos = 0;
  for (NetworkParams& p : nets) {
    const auto n = static_cast<Eigen::Index>(p.parameter_count());
    if (pos + n > flat.size()) throw std::invalid_argument("split_parameters: vector too short");
    p.assign_flat(std::span<const double>(flat.data() + pos, static_cast<std::size_t>(n)));
    pos += n;
  }
  if (pos != flat.size()) throw std::invalid_argument("split_parameters: vector too long");
  return nets;
}

LossBreakdown evaluate_loss(const ExperimentConfig& config, std::span<const SubdomainSpec> subdomains,
                            std::span<const NetworkParams> networks, std::size_t threads) {
  std::vector<NetworkParams> layout(networks.begin(), networks.end());
  JointObjective objective(config, subdomains, layout, threads);
  return objective.evaluate(concatenate(networks)).loss;
}

Evaluation evaluate_objective(const ExperimentConfig& config, std::span<const SubdomainSpec> subdomains,
                              std::span<const NetworkParams> networks, std::size_t threads) {
  std::vector<NetworkParams> layout(networks.begin(), networks.end());
  JointObjective objective(config, subdomains, layout, threads);
  return objective.evaluate(concatenate(networks));
}

Eigen::VectorXd concatenate_parameters(std::span<const NetworkParams> networks) { return concatenate(networks); }

TrainedModel train(const ExperimentConfig& config, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();

  TrainedModel model;
  model.config = config;
  model.subdomains = build_subdomains(config);
  std::vector<NetworkParams> nets = initial_networks(config);

  JointObjective objective(config, model.subdomains, nets, options.threads);
  const Eigen::VectorXd x0 = concatenate(nets);
  const Evaluation initial = objective.evaluate(x0);
  if (!std::isfinite(initial.loss.total) || !initial.gradient.allFinite()) {
    throw DivergenceError("non-finite loss at initialization", x0, {});
  }
  model.initial_loss = initial.loss;
  model.initial_interface_jump = interface_rms_jump(exchange_interface_predictions(model.subdomains, nets));

  TrainingSchedule schedule = config.schedule;
  schedule.adam_batches = config.batch_size > 0;
  TrainingResult result = train_phase(objective, x0, schedule, options.observer);

  model.networks = split_parameters(result.params, nets);
  model.final_loss = objective.evaluate(result.params).loss;
  model.final_interface_jump = interface_rms_jump(exchange_interface_predictions(model.subdomains, model.networks));
  model.adam_iterations = result.adam_iterations;
  model.lbfgs_iterations = result.lbfgs_iterations;
  model.termination = result.termination;
  model.history = std::move(result.history);
  model.min_stored_curvature = result.min_stored_curvature;
  model.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

TrainedModel model_from_networks(const ExperimentConfig& config, std::vector<NetworkParams> networks) {
  config.validate();
  const std::size_t m = config.effective_subdomains();
  if (networks.size() != m) {
    fail(ErrorCode::checkpoint_incompatible,
         "expected " + std::to_string(m) + " networks, got " + std::to_string(networks.size()));
  }
  const std::vector<int> arch = config.architecture();
  for (std::size_t i = 0; i < networks.size(); ++i) {
    if (networks[i].layer_sizes != arch) {
      fail(ErrorCode::checkpoint_incompatible, "network " + std::to_string(i) + " does not match the configured architecture");
    }
    networks[i].validate();
  }
  TrainedModel model;
  model.config = config;
  model.networks = std::move(networks);
  return model;
}

// ---------------------------------------------------------------------------
// Interfaces and global assembly

std::vector<InterfaceExchange> exchange_interface_predictions(std::span<const SubdomainSpec> subdomains,
                                                              std::span<const NetworkParams> snapshot) {
  if (snapshot.size() != subdomains.size()) fail(ErrorCode::consistency, "one network per subdomain required");
  std::vector<InterfaceExchange> out;
  for (const InterfacePair& pair : interface_pairs(subdomains)) {
    InterfaceExchange ex;
    ex.a = pair.a;
    ex.b = pair.b;
    ex.points = pair.points;
    ex.normal = pair.normal;
    ex.side_a = predictions(snapshot[pair.a], pair.points);
    ex.side_b = predictions(snapshot[pair.b], pair.points);
    out.push_back(std::move(ex));
  }
  return out;
}

double interface_rms_jump(std::span<const InterfaceExchange> exchange) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const InterfaceExchange& ex : exchange) {
    for (std::size_t i = 0; i < ex.points.size(); ++i) {
      const Prediction& a = ex.side_a[i];
      const Prediction& b = ex.side_b[i];
      sum += (a.u - b.u) * (a.u - b.u) + (a.v - b.v) * (a.v - b.v) + (a.p - b.p) * (a.p - b.p);
      n += 3;
    }
  }
  return n ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
}

std::vector<FieldValue> assemble_global_solution(const TrainedModel& model, std::span<const SpaceTimePoint> queries) {
  const Domain& domain = model.config.domain;
  const std::size_t m = model.networks.size();
  if (m == 0) fail(ErrorCode::consistency, "model has no networks");

  // Each query is evaluated by one network, or by two with weight 1/2 each.
  std::vector<std::vector<std::size_t>> members(m);
  std::vector<double> weight(queries.size(), 1.0);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const SpaceTimePoint& q = queries[i];
    check_query(domain, q);
    const std::size_t k = locate_slab(domain, m, q.x, q.y);
    members[k].push_back(i);
    if (k > 0 && distance_to_cut(domain, m, k, q.x, q.y) <= kCutTolerance) {
      members[k - 1].push_back(i);
      weight[i] = 0.5;
    } else if (k + 1 < m && distance_to_cut(domain, m, k + 1, q.x, q.y) <= kCutTolerance) {
      members[k + 1].push_back(i);
      weight[i] = 0.5;
    }
  }

  std::vector<FieldValue> out(queries.size());
  for (std::size_t k = 0; k < m; ++k) {
    if (members[k].empty()) continue;
    std::vector<SpaceTimePoint> pts;
    pts.reserve(members[k].size());
    for (std::size_t i : members[k]) pts.push_back(queries[i]);
    const Eigen::MatrixXd f = network_fields(model.networks[k], to_matrix(pts));
    for (std::size_t j = 0; j < members[k].size(); ++j) {
      const std::size_t i = members[k][j];
      const auto c = static_cast<Eigen::Index>(j);
      const double w = weight[i];
      FieldValue& v = out[i];
      v.u += w * f(0, c);
      v.v += w * f(1, c);
      v.p += w * f(2, c);
      v.s11 += w * f(3, c);
      v.s12 += w * f(4, c);
      v.s22 += w * f(5, c);
    }
  }
  return out;
}

FieldValue assemble_global_solution(const TrainedModel& model, const SpaceTimePoint& query) {
  return assemble_global_solution(model, std::span<const SpaceTimePoint>(&query, 1)).front();
}

std::vector<GoverningResiduals> residual_fields(const TrainedModel& model, std::span<const SpaceTimePoint> points) {
  const Domain& domain = model.config.domain;
  const std::size_t m = model.networks.size();
  const ResidualForm form = model.config.residual_form;
  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t i = 0; i < points.size(); ++i) {
    check_query(domain, points[i]);
    members[locate_slab(domain, m, points[i].x, points[i].y)].push_back(i);
  }
  std::vector<GoverningResiduals> out(points.size());
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t c0 = 0; c0 < members[k].size(); c0 += static_cast<std::size_t>(kEvalChunk)) {
      const std::size_t len = std::min<std::size_t>(kEvalChunk, members[k].size() - c0);
      std::vector<SpaceTimePoint> pts;
      for (std::size_t j = 0; j < len; ++j) pts.push_back(points[members[k][c0 + j]]);
      ad::Tape tape;
      const NetworkVars vars = register_parameters(tape, model.networks[k], false);
      const OutputJet jet = propagate_jet(tape, vars, to_matrix(pts), interior_channels(form));
      const auto r = governing_residuals(flow_jet_vars(jet, form == ResidualForm::direct), model.config.flow, form);
      for (std::size_t j = 0; j < len; ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        out[members[k][c0 + j]] = {r.r_u.value()(0, c),   r.r_v.value()(0, c),   r.r_p.value()(0, c),
                                   r.r_s11.value()(0, c), r.r_s12.value()(0, c), r.r_s22.value()(0, c)};
      }
    }
  }
  return out;
}

std::vector<double> default_snapshot_times(const Domain& domain) {
  const double T = final_time(domain);
  const double dt = time_step(domain);
  const auto steps = static_cast<long long>(std::floor(T / dt + 1e-9));
  auto at = [&](long long k) { return k == steps && std::abs(static_cast<double>(k) * dt - T) < 1e-9 * T ? T : static_cast<double>(k) * dt; };
  std::vector<double> times;
  if (steps + 1 <= 6) {
    for (long long k = 0; k <= steps; ++k) times.push_back(at(k));
  } else {
    for (int j = 0; j < 6; ++j) times.push_back(at(std::llround(static_cast<double>(j * steps) / 5.0)));
  }
  return times;
}

std::vector<Vec2> prediction_grid(const CollocationSet& set) {
  std::vector<Vec2> grid;
  grid.reserve(set.total());
  for (const SpaceTimePoint& p : set.interior) grid.push_back({p.x, p.y});
  for (const TargetPoint& p : set.boundary) grid.push_back({p.at.x, p.at.y});
  for (const TargetPoint& p : set.initial) grid.push_back({p.at.x, p.at.y});
  return grid;
}

std::vector<FieldSnapshot> predict_fields(const TrainedModel& model, std::span<const Vec2> grid,
                                          std::span<const double> times) {
  const double T = final_time(model.config.domain);
  for (double t : times) {
    if (!(t >= 0.0 && t <= T)) {
      fail(ErrorCode::out_of_domain, "snapshot time " + format_number(t, "%g") + " is outside [0, " +
                                         format_number(T, "%g") + "]");
    }
  }
  std::vector<FieldSnapshot> out;
  for (double t : times) {
    std::vector<SpaceTimePoint> queries;
    queries.reserve(grid.size());
    for (const Vec2& g : grid) queries.push_back({g.x, g.y, t});
    const std::vector<FieldValue> values = assemble_global_solution(model, queries);
    FieldSnapshot snap{t, {}};
    snap.rows.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      snap.rows.push_back({grid[i].x, grid[i].y, t, values[i].u, values[i].v, values[i].p});
    }
    out.push_back(std::move(snap));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "M" || name == "subdomains") return SweepAxis::subdomains;
  if (name == "beta") return SweepAxis::beta;
  if (name == "gamma") return SweepAxis::gamma;
  if (name == "delta") return SweepAxis::delta;
  fail(ErrorCode::configuration, "unknown sweep axis '" + std::string(name) + "' (expected M, beta, gamma or delta)");
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::subdomains: return "M";
    case SweepAxis::beta: return "beta";
    case SweepAxis::gamma: return "gamma";
    case SweepAxis::delta: return "delta";
  }
  return "?";
}

ExperimentConfig with_axis_value(ExperimentConfig config, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::subdomains:
      if (!(value >= 1.0) || value != std::floor(value) || value > 1e6) {
        fail(ErrorCode::configuration, "M values must be positive integers");
      }
      config.subdomains = static_cast<std::size_t>(value);
      break;
    case SweepAxis::beta: config.weights.beta = value; break;
    case SweepAxis::gamma: config.weights.gamma = value; break;
    case SweepAxis::delta: config.weights.delta = value; break;
  }
  return config;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, std::span<const SweepDimension> dimensions,
                                const RunOptions& options, const SweepCallback& callback) {
  if (dimensions.empty()) fail(ErrorCode::configuration, "sweep needs at least one axis");
  std::vector<ExperimentConfig> configs{base};
  for (const SweepDimension& dim : dimensions) {
    if (dim.values.empty()) fail(ErrorCode::configuration, "sweep axis " + std::string(to_string(dim.axis)) + " has no values");
    std::vector<ExperimentConfig> next;
    for (const ExperimentConfig& c : configs) {
      for (double v : dim.values) next.push_back(with_axis_value(c, dim.axis, v));
    }
    configs = std::move(next);
  }

  std::vector<SweepRow> rows;
  for (std::size_t r = 0; r < configs.size(); ++r) {
    const ExperimentConfig& cfg = configs[r];
    SweepRow row;
    row.subdomains = cfg.effective_subdomains();
    row.beta = cfg.weights.beta;
    row.gamma = cfg.weights.gamma;
    row.delta = cfg.weights.delta;
    try {
      const TrainedModel model = train(cfg, options);
      row.final_loss = model.final_loss.total;
      row.seconds = model.seconds;
      row.iterations = model.iterations();
      if (!std::isfinite(row.final_loss)) row.status = std::string(to_string(ErrorCode::divergence));
      if (callback) callback(r, cfg, &model, nullptr);
    } catch (const Error& e) {
      row.final_loss = std::nan("");
      row.status = std::string(to_string(e.code()));
      const std::string message = e.what();
      if (callback) callback(r, cfg, nullptr, &message);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "M,beta,gamma,delta,final_loss,comp_time_s,iterations,status\n";
  for (const SweepRow& r : rows) {
    out << r.subdomains << ',' << format_number(r.beta, "%.17g") << ',' << format_number(r.gamma, "%.17g") << ','
        << format_number(r.delta, "%.17g") << ',' << (r.ok() ? format_number(r.final_loss, "%.17g") : "") << ','
        << format_number(r.seconds, "%.3f") << ',' << r.iterations << ',' << r.status << '\n';
  }
}

namespace {

std::string loss_cell(const SweepRow& r) {
  if (!r.ok()) return "failed (" + r.status + ")";
  // Seven decimals unless that would round to zero.
  return std::abs(r.final_loss) >= 5e-8 || r.final_loss == 0.0 ? format_number(r.final_loss, "%.7f")
                                                               : format_number(r.final_loss, "%.3e");
}

std::string time_cell(const SweepRow& r) { return r.ok() ? format_number(r.seconds, "%.2f") : "-"; }
std::string iter_cell(const SweepRow& r) { return r.ok() ? std::to_string(r.iterations) : "-"; }
std::string value_cell(double v) { return format_number(v, "%g"); }

// Renders rows of cells with right-aligned columns; "rule" rows become a
// horizontal line.
struct TextTable {
  std::vector<std::vector<std::string>> rows;
  std::vector<bool> rule;

  void add(std::vector<std::string> cells) {
    rows.push_back(std::move(cells));
    rule.push_back(false);
  }
  void add_rule() {
    rows.emplace_back();
    rule.push_back(true);
  }

  std::string render(std::vector<std::size_t> widths) const {
    for (const auto& cells : rows) {
      if (widths.size() < cells.size()) widths.resize(cells.size(), 0);
      for (std::size_t c = 0; c < cells.size(); ++c) widths[c] = std::max(widths[c], cells[c].size());
    }
    std::size_t total = 0;
    for (std::size_t w : widths) total += w + 2;
    std::string out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rule[r]) {
        out += std::string(total > 2 ? total - 2 : 0, '-') + "\n";
        continue;
      }
      std::string line;
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        if (c) line += "  ";
        line += std::string(widths[c] - rows[r][c].size(), ' ') + rows[r][c];
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + "\n";
    }
    return out;
  }
};

}  // namespace

std::string format_sweep_table(std::span<const SweepRow> rows, std::span<const SweepDimension> dimensions) {
  auto swept = [&](SweepAxis a) {
    return std::any_of(dimensions.begin(), dimensions.end(), [&](const SweepDimension& d) { return d.axis == a; });
  };
  const bool by_m = swept(SweepAxis::subdomains);
  TextTable table;

  if (swept(SweepAxis::gamma) && swept(SweepAxis::delta)) {
    // Metrics pivoted into one column per gamma value.
    std::vector<double> gammas;
    for (const SweepRow& r : rows) {
      if (std::find(gammas.begin(), gammas.end(), r.gamma) == gammas.end()) gammas.push_back(r.gamma);
    }
    const bool by_beta = swept(SweepAxis::beta);
    struct Key {
      std::size_t m;
      double beta, delta;
      bool operator<(const Key& o) const { return std::tie(m, beta, delta) < std::tie(o.m, o.beta, o.delta); }
    };
    std::vector<Key> order;
    std::map<Key, std::map<double, const SweepRow*>> cells;
    for (const SweepRow& r : rows) {
      const Key k{r.subdomains, r.beta, r.delta};
      if (!cells.count(k)) order.push_back(k);
      cells[k][r.gamma] = &r;
    }
    std::vector<std::string> keys;
    if (by_m) keys.push_back("M");
    keys.push_back("delta");
    if (by_beta) keys.push_back("beta");
    const std::size_t g = gammas.size();

    std::vector<std::string> head(keys.size(), "");
    std::vector<std::string> sub = keys;
    for (const char* metric : {"Final Loss", "Comp. Time (s)", "# Iter. (Total)"}) {
      for (std::size_t j = 0; j < g; ++j) {
        head.push_back(j == 0 ? metric : "");
        sub.push_back("gamma=" + value_cell(gammas[j]));
      }
    }
    // Column widths must leave room for each spanning metric title.
    TextTable probe;
    probe.add(sub);
    std::vector<std::vector<std::string>> body;
    std::size_t prev_m = order.empty() ? 0 : order.front().m;
    std::vector<bool> rule_before;
    for (const Key& k : order) {
      std::vector<std::string> line;
      if (by_m) line.push_back(std::to_string(k.m));
      line.push_back(value_cell(k.delta));
      if (by_beta) line.push_back(value_cell(k.beta));
      for (int metric = 0; metric < 3; ++metric) {
        for (double gv : gammas) {
          auto it = cells[k].find(gv);
          if (it == cells[k].end()) {
            line.push_back("-");
            continue;
          }
          const SweepRow& r = *it->second;
          line.push_back(metric == 0 ? loss_cell(r) : metric == 1 ? time_cell(r) : iter_cell(r));
        }
      }
      rule_before.push_back(by_m && k.m != prev_m);
      prev_m = k.m;
      probe.add(line);
      body.push_back(std::move(line));
    }
    std::vector<std::size_t> widths(sub.size(), 0);
    for (const auto& cells_row : probe.rows) {
      for (std::size_t c = 0; c < cells_row.size(); ++c) widths[c] = std::max(widths[c], cells_row[c].size());
    }
    for (std::size_t b = 0; b < 3; ++b) {
      const std::size_t first = keys.size() + b * g;
      std::size_t span = 2 * (g - 1);
      for (std::size_t j = 0; j < g; ++j) span += widths[first + j];
      const std::size_t need = head[first].size();
      if (need > span) widths[first + g - 1] += need - span;
    }
    // The spanning title is left-aligned over its block.
    std::string title;
    for (std::size_t c = 0; c < keys.size(); ++c) title += std::string(widths[c], ' ') + "  ";
    for (std::size_t b = 0; b < 3; ++b) {
      const std::size_t first = keys.size() + b * g;
      std::size_t span = 2 * (g - 1);
      for (std::size_t j = 0; j < g; ++j) span += widths[first + j];
      title += head[first] + std::string(span - head[first].size(), ' ');
      if (b < 2) title += "  ";
    }
    while (!title.empty() && title.back() == ' ') title.pop_back();
    table.add(sub);
    table.add_rule();
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (rule_before[i]) table.add_rule();
      table.add(body[i]);
    }
    return title + "\n" + table.render(widths);
  }

  std::vector<std::string> header;
  if (by_m) header.push_back("M");
  header.push_back("beta");
  if (swept(SweepAxis::gamma)) header.push_back("gamma");
  if (swept(SweepAxis::delta)) header.push_back("delta");
  for (const char* metric : {"Final Loss", "Comp. Time (s)", "# Iter. (Total)"}) header.push_back(metric);
  table.add(header);
  table.add_rule();
  std::size_t prev_m = rows.empty() ? 0 : rows.front().subdomains;
  for (const SweepRow& r : rows) {
    if (by_m && r.subdomains != prev_m) table.add_rule();
    prev_m = r.subdomains;
    std::vector<std::string> line;
    if (by_m) line.push_back(std::to_string(r.subdomains));
    line.push_back(value_cell(r.beta));
    if (swept(SweepAxis::gamma)) line.push_back(value_cell(r.gamma));
    if (swept(SweepAxis::delta)) line.push_back(value_cell(r.delta));
    line.push_back(loss_cell(r));
    line.push_back(time_cell(r));
    line.push_back(iter_cell(r));
    table.add(std::move(line));
  }
  return table.render({});
}

}  // namespace pinnflow
