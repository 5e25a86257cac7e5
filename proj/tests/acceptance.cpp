// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "cli.hpp"
#include "oracles.hpp"
#include "pinnflow/config.hpp"
#include "pinnflow/error.hpp"
#include "pinnflow/output.hpp"
#include "pinnflow/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace pinnflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pinnflow_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

// --------------------------------------------------------------------------
// 1. Input derivatives against central differences of a long double
//    re-evaluation.

Outcome derivative_oracle() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const oracle::Real h = 1e-4L;
  double worst = 0.0;
  std::size_t checked = 0;
  for (int n = 0; n < 50; ++n) {
    const NetworkParams net = oracle::random_network(rng, 3, 16, false);
    for (int k = 0; k < 20; ++k) {
      const Input in{u(rng), u(rng), u(rng)};
      const oracle::Point p{in[0], in[1], in[2]};
      const PointEvaluation e = evaluate_with_derivatives(net, in, 2);
      auto check = [&](double got, oracle::Real want) {
        ++checked;
        const double err = static_cast<double>(std::fabs(got - want));
        const double allowed = std::max(1e-5 * static_cast<double>(std::fabs(want)), 1e-8);
        worst = std::max(worst, err / allowed);
        o.require(err <= allowed, "network " + std::to_string(n) + " derivative off by " + fmt(err));
      };
      for (int a = 0; a < 3; ++a) {
        const oracle::Outputs d1 = oracle::first(net, p, a, h);
        for (int out = 0; out < kOutputDim; ++out) check(e.first[out][a], d1[out]);
        for (int b = a; b < 3; ++b) {
          const oracle::Outputs d2 = oracle::second(net, p, a, b, h);
          for (int out = 0; out < kOutputDim; ++out) check(e.second[out][a][b], d2[out]);
        }
      }
    }
  }
  if (o.pass) o.detail = std::to_string(checked) + " entries, worst error " + fmt(worst) + " of allowed";
  return o;
}

// --------------------------------------------------------------------------
// 2. Parameter gradient of the full single-network loss.

Outcome parameter_gradient() {
  Outcome o;
  ExperimentConfig c = preset_config("rectangle-scaled");
  c.variant = Variant::wpinn;
  c.hidden_layers = 2;
  c.width = 8;
  c.counts = {18, 2, 2, 4};  // 10 interior, 4 boundary, 4 initial
  c.seed = 5;
  c.validate();
  const auto specs = build_subdomains(c);
  o.require(specs[0].collocation.interior.size() == 10 && specs[0].collocation.boundary.size() == 4 &&
                specs[0].collocation.initial.size() == 4,
            "unexpected point counts");
  auto nets = initial_networks(c);
  o.require(nets[0].layer_sizes == std::vector<int>{3, 8, 8, 5}, "unexpected architecture");
  // Move off the zero-bias initialization so every parameter matters.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (auto& b : nets[0].biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = jitter(rng);
  }
  const Evaluation e = evaluate_objective(c, specs, nets);
  const Eigen::VectorXd x = concatenate_parameters(nets);
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (evaluate_loss(c, specs, split_parameters(xp, nets)).total -
                       evaluate_loss(c, specs, split_parameters(xm, nets)).total) /
                      (2 * h);
    const double err = std::abs(e.gradient(i) - fd);
    const double allowed = std::max(1e-4 * std::abs(fd), 1e-8);
    worst = std::max(worst, err / allowed);
    o.require(err <= allowed, "parameter " + std::to_string(i) + ": " + fmt(e.gradient(i)) + " vs " + fmt(fd));
  }
  if (o.pass) o.detail = std::to_string(x.size()) + " parameters, worst error " + fmt(worst) + " of allowed";
  return o;
}

// --------------------------------------------------------------------------
// 3. Poiseuille fields give vanishing residuals.

PointEvaluation poiseuille(double x, double y, double H, double mu, double C) {
  PointEvaluation e;
  e.order = 3;
  e.third = ThirdDerivs{};
  // psi = H y^2 / 2 - y^3 / 3, so u = psi_y = y (H - y)
  e.outputs[kPsi] = H * y * y / 2 - y * y * y / 3;
  e.first[kPsi][kY] = H * y - y * y;
  e.second[kPsi][kY][kY] = H - 2 * y;
  (*e.third)[kPsi][kY][kY][kY] = -2.0;
  const double p = -2.0 * mu * x + C;
  auto set = [&](int slot, double v, double dx, double dy) {
    e.outputs[slot] = v;
    e.first[slot][kX] = dx;
    e.first[slot][kY] = dy;
  };
  set(kPressure, p, -2.0 * mu, 0.0);
  set(kSigma11, -p, 2.0 * mu, 0.0);
  set(kSigma12, mu * (H - 2 * y), 0.0, -2.0 * mu);
  set(kSigma22, -p, 2.0 * mu, 0.0);
  return e;
}

Outcome manufactured_solution() {
  Outcome o;
  const ExperimentConfig c = preset_config("rectangle-scaled");
  const auto& rect = std::get<RectangleDomain>(c.domain);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(0.0, rect.length), uy(0.0, rect.height), ut(0.0, rect.final_time);
  double worst = 0.0;
  for (ResidualForm form : {ResidualForm::sigma_divergence, ResidualForm::direct}) {
    for (int i = 0; i < 100; ++i) {
      PointEvaluation e = poiseuille(ux(rng), uy(rng), rect.height, c.flow.viscosity, 0.7);
      e.input = {0.0, 0.0, ut(rng)};
      const GoverningResiduals r = governing_residuals(e, c.flow, form);
      for (double v : {r.r_u, r.r_v, r.r_p, r.r_s11, r.r_s12, r.r_s22}) {
        worst = std::max(worst, std::abs(v));
        o.require(std::abs(v) < 1e-8, std::string(to_string(form)) + " residual " + fmt(v));
      }
    }
  }
  if (o.pass) o.detail = "200 evaluations, max |R| = " + fmt(worst);
  return o;
}

// --------------------------------------------------------------------------
// 4-6. Scaled training.

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

ExperimentConfig scaled(Variant v, std::uint64_t seed) {
  ExperimentConfig c = preset_config("rectangle-scaled");
  c.variant = v;
  c.subdomains = v == Variant::wpinn ? 1 : 2;
  c.seed = seed;
  return c;
}

Outcome scaled_training() {
  Outcome o;
  std::string summary;
  double longest = 0.0;
  for (Variant v : {Variant::wpinn, Variant::wxpinn, Variant::wcpinn}) {
    double worst = 0.0;
    for (std::uint64_t seed : kSeeds) {
      const TrainedModel m = train(scaled(v, seed));
      const double ratio = m.final_loss.total / m.initial_loss.total;
      worst = std::max(worst, ratio);
      longest = std::max(longest, m.seconds);
      o.require(ratio <= 1e-2, std::string(to_string(v)) + " seed " + std::to_string(seed) + " ratio " + fmt(ratio));
      o.require(m.seconds < 900.0, std::string(to_string(v)) + " run took " + fmt(m.seconds) + " s");
    }
    summary += std::string(to_string(v)) + " worst ratio " + fmt(worst) + "; ";
  }
  if (o.pass) o.detail = summary + "longest run " + fmt(longest) + " s";
  return o;
}

Outcome interface_healing() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t seed : kSeeds) {
    ExperimentConfig c = scaled(Variant::wxpinn, seed);
    c.weights.gamma = 5.0;
    const TrainedModel m = train(c);
    const double ratio = m.final_interface_jump / m.initial_interface_jump;
    worst = std::max(worst, ratio);
    o.require(ratio <= 0.1, "seed " + std::to_string(seed) + " jump ratio " + fmt(ratio));
  }
  if (o.pass) o.detail = "worst jump ratio " + fmt(worst);
  return o;
}

Outcome flux_term() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t seed : kSeeds) {
    ExperimentConfig c = scaled(Variant::wcpinn, seed);
    c.weights.delta = 5.0;
    const TrainedModel m = train(c);
    const double ratio = m.final_loss.loss_flux / m.initial_loss.loss_flux;
    worst = std::max(worst, ratio);
    o.require(ratio <= 0.1, "seed " + std::to_string(seed) + " flux ratio " + fmt(ratio));
  }

  // delta = 0 in the conservative variant against the plain decomposed one.
  ExperimentConfig cons = scaled(Variant::wcpinn, 7);
  cons.weights.delta = 0.0;
  const ExperimentConfig plain = scaled(Variant::wxpinn, 7);
  const TrainedModel a = train(cons), b = train(plain);
  bool identical = a.history.size() == b.history.size();
  for (std::size_t i = 0; identical && i < a.history.size(); ++i) {
    identical = a.history[i].loss.total == b.history[i].loss.total && a.history[i].phase == b.history[i].phase;
  }
  for (std::size_t i = 0; identical && i < a.networks.size(); ++i) identical = a.networks[i] == b.networks[i];
  o.require(identical, "delta = 0 trajectory differs from the plain decomposition");
  if (o.pass) {
    o.detail = "worst flux ratio " + fmt(worst) + "; delta = 0 matches over " + std::to_string(a.history.size()) +
               " iterations";
  }
  return o;
}

// --------------------------------------------------------------------------
// 7. L-BFGS with the Hager-Zhang search on a quadratic.

Outcome optimizer_suite() {
  Outcome o;
  FunctionObjective obj([](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::Vector2d(x(0), 10.0 * x(1));
    return 0.5 * (x(0) * x(0) + 10.0 * x(1) * x(1));
  });
  TrainingSchedule s;
  s.adam_iterations = 0;
  s.lbfgs_max_iterations = 10;
  s.gradient_tolerance = 0.0;
  s.relative_loss_tolerance = 0.0;
  const TrainingResult r = train_phase(obj, Eigen::Vector2d(1.0, 1.0), s);
  o.require(r.params.norm() < 1e-10, "final |x| = " + fmt(r.params.norm()));
  o.require(r.lbfgs_iterations <= 10, "too many iterations");
  for (const LbfgsStep& step : r.lbfgs_steps) {
    o.require(wolfe_conditions(step.at_zero, step.search.accepted, s.line_search) ||
                  approximate_wolfe_conditions(step.at_zero, step.search.accepted, s.line_search),
              "accepted step fails the Wolfe tests");
  }
  o.require(r.rejected_pairs == 0 && r.min_stored_curvature > 0.0, "a stored pair has s'y <= 0");
  if (o.pass) {
    o.detail = "|x| = " + fmt(r.params.norm()) + " after " + std::to_string(r.lbfgs_iterations) +
               " iterations, min s'y = " + fmt(r.min_stored_curvature);
  }
  return o;
}

// --------------------------------------------------------------------------
// 8. Sampling and partition invariants.

bool stratified(const Eigen::MatrixXd& pts, std::span<const Interval> box) {
  const auto n = static_cast<std::size_t>(pts.cols());
  for (Eigen::Index d = 0; d < pts.rows(); ++d) {
    std::vector<bool> seen(n, false);
    const Interval& b = box[static_cast<std::size_t>(d)];
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      const double u = (pts(d, i) - b.lo) / (b.hi - b.lo);
      const auto k = static_cast<std::size_t>(std::floor(u * static_cast<double>(n)));
      if (!(u >= 0.0 && u < 1.0) || seen[k]) return false;
      seen[k] = true;
    }
  }
  return true;
}

Outcome sampling() {
  Outcome o;
  const std::array<Interval, 3> box{{{0.0, 1.1}, {0.0, 0.41}, {0.0, 0.5}}};
  for (std::size_t n : {1u, 4u, 100u, 3321u}) {
    o.require(stratified(sample_lhs(n, box, 100 + n), box), "LHS strata broken for n = " + std::to_string(n));
  }
  SemiCircularDomain semi;
  semi.stenosis_amplitude = 0.8;
  const std::vector<Domain> domains{RectangleDomain{}, semi};
  for (const Domain& d : domains) {
    const CollocationSet set = generate_collocation(d, FlowConfig{}, CollocationCounts{600, 80, 30, 60}, 4);
    for (std::size_t m = 1; m <= 4; ++m) {
      const std::string where = (d.index() == 0 ? "rectangle" : "half annulus") + std::string(" M = ") +
                                std::to_string(m);
      const auto specs = partition_domain(d, m, set, 40, 4);
      std::size_t interior = 0, boundary = 0, initial = 0;
      for (const SubdomainSpec& s : specs) {
        interior += s.collocation.interior.size();
        boundary += s.collocation.boundary.size();
        initial += s.collocation.initial.size();
        for (const SpaceTimePoint& p : s.collocation.interior) {
          o.require(locate_slab(d, m, p.x, p.y) == s.index, where + ": point in the wrong slab");
        }
        for (const InterfaceLink& link : s.interfaces) {
          const InterfaceLink* back = specs[link.neighbor].link_to(s.index);
          o.require(back != nullptr && back->points == link.points, where + ": interface lists differ");
          o.require(back != nullptr && link.normal.x + back->normal.x == 0.0 && link.normal.y + back->normal.y == 0.0,
                    where + ": normals not opposite");
          o.require(std::abs(std::hypot(link.normal.x, link.normal.y) - 1.0) < 1e-12, where + ": normal not unit");
        }
      }
      o.require(interior == set.interior.size() && boundary == set.boundary.size() && initial == set.initial.size(),
                where + ": coverage broken");
      o.require(specs.front().region.lo == 0.0 && std::abs(specs.back().region.hi - split_extent(d)) < 1e-12,
                where + ": regions do not span the domain");
      for (std::size_t k = 1; k < m; ++k) {
        o.require(specs[k].region.lo == specs[k - 1].region.hi, where + ": regions overlap or leave a gap");
      }
    }
  }
  if (o.pass) o.detail = "LHS n = 1, 4, 100, 3321; partitions M = 1..4 on both domains";
  return o;
}

// --------------------------------------------------------------------------
// 9. Inlet and initial condition agree at t = 0.

Outcome inlet_consistency() {
  Outcome o;
  const ExperimentConfig rc = preset_config("rectangle-scaled");
  const auto& rect = std::get<RectangleDomain>(rc.domain);
  const ExperimentConfig sc = preset_config("semicircle-scaled");
  const auto& semi = std::get<SemiCircularDomain>(sc.domain);
  double worst = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const Velocity a = rectangle_inlet_velocity(rect.height * k / 100.0, 0.0, rect, rc.flow);
    const Velocity b = semicircle_inlet_velocity(semi.inlet_width() * k / 100.0, 0.0, semi, sc.flow);
    worst = std::max({worst, std::hypot(a.u, a.v), std::hypot(b.u, b.v)});
  }
  o.require(worst <= 1e-15, "inlet speed at t = 0 reaches " + fmt(worst));

  // The initial targets at inlet positions are the inlet velocity at t = 0.
  for (const ExperimentConfig* c : {&rc, &sc}) {
    const CollocationSet set = build_collocation(*c);
    for (const TargetPoint& p : set.boundary) {
      if (p.kind != PointKind::inlet) continue;
      const double s = c == &rc ? p.at.y : -p.at.x - std::get<SemiCircularDomain>(c->domain).inner_radius();
      const Velocity at0 = c == &rc ? rectangle_inlet_velocity(s, 0.0, rect, c->flow)
                                    : semicircle_inlet_velocity(s, 0.0, semi, c->flow);
      for (const TargetPoint& q : set.initial) {
        o.require(std::abs(*q.u - at0.u) <= 1e-15 && std::abs(*q.v - at0.v) <= 1e-15,
                  "initial target differs from the inlet at t = 0");
      }
      break;
    }
  }
  const Velocity peak = rectangle_inlet_velocity(rect.height / 2, rect.final_time, rect, rc.flow);
  o.require(rc.flow.u_max == 0.5, "rectangle preset u_max is not 0.5");
  o.require(std::abs(peak.u - 1.0) <= 1e-12 && peak.v == 0.0, "inlet mid-height at T gives " + fmt(peak.u));
  if (o.pass) o.detail = "max |u| at t = 0 is " + fmt(worst) + ", u(H/2, T) - 1 = " + fmt(peak.u - 1.0);
  return o;
}

// --------------------------------------------------------------------------
// 10. Determinism and parallel parity.

Outcome determinism() {
  Outcome o;
  const ExperimentConfig c = preset_config("rectangle-scaled");
  RunOptions seq, par;
  par.threads = 4;
  const TrainedModel a = train(c, seq), b = train(c, seq), p = train(c, par);
  bool same = a.history.size() == b.history.size() && a.networks == b.networks;
  for (std::size_t i = 0; same && i < a.history.size(); ++i) same = a.history[i].loss.total == b.history[i].loss.total;
  o.require(same, "sequential reruns differ");
  const double rel = std::abs(p.final_loss.total - a.final_loss.total) / std::abs(a.final_loss.total);
  o.require(rel <= 1e-6, "parallel final loss differs by " + fmt(rel) + " relative");
  if (o.pass) {
    o.detail = "reruns bit-identical over " + std::to_string(a.history.size()) +
               " iterations; 4 threads vs 1: relative difference " + fmt(rel);
  }
  return o;
}

// --------------------------------------------------------------------------
// 11. Table and snapshot formats.

std::vector<std::string> columns(const std::string& line) {
  std::vector<std::string> out;
  const std::string trimmed = std::regex_replace(line, std::regex("^\\s+|\\s+$"), "");
  const std::regex sep("\\s{2,}");
  for (std::sregex_token_iterator it(trimmed.begin(), trimmed.end(), sep, -1), end; it != end; ++it) {
    out.push_back(*it);
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

bool is_rule(const std::string& l) { return !l.empty() && l.find_first_not_of('-') == std::string::npos; }

int cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "pinnflow");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome format_parity() {
  Outcome o;
  const fs::path root = scratch("formats");
  ExperimentConfig base = preset_config("rectangle-scaled");
  base.schedule.adam_iterations = 3;
  base.schedule.lbfgs_max_iterations = 2;
  write_file(root / "base.ini", serialize_config(base));
  const std::string cfg = (root / "base.ini").string();
  const std::vector<std::string> metrics{"Final Loss", "Comp. Time (s)", "# Iter. (Total)"};

  // Weight sweep of a single network.
  o.require(cli_run({"sweep", "--config", cfg, "--out", (root / "t1").string(), "--axis", "beta", "--values",
                     "1,2,5,10", "-q"}) == 0,
            "beta sweep failed");
  auto t1 = read_lines(root / "t1" / "sweep.txt");
  std::vector<std::string> want{"beta"};
  want.insert(want.end(), metrics.begin(), metrics.end());
  o.require(t1.size() == 6 && columns(t1[0]) == want && is_rule(t1[1]), "beta table layout");
  for (std::size_t i = 2; i < t1.size(); ++i) o.require(columns(t1[i]).size() == 4, "beta table row width");

  // Subdomain count by interface weight.
  base.variant = Variant::wxpinn;
  write_file(root / "x.ini", serialize_config(base));
  o.require(cli_run({"sweep", "--config", (root / "x.ini").string(), "--out", (root / "t2").string(), "--axis", "M",
                     "--values", "2,3", "--axis", "gamma", "--values", "1,2,5", "-q"}) == 0,
            "M/gamma sweep failed");
  auto t2 = read_lines(root / "t2" / "sweep.txt");
  want = {"M", "beta", "gamma"};
  want.insert(want.end(), metrics.begin(), metrics.end());
  o.require(t2.size() == 9 && columns(t2[0]) == want && is_rule(t2[1]) && is_rule(t2[5]),
            "M/gamma table layout");
  for (std::size_t i : {2u, 3u, 4u, 6u, 7u, 8u}) {
    o.require(i < t2.size() && columns(t2[i]).size() == 6, "M/gamma table row width");
  }

  // Subdomain count by flux weight, metrics split by interface weight.
  base.variant = Variant::wcpinn;
  write_file(root / "c.ini", serialize_config(base));
  o.require(cli_run({"sweep", "--config", (root / "c.ini").string(), "--out", (root / "t3").string(), "--axis", "M",
                     "--values", "2,3", "--axis", "delta", "--values", "1,2,5", "--axis", "gamma", "--values", "1,5",
                     "-q"}) == 0,
            "M/delta/gamma sweep failed");
  auto t3 = read_lines(root / "t3" / "sweep.txt");
  want = {"M", "delta"};
  for (int k = 0; k < 3; ++k) {
    want.push_back("gamma=1");
    want.push_back("gamma=5");
  }
  o.require(t3.size() >= 10 && columns(t3[0]) == metrics && columns(t3[1]) == want && is_rule(t3[2]) &&
                is_rule(t3[6]),
            "M/delta table layout");
  for (std::size_t i : {3u, 4u, 5u, 7u, 8u, 9u}) {
    o.require(i < t3.size() && columns(t3[i]).size() == 8, "M/delta table row width");
  }

  // Snapshots on the full rectangle prediction set from a zero network of the
  // preset's architecture.
  const ExperimentConfig full = preset_config("rectangle-paper");
  NetworkParams net = zero_network(full.architecture());
  net.inputs = input_scaling(full.domain);
  save_networks(root / "model", std::vector<NetworkParams>{net});
  o.require(cli_run({"predict", "--preset", "rectangle-paper", "--model", (root / "model").string(), "--out",
                     (root / "pred").string(), "-q"}) == 0,
            "predict failed");
  std::size_t snapshots = 0;
  for (double t : default_snapshot_times(full.domain)) {
    const auto lines = read_lines(root / "pred" / snapshot_file_name(t));
    ++snapshots;
    o.require(lines.size() == 64562 && lines[0] == kFieldHeader,
              snapshot_file_name(t) + " has " + std::to_string(lines.empty() ? 0 : lines.size() - 1) + " rows");
  }
  if (o.pass) {
    o.detail = "three sweep table layouts; " + std::to_string(snapshots) + " snapshots of 64561 rows";
  }
  fs::remove_all(root);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"derivative oracle", derivative_oracle},
      {"parameter-gradient oracle", parameter_gradient},
      {"manufactured solution", manufactured_solution},
      {"scaled rectangle training", scaled_training},
      {"interface healing", interface_healing},
      {"flux term", flux_term},
      {"optimizer suite", optimizer_suite},
      {"sampling", sampling},
      {"inlet/IC consistency", inlet_consistency},
      {"determinism and parallel parity", determinism},
      {"format parity", format_parity},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int number = static_cast<int>(k + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << number << " (" << criteria[k].first
              << "): " << o.detail << " [" << fmt(secs) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
