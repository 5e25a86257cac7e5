#include "pinnflow/geometry.hpp"

#include "pinnflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pinnflow {

namespace {

constexpr double kPi = std::numbers::pi;

// Keeps samples off stratum edges so that stratum membership is unambiguous
// after rounding.
constexpr double kEdgeMargin = 1e-9;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::size_t half_up(std::size_t n) { return n - n / 2; }

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::configuration, std::string(name) + " must be positive");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x1234567ull));
}

// ---------------------------------------------------------------------------
// Domains

void RectangleDomain::validate() const {
  require_positive(length, "length");
  require_positive(height, "height");
  require_positive(final_time, "final_time");
  require_positive(time_step, "time_step");
  if (time_step > final_time) fail(ErrorCode::configuration, "time_step must not exceed final_time");
}

double SemiCircularDomain::outer_radius(double theta) const {
  const double d = theta - stenosis_center;
  return curvature_radius + cross_radius -
         stenosis_amplitude * std::exp(-(d * d) / (2.0 * stenosis_width * stenosis_width));
}

// The indentation only narrows the channel, so the plain outer wall bounds it.
double SemiCircularDomain::max_outer_radius() const { return curvature_radius + cross_radius; }

void SemiCircularDomain::validate() const {
  require_positive(cross_radius, "cross_radius");
  require_positive(curvature_radius, "curvature_radius");
  require_positive(final_time, "final_time");
  require_positive(time_step, "time_step");
  require_positive(stenosis_width, "stenosis_width");
  if (time_step > final_time) fail(ErrorCode::configuration, "time_step must not exceed final_time");
  if (!(inner_radius() > 0.0)) fail(ErrorCode::configuration, "curvature_radius must exceed cross_radius");
  if (!(stenosis_amplitude >= 0.0)) fail(ErrorCode::configuration, "stenosis_amplitude must be non-negative");
  if (!(stenosis_amplitude < 2.0 * cross_radius)) {
    fail(ErrorCode::configuration, "stenosis_amplitude closes the channel");
  }
}

double final_time(const Domain& domain) {
  return std::visit([](const auto& d) { return d.final_time; }, domain);
}

double time_step(const Domain& domain) {
  return std::visit([](const auto& d) { return d.time_step; }, domain);
}

void validate(const Domain& domain) {
  std::visit([](const auto& d) { d.validate(); }, domain);
}

bool contains(const Domain& domain, double x, double y, double tol) {
  if (const auto* rect = std::get_if<RectangleDomain>(&domain)) {
    return x >= -tol && x <= rect->length + tol && y >= -tol && y <= rect->height + tol;
  }
  const auto& semi = std::get<SemiCircularDomain>(domain);
  if (y < -tol) return false;
  const double r = std::hypot(x, y);
  const double theta = std::clamp(std::atan2(std::max(y, 0.0), x), 0.0, kPi);
  return r >= semi.inner_radius() - tol && r <= semi.outer_radius(theta) + tol;
}

bool strictly_inside(const Domain& domain, double x, double y) {
  if (const auto* rect = std::get_if<RectangleDomain>(&domain)) {
    return x > 0.0 && x < rect->length && y > 0.0 && y < rect->height;
  }
  const auto& semi = std::get<SemiCircularDomain>(domain);
  if (!(y > 0.0)) return false;
  const double r = std::hypot(x, y);
  return r > semi.inner_radius() && r < semi.outer_radius(std::atan2(y, x));
}

void FlowConfig::validate() const {
  require_positive(density, "density");
  require_positive(viscosity, "viscosity");
  if (!(u_max >= 0.0) || !std::isfinite(u_max)) fail(ErrorCode::configuration, "u_max must be non-negative");
}

// ---------------------------------------------------------------------------
// Sampling

Eigen::MatrixXd sample_lhs(std::size_t n, std::span<const Interval> bounds, std::uint64_t seed) {
  if (n == 0) fail(ErrorCode::empty_sample, "Latin hypercube sample of size 0");
  for (const Interval& b : bounds) {
    if (!(b.hi > b.lo)) fail(ErrorCode::configuration, "degenerate sampling interval");
  }
  std::mt19937_64 rng(seed);
  const auto dims = static_cast<Eigen::Index>(bounds.size());
  Eigen::MatrixXd points(dims, static_cast<Eigen::Index>(n));
  std::vector<std::size_t> strata(n);
  for (Eigen::Index d = 0; d < dims; ++d) {
    std::iota(strata.begin(), strata.end(), std::size_t{0});
    for (std::size_t i = n; i-- > 1;) std::swap(strata[i], strata[rng() % (i + 1)]);
    const Interval& b = bounds[static_cast<std::size_t>(d)];
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      const double u = kEdgeMargin + raw * (1.0 - 2.0 * kEdgeMargin);
      points(d, static_cast<Eigen::Index>(i)) =
          b.lo + (static_cast<double>(strata[i]) + u) / static_cast<double>(n) * (b.hi - b.lo);
    }
  }
  return points;
}

double pulsatile_factor(double t, double final_time) {
  return std::sin(kPi * t / final_time + 1.5 * kPi) + 1.0;
}

Velocity rectangle_inlet_velocity(double y, double t, const RectangleDomain& domain, const FlowConfig& flow) {
  const double h = domain.height;
  if (!(y >= 0.0 && y <= h)) fail(ErrorCode::out_of_domain, "inlet coordinate outside [0, H]");
  return {4.0 * flow.u_max * y * (h - y) / (h * h) * pulsatile_factor(t, domain.final_time), 0.0};
}

Velocity semicircle_inlet_velocity(double s, double t, const SemiCircularDomain& domain, const FlowConfig& flow) {
  const double d = domain.inlet_width();
  if (!(s >= 0.0 && s <= d)) fail(ErrorCode::out_of_domain, "inlet coordinate outside [0, D]");
  const double axial = 4.0 * flow.u_max * s * (d - s) / (d * d) * pulsatile_factor(t, domain.final_time);
  return {0.0, axial};
}

std::size_t CollocationCounts::interior() const {
  const std::size_t reserved = boundary + inlet_outlet + initial;
  return total > reserved ? total - reserved : 0;
}

namespace {

TargetPoint wall_point(double x, double y, double t) {
  return TargetPoint{{x, y, t}, PointKind::wall, 0.0, 0.0, std::nullopt};
}

TargetPoint outlet_point(double x, double y, double t) {
  return TargetPoint{{x, y, t}, PointKind::outlet, std::nullopt, std::nullopt, 0.0};
}

TargetPoint initial_point(double x, double y) {
  return TargetPoint{{x, y, 0.0}, PointKind::initial, 0.0, 0.0, 0.0};
}

CollocationSet rectangle_collocation(const RectangleDomain& rect, const FlowConfig& flow,
                                     const CollocationCounts& counts, std::uint64_t seed) {
  const double L = rect.length, H = rect.height, T = rect.final_time;
  CollocationSet set;

  const std::size_t n_interior = counts.interior();
  if (n_interior > 0) {
    const std::array<Interval, 3> box{{{0.0, L}, {0.0, H}, {0.0, T}}};
    const Eigen::MatrixXd pts = sample_lhs(n_interior, box, derive_seed(seed, 1));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) set.interior.push_back({pts(0, i), pts(1, i), pts(2, i)});
  }

  const std::size_t n_bottom = half_up(counts.boundary), n_top = counts.boundary - n_bottom;
  const std::array<Interval, 2> wall_box{{{0.0, L}, {0.0, T}}};
  if (n_bottom > 0) {
    const Eigen::MatrixXd pts = sample_lhs(n_bottom, wall_box, derive_seed(seed, 2));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) set.boundary.push_back(wall_point(pts(0, i), 0.0, pts(1, i)));
  }
  if (n_top > 0) {
    const Eigen::MatrixXd pts = sample_lhs(n_top, wall_box, derive_seed(seed, 3));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) set.boundary.push_back(wall_point(pts(0, i), H, pts(1, i)));
  }

  const std::size_t n_inlet = half_up(counts.inlet_outlet), n_outlet = counts.inlet_outlet - n_inlet;
  const std::array<Interval, 2> end_box{{{0.0, H}, {0.0, T}}};
  if (n_inlet > 0) {
    const Eigen::MatrixXd pts = sample_lhs(n_inlet, end_box, derive_seed(seed, 4));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      const Velocity vel = rectangle_inlet_velocity(pts(0, i), pts(1, i), rect, flow);
      set.boundary.push_back(TargetPoint{{0.0, pts(0, i), pts(1, i)}, PointKind::inlet, vel.u, vel.v, std::nullopt});
    }
  }
  if (n_outlet > 0) {
    const Eigen::MatrixXd pts = sample_lhs(n_outlet, end_box, derive_seed(seed, 5));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) set.boundary.push_back(outlet_point(L, pts(0, i), pts(1, i)));
  }

  if (counts.initial > 0) {
    const std::array<Interval, 2> plane{{{0.0, L}, {0.0, H}}};
    const Eigen::MatrixXd pts = sample_lhs(counts.initial, plane, derive_seed(seed, 6));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) set.initial.push_back(initial_point(pts(0, i), pts(1, i)));
  }
  return set;
}

// Rejection sampling against the bounding box; every pass draws a fresh
// Latin hypercube over the box and keeps the points inside.
std::vector<Eigen::Vector3d> sample_inside(const Domain& domain, const SemiCircularDomain& semi, std::size_t n,
                                           double t_hi, std::uint64_t seed) {
  std::vector<Eigen::Vector3d> out;
  const double r_max = semi.max_outer_radius();
  const bool timed = t_hi > 0.0;
  std::vector<Interval> box{{-r_max, r_max}, {0.0, r_max}};
  if (timed) box.push_back({0.0, t_hi});
  for (std::uint64_t pass = 0; out.size() < n; ++pass) {
    const std::size_t remaining = n - out.size();
    const Eigen::MatrixXd pts = sample_lhs(2 * remaining + 16, box, derive_seed(seed, 100 + pass));
    for (Eigen::Index i = 0; i < pts.cols() && out.size() < n; ++i) {
      if (strictly_inside(domain, pts(0, i), pts(1, i))) {
        out.emplace_back(pts(0, i), pts(1, i), timed ? pts(2, i) : 0.0);
      }
    }
  }
  return out;
}

CollocationSet semicircle_collocation(const Domain& domain, const SemiCircularDomain& semi, const FlowConfig& flow,
                                      const CollocationCounts& counts, std::uint64_t seed) {
  const double T = semi.final_time, r_in = semi.inner_radius();
  CollocationSet set;

  for (const Eigen::Vector3d& p : sample_inside(domain, semi, counts.interior(), T, derive_seed(seed, 1))) {
    set.interior.push_back({p.x(), p.y(), p.z()});
  }

  const std::array<Interval, 2> arc_box{{{0.0, kPi}, {0.0, T}}};
  const std::size_t n_inner = half_up(counts.boundary), n_outer = counts.boundary - n_inner;
  if (n_inner > 0) {
    const Eigen::MatrixXd pts = sample_lhs(n_inner, arc_box, derive_seed(seed, 2));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      const double th = pts(0, i);
      set.boundary.push_back(wall_point(r_in * std::cos(th), r_in * std::sin(th), pts(1, i)));
    }
  }
  if (n_outer > 0) {
    const Eigen::MatrixXd pts = sample_lhs(n_outer, arc_box, derive_seed(seed, 3));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      const double th = pts(0, i), r = semi.outer_radius(th);
      set.boundary.push_back(wall_point(r * std::cos(th), r * std::sin(th), pts(1, i)));
    }
  }

  const std::size_t n_inlet = half_up(counts.inlet_outlet), n_outlet = counts.inlet_outlet - n_inlet;
  if (n_inlet > 0) {
    const std::array<Interval, 2> box{{{0.0, semi.inlet_width()}, {0.0, T}}};
    const Eigen::MatrixXd pts = sample_lhs(n_inlet, box, derive_seed(seed, 4));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      const Velocity vel = semicircle_inlet_velocity(pts(0, i), pts(1, i), semi, flow);
      set.boundary.push_back(
          TargetPoint{{-(r_in + pts(0, i)), 0.0, pts(1, i)}, PointKind::inlet, vel.u, vel.v, std::nullopt});
    }
  }
  if (n_outlet > 0) {
    const std::array<Interval, 2> box{{{0.0, semi.outlet_width()}, {0.0, T}}};
    const Eigen::MatrixXd pts = sample_lhs(n_outlet, box, derive_seed(seed, 5));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) set.boundary.push_back(outlet_point(r_in + pts(0, i), 0.0, pts(1, i)));
  }

  for (const Eigen::Vector3d& p : sample_inside(domain, semi, counts.initial, 0.0, derive_seed(seed, 6))) {
    set.initial.push_back(initial_point(p.x(), p.y()));
  }
  return set;
}

}  // namespace

CollocationSet generate_collocation(const Domain& domain, const FlowConfig& flow, const CollocationCounts& counts,
                                    std::uint64_t seed) {
  validate(domain);
  flow.validate();
  if (counts.total < counts.boundary + counts.inlet_outlet + counts.initial + 1) {
    fail(ErrorCode::configuration, "collocation total must exceed boundary + inlet/outlet + initial counts");
  }
  if (const auto* rect = std::get_if<RectangleDomain>(&domain)) return rectangle_collocation(*rect, flow, counts, seed);
  return semicircle_collocation(domain, std::get<SemiCircularDomain>(domain), flow, counts, seed);
}

// ---------------------------------------------------------------------------
// Partitioning

const InterfaceLink* SubdomainSpec::link_to(std::size_t neighbor) const {
  for (const InterfaceLink& link : interfaces) {
    if (link.neighbor == neighbor) return &link;
  }
  return nullptr;
}

double split_coordinate(const Domain& domain, double x, double y) {
  if (std::holds_alternative<RectangleDomain>(domain)) return x;
  return kPi - std::clamp(std::atan2(std::max(y, 0.0), x), 0.0, kPi);
}

double split_extent(const Domain& domain) {
  if (const auto* rect = std::get_if<RectangleDomain>(&domain)) return rect->length;
  return kPi;
}

namespace {

double cut_position(const Domain& domain, std::size_t slabs, std::size_t k) {
  return split_extent(domain) * static_cast<double>(k) / static_cast<double>(slabs);
}

}  // namespace

std::size_t locate_slab(const Domain& domain, std::size_t slabs, double x, double y) {
  const double xi = split_coordinate(domain, x, y);
  std::size_t k = 0;
  while (k + 1 < slabs && xi >= cut_position(domain, slabs, k + 1)) ++k;
  return k;
}

double distance_to_cut(const Domain& domain, std::size_t slabs, std::size_t k, double x, double y) {
  const double c = cut_position(domain, slabs, k);
  if (std::holds_alternative<RectangleDomain>(domain)) return std::abs(x - c);
  const double theta = kPi - c;
  return std::abs(-x * std::sin(theta) + y * std::cos(theta));
}

std::vector<SubdomainSpec> partition_domain(const Domain& domain, std::size_t subdomains,
                                            const CollocationSet& collocation, std::size_t interface_points,
                                            std::uint64_t seed) {
  validate(domain);
  if (subdomains == 0) fail(ErrorCode::partition, "need at least one subdomain");
  if (subdomains > 1 && interface_points == 0) fail(ErrorCode::partition, "interfaces need at least one point");

  std::vector<SubdomainSpec> specs(subdomains);
  for (std::size_t i = 0; i < subdomains; ++i) {
    specs[i].index = i;
    specs[i].region = {cut_position(domain, subdomains, i), cut_position(domain, subdomains, i + 1)};
    if (i > 0) specs[i].neighbors.push_back(i - 1);
    if (i + 1 < subdomains) specs[i].neighbors.push_back(i + 1);
  }

  for (const SpaceTimePoint& p : collocation.interior) {
    specs[locate_slab(domain, subdomains, p.x, p.y)].collocation.interior.push_back(p);
  }
  for (const TargetPoint& p : collocation.boundary) {
    specs[locate_slab(domain, subdomains, p.at.x, p.at.y)].collocation.boundary.push_back(p);
  }
  for (const TargetPoint& p : collocation.initial) {
    specs[locate_slab(domain, subdomains, p.at.x, p.at.y)].collocation.initial.push_back(p);
  }
  for (const SubdomainSpec& s : specs) {
    if (s.collocation.interior.empty()) {
      fail(ErrorCode::partition, "subdomain " + std::to_string(s.index) + " has no interior points");
    }
  }

  const double T = final_time(domain);
  for (std::size_t k = 1; k < subdomains; ++k) {
    InterfaceLink forward;  // owned by k-1, facing k
    forward.neighbor = k;
    const double c = cut_position(domain, subdomains, k);
    if (const auto* rect = std::get_if<RectangleDomain>(&domain)) {
      const std::array<Interval, 2> box{{{0.0, rect->height}, {0.0, T}}};
      const Eigen::MatrixXd pts = sample_lhs(interface_points, box, derive_seed(seed, 1000 + k));
      for (Eigen::Index i = 0; i < pts.cols(); ++i) forward.points.push_back({c, pts(0, i), pts(1, i)});
      forward.normal = {1.0, 0.0};
    } else {
      const auto& semi = std::get<SemiCircularDomain>(domain);
      const double theta = kPi - c;
      const std::array<Interval, 2> box{{{semi.inner_radius(), semi.outer_radius(theta)}, {0.0, T}}};
      const Eigen::MatrixXd pts = sample_lhs(interface_points, box, derive_seed(seed, 1000 + k));
      for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const double r = pts(0, i);
        forward.points.push_back({r * std::cos(theta), r * std::sin(theta), pts(1, i)});
      }
      forward.normal = {std::sin(theta), -std::cos(theta)};
    }
    InterfaceLink backward{k - 1, forward.points, {-forward.normal.x, -forward.normal.y}};
    specs[k - 1].interfaces.push_back(std::move(forward));
    specs[k].interfaces.insert(specs[k].interfaces.begin(), std::move(backward));
  }
  return specs;
}

}  // namespace pinnflow
