#pragma once

// Benchmark space-time domains, Latin hypercube sampling, collocation sets
// and slab partitions.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace pinnflow {

struct RectangleDomain {
  double length = 1.1;
  double height = 0.41;
  double final_time = 0.5;
  double time_step = 0.01;

  void validate() const;
  bool operator==(const RectangleDomain&) const = default;
};

/// Half annulus around the origin with an optional Gaussian narrowing of the
/// outer wall. Inlet is the y = 0 segment at theta = pi, outlet the y = 0
/// segment at theta = 0.
struct SemiCircularDomain {
  double cross_radius = 1.6;
  double curvature_radius = 2.9;
  double final_time = 6.0;
  double time_step = 0.01;
  double stenosis_amplitude = 0.0;
  double stenosis_width = 0.2;
  double stenosis_center = std::numbers::pi / 2;

  double inner_radius() const { return curvature_radius - cross_radius; }
  double outer_radius(double theta) const;
  /// Length of the inlet segment (2a without stenosis).
  double inlet_width() const { return outer_radius(std::numbers::pi) - inner_radius(); }
  double outlet_width() const { return outer_radius(0.0) - inner_radius(); }
  double max_outer_radius() const;

  void validate() const;
  bool operator==(const SemiCircularDomain&) const = default;
};

using Domain = std::variant<RectangleDomain, SemiCircularDomain>;

double final_time(const Domain& domain);
double time_step(const Domain& domain);
void validate(const Domain& domain);

/// Closed membership test with tolerance tol.
bool contains(const Domain& domain, double x, double y, double tol = 1e-12);
bool strictly_inside(const Domain& domain, double x, double y);

struct FlowConfig {
  double density = 1.0;
  double viscosity = 0.01;
  double u_max = 0.5;

  void validate() const;
  bool operator==(const FlowConfig&) const = default;
};

/// Independent seed for a numbered random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// n Latin hypercube samples over the box, one column per point. Every
/// dimension's n equal-width strata hold exactly one sample.
Eigen::MatrixXd sample_lhs(std::size_t n, std::span<const Interval> bounds, std::uint64_t seed);

struct Velocity {
  double u = 0.0;
  double v = 0.0;
};

/// Pulsatile factor sin(pi t / T + 3 pi / 2) + 1.
double pulsatile_factor(double t, double final_time);

Velocity rectangle_inlet_velocity(double y, double t, const RectangleDomain& domain, const FlowConfig& flow);

/// s runs across the inlet from the inner wall (s = 0) to the outer wall.
/// The inflow is along +y in global coordinates.
Velocity semicircle_inlet_velocity(double s, double t, const SemiCircularDomain& domain, const FlowConfig& flow);

struct SpaceTimePoint {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;

  bool operator==(const SpaceTimePoint&) const = default;
};

enum class PointKind { wall, inlet, outlet, initial };

/// A boundary or initial point with the Dirichlet targets that apply there.
struct TargetPoint {
  SpaceTimePoint at;
  PointKind kind = PointKind::wall;
  std::optional<double> u;
  std::optional<double> v;
  std::optional<double> p;

  bool has_target() const { return u || v || p; }
};

struct CollocationCounts {
  std::size_t total = 0;         ///< interior + boundary + initial
  std::size_t boundary = 0;      ///< wall points
  std::size_t inlet_outlet = 0;  ///< inlet plus outlet points
  std::size_t initial = 0;       ///< t = 0 points

  std::size_t interior() const;
  bool operator==(const CollocationCounts&) const = default;
};

struct CollocationSet {
  std::vector<SpaceTimePoint> interior;
  std::vector<TargetPoint> boundary;
  std::vector<TargetPoint> initial;

  std::size_t total() const { return interior.size() + boundary.size() + initial.size(); }
};

CollocationSet generate_collocation(const Domain& domain, const FlowConfig& flow, const CollocationCounts& counts,
                                    std::uint64_t seed);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Points on the interface shared with one neighbor. The normal is the unit
/// vector pointing from the owning subdomain into the neighbor.
struct InterfaceLink {
  std::size_t neighbor = 0;
  std::vector<SpaceTimePoint> points;
  Vec2 normal;
};

/// Slab along the split coordinate: x for the rectangle, pi - theta for the
/// half annulus (so slab 0 always holds the inlet).
struct SubdomainSpec {
  std::size_t index = 0;
  Interval region;
  CollocationSet collocation;
  std::vector<std::size_t> neighbors;
  std::vector<InterfaceLink> interfaces;

  const InterfaceLink* link_to(std::size_t neighbor) const;
};

/// Split coordinate of a point (see SubdomainSpec).
double split_coordinate(const Domain& domain, double x, double y);
double split_extent(const Domain& domain);
/// Slab owning the point; points on an inner cut belong to the upper slab.
std::size_t locate_slab(const Domain& domain, std::size_t slabs, double x, double y);
/// Distance from a point to the cut between slab k-1 and slab k.
double distance_to_cut(const Domain& domain, std::size_t slabs, std::size_t k, double x, double y);

std::vector<SubdomainSpec> partition_domain(const Domain& domain, std::size_t subdomains,
                                            const CollocationSet& collocation, std::size_t interface_points,
                                            std::uint64_t seed);

}  // namespace pinnflow
