#pragma once

// Mixed-variable Navier-Stokes residuals (stream function, pressure and
// Cauchy stress outputs), boundary/initial, interface and flux residuals, and
// the per-subdomain loss functionals.
//
// The residual formulas are templates over the scalar type so that the same
// expressions run on plain doubles and on tape variables holding whole
// batches of points.

#include "pinnflow/geometry.hpp"
#include "pinnflow/loss_breakdown.hpp"
#include "pinnflow/network.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace pinnflow {

enum class ResidualForm { sigma_divergence, direct };
enum class Variant { wpinn, wxpinn, wcpinn };

std::string_view to_string(ResidualForm form);
std::string_view to_string(Variant variant);
ResidualForm parse_residual_form(std::string_view name);
Variant parse_variant(std::string_view name);

/// Stream-function, pressure and stress derivatives consumed by the residuals.
/// The psi third derivatives are only used by the direct form.
template <class T>
struct FlowJet {
  T psi_x, psi_y;
  T psi_xx, psi_xy, psi_yy, psi_xt, psi_yt;
  T psi_xxx, psi_xxy, psi_xyy, psi_yyy;
  bool has_third = false;
  T p, p_x, p_y;
  T s11, s11_x;
  T s12, s12_x, s12_y;
  T s22, s22_y;
};

template <class T>
struct VelocityJet {
  T u, v;
  T u_x, u_y, v_x, v_y;
  T u_t, v_t;
};

template <class T>
struct GoverningResidualsT {
  T r_u, r_v, r_p, r_s11, r_s12, r_s22;
};
using GoverningResiduals = GoverningResidualsT<double>;

/// u = psi_y, v = -psi_x.
template <class T>
VelocityJet<T> velocity_from_stream(const FlowJet<T>& j) {
  return VelocityJet<T>{j.psi_y, -j.psi_x, j.psi_xy, j.psi_yy, -j.psi_xx, -j.psi_xy, j.psi_yt, -j.psi_xt};
}

template <class T>
GoverningResidualsT<T> governing_residuals(const FlowJet<T>& j, const FlowConfig& flow, ResidualForm form) {
  const double rho = flow.density, mu = flow.viscosity;
  const VelocityJet<T> w = velocity_from_stream(j);
  GoverningResidualsT<T> r;
  if (form == ResidualForm::sigma_divergence) {
    r.r_u = rho * w.u_t + rho * (w.u * w.u_x + w.v * w.u_y) - (j.s11_x + j.s12_y);
    r.r_v = rho * w.v_t + rho * (w.u * w.v_x + w.v * w.v_y) - (j.s12_x + j.s22_y);
  } else {
    // u_xx = psi_xxy, (u_y + v_x)_y = psi_yyy - psi_xxy,
    // (v_x + u_y)_x = psi_xyy - psi_xxx, v_yy = -psi_xyy.
    r.r_u = rho * w.u_t + rho * (w.u * w.u_x + w.v * w.u_y) - (2.0 * mu * j.psi_xxy - j.p_x) -
            mu * (j.psi_yyy - j.psi_xxy);
    r.r_v = rho * w.v_t + rho * (w.u * w.v_x + w.v * w.v_y) - mu * (j.psi_xyy - j.psi_xxx) -
            (-2.0 * mu * j.psi_xyy - j.p_y);
  }
  r.r_p = j.p + 0.5 * (j.s11 + j.s22);
  r.r_s11 = (2.0 * mu * w.u_x - j.p) - j.s11;
  r.r_s12 = mu * (w.u_y + w.v_x) - j.s12;
  r.r_s22 = (2.0 * mu * w.v_y - j.p) - j.s22;
  return r;
}

/// Builds the jet from a point evaluation; order 2 is required, order 3 for
/// the direct form.
FlowJet<double> flow_jet(const PointEvaluation& eval, ResidualForm form = ResidualForm::sigma_divergence);

VelocityJet<double> velocity_from_stream(const PointEvaluation& eval);
GoverningResiduals governing_residuals(const PointEvaluation& eval, const FlowConfig& flow, ResidualForm form);
double squared_norm(const GoverningResiduals& r);

/// Primitive variables (u', v', p') predicted at a point.
struct Prediction {
  double u = 0.0;
  double v = 0.0;
  double p = 0.0;
};

/// Needs first derivatives of psi.
Prediction primitive_prediction(const PointEvaluation& eval);

struct BoundaryTargets {
  std::optional<double> u, v, p;
};

/// Sum of squared mismatches over the targets that are present.
double boundary_initial_residual(const Prediction& predicted, const BoundaryTargets& targets);
double boundary_initial_residual(const Prediction& predicted, const TargetPoint& target);

/// Deviation of side i from the two-sided average: (pred_i - pred_j) / 2.
struct InterfaceResiduals {
  double r_u = 0.0;
  double r_v = 0.0;
  double r_p = 0.0;
};
InterfaceResiduals interface_residuals(const Prediction& own, const Prediction& neighbor);

/// Mismatch of rho*u_n and rho*u_n^2 + p across an interface.
struct FluxResiduals {
  double r_m = 0.0;
  double r_mu = 0.0;
};
/// u components are taken as the interface-normal velocity.
FluxResiduals flux_residuals(const Prediction& own, const Prediction& neighbor, double density);
/// Projects both velocities on the normal first.
FluxResiduals flux_residuals(const Prediction& own, const Prediction& neighbor, double density, const Vec2& normal);

struct InterfaceSample {
  Prediction own;
  Prediction neighbor;
  Vec2 normal;
};

struct TargetedPrediction {
  Prediction predicted;
  TargetPoint target;
};

/// Pointwise evaluations for one subdomain; interfaces[k] holds the samples
/// on the interface with the k-th neighbor.
struct SubdomainEvaluations {
  std::vector<PointEvaluation> interior;
  std::vector<TargetedPrediction> boundary;
  std::vector<TargetedPrediction> initial;
  std::vector<std::vector<InterfaceSample>> interfaces;
};

LossBreakdown assemble_loss(const SubdomainEvaluations& evals, const FlowConfig& flow, const LossWeights& weights,
                            Variant variant, ResidualForm form = ResidualForm::sigma_divergence);

}  // namespace pinnflow
