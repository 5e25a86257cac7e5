#include "pinnflow/physics.hpp"

#include "pinnflow/error.hpp"

#include <cmath>

namespace pinnflow {

std::string_view to_string(ResidualForm form) {
  return form == ResidualForm::sigma_divergence ? "sigma" : "direct";
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::wpinn: return "WPINN";
    case Variant::wxpinn: return "WXPINN";
    case Variant::wcpinn: return "WCPINN";
  }
  return "?";
}

ResidualForm parse_residual_form(std::string_view name) {
  if (name == "sigma" || name == "sigma-divergence") return ResidualForm::sigma_divergence;
  if (name == "direct") return ResidualForm::direct;
  fail(ErrorCode::configuration, "unknown residual form '" + std::string(name) + "'");
}

Variant parse_variant(std::string_view name) {
  if (name == "WPINN" || name == "wpinn") return Variant::wpinn;
  if (name == "WXPINN" || name == "wxpinn") return Variant::wxpinn;
  if (name == "WCPINN" || name == "wcpinn") return Variant::wcpinn;
  fail(ErrorCode::configuration, "unknown variant '" + std::string(name) + "'");
}

FlowJet<double> flow_jet(const PointEvaluation& e, ResidualForm form) {
  if (e.order < 2) fail(ErrorCode::insufficient_derivative_order, "residuals need second derivatives of psi");
  if (form == ResidualForm::direct && !e.third) {
    fail(ErrorCode::insufficient_derivative_order, "direct residual form needs third derivatives of psi");
  }
  const auto& d1 = e.first;
  const auto& d2 = e.second[kPsi];
  FlowJet<double> j;
  j.psi_x = d1[kPsi][kX];
  j.psi_y = d1[kPsi][kY];
  j.psi_xx = d2[kX][kX];
  j.psi_xy = d2[kX][kY];
  j.psi_yy = d2[kY][kY];
  j.psi_xt = d2[kX][kT];
  j.psi_yt = d2[kY][kT];
  if (e.third) {
    const auto& d3 = (*e.third)[kPsi];
    j.has_third = true;
    j.psi_xxx = d3[kX][kX][kX];
    j.psi_xxy = d3[kX][kX][kY];
    j.psi_xyy = d3[kX][kY][kY];
    j.psi_yyy = d3[kY][kY][kY];
  } else {
    j.psi_xxx = j.psi_xxy = j.psi_xyy = j.psi_yyy = 0.0;
  }
  j.p = e.outputs[kPressure];
  j.p_x = d1[kPressure][kX];
  j.p_y = d1[kPressure][kY];
  j.s11 = e.outputs[kSigma11];
  j.s11_x = d1[kSigma11][kX];
  j.s12 = e.outputs[kSigma12];
  j.s12_x = d1[kSigma12][kX];
  j.s12_y = d1[kSigma12][kY];
  j.s22 = e.outputs[kSigma22];
  j.s22_y = d1[kSigma22][kY];
  return j;
}

VelocityJet<double> velocity_from_stream(const PointEvaluation& eval) {
  return velocity_from_stream(flow_jet(eval));
}

GoverningResiduals governing_residuals(const PointEvaluation& eval, const FlowConfig& flow, ResidualForm form) {
  return governing_residuals(flow_jet(eval, form), flow, form);
}

double squared_norm(const GoverningResiduals& r) {
  return r.r_u * r.r_u + r.r_v * r.r_v + r.r_p * r.r_p + r.r_s11 * r.r_s11 + r.r_s12 * r.r_s12 +
         r.r_s22 * r.r_s22;
}

Prediction primitive_prediction(const PointEvaluation& eval) {
  if (eval.order < 1) fail(ErrorCode::insufficient_derivative_order, "velocity needs first derivatives of psi");
  return {eval.first[kPsi][kY], -eval.first[kPsi][kX], eval.outputs[kPressure]};
}

double boundary_initial_residual(const Prediction& predicted, const BoundaryTargets& targets) {
  if (!targets.u && !targets.v && !targets.p) fail(ErrorCode::empty_target, "point carries no target");
  double sum = 0.0;
  if (targets.u) sum += (predicted.u - *targets.u) * (predicted.u - *targets.u);
  if (targets.v) sum += (predicted.v - *targets.v) * (predicted.v - *targets.v);
  if (targets.p) sum += (predicted.p - *targets.p) * (predicted.p - *targets.p);
  return sum;
}

double boundary_initial_residual(const Prediction& predicted, const TargetPoint& target) {
  return boundary_initial_residual(predicted, BoundaryTargets{target.u, target.v, target.p});
}

InterfaceResiduals interface_residuals(const Prediction& own, const Prediction& neighbor) {
  // Same as own - (own + neighbor) / 2, but exactly antisymmetric in the sides.
  return {0.5 * (own.u - neighbor.u), 0.5 * (own.v - neighbor.v), 0.5 * (own.p - neighbor.p)};
}

FluxResiduals flux_residuals(const Prediction& own, const Prediction& neighbor, double density) {
  return {density * (own.u - neighbor.u),
          (density * own.u * own.u + own.p) - (density * neighbor.u * neighbor.u + neighbor.p)};
}

FluxResiduals flux_residuals(const Prediction& own, const Prediction& neighbor, double density, const Vec2& n) {
  Prediction a = own, b = neighbor;
  a.u = own.u * n.x + own.v * n.y;
  b.u = neighbor.u * n.x + neighbor.v * n.y;
  return flux_residuals(a, b, density);
}

LossBreakdown assemble_loss(const SubdomainEvaluations& evals, const FlowConfig& flow, const LossWeights& weights,
                            Variant variant, ResidualForm form) {
  if (evals.interior.empty()) fail(ErrorCode::degenerate_loss, "no interior collocation points");
  if (!(weights.beta > 0.0)) fail(ErrorCode::configuration, "beta must be positive");

  double g = 0.0;
  for (const PointEvaluation& e : evals.interior) g += squared_norm(governing_residuals(e, flow, form));
  g /= static_cast<double>(evals.interior.size());

  auto mean_targets = [](const std::vector<TargetedPrediction>& samples) {
    if (samples.empty()) return 0.0;
    double s = 0.0;
    for (const TargetedPrediction& tp : samples) s += boundary_initial_residual(tp.predicted, tp.target);
    return s / static_cast<double>(samples.size());
  };
  const double bc_ic = mean_targets(evals.boundary) + mean_targets(evals.initial);

  double interface = 0.0, flux = 0.0;
  if (variant != Variant::wpinn) {
    for (const auto& samples : evals.interfaces) {
      if (samples.empty()) continue;
      double si = 0.0, sf = 0.0;
      for (const InterfaceSample& s : samples) {
        const InterfaceResiduals r = interface_residuals(s.own, s.neighbor);
        si += r.r_u * r.r_u + r.r_v * r.r_v + r.r_p * r.r_p;
        if (variant == Variant::wcpinn) {
          const FluxResiduals f = flux_residuals(s.own, s.neighbor, flow.density, s.normal);
          sf += f.r_m * f.r_m + f.r_mu * f.r_mu;
        }
      }
      interface += si / static_cast<double>(samples.size());
      flux += sf / static_cast<double>(samples.size());
    }
  }

  LossWeights effective = weights;
  if (variant == Variant::wpinn) effective.gamma = 0.0;
  if (variant != Variant::wcpinn) effective.delta = 0.0;
  return LossBreakdown::from_components(g, bc_ic, interface, flux, effective);
}

}  // namespace pinnflow
