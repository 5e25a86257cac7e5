#pragma once

namespace pinnflow {

struct LossWeights {
  double beta = 1.0;   ///< boundary and initial conditions
  double gamma = 1.0;  ///< interface continuity
  double delta = 1.0;  ///< interface flux

  bool operator==(const LossWeights&) const = default;
};

/// Loss components and their weighted total. Components a variant does not
/// use stay at zero.
struct LossBreakdown {
  double loss_g = 0.0;
  double loss_bc_ic = 0.0;
  double loss_interface = 0.0;
  double loss_flux = 0.0;
  LossWeights weights;
  double total = 0.0;

  static LossBreakdown from_components(double g, double bc_ic, double interface, double flux,
                                       const LossWeights& w) {
    LossBreakdown b{g, bc_ic, interface, flux, w, 0.0};
    b.refresh_total();
    return b;
  }

  void refresh_total() {
    total = loss_g + weights.beta * loss_bc_ic + weights.gamma * loss_interface + weights.delta * loss_flux;
  }

  /// Total only, for objectives without a physical decomposition.
  static LossBreakdown scalar(double value) {
    LossBreakdown b;
    b.loss_g = value;
    b.weights = {0.0, 0.0, 0.0};
    b.total = value;
    return b;
  }
};

}  // namespace pinnflow
