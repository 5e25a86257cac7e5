#pragma once

// Experiment configuration, joint training of one network per subdomain,
// interface exchange, global solution assembly, field prediction and sweeps.

#include "pinnflow/geometry.hpp"
#include "pinnflow/network.hpp"
#include "pinnflow/optimizers.hpp"
#include "pinnflow/physics.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pinnflow {

/// Output-side settings: the prediction point set and snapshot times.
struct PredictionSettings {
  CollocationCounts counts;
  /// Empty means the default: multiples of the time step, at most six.
  std::vector<double> snapshot_times;

  bool operator==(const PredictionSettings&) const = default;
};

struct ExperimentConfig {
  std::string preset = "custom";
  Domain domain = RectangleDomain{};
  FlowConfig flow;
  Variant variant = Variant::wpinn;
  std::size_t subdomains = 1;
  LossWeights weights;
  ResidualForm residual_form = ResidualForm::sigma_divergence;
  int hidden_layers = 2;
  int width = 20;
  CollocationCounts counts;
  std::size_t interface_points = 400;
  /// Adam mini-batch size over all collocation points; 0 uses the full set.
  std::size_t batch_size = 0;
  TrainingSchedule schedule;
  std::uint64_t seed = 0;
  PredictionSettings prediction;

  /// Throws configuration errors naming the offending key.
  void validate() const;

  /// WPINN always trains a single network.
  std::size_t effective_subdomains() const { return variant == Variant::wpinn ? 1 : subdomains; }
  /// gamma is dropped for WPINN, delta for everything but WCPINN.
  LossWeights effective_weights() const;
  std::vector<int> architecture() const { return make_architecture(hidden_layers, width); }

  bool operator==(const ExperimentConfig&) const = default;
};

struct RunOptions {
  /// Worker threads for loss evaluation; results do not depend on it.
  std::size_t threads = 1;
  TrainingObserver observer;
};

struct TrainedModel {
  ExperimentConfig config;
  std::vector<NetworkParams> networks;
  std::vector<SubdomainSpec> subdomains;
  LossBreakdown initial_loss;
  LossBreakdown final_loss;
  /// RMS of the (u, v, p) jumps over all interface points; 0 for one subdomain.
  double initial_interface_jump = 0.0;
  double final_interface_jump = 0.0;
  double seconds = 0.0;
  std::size_t adam_iterations = 0;
  std::size_t lbfgs_iterations = 0;
  Termination termination = Termination::none;
  std::vector<LossRecord> history;
  double min_stored_curvature = 0.0;

  std::size_t iterations() const { return adam_iterations + lbfgs_iterations; }
};

/// The global collocation set train() partitions.
CollocationSet build_collocation(const ExperimentConfig& config);
/// Prediction points: the prediction counts, or the training counts if those
/// are unset.
CollocationSet build_prediction_set(const ExperimentConfig& config);
/// Collocation and interface sets exactly as train() builds them.
std::vector<SubdomainSpec> build_subdomains(const ExperimentConfig& config);
/// Maps the domain's bounding box (and [0, T]) onto [-1, 1]^3.
InputScaling input_scaling(const Domain& domain);
/// Freshly initialized networks, one per subdomain, with the domain's input
/// scaling.
std::vector<NetworkParams> initial_networks(const ExperimentConfig& config);

/// Full-batch loss of the given networks, in the same form train() minimizes.
LossBreakdown evaluate_loss(const ExperimentConfig& config, std::span<const SubdomainSpec> subdomains,
                            std::span<const NetworkParams> networks, std::size_t threads = 1);

/// Loss and gradient with respect to the concatenated parameters of all
/// networks (network 0 first, each in flatten() layout).
Evaluation evaluate_objective(const ExperimentConfig& config, std::span<const SubdomainSpec> subdomains,
                              std::span<const NetworkParams> networks, std::size_t threads = 1);
Eigen::VectorXd concatenate_parameters(std::span<const NetworkParams> networks);

/// Raises divergence (a DivergenceError) if the loss becomes non-finite; its
/// last_finite() holds the concatenated parameters of all networks.
TrainedModel train(const ExperimentConfig& config, const RunOptions& options = {});

/// Splits a concatenated parameter vector into networks shaped like layout.
std::vector<NetworkParams> split_parameters(const Eigen::VectorXd& flat, std::span<const NetworkParams> layout);

/// Wraps checkpointed networks for prediction. Throws checkpoint_incompatible
/// if the count or architecture does not match the configuration.
TrainedModel model_from_networks(const ExperimentConfig& config, std::vector<NetworkParams> networks);

/// Both sides' predictions at the points shared by subdomains a < b.
struct InterfaceExchange {
  std::size_t a = 0;
  std::size_t b = 0;
  std::vector<SpaceTimePoint> points;
  std::vector<Prediction> side_a;
  std::vector<Prediction> side_b;
  /// Unit normal from a into b.
  Vec2 normal;
};

/// Evaluates every interface under both neighboring networks from one
/// parameter snapshot. Throws consistency if the two sides' lists differ.
std::vector<InterfaceExchange> exchange_interface_predictions(std::span<const SubdomainSpec> subdomains,
                                                              std::span<const NetworkParams> snapshot);

/// RMS over all interface points of the (u, v, p) jumps, per component.
double interface_rms_jump(std::span<const InterfaceExchange> exchange);

struct FieldValue {
  double u = 0.0;
  double v = 0.0;
  double p = 0.0;
  double s11 = 0.0;
  double s12 = 0.0;
  double s22 = 0.0;
};

/// Value from the network owning the point's slab; within 1e-12 of a cut the
/// mean of both neighbors. Throws out_of_domain outside the space-time domain.
FieldValue assemble_global_solution(const TrainedModel& model, const SpaceTimePoint& query);
std::vector<FieldValue> assemble_global_solution(const TrainedModel& model, std::span<const SpaceTimePoint> queries);

/// Governing residuals of the owning network at each point.
std::vector<GoverningResiduals> residual_fields(const TrainedModel& model, std::span<const SpaceTimePoint> points);

struct FieldRow {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  double u = 0.0;
  double v = 0.0;
  double p = 0.0;
};

struct FieldSnapshot {
  double time = 0.0;
  std::vector<FieldRow> rows;
};

/// Multiples of dt covering [0, T], thinned to at most six evenly spaced.
std::vector<double> default_snapshot_times(const Domain& domain);

/// Spatial positions of every point in the set (interior, boundary, initial).
std::vector<Vec2> prediction_grid(const CollocationSet& set);

/// One snapshot per time with one row per grid position.
std::vector<FieldSnapshot> predict_fields(const TrainedModel& model, std::span<const Vec2> grid,
                                          std::span<const double> times);

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { subdomains, beta, gamma, delta };
SweepAxis parse_sweep_axis(std::string_view name);
std::string_view to_string(SweepAxis axis);

struct SweepDimension {
  SweepAxis axis = SweepAxis::beta;
  std::vector<double> values;
};

struct SweepRow {
  std::size_t subdomains = 1;
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 1.0;
  double final_loss = 0.0;
  double seconds = 0.0;
  std::size_t iterations = 0;
  /// "ok", or the error code of a failed run.
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

/// Applies one sweep coordinate to a configuration.
ExperimentConfig with_axis_value(ExperimentConfig config, SweepAxis axis, double value);

/// Called after each run with the run's configuration and either the model
/// or the failure message.
using SweepCallback = std::function<void(std::size_t run, const ExperimentConfig& config, const TrainedModel* model,
                                         const std::string* failure)>;

/// One train() per point of the cartesian product of the dimensions (first
/// dimension outermost), all with the base seed. Failed runs are recorded and
/// the sweep continues. Throws configuration on an empty or invalid axis.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, std::span<const SweepDimension> dimensions,
                                const RunOptions& options = {}, const SweepCallback& callback = {});

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);
/// Aligned text table with the parameter columns of the swept axes followed
/// by Final Loss, Comp. Time (s) and # Iter. (Total). When gamma and delta are
/// both swept the metrics are pivoted into one column per gamma value.
std::string format_sweep_table(std::span<const SweepRow> rows, std::span<const SweepDimension> dimensions);

}  // namespace pinnflow
