#pragma once

// Dense tanh networks mapping (x, y, t) to (psi, p, sigma11, sigma12, sigma22),
// evaluated together with exact input derivatives up to third order.

#include "pinnflow/tape.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pinnflow {

inline constexpr int kInputDim = 3;
inline constexpr int kOutputDim = 5;

/// Network output slots.
enum Output : int { kPsi = 0, kPressure = 1, kSigma11 = 2, kSigma12 = 3, kSigma22 = 4 };
/// Network input slots.
enum Axis : int { kX = 0, kY = 1, kT = 2 };

/// Fixed affine map applied to (x, y, t) before the first layer:
/// scale * (input - shift), per axis.
struct InputScaling {
  std::array<double, 3> shift{0.0, 0.0, 0.0};
  std::array<double, 3> scale{1.0, 1.0, 1.0};

  /// Maps the box [lo, hi] of each axis onto [-1, 1].
  static InputScaling from_box(const std::array<double, 3>& lo, const std::array<double, 3>& hi);
  bool operator==(const InputScaling&) const = default;
};

/// Weights and biases of a dense network. Hidden layers use tanh, the output
/// layer is affine. weights[k] is (layer_sizes[k+1] x layer_sizes[k]).
///
/// Flat layout (used by the optimizers): for each layer, the weight matrix in
/// row-major order followed by the bias vector. The input scaling is not
/// trained and not part of the flat vector.
struct NetworkParams {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  InputScaling inputs;

  std::size_t parameter_count() const;
  std::size_t layer_count() const { return weights.size(); }

  Eigen::VectorXd flatten() const;
  void assign_flat(std::span<const double> flat);

  /// Throws invalid_architecture on shape or finiteness violations.
  void validate() const;

  bool operator==(const NetworkParams&) const = default;
};

void validate_layer_sizes(std::span<const int> layer_sizes);
std::size_t parameter_count(std::span<const int> layer_sizes);

/// 3 -> hidden_layers x width (tanh) -> 5.
std::vector<int> make_architecture(int hidden_layers, int width);

/// Glorot-uniform weights, zero biases; deterministic given the seed.
NetworkParams init_network(std::span<const int> layer_sizes, std::uint64_t seed);
NetworkParams zero_network(std::span<const int> layer_sizes);

using Input = std::array<double, kInputDim>;
using OutputVector = std::array<double, kOutputDim>;

OutputVector forward(const NetworkParams& params, const Input& input);

using FirstDerivs = std::array<std::array<double, kInputDim>, kOutputDim>;
using SecondDerivs = std::array<std::array<std::array<double, kInputDim>, kInputDim>, kOutputDim>;
using ThirdDerivs =
    std::array<std::array<std::array<std::array<double, kInputDim>, kInputDim>, kInputDim>, kOutputDim>;

/// Network outputs with their input derivatives at one point. first[i][j] is
/// d output_i / d input_j; second and third are full symmetric tensors.
struct PointEvaluation {
  Input input{};
  OutputVector outputs{};
  int order = 0;
  FirstDerivs first{};
  SecondDerivs second{};
  std::optional<ThirdDerivs> third;
};

/// Sorted multiset of input axes naming one partial derivative, e.g. {x, t}
/// for d^2/dx dt. The empty multi-index is the value itself.
struct MultiIndex {
  std::array<std::uint8_t, 3> axes{};
  std::uint8_t order = 0;

  static MultiIndex of(std::initializer_list<int> axes);
  /// Parses strings like "", "x", "yt", "xxy".
  static MultiIndex parse(std::string_view name);
  std::string name() const;
  MultiIndex with(int axis) const;
  MultiIndex without(int position) const;

  bool operator==(const MultiIndex&) const = default;
};

/// A set of derivative channels closed under taking sub-multisets, so that
/// every channel can be propagated through a tanh layer.
class DerivativeChannels {
 public:
  /// All channels of total order <= order over (x, y, t).
  static DerivativeChannels up_to_order(int order);
  /// The given channels plus everything they need.
  static DerivativeChannels closure_of(std::initializer_list<std::string_view> names);

  std::size_t size() const { return channels_.size(); }
  const MultiIndex& operator[](std::size_t i) const { return channels_[i]; }
  std::optional<std::size_t> find(const MultiIndex& m) const;
  std::size_t index_of(const MultiIndex& m) const;
  std::size_t index_of(std::string_view name) const { return index_of(MultiIndex::parse(name)); }
  int max_order() const;

 private:
  void insert_with_subsets(const MultiIndex& m);

  std::vector<MultiIndex> channels_;
};

/// Parameter leaves of one network registered on a tape.
struct NetworkVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  InputScaling inputs;
};

NetworkVars register_parameters(ad::Tape& tape, const NetworkParams& params, bool trainable);

/// Output channels of a network over a batch of points: channels[c] is a
/// 5 x n matrix holding the derivative named by the channel set's entry c.
struct OutputJet {
  const DerivativeChannels* set = nullptr;
  std::vector<ad::Var> channels;

  const ad::Var& operator[](std::string_view name) const { return channels[set->index_of(name)]; }
};

/// Propagates value and derivative channels through the network for the
/// batch of inputs (3 x n, one point per column).
OutputJet propagate_jet(ad::Tape& tape, const NetworkVars& net, const Eigen::Matrix3Xd& inputs,
                        const DerivativeChannels& channels);

/// Exact derivatives of orders 1..order (order in {1, 2, 3}).
PointEvaluation evaluate_with_derivatives(const NetworkParams& params, const Input& input, int order);
std::vector<PointEvaluation> evaluate_with_derivatives(const NetworkParams& params,
                                                       std::span<const Input> inputs, int order);

/// Builds a scalar loss on the tape from the registered parameter leaves of
/// every listed network.
using LossBuilder = std::function<ad::Var(ad::Tape&, std::span<const NetworkVars>)>;

struct LossGradient {
  double loss = 0.0;
  /// One flat gradient per network, in NetworkParams::flatten() layout.
  std::vector<Eigen::VectorXd> gradients;
};

LossGradient loss_gradient(std::span<const NetworkParams> params, const LossBuilder& loss);

/// Flattens the adjoints of registered leaves after a backward sweep.
Eigen::VectorXd flat_gradient(const ad::Tape& tape, const NetworkVars& vars, const NetworkParams& layout);

// Text checkpoints: "layers: n0 ... nk", "shift: sx sy st", "scale: sx sy st",
// then per layer the weight rows and the bias row, 17 significant digits.
void write_checkpoint(std::ostream& out, const NetworkParams& params);
NetworkParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace pinnflow
