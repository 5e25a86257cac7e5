#include "pinnflow/network.hpp"

#include "pinnflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace pinnflow {

namespace {

constexpr std::string_view kAxisNames = "xyt";

bool all_finite(const Input& input) {
  return std::all_of(input.begin(), input.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

void validate_layer_sizes(std::span<const int> layer_sizes) {
  if (layer_sizes.size() < 2) fail(ErrorCode::invalid_architecture, "need at least an input and an output layer");
  for (int n : layer_sizes) {
    if (n <= 0) fail(ErrorCode::invalid_architecture, "layer sizes must be positive");
  }
  if (layer_sizes.front() != kInputDim) fail(ErrorCode::invalid_architecture, "first layer must have 3 inputs");
  if (layer_sizes.back() != kOutputDim) fail(ErrorCode::invalid_architecture, "last layer must have 5 outputs");
}

std::size_t parameter_count(std::span<const int> layer_sizes) {
  std::size_t count = 0;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    count += static_cast<std::size_t>(layer_sizes[k + 1]) * (layer_sizes[k] + 1);
  }
  return count;
}

InputScaling InputScaling::from_box(const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
  InputScaling s;
  for (int a = 0; a < kInputDim; ++a) {
    if (!(hi[a] > lo[a])) fail(ErrorCode::invalid_architecture, "degenerate input box");
    s.shift[a] = 0.5 * (lo[a] + hi[a]);
    s.scale[a] = 2.0 / (hi[a] - lo[a]);
  }
  return s;
}

std::size_t NetworkParams::parameter_count() const { return pinnflow::parameter_count(layer_sizes); }

Eigen::VectorXd NetworkParams::flatten() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index pos = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const Eigen::MatrixXd& w = weights[k];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat[pos++] = w(r, c);
    }
    for (Eigen::Index r = 0; r < biases[k].size(); ++r) flat[pos++] = biases[k][r];
  }
  return flat;
}

void NetworkParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    fail(ErrorCode::invalid_architecture, "flat parameter vector has the wrong length");
  }
  std::size_t pos = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    Eigen::MatrixXd& w = weights[k];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[pos++];
    }
    for (Eigen::Index r = 0; r < biases[k].size(); ++r) biases[k][r] = flat[pos++];
  }
}

void NetworkParams::validate() const {
  validate_layer_sizes(layer_sizes);
  if (weights.size() + 1 != layer_sizes.size() || biases.size() != weights.size()) {
    fail(ErrorCode::invalid_architecture, "layer count does not match layer sizes");
  }
  for (int a = 0; a < kInputDim; ++a) {
    if (!std::isfinite(inputs.shift[a]) || !std::isfinite(inputs.scale[a]) || inputs.scale[a] == 0.0) {
      fail(ErrorCode::invalid_architecture, "input scaling must be finite and non-zero");
    }
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k].rows() != layer_sizes[k + 1] || weights[k].cols() != layer_sizes[k] ||
        biases[k].size() != layer_sizes[k + 1]) {
      fail(ErrorCode::invalid_architecture, "layer " + std::to_string(k) + " has the wrong shape");
    }
    if (!weights[k].allFinite() || !biases[k].allFinite()) {
      fail(ErrorCode::invalid_architecture, "layer " + std::to_string(k) + " has non-finite entries");
    }
  }
}

std::vector<int> make_architecture(int hidden_layers, int width) {
  if (hidden_layers < 0 || width <= 0) fail(ErrorCode::invalid_architecture, "bad hidden layer spec");
  std::vector<int> sizes{kInputDim};
  sizes.insert(sizes.end(), static_cast<std::size_t>(hidden_layers), width);
  sizes.push_back(kOutputDim);
  return sizes;
}

NetworkParams zero_network(std::span<const int> layer_sizes) {
  validate_layer_sizes(layer_sizes);
  NetworkParams p;
  p.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    p.weights.push_back(Eigen::MatrixXd::Zero(layer_sizes[k + 1], layer_sizes[k]));
    p.biases.push_back(Eigen::VectorXd::Zero(layer_sizes[k + 1]));
  }
  return p;
}

NetworkParams init_network(std::span<const int> layer_sizes, std::uint64_t seed) {
  NetworkParams p = zero_network(layer_sizes);
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    Eigen::MatrixXd& w = p.weights[k];
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        w(r, c) = bound * (2.0 * u - 1.0);
      }
    }
  }
  return p;
}

OutputVector forward(const NetworkParams& params, const Input& input) {
  if (!all_finite(input)) fail(ErrorCode::non_finite_input, "network input is not finite");
  Eigen::VectorXd h(kInputDim);
  for (int a = 0; a < kInputDim; ++a) h[a] = params.inputs.scale[a] * (input[a] - params.inputs.shift[a]);
  const std::size_t layers = params.weights.size();
  for (std::size_t k = 0; k < layers; ++k) {
    Eigen::VectorXd z = params.weights[k] * h + params.biases[k];
    h = (k + 1 < layers) ? Eigen::VectorXd(z.array().tanh()) : z;
  }
  OutputVector out{};
  for (int i = 0; i < kOutputDim; ++i) out[i] = h[i];
  return out;
}

// ---------------------------------------------------------------------------
// Derivative channels

MultiIndex MultiIndex::of(std::initializer_list<int> axes) {
  if (axes.size() > 3) throw std::invalid_argument("multi-index order above 3");
  MultiIndex m;
  for (int a : axes) {
    if (a < 0 || a >= kInputDim) throw std::invalid_argument("bad axis");
    m.axes[m.order++] = static_cast<std::uint8_t>(a);
  }
  std::sort(m.axes.begin(), m.axes.begin() + m.order);
  return m;
}

MultiIndex MultiIndex::parse(std::string_view name) {
  if (name.size() > 3) throw std::invalid_argument("multi-index order above 3");
  MultiIndex m;
  for (char c : name) {
    const auto pos = kAxisNames.find(c);
    if (pos == std::string_view::npos) throw std::invalid_argument("bad axis name");
    m.axes[m.order++] = static_cast<std::uint8_t>(pos);
  }
  std::sort(m.axes.begin(), m.axes.begin() + m.order);
  return m;
}

std::string MultiIndex::name() const {
  std::string s;
  for (int i = 0; i < order; ++i) s += kAxisNames[axes[i]];
  return s;
}

MultiIndex MultiIndex::with(int axis) const {
  MultiIndex m = *this;
  m.axes[m.order++] = static_cast<std::uint8_t>(axis);
  std::sort(m.axes.begin(), m.axes.begin() + m.order);
  return m;
}

MultiIndex MultiIndex::without(int position) const {
  MultiIndex m;
  for (int i = 0; i < order; ++i) {
    if (i != position) m.axes[m.order++] = axes[i];
  }
  return m;
}

void DerivativeChannels::insert_with_subsets(const MultiIndex& m) {
  if (find(m)) return;
  for (int i = 0; i < m.order; ++i) insert_with_subsets(m.without(i));
  channels_.push_back(m);
}

DerivativeChannels DerivativeChannels::up_to_order(int order) {
  if (order < 0 || order > 3) throw std::invalid_argument("derivative order must be in 0..3");
  DerivativeChannels set;
  set.insert_with_subsets(MultiIndex{});
  std::vector<MultiIndex> frontier{MultiIndex{}};
  for (int k = 0; k < order; ++k) {
    std::vector<MultiIndex> next;
    for (const MultiIndex& m : frontier) {
      const int start = m.order == 0 ? 0 : m.axes[m.order - 1];
      for (int a = start; a < kInputDim; ++a) next.push_back(m.with(a));
    }
    for (const MultiIndex& m : next) set.insert_with_subsets(m);
    frontier = std::move(next);
  }
  return set;
}

DerivativeChannels DerivativeChannels::closure_of(std::initializer_list<std::string_view> names) {
  DerivativeChannels set;
  set.insert_with_subsets(MultiIndex{});
  for (std::string_view n : names) set.insert_with_subsets(MultiIndex::parse(n));
  return set;
}

std::optional<std::size_t> DerivativeChannels::find(const MultiIndex& m) const {
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (channels_[i] == m) return i;
  }
  return std::nullopt;
}

std::size_t DerivativeChannels::index_of(const MultiIndex& m) const {
  auto idx = find(m);
  if (!idx) fail(ErrorCode::insufficient_derivative_order, "derivative channel '" + m.name() + "' not computed");
  return *idx;
}

int DerivativeChannels::max_order() const {
  int order = 0;
  for (const MultiIndex& m : channels_) order = std::max<int>(order, m.order);
  return order;
}

// ---------------------------------------------------------------------------
// Jet propagation

NetworkVars register_parameters(ad::Tape& tape, const NetworkParams& params, bool trainable) {
  NetworkVars vars;
  vars.inputs = params.inputs;
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    ad::Matrix bias = params.biases[k];
    if (trainable) {
      vars.weights.push_back(tape.variable(params.weights[k]));
      vars.biases.push_back(tape.variable(std::move(bias)));
    } else {
      vars.weights.push_back(tape.constant(params.weights[k]));
      vars.biases.push_back(tape.constant(std::move(bias)));
    }
  }
  return vars;
}

namespace {

struct ChannelPlan {
  // Indices of the lower-order channels used by the chain rule.
  std::vector<std::size_t> singles;                          // order-1 factors, one per axis position
  std::vector<std::pair<std::size_t, std::size_t>> pairs;    // (order-2 channel, order-1 channel)
};

std::vector<ChannelPlan> plan_channels(const DerivativeChannels& set) {
  std::vector<ChannelPlan> plans(set.size());
  for (std::size_t c = 0; c < set.size(); ++c) {
    const MultiIndex& m = set[c];
    ChannelPlan& plan = plans[c];
    for (int i = 0; i < m.order; ++i) plan.singles.push_back(set.index_of(MultiIndex::of({m.axes[i]})));
    if (m.order == 3) {
      for (int i = 0; i < 3; ++i) {
        plan.pairs.emplace_back(set.index_of(m.without(i)), set.index_of(MultiIndex::of({m.axes[i]})));
      }
    }
  }
  return plans;
}

}  // namespace

OutputJet propagate_jet(ad::Tape& tape, const NetworkVars& net, const Eigen::Matrix3Xd& inputs,
                        const DerivativeChannels& channels) {
  using ad::Var;
  const std::size_t nc = channels.size();
  const Eigen::Index n = inputs.cols();
  const auto plans = plan_channels(channels);
  const int max_order = channels.max_order();

  // Layer inputs: the points themselves and unit seeds for first-order channels.
  std::vector<std::optional<Var>> h(nc);
  ad::Matrix scaled(kInputDim, n);
  for (int a = 0; a < kInputDim; ++a) {
    scaled.row(a) = net.inputs.scale[a] * (inputs.row(a).array() - net.inputs.shift[a]).matrix();
  }
  h[0] = tape.constant(std::move(scaled));
  for (std::size_t c = 1; c < nc; ++c) {
    if (channels[c].order != 1) continue;
    ad::Matrix seed = ad::Matrix::Zero(kInputDim, n);
    seed.row(channels[c].axes[0]).setConstant(net.inputs.scale[channels[c].axes[0]]);
    h[c] = tape.constant(std::move(seed));
  }

  const std::size_t layers = net.weights.size();
  std::vector<std::optional<Var>> z(nc);
  for (std::size_t k = 0; k < layers; ++k) {
    const Var& w = net.weights[k];
    for (std::size_t c = 0; c < nc; ++c) {
      z[c].reset();
      if (h[c]) z[c] = matmul(w, *h[c]);
    }
    z[0] = add_bias(*z[0], net.biases[k]);
    if (k + 1 == layers) break;

    const Var y = tanh(*z[0]);
    std::optional<Var> d1, d2, d3;
    if (max_order >= 1) d1 = 1.0 - square(y);
    if (max_order >= 2) d2 = -2.0 * (y * *d1);
    if (max_order >= 3) d3 = *d1 * (6.0 * square(y) - 2.0);

    h[0] = y;
    for (std::size_t c = 1; c < nc; ++c) {
      const ChannelPlan& plan = plans[c];
      const int order = channels[c].order;
      std::optional<Var> acc;
      auto add = [&acc](const Var& term) { acc = acc ? *acc + term : term; };
      if (z[c]) add(*d1 * *z[c]);
      if (order == 2) {
        add(*d2 * (*z[plan.singles[0]] * *z[plan.singles[1]]));
      } else if (order == 3) {
        std::optional<Var> mixed;
        for (const auto& [pair, single] : plan.pairs) {
          if (!z[pair]) continue;
          const Var term = *z[pair] * *z[single];
          mixed = mixed ? *mixed + term : term;
        }
        if (mixed) add(*d2 * *mixed);
        add(*d3 * (*z[plan.singles[0]] * (*z[plan.singles[1]] * *z[plan.singles[2]])));
      }
      h[c] = acc;
    }
  }

  OutputJet jet;
  jet.set = &channels;
  jet.channels.reserve(nc);
  const Eigen::Index out_rows = net.weights.back().rows();
  for (std::size_t c = 0; c < nc; ++c) {
    jet.channels.push_back(z[c] ? *z[c] : tape.constant(ad::Matrix::Zero(out_rows, n)));
  }
  return jet;
}

namespace {

PointEvaluation unpack_column(const OutputJet& jet, Eigen::Index col, const Input& input, int order) {
  const DerivativeChannels& set = *jet.set;
  PointEvaluation e;
  e.input = input;
  e.order = order;
  auto at = [&](const MultiIndex& m, int out) { return jet.channels[set.index_of(m)].value()(out, col); };
  for (int i = 0; i < kOutputDim; ++i) {
    e.outputs[i] = at(MultiIndex{}, i);
    for (int a = 0; a < kInputDim; ++a) {
      if (order >= 1) e.first[i][a] = at(MultiIndex::of({a}), i);
      for (int b = 0; b < kInputDim && order >= 2; ++b) {
        e.second[i][a][b] = at(MultiIndex::of({a, b}), i);
      }
    }
  }
  if (order >= 3) {
    ThirdDerivs third{};
    for (int i = 0; i < kOutputDim; ++i)
      for (int a = 0; a < kInputDim; ++a)
        for (int b = 0; b < kInputDim; ++b)
          for (int c = 0; c < kInputDim; ++c) third[i][a][b][c] = at(MultiIndex::of({a, b, c}), i);
    e.third = third;
  }
  return e;
}

bool finite(const PointEvaluation& e) {
  auto ok = [](double v) { return std::isfinite(v); };
  for (int i = 0; i < kOutputDim; ++i) {
    if (!ok(e.outputs[i])) return false;
    for (int a = 0; a < kInputDim; ++a) {
      if (!ok(e.first[i][a])) return false;
      for (int b = 0; b < kInputDim; ++b) {
        if (!ok(e.second[i][a][b])) return false;
        if (e.third) {
          for (int c = 0; c < kInputDim; ++c)
            if (!ok((*e.third)[i][a][b][c])) return false;
        }
      }
    }
  }
  return true;
}

}  // namespace

std::vector<PointEvaluation> evaluate_with_derivatives(const NetworkParams& params,
                                                       std::span<const Input> inputs, int order) {
  if (order < 1 || order > 3) fail(ErrorCode::insufficient_derivative_order, "order must be 1, 2 or 3");
  Eigen::Matrix3Xd points(kInputDim, static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    if (!all_finite(inputs[j])) fail(ErrorCode::non_finite_input, "network input is not finite");
    for (int a = 0; a < kInputDim; ++a) points(a, static_cast<Eigen::Index>(j)) = inputs[j][a];
  }
  const DerivativeChannels channels = DerivativeChannels::up_to_order(order);
  ad::Tape tape;
  const NetworkVars vars = register_parameters(tape, params, false);
  const OutputJet jet = propagate_jet(tape, vars, points, channels);
  std::vector<PointEvaluation> out;
  out.reserve(inputs.size());
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    out.push_back(unpack_column(jet, static_cast<Eigen::Index>(j), inputs[j], order));
    if (!finite(out.back())) fail(ErrorCode::evaluation_overflow, "non-finite network derivative");
  }
  return out;
}

PointEvaluation evaluate_with_derivatives(const NetworkParams& params, const Input& input, int order) {
  return evaluate_with_derivatives(params, std::span<const Input>(&input, 1), order).front();
}

// ---------------------------------------------------------------------------
// Parameter gradients

Eigen::VectorXd flat_gradient(const ad::Tape& tape, const NetworkVars& vars, const NetworkParams& layout) {
  Eigen::VectorXd flat(layout.parameter_count());
  Eigen::Index pos = 0;
  for (std::size_t k = 0; k < vars.weights.size(); ++k) {
    const ad::Matrix gw = tape.gradient(vars.weights[k]);
    for (Eigen::Index r = 0; r < gw.rows(); ++r)
      for (Eigen::Index c = 0; c < gw.cols(); ++c) flat[pos++] = gw(r, c);
    const ad::Matrix gb = tape.gradient(vars.biases[k]);
    for (Eigen::Index r = 0; r < gb.rows(); ++r) flat[pos++] = gb(r, 0);
  }
  return flat;
}

LossGradient loss_gradient(std::span<const NetworkParams> params, const LossBuilder& loss) {
  ad::Tape tape;
  std::vector<NetworkVars> vars;
  vars.reserve(params.size());
  for (const NetworkParams& p : params) vars.push_back(register_parameters(tape, p, true));
  const ad::Var out = loss(tape, vars);
  if (out.value().size() != 1) throw std::invalid_argument("loss must be a scalar");
  const double value = out.value()(0, 0);
  if (!std::isfinite(value)) fail(ErrorCode::gradient_unavailable, "loss is not finite");
  tape.backward(out);
  LossGradient result;
  result.loss = value;
  for (std::size_t i = 0; i < params.size(); ++i) {
    result.gradients.push_back(flat_gradient(tape, vars[i], params[i]));
    if (!result.gradients.back().allFinite()) fail(ErrorCode::gradient_unavailable, "gradient is not finite");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(std::ostream& out, const NetworkParams& params) {
  params.validate();
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  out << "layers:";
  for (int n : params.layer_sizes) out << ' ' << n;
  out << '\n';
  out << "shift: " << params.inputs.shift[0] << ' ' << params.inputs.shift[1] << ' ' << params.inputs.shift[2] << '\n';
  out << "scale: " << params.inputs.scale[0] << ' ' << params.inputs.scale[1] << ' ' << params.inputs.scale[2] << '\n';
  auto write_row = [&out](auto&& row) {
    for (Eigen::Index c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      out << row[c];
    }
    out << '\n';
  };
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    for (Eigen::Index r = 0; r < params.weights[k].rows(); ++r) write_row(params.weights[k].row(r));
    write_row(params.biases[k]);
  }
  out.flags(old_flags);
  out.precision(old_precision);
}

NetworkParams read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto parse_error = [&](const std::string& what) {
    fail(ErrorCode::parse, "checkpoint line " + std::to_string(line_no) + ": " + what);
  };
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(in, line)) fail(ErrorCode::parse, "checkpoint truncated after line " + std::to_string(line_no));
    ++line_no;
    return std::istringstream(line);
  };
  auto expect_tag = [&](std::istringstream& ls, const char* tag) {
    std::string got;
    ls >> got;
    if (got != tag) parse_error(std::string("expected '") + tag + "'");
  };
  auto read_values = [&](std::istringstream& ls, double* out, Eigen::Index n) {
    for (Eigen::Index c = 0; c < n; ++c) {
      std::string token;
      if (!(ls >> token)) parse_error("too few values");
      char* end = nullptr;
      out[c] = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size()) parse_error("bad number '" + token + "'");
    }
    std::string extra;
    if (ls >> extra) parse_error("too many values");
  };

  std::istringstream header = next_line();
  expect_tag(header, "layers:");
  std::vector<int> sizes;
  for (int n; header >> n;) sizes.push_back(n);
  if (!header.eof()) parse_error("bad layer size");
  NetworkParams p = zero_network(sizes);

  std::istringstream shift = next_line();
  expect_tag(shift, "shift:");
  read_values(shift, p.inputs.shift.data(), kInputDim);
  std::istringstream scale = next_line();
  expect_tag(scale, "scale:");
  read_values(scale, p.inputs.scale.data(), kInputDim);

  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    Eigen::VectorXd buf(p.weights[k].cols());
    for (Eigen::Index r = 0; r < p.weights[k].rows(); ++r) {
      std::istringstream ls = next_line();
      read_values(ls, buf.data(), buf.size());
      p.weights[k].row(r) = buf.transpose();
    }
    std::istringstream ls = next_line();
    read_values(ls, p.biases[k].data(), p.biases[k].size());
  }
  p.validate();
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  write_checkpoint(out, params);
  if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot read " + path.string());
  return read_checkpoint(in);
}

}  // namespace pinnflow
