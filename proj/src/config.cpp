#include "pinnflow/config.hpp"

#include "pinnflow/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <variant>

namespace pinnflow {

namespace {

namespace pt = boost::property_tree;

ExperimentConfig rectangle_base() {
  ExperimentConfig c;
  c.domain = RectangleDomain{};
  c.flow = FlowConfig{1.0, 0.01, 0.5};
  return c;
}

ExperimentConfig semicircle_base() {
  ExperimentConfig c;
  SemiCircularDomain semi;
  semi.stenosis_amplitude = 0.8;
  c.domain = semi;
  c.flow = FlowConfig{1.0, 0.4, 0.75};
  return c;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Locates "key" inside "[section]" to give value errors a line number.
std::size_t line_of(const std::string& text, const std::string& section, const std::string& key) {
  std::istringstream in(text);
  std::string line, current;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      current = line.substr(first + 1, close == std::string::npos ? std::string::npos : close - first - 1);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string k = line.substr(first, eq - first);
    while (!k.empty() && (k.back() == ' ' || k.back() == '\t')) k.pop_back();
    if (current == section && k == key) return n;
  }
  return 0;
}

class Reader {
 public:
  Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void error(const std::string& section, const std::string& key, const std::string& what) const {
    const std::size_t line = line_of(text_, section, key);
    std::string where = source_;
    if (line) where += ":" + std::to_string(line);
    fail(ErrorCode::configuration, where + ": " + section + "." + key + ": " + what);
  }

  double to_double(const std::string& section, const std::string& key, const std::string& raw) const {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(raw.c_str(), &end);
    if (raw.empty() || end != raw.c_str() + raw.size() || errno == ERANGE || !std::isfinite(v)) {
      error(section, key, "expected a finite number, got '" + raw + "'");
    }
    return v;
  }

  std::uint64_t to_unsigned(const std::string& section, const std::string& key, const std::string& raw) const {
    errno = 0;
    char* end = nullptr;
    if (raw.empty() || raw.front() == '-' || raw.front() == '+') {
      error(section, key, "expected a non-negative integer, got '" + raw + "'");
    }
    const unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
    if (end != raw.c_str() + raw.size() || errno == ERANGE) {
      error(section, key, "expected a non-negative integer, got '" + raw + "'");
    }
    return v;
  }

 private:
  const std::string& text_;
  std::string source_;
};

using Setter = std::function<void(ExperimentConfig&, const Reader&, const std::string& section, const std::string& key,
                                  const std::string& raw)>;

template <class Get>
Setter real_field(Get get) {
  return [get](ExperimentConfig& c, const Reader& r, const std::string& s, const std::string& k,
               const std::string& raw) { get(c) = r.to_double(s, k, raw); };
}

template <class Get>
Setter count_field(Get get) {
  return [get](ExperimentConfig& c, const Reader& r, const std::string& s, const std::string& k,
               const std::string& raw) {
    using T = std::remove_reference_t<decltype(get(c))>;
    const std::uint64_t v = r.to_unsigned(s, k, raw);
    if (v > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) r.error(s, k, "value too large");
    get(c) = static_cast<T>(v);
  };
}

template <class D, class Get>
Setter domain_field(const char* kind, Get get) {
  return [get, kind](ExperimentConfig& c, const Reader& r, const std::string& s, const std::string& k,
                     const std::string& raw) {
    D* d = std::get_if<D>(&c.domain);
    if (d == nullptr) r.error(s, k, std::string("only applies to type = ") + kind);
    get(*d) = r.to_double(s, k, raw);
  };
}

std::vector<double> parse_list(const Reader& r, const std::string& s, const std::string& k, const std::string& raw) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(raw);
  while (std::getline(in, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) r.error(s, k, "empty list entry");
    const auto b = item.find_last_not_of(" \t");
    out.push_back(r.to_double(s, k, item.substr(a, b - a + 1)));
  }
  return out;
}

using Table = std::map<std::string, std::map<std::string, Setter>>;

const Table& setters() {
  static const Table table = [] {
    Table t;
    auto& domain = t["domain"];
    // "type" is handled before all other keys.
    domain["final_time"] = [](ExperimentConfig& c, const Reader& r, const std::string& s, const std::string& k,
                              const std::string& raw) {
      const double v = r.to_double(s, k, raw);
      std::visit([v](auto& d) { d.final_time = v; }, c.domain);
    };
    domain["time_step"] = [](ExperimentConfig& c, const Reader& r, const std::string& s, const std::string& k,
                             const std::string& raw) {
      const double v = r.to_double(s, k, raw);
      std::visit([v](auto& d) { d.time_step = v; }, c.domain);
    };
    domain["length"] = domain_field<RectangleDomain>("rectangle", [](RectangleDomain& d) -> double& { return d.length; });
    domain["height"] = domain_field<RectangleDomain>("rectangle", [](RectangleDomain& d) -> double& { return d.height; });
    domain["cross_radius"] =
        domain_field<SemiCircularDomain>("semicircle", [](SemiCircularDomain& d) -> double& { return d.cross_radius; });
    domain["curvature_radius"] = domain_field<SemiCircularDomain>(
        "semicircle", [](SemiCircularDomain& d) -> double& { return d.curvature_radius; });
    domain["stenosis_amplitude"] = domain_field<SemiCircularDomain>(
        "semicircle", [](SemiCircularDomain& d) -> double& { return d.stenosis_amplitude; });
    domain["stenosis_width"] = domain_field<SemiCircularDomain>(
        "semicircle", [](SemiCircularDomain& d) -> double& { return d.stenosis_width; });
    domain["stenosis_center"] = domain_field<SemiCircularDomain>(
        "semicircle", [](SemiCircularDomain& d) -> double& { return d.stenosis_center; });

    auto& flow = t["flow"];
    flow["density"] = real_field([](ExperimentConfig& c) -> double& { return c.flow.density; });
    flow["viscosity"] = real_field([](ExperimentConfig& c) -> double& { return c.flow.viscosity; });
    flow["u_max"] = real_field([](ExperimentConfig& c) -> double& { return c.flow.u_max; });

    auto& network = t["network"];
    network["hidden_layers"] = count_field([](ExperimentConfig& c) -> int& { return c.hidden_layers; });
    network["width"] = count_field([](ExperimentConfig& c) -> int& { return c.width; });

    auto& training = t["training"];
    training["variant"] = [](ExperimentConfig& c, const Reader& r, const std::string& s, const std::string& k,
                             const std::string& raw) {
      try {
        c.variant = parse_variant(raw);
      } catch (const Error&) {
        r.error(s, k, "expected wpinn, wxpinn or wcpinn, got '" + raw + "'");
      }
    };
    training["residual_form"] = [](ExperimentConfig& c, const Reader& r, const std::string& s, const std::string& k,
                                   const std::string& raw) {
      try {
        c.residual_form = parse_residual_form(raw);
      } catch (const Error&) {
        r.error(s, k, "expected sigma_divergence or direct, got '" + raw + "'");
      }
    };
    training["seed"] = count_field([](ExperimentConfig& c) -> std::uint64_t& { return c.seed; });
    training["beta"] = real_field([](ExperimentConfig& c) -> double& { return c.weights.beta; });
    training["total_points"] = count_field([](ExperimentConfig& c) -> std::size_t& { return c.counts.total; });
    training["wall_points"] = count_field([](ExperimentConfig& c) -> std::size_t& { return c.counts.boundary; });
    training["inlet_outlet_points"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.counts.inlet_outlet; });
    training["initial_points"] = count_field([](ExperimentConfig& c) -> std::size_t& { return c.counts.initial; });
    training["batch_size"] = count_field([](ExperimentConfig& c) -> std::size_t& { return c.batch_size; });
    training["adam_iterations"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.schedule.adam_iterations; });
    training["learning_rate"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.adam.learning_rate; });
    training["adam_beta1"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.adam.beta1; });
    training["adam_beta2"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.adam.beta2; });
    training["adam_epsilon"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.adam.epsilon; });
    training["lbfgs_max_iterations"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.schedule.lbfgs_max_iterations; });
    training["lbfgs_memory"] = count_field([](ExperimentConfig& c) -> std::size_t& { return c.schedule.lbfgs_memory; });
    training["line_search_max_evaluations"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.schedule.line_search.max_iterations; });
    training["wolfe_delta"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.line_search.wolfe_delta; });
    training["wolfe_sigma"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.line_search.wolfe_sigma; });
    training["line_search_epsilon"] =
        real_field([](ExperimentConfig& c) -> double& { return c.schedule.line_search.epsilon; });
    training["line_search_theta"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.line_search.theta; });
    training["line_search_gamma"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.line_search.gamma; });
    training["line_search_expansion"] =
        real_field([](ExperimentConfig& c) -> double& { return c.schedule.line_search.expansion; });
    training["line_search_psi0"] = real_field([](ExperimentConfig& c) -> double& { return c.schedule.line_search.psi0; });
    training["line_search_max_step"] =
        real_field([](ExperimentConfig& c) -> double& { return c.schedule.line_search.max_step; });
    training["gradient_tolerance"] =
        real_field([](ExperimentConfig& c) -> double& { return c.schedule.gradient_tolerance; });
    training["relative_loss_tolerance"] =
        real_field([](ExperimentConfig& c) -> double& { return c.schedule.relative_loss_tolerance; });
    training["plateau_window"] = count_field([](ExperimentConfig& c) -> std::size_t& { return c.schedule.plateau_window; });

    auto& decomposition = t["decomposition"];
    decomposition["subdomains"] = count_field([](ExperimentConfig& c) -> std::size_t& { return c.subdomains; });
    decomposition["interface_points"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.interface_points; });
    decomposition["gamma"] = real_field([](ExperimentConfig& c) -> double& { return c.weights.gamma; });
    decomposition["delta"] = real_field([](ExperimentConfig& c) -> double& { return c.weights.delta; });

    auto& output = t["output"];
    output["prediction_total_points"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.prediction.counts.total; });
    output["prediction_wall_points"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.prediction.counts.boundary; });
    output["prediction_inlet_outlet_points"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.prediction.counts.inlet_outlet; });
    output["prediction_initial_points"] =
        count_field([](ExperimentConfig& c) -> std::size_t& { return c.prediction.counts.initial; });
    output["snapshot_times"] = [](ExperimentConfig& c, const Reader& r, const std::string& s, const std::string& k,
                                  const std::string& raw) {
      c.prediction.snapshot_times = raw.empty() ? std::vector<double>{} : parse_list(r, s, k, raw);
    };
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"rectangle-paper", "rectangle-scaled", "semicircle-paper", "semicircle-scaled"};
}

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig c;
  if (name == "rectangle-paper") {
    c = rectangle_base();
    c.hidden_layers = 7;
    c.width = 50;
    c.counts = {3321, 244, 81, 244};
    c.interface_points = 400;
    c.schedule.adam_iterations = 5000;
    c.schedule.lbfgs_max_iterations = 50000;
    c.prediction.counts = {64561, 1124, 161, 0};
  } else if (name == "rectangle-scaled") {
    c = rectangle_base();
    c.hidden_layers = 2;
    c.width = 20;
    c.counts = {500, 60, 30, 50};
    c.interface_points = 100;
    c.schedule.adam_iterations = 2000;
    c.schedule.lbfgs_max_iterations = 500;
    c.prediction.counts = {4000, 300, 60, 0};
  } else if (name == "semicircle-paper") {
    c = semicircle_base();
    c.hidden_layers = 7;
    c.width = 50;
    c.counts = {29760, 2000, 400, 2000};
    c.batch_size = 20000;
    c.interface_points = 400;
    c.schedule.adam_iterations = 1000;
    c.schedule.lbfgs_max_iterations = 50000;
    c.prediction.counts = c.counts;
  } else if (name == "semicircle-scaled") {
    c = semicircle_base();
    c.hidden_layers = 2;
    c.width = 20;
    c.counts = {600, 100, 30, 60};
    c.interface_points = 100;
    c.schedule.adam_iterations = 1000;
    c.schedule.lbfgs_max_iterations = 300;
    c.prediction.counts = {3000, 300, 60, 0};
  } else {
    std::string known;
    for (const std::string& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    fail(ErrorCode::configuration, "unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  c.preset = std::string(name);
  return c;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::parse, source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  const Reader reader(text, source);

  ExperimentConfig config;
  std::set<std::string> sections;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (name != "preset") reader.error("", name, "unknown top-level key (only 'preset' is allowed)");
      config = preset_config(node.data());
    }
  }
  const Table& table = setters();
  for (const auto& [name, node] : tree) {
    if (node.empty()) continue;
    if (!table.count(name)) fail(ErrorCode::configuration, source + ": unknown section [" + name + "]");
  }

  // The domain type decides which domain keys exist, so it goes first.
  if (const auto domain = tree.get_child_optional("domain")) {
    if (const auto type = domain->get_optional<std::string>("type")) {
      if (*type == "rectangle") {
        if (!std::holds_alternative<RectangleDomain>(config.domain)) config.domain = RectangleDomain{};
      } else if (*type == "semicircle") {
        if (!std::holds_alternative<SemiCircularDomain>(config.domain)) config.domain = SemiCircularDomain{};
      } else {
        reader.error("domain", "type", "expected rectangle or semicircle, got '" + *type + "'");
      }
    }
  }

  for (const auto& [section, node] : tree) {
    if (node.empty()) continue;
    const auto& keys = table.at(section);
    for (const auto& [key, value] : node) {
      if (!value.empty()) reader.error(section, key, "nested keys are not supported");
      if (section == "domain" && key == "type") continue;
      const auto it = keys.find(key);
      if (it == keys.end()) reader.error(section, key, "unknown key");
      it->second(config, reader, section, key, value.data());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.string());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  auto kv = [&out](const char* key, const std::string& value) { out << key << " = " << value << '\n'; };
  auto real = [&](const char* key, double v) { kv(key, format_double(v)); };
  auto count = [&](const char* key, std::uint64_t v) { kv(key, std::to_string(v)); };

  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), c.preset) != names.end()) {
    kv("preset", c.preset);
    out << '\n';
  }
  out << "[domain]\n";
  if (const auto* rect = std::get_if<RectangleDomain>(&c.domain)) {
    kv("type", "rectangle");
    real("length", rect->length);
    real("height", rect->height);
    real("final_time", rect->final_time);
    real("time_step", rect->time_step);
  } else {
    const auto& semi = std::get<SemiCircularDomain>(c.domain);
    kv("type", "semicircle");
    real("cross_radius", semi.cross_radius);
    real("curvature_radius", semi.curvature_radius);
    real("final_time", semi.final_time);
    real("time_step", semi.time_step);
    real("stenosis_amplitude", semi.stenosis_amplitude);
    real("stenosis_width", semi.stenosis_width);
    real("stenosis_center", semi.stenosis_center);
  }
  out << "\n[flow]\n";
  real("density", c.flow.density);
  real("viscosity", c.flow.viscosity);
  real("u_max", c.flow.u_max);

  out << "\n[network]\n";
  count("hidden_layers", static_cast<std::uint64_t>(c.hidden_layers));
  count("width", static_cast<std::uint64_t>(c.width));

  const TrainingSchedule& s = c.schedule;
  out << "\n[training]\n";
  kv("variant", std::string(to_string(c.variant)));
  kv("residual_form", std::string(to_string(c.residual_form)));
  count("seed", c.seed);
  real("beta", c.weights.beta);
  count("total_points", c.counts.total);
  count("wall_points", c.counts.boundary);
  count("inlet_outlet_points", c.counts.inlet_outlet);
  count("initial_points", c.counts.initial);
  count("batch_size", c.batch_size);
  count("adam_iterations", s.adam_iterations);
  real("learning_rate", s.adam.learning_rate);
  real("adam_beta1", s.adam.beta1);
  real("adam_beta2", s.adam.beta2);
  real("adam_epsilon", s.adam.epsilon);
  count("lbfgs_max_iterations", s.lbfgs_max_iterations);
  count("lbfgs_memory", s.lbfgs_memory);
  count("line_search_max_evaluations", s.line_search.max_iterations);
  real("wolfe_delta", s.line_search.wolfe_delta);
  real("wolfe_sigma", s.line_search.wolfe_sigma);
  real("line_search_epsilon", s.line_search.epsilon);
  real("line_search_theta", s.line_search.theta);
  real("line_search_gamma", s.line_search.gamma);
  real("line_search_expansion", s.line_search.expansion);
  real("line_search_psi0", s.line_search.psi0);
  real("line_search_max_step", s.line_search.max_step);
  real("gradient_tolerance", s.gradient_tolerance);
  real("relative_loss_tolerance", s.relative_loss_tolerance);
  count("plateau_window", s.plateau_window);

  out << "\n[decomposition]\n";
  count("subdomains", c.subdomains);
  count("interface_points", c.interface_points);
  real("gamma", c.weights.gamma);
  real("delta", c.weights.delta);

  out << "\n[output]\n";
  count("prediction_total_points", c.prediction.counts.total);
  count("prediction_wall_points", c.prediction.counts.boundary);
  count("prediction_inlet_outlet_points", c.prediction.counts.inlet_outlet);
  count("prediction_initial_points", c.prediction.counts.initial);
  std::string times;
  for (double t : c.prediction.snapshot_times) times += (times.empty() ? "" : ", ") + format_double(t);
  kv("snapshot_times", times);
  return out.str();
}

}  // namespace pinnflow
