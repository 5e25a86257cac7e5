#include "cli.hpp"

#include "pinnflow/config.hpp"
#include "pinnflow/output.hpp"
#include "pinnflow/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <variant>

namespace pinnflow::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::string preset;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool deterministic = false;
  bool quiet = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App& cmd, Common& c, bool out_required = true) {
  auto* cfg = cmd.add_option("--config", c.config_path, "Experiment file")->check(CLI::ExistingFile);
  cmd.add_option("--preset", c.preset, "Built-in experiment")->excludes(cfg);
  auto* out = cmd.add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
  c.seed_opt = cmd.add_option("--seed", c.seed, "Override the configured seed");
  c.threads_opt = cmd.add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd.add_flag("--deterministic", c.deterministic, "Single-threaded reference evaluation");
  cmd.add_flag("-q,--quiet", c.quiet, "No progress output");
}

std::optional<ExperimentConfig> config_from_flags(const Common& c) {
  std::optional<ExperimentConfig> cfg;
  if (!c.config_path.empty()) {
    cfg = parse_config(c.config_path);
  } else if (!c.preset.empty()) {
    cfg = preset_config(c.preset);
  } else {
    return std::nullopt;
  }
  if (c.seed_opt->count() > 0) cfg->seed = c.seed;
  cfg->validate();
  return cfg;
}

ExperimentConfig require_config(const Common& c) {
  auto cfg = config_from_flags(c);
  if (!cfg) throw UsageError("one of --config or --preset is required");
  return *cfg;
}

std::size_t resolve_threads(const Common& c) {
  if (c.deterministic) return 1;
  if (c.threads_opt->count() > 0) return c.threads;
  if (const char* env = std::getenv("PINNFLOW_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long n = std::strtoull(env, &end, 10);
    if (*end != '\0' || n == 0) throw UsageError(std::string("PINNFLOW_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) throw UsageError(what + ": empty entry in '" + text + "'");
    item = item.substr(first, item.find_last_not_of(" \t") - first + 1);
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (*end != '\0') throw UsageError(what + ": not a number: '" + item + "'");
    values.push_back(v);
  }
  if (values.empty()) throw UsageError(what + ": no values given");
  return values;
}

double domain_final_time(const Domain& domain) {
  return std::visit([](const auto& d) { return d.final_time; }, domain);
}

std::string render_history(std::span<const LossRecord> history) {
  std::ostringstream s;
  write_loss_history(s, history);
  return s.str();
}

nlohmann::ordered_json loss_json(const LossBreakdown& b) {
  nlohmann::ordered_json j;
  j["loss_g"] = b.loss_g;
  j["loss_bc_ic"] = b.loss_bc_ic;
  j["loss_interface"] = b.loss_interface;
  j["loss_flux"] = b.loss_flux;
  j["total"] = b.total;
  return j;
}

std::string render_summary(const TrainedModel& m) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(m.config.variant);
  j["subdomains"] = m.networks.size();
  j["initial_loss"] = loss_json(m.initial_loss);
  j["final_loss"] = loss_json(m.final_loss);
  j["initial_interface_jump"] = m.initial_interface_jump;
  j["final_interface_jump"] = m.final_interface_jump;
  j["adam_iterations"] = m.adam_iterations;
  j["lbfgs_iterations"] = m.lbfgs_iterations;
  j["iterations"] = m.iterations();
  j["termination"] = to_string(m.termination);
  j["seconds"] = m.seconds;
  j["min_stored_curvature"] = m.min_stored_curvature;
  return j.dump(2) + "\n";
}

void write_model_files(const fs::path& dir, const TrainedModel& model) {
  save_networks(dir, model.networks);
  write_file(dir / "loss_history.csv", render_history(model.history));
  write_file(dir / "summary.json", render_summary(model));
}

void finish_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                     std::chrono::system_clock::time_point started) {
  RunManifest m;
  m.command = command;
  m.config = serialize_config(cfg);
  m.seed = cfg.seed;
  m.started = iso_timestamp(started);
  m.finished = iso_timestamp(std::chrono::system_clock::now());
  write_manifest(dir, m);
}

TrainingObserver progress(std::ostream& err, bool quiet) {
  if (quiet) return {};
  return [&err](const LossRecord& r) {
    if (r.iteration % 100 != 0) return;
    err << "[" << to_string(r.phase) << "] iter " << r.iteration << "  loss " << r.loss.total << '\n';
  };
}

int cmd_train(const Common& c, const std::string& command, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = require_config(c);
  const RunOptions options{resolve_threads(c), progress(err, c.quiet)};
  const fs::path dir = c.out;
  const auto started = std::chrono::system_clock::now();

  TrainedModel model;
  try {
    model = train(cfg, options);
  } catch (const DivergenceError& e) {
    // Keep the last finite state so the run can be inspected.
    const auto layout = initial_networks(cfg);
    std::size_t size = 0;
    for (const auto& n : layout) size += n.parameter_count();
    if (static_cast<std::size_t>(e.last_finite().size()) == size) {
      save_networks(dir, split_parameters(e.last_finite(), layout));
    }
    write_file(dir / "loss_history.csv", render_history(e.history()));
    write_file(dir / "config.ini", serialize_config(cfg));
    write_file(dir / "diverged.txt", std::string(e.what()) + "\n");
    finish_manifest(dir, command, cfg, started);
    err << e.what() << '\n';
    return kDivergence;
  }

  write_model_files(dir, model);
  write_file(dir / "config.ini", serialize_config(cfg));
  finish_manifest(dir, command, cfg, started);
  out << to_string(cfg.variant) << " M=" << model.networks.size() << " initial loss " << model.initial_loss.total
      << " final loss " << model.final_loss.total << " iterations " << model.iterations() << " ("
      << to_string(model.termination) << ") " << model.seconds << " s\n";
  return kSuccess;
}

std::vector<NetworkParams> load_model_networks(const fs::path& dir) {
  try {
    return load_networks(dir);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse || e.code() == ErrorCode::invalid_architecture) {
      fail(ErrorCode::checkpoint_incompatible, e.what());
    }
    throw;
  }
}

int cmd_predict(const Common& c, const std::string& model_dir, const std::string& times_text, bool residuals,
                const std::string& command, std::ostream& out) {
  auto flagged = config_from_flags(c);
  ExperimentConfig cfg;
  if (flagged) {
    cfg = *flagged;
  } else {
    cfg = parse_config(fs::path(model_dir) / "config.ini");
    if (c.seed_opt->count() > 0) cfg.seed = c.seed;
  }

  const TrainedModel model = model_from_networks(cfg, load_model_networks(model_dir));

  std::vector<double> times;
  if (!times_text.empty()) {
    times = parse_list(times_text, "--times");
  } else if (!cfg.prediction.snapshot_times.empty()) {
    times = cfg.prediction.snapshot_times;
  } else {
    times = default_snapshot_times(cfg.domain);
  }
  const double T = domain_final_time(cfg.domain);
  for (double t : times) {
    if (!(t >= 0.0 && t <= T)) {
      throw UsageError("snapshot time " + std::to_string(t) + " is outside [0, " + std::to_string(T) + "]");
    }
  }

  const auto started = std::chrono::system_clock::now();
  const std::vector<Vec2> grid = prediction_grid(build_prediction_set(cfg));
  const auto snapshots = predict_fields(model, grid, times);

  // Render everything first so a non-finite value leaves no partial output.
  std::vector<std::pair<std::string, std::string>> files;
  for (const FieldSnapshot& s : snapshots) {
    std::ostringstream body;
    write_field_csv(body, s);
    files.emplace_back(snapshot_file_name(s.time), body.str());
  }
  if (residuals) {
    for (double t : times) {
      std::vector<SpaceTimePoint> pts;
      pts.reserve(grid.size());
      for (const Vec2& q : grid) pts.push_back({q.x, q.y, t});
      std::ostringstream body;
      const auto r = residual_fields(model, pts);
      write_residual_csv(body, pts, r);
      std::string name = snapshot_file_name(t);
      name.replace(0, 5, "residual");
      files.emplace_back(name, body.str());
    }
  }

  const fs::path dir = c.out;
  for (const auto& [name, body] : files) write_file(dir / name, body);
  finish_manifest(dir, command, cfg, started);
  out << "wrote " << snapshots.size() << " snapshots of " << grid.size() << " points to " << dir.string() << '\n';
  return kSuccess;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& axes, const std::vector<std::string>& values,
              const std::string& command, std::ostream& out, std::ostream& err) {
  if (axes.empty()) throw UsageError("sweep needs at least one --axis");
  if (axes.size() != values.size()) throw UsageError("every --axis needs exactly one --values list");
  std::vector<SweepDimension> dims;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    dims.push_back({parse_sweep_axis(axes[i]), parse_list(values[i], "--values for " + axes[i])});
  }

  const ExperimentConfig cfg = require_config(c);
  const RunOptions options{resolve_threads(c), {}};
  const fs::path dir = c.out;
  const auto started = std::chrono::system_clock::now();

  const SweepCallback record = [&](std::size_t run, const ExperimentConfig& run_cfg, const TrainedModel* model,
                                   const std::string* failure) {
    const fs::path run_dir = dir / ("run_" + std::to_string(run));
    write_file(run_dir / "config.ini", serialize_config(run_cfg));
    if (model != nullptr) {
      write_model_files(run_dir, *model);
      if (!c.quiet) err << "run " << run << ": final loss " << model->final_loss.total << '\n';
    } else {
      write_file(run_dir / "failure.txt", *failure + "\n");
      if (!c.quiet) err << "run " << run << " failed: " << *failure << '\n';
    }
  };
  const auto rows = run_sweep(cfg, dims, options, record);

  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_file(dir / "sweep.csv", csv.str());
  const std::string table = format_sweep_table(rows, dims);
  write_file(dir / "sweep.txt", table);
  finish_manifest(dir, command, cfg, started);
  out << table;

  const bool any_ok = std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.ok(); });
  return any_ok ? kSuccess : kFailure;
}

int cmd_export(const Common& c, const std::string& command, std::ostream& out) {
  const ExperimentConfig cfg = require_config(c);
  const fs::path dir = c.out;
  const auto started = std::chrono::system_clock::now();
  const CollocationSet set = build_collocation(cfg);
  const auto specs = build_subdomains(cfg);

  auto render = [](const auto& points) {
    std::ostringstream s;
    write_points_csv(s, std::span(points));
    return s.str();
  };
  write_file(dir / "interior.csv", render(set.interior));
  write_file(dir / "boundary.csv", render(set.boundary));
  write_file(dir / "initial.csv", render(set.initial));

  std::ostringstream partition;
  partition << "subdomain,lo,hi,interior,boundary,initial\n";
  for (const SubdomainSpec& s : specs) {
    partition << s.index << ',' << s.region.lo << ',' << s.region.hi << ',' << s.collocation.interior.size() << ','
              << s.collocation.boundary.size() << ',' << s.collocation.initial.size() << '\n';
    for (const InterfaceLink& link : s.interfaces) {
      if (link.neighbor < s.index) continue;
      write_file(dir / ("interface_" + std::to_string(s.index) + "_" + std::to_string(link.neighbor) + ".csv"),
                 render(link.points));
    }
  }
  write_file(dir / "partition.csv", partition.str());
  finish_manifest(dir, command, cfg, started);
  out << "exported " << set.total() << " collocation points over " << specs.size() << " subdomains to "
      << dir.string() << '\n';
  return kSuccess;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::configuration:
    case ErrorCode::parse:
      return kUsage;
    case ErrorCode::divergence:
      return kDivergence;
    case ErrorCode::checkpoint_incompatible:
      return kCheckpointIncompatible;
    default:
      return kFailure;
  }
}

std::string join(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) {
    if (!s.empty()) s += ' ';
    s += a;
  }
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Physics-informed neural network solver for 2D incompressible flow"};
  app.name(args.empty() ? "pinnflow" : fs::path(args[0]).filename().string());
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common train_opts, predict_opts, sweep_opts, export_opts;
  auto* train_cmd = app.add_subcommand("train", "Train the networks of one experiment");
  add_common(*train_cmd, train_opts);

  auto* predict_cmd = app.add_subcommand("predict", "Evaluate a trained model on the prediction grid");
  add_common(*predict_cmd, predict_opts);
  std::string model_dir, times_text;
  bool residuals = false;
  predict_cmd->add_option("--model", model_dir, "Directory written by train")->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--times", times_text, "Comma-separated snapshot times");
  predict_cmd->add_flag("--residuals", residuals, "Also write governing residual fields");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train over a grid of weights or subdomain counts");
  add_common(*sweep_cmd, sweep_opts);
  std::vector<std::string> axes, values;
  sweep_cmd->add_option("--axis", axes, "subdomains (or M), beta, gamma, delta; repeatable")->take_all();
  sweep_cmd->add_option("--values", values, "Comma-separated values, one list per --axis")->take_all();

  auto* export_cmd = app.add_subcommand("export-points", "Write the collocation and interface point sets");
  add_common(*export_cmd, export_opts);

  std::vector<const char*> argv;
  argv.push_back(args.empty() ? "pinnflow" : args[0].c_str());
  for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  const std::string command = join(args);
  try {
    if (train_cmd->parsed()) return cmd_train(train_opts, command, out, err);
    if (predict_cmd->parsed()) return cmd_predict(predict_opts, model_dir, times_text, residuals, command, out);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_opts, axes, values, command, out, err);
    if (export_cmd->parsed()) return cmd_export(export_opts, command, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace pinnflow::cli
