#include "pinnflow/output.hpp"

#include "pinnflow/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

namespace pinnflow {

namespace {

std::string num(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string optional_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

void write_point_row(std::ostream& out, const SpaceTimePoint& p) {
  out << num(p.x) << ',' << num(p.y) << ',' << num(p.t);
}

}  // namespace

void write_loss_history(std::ostream& out, std::span<const LossRecord> history) {
  out << kLossHistoryHeader << '\n';
  for (const LossRecord& r : history) {
    out << r.iteration << ',' << to_string(r.phase) << ',' << num(r.loss.loss_g) << ',' << num(r.loss.loss_bc_ic)
        << ',' << num(r.loss.loss_interface) << ',' << num(r.loss.loss_flux) << ',' << num(r.loss.total) << ','
        << optional_num(r.alpha) << '\n';
  }
}

void write_field_csv(std::ostream& out, const FieldSnapshot& snapshot) {
  for (const FieldRow& r : snapshot.rows) {
    if (!std::isfinite(r.u) || !std::isfinite(r.v) || !std::isfinite(r.p)) {
      fail(ErrorCode::evaluation_overflow, "non-finite field value at t = " + num(snapshot.time, "%g"));
    }
  }
  out << kFieldHeader << '\n';
  for (const FieldRow& r : snapshot.rows) {
    out << num(r.x) << ',' << num(r.y) << ',' << num(r.t) << ',' << num(r.u) << ',' << num(r.v) << ',' << num(r.p)
        << ',' << num(std::hypot(r.u, r.v)) << '\n';
  }
}

void write_residual_csv(std::ostream& out, std::span<const SpaceTimePoint> points,
                        std::span<const GoverningResiduals> residuals) {
  if (points.size() != residuals.size()) throw std::invalid_argument("write_residual_csv: size mismatch");
  out << kResidualHeader << '\n';
  for (std::size_t i = 0; i < points.size(); ++i) {
    const GoverningResiduals& r = residuals[i];
    write_point_row(out, points[i]);
    out << ',' << num(r.r_u) << ',' << num(r.r_v) << ',' << num(r.r_p) << ',' << num(r.r_s11) << ','
        << num(r.r_s12) << ',' << num(r.r_s22) << '\n';
  }
}

void write_points_csv(std::ostream& out, std::span<const TargetPoint> points) {
  out << kPointsHeader << '\n';
  for (const TargetPoint& p : points) {
    write_point_row(out, p.at);
    out << ',' << optional_num(p.u) << ',' << optional_num(p.v) << ',' << optional_num(p.p) << '\n';
  }
}

void write_points_csv(std::ostream& out, std::span<const SpaceTimePoint> points) {
  out << kPointsHeader << '\n';
  for (const SpaceTimePoint& p : points) {
    write_point_row(out, p);
    out << ",,,\n";
  }
}

std::string snapshot_file_name(double time) { return "field_t" + num(time, "%.6g") + ".csv"; }

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << contents;
  if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

void save_networks(const std::filesystem::path& dir, std::span<const NetworkParams> networks) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < networks.size(); ++i) {
    save_checkpoint(dir / ("network_" + std::to_string(i) + ".ckpt"), networks[i]);
  }
}

std::vector<NetworkParams> load_networks(const std::filesystem::path& dir) {
  std::vector<NetworkParams> nets;
  for (std::size_t i = 0;; ++i) {
    const auto path = dir / ("network_" + std::to_string(i) + ".ckpt");
    if (!std::filesystem::exists(path)) break;
    nets.push_back(load_checkpoint(path));
  }
  if (nets.empty()) fail(ErrorCode::io, "no network_0.ckpt in " + dir.string());
  return nets;
}

std::string iso_timestamp(std::chrono::system_clock::time_point when) {
  const std::time_t t = std::chrono::system_clock::to_time_t(when);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest write_manifest(const std::filesystem::path& dir, RunManifest manifest) {
  namespace fs = std::filesystem;
  const fs::path target = dir / "manifest.json";
  manifest.files.clear();
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path() == target) continue;
    manifest.files.push_back({fs::relative(entry.path(), dir).generic_string(), entry.file_size()});
  }
  std::sort(manifest.files.begin(), manifest.files.end(),
            [](const ManifestFile& a, const ManifestFile& b) { return a.path < b.path; });

  nlohmann::ordered_json j;
  j["command"] = manifest.command;
  j["version"] = manifest.version;
  j["seed"] = manifest.seed;
  j["started"] = manifest.started;
  j["finished"] = manifest.finished;
  j["config"] = manifest.config;
  j["files"] = nlohmann::json::array();
  for (const ManifestFile& f : manifest.files) j["files"].push_back({{"path", f.path}, {"bytes", f.bytes}});
  write_file(target, j.dump(2) + "\n");
  return manifest;
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    m.config = j.at("config").get<std::string>();
    for (const auto& f : j.at("files")) {
      m.files.push_back({f.at("path").get<std::string>(), f.at("bytes").get<std::uintmax_t>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

}  // namespace pinnflow
