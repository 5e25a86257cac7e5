#pragma once

// CSV emission for loss histories, fields, residuals and point sets, and the
// JSON run manifest.

#include "pinnflow/trainer.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pinnflow {

inline constexpr std::string_view kVersion = "0.1.0";

inline constexpr std::string_view kLossHistoryHeader = "iter,phase,loss_g,loss_bc_ic,loss_interface,loss_flux,total,alpha";
inline constexpr std::string_view kFieldHeader = "x,y,t,u,v,p,magnitude";
inline constexpr std::string_view kResidualHeader = "x,y,t,R_u,R_v,R_p,R_s11,R_s12,R_s22";
inline constexpr std::string_view kPointsHeader = "x,y,t,target_u,target_v,target_p";

void write_loss_history(std::ostream& out, std::span<const LossRecord> history);

/// Throws evaluation_overflow (before writing anything) if a value is not finite.
void write_field_csv(std::ostream& out, const FieldSnapshot& snapshot);
void write_residual_csv(std::ostream& out, std::span<const SpaceTimePoint> points,
                        std::span<const GoverningResiduals> residuals);

/// Missing targets are left empty.
void write_points_csv(std::ostream& out, std::span<const TargetPoint> points);
void write_points_csv(std::ostream& out, std::span<const SpaceTimePoint> points);

/// "field_t0.25.csv"
std::string snapshot_file_name(double time);

/// Writes a text file, creating parent directories; throws io on failure.
void write_file(const std::filesystem::path& path, const std::string& contents);

/// Checkpoints named network_<i>.ckpt.
void save_networks(const std::filesystem::path& dir, std::span<const NetworkParams> networks);
/// Loads network_0.ckpt, network_1.ckpt, ... until the next index is missing.
std::vector<NetworkParams> load_networks(const std::filesystem::path& dir);

struct ManifestFile {
  std::string path;  ///< relative to the output directory
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::string config;  ///< serialized configuration
  std::uint64_t seed = 0;
  std::string version{kVersion};
  std::string started;
  std::string finished;
  std::vector<ManifestFile> files;
};

std::string iso_timestamp(std::chrono::system_clock::time_point when);

/// Lists every regular file under dir (except the manifest itself) and
/// writes dir/manifest.json.
RunManifest write_manifest(const std::filesystem::path& dir, RunManifest manifest);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace pinnflow
