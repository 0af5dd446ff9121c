#pragma once

#include "splatstyle/config.hpp"
#include "splatstyle/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace splatstyle {

inline constexpr const char* kToolVersion = "0.1.0";

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Exclusive lock on an output directory (a `.lock` file created with
/// O_EXCL); released on destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct RunOptions {
  /// Overrides config.output when set.
  std::optional<std::filesystem::path> output;
  std::optional<std::uint64_t> seed;
  std::optional<int> snapshot_every;
};

/// Applies command-line overrides to a loaded config.
StylizeConfig apply_overrides(StylizeConfig config, const RunOptions& options);

/// Labels Gaussians, isolates style regions and writes the group manifest to
/// <out>/match.
void cmd_match(const StylizeConfig& config);

/// Color-matches every group, writes recolored views and transforms, then
/// retrains the scene against them (<out>/recolor).
void cmd_recolor(const StylizeConfig& config);

/// Runs the stylization stage (<out>/stylize).
void cmd_stylize(const StylizeConfig& config);

/// Renders every camera to view_XX.png, depth_XX.png (16-bit) and
/// depth_XX.f32.
void cmd_render(const std::filesystem::path& scene, const std::filesystem::path& cameras,
                const std::filesystem::path& out_dir);

struct EvalResult {
  std::vector<std::string> views;
  std::vector<double> ssim;
  double mean_ssim = 0.0;
};

/// SSIM between same-ranked color PNGs of two folders (depth_* files are
/// ignored). Writes metrics JSON to `metrics_path` when given.
EvalResult cmd_eval(const std::filesystem::path& rendered_dir, const std::filesystem::path& reference_dir,
                    const std::optional<std::filesystem::path>& metrics_path = std::nullopt);

/// Writes toy assets and configs into `dir`.
void cmd_toy(const std::filesystem::path& dir, std::uint64_t seed);

/// Process exit code for an exception (0 is success).
int exit_code_for(const std::exception& e);

}  // namespace splatstyle
