#pragma once

#include <torch/optim/adam.h>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cris/data.hpp"
#include "cris/metrics.hpp"
#include "cris/training.hpp"

namespace cris {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// In-memory image of a checkpoint archive: an opaque config blob, the
/// completed-epoch count, an optional split-manifest hash and the named
/// arrays (parameters, buffers, optimizer moments) in serialization order.
struct CheckpointData {
  std::string config_json;
  std::int64_t epoch = 0;
  std::string manifest_hash;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  std::map<std::string, torch::Tensor> tensor_map() const;
};

/// Single-file archive with a trailing SHA-256 digest; written atomically
/// (temp file + rename) and verified by re-reading after the write. The
/// byte layout is documented in docs/formats.md.
void save_checkpoint(const CheckpointData& data,
                     const std::filesystem::path& path);
CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Snapshots every parameter and buffer of `m` as "param/<name>" and
/// "buffer/<name>" entries (values cloned).
void capture_module_state(const torch::nn::Module& m, CheckpointData& out);
void restore_module_state(torch::nn::Module& m,
                          const std::map<std::string, torch::Tensor>& tensors);

/// Adam moments for the given (name, parameter) list under
/// "<prefix>/{m,v,step}/<name>". Parameters the optimizer has not stepped
/// yet have no entries and are left untouched on restore.
void capture_adam_state(
    const torch::optim::Adam& opt,
    const std::vector<std::pair<std::string, torch::Tensor>>& named_params,
    const std::string& prefix, CheckpointData& out);
void restore_adam_state(
    torch::optim::Adam& opt,
    const std::vector<std::pair<std::string, torch::Tensor>>& named_params,
    const std::string& prefix, const std::map<std::string, torch::Tensor>& tensors);

/// Split manifest: "stem,split" lines plus a trailing digest line.
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
/// Hash over the manifest body; the identity carried by reports/checkpoints.
std::string manifest_hash(const std::vector<ManifestEntry>& entries);
/// Throws Error("manifest-mismatch") when the file disagrees with `entries`.
void verify_manifest(const std::filesystem::path& path,
                     const std::vector<ManifestEntry>& entries);

/// CSV emitters. Floats are printed in shortest round-trip form. Every file
/// starts with a "# cris-csv v1 [manifest=<hex>]" comment carrying the
/// format version and, when available, the split-manifest hash.
void write_history_csv(const TrainHistory& history,
                       const std::filesystem::path& path,
                       const std::string& manifest_hex = "");
TrainHistory read_history_csv(const std::filesystem::path& path);
void write_report_csv(const std::string& model, const std::string& dataset,
                      const std::string& strategy, const EvalReport& report,
                      const std::filesystem::path& path,
                      const std::string& manifest_hex = "");
void write_pr_csv(const std::vector<PRPoint>& curve,
                  const std::filesystem::path& path,
                  const std::string& manifest_hex = "");
std::vector<PRPoint> read_pr_csv(const std::filesystem::path& path);

/// Full evaluation bundle as JSON (scalars, per-image DICE, labels,
/// manifest hash).
void write_report_json(const std::string& model, const std::string& dataset,
                       const std::string& strategy, const EvalReport& report,
                       const std::string& manifest_hex,
                       const std::filesystem::path& path);

std::string format_double(double v);
std::string sha256_hex(std::string_view bytes);
void atomic_write_file(const std::filesystem::path& path,
                       std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace cris
