#include "cris/persistence.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "serde.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint archives assume a little-endian host");

namespace cris {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'C', 'R', 'I', 'S', 'C', 'K', 'P', 'T'};
constexpr std::size_t kDigestChars = 64;  // ascii hex sha256 trailer

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default:
      throw InvalidArgument("invalid-config",
                            "unsupported tensor dtype in checkpoint: " +
                                std::string(c10::toString(t)));
  }
}

torch::ScalarType dtype_from_name(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  if (s == "i64") return torch::kInt64;
  throw IntegrityError("unknown tensor dtype '" + s + "' in checkpoint");
}

template <typename T>
void append_le(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_le(const std::string& bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

std::vector<std::pair<std::string, torch::Tensor>> named_with_prefix(
    const torch::nn::Module& m, const std::string& prefix) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters(/*recurse=*/true)) {
    out.emplace_back(prefix + p.key(), p.value());
  }
  return out;
}

}  // namespace

std::map<std::string, torch::Tensor> CheckpointData::tensor_map() const {
  std::map<std::string, torch::Tensor> map;
  for (const auto& [name, t] : tensors) map.emplace(name, t);
  return map;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("digest-error", "sha256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(static_cast<std::size_t>(len) * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xF];
  }
  return out;
}

void atomic_write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("io-error", "cannot open " + tmp.string() + " for write");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw IoError("io-error", "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("io-error",
                  "rename to " + path.string() + " failed: " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("missing-file", "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void save_checkpoint(const CheckpointData& data, const fs::path& path) {
  nlohmann::json header;
  header["epoch"] = data.epoch;
  header["manifest_hash"] = data.manifest_hash;
  header["config"] = data.config_json.empty()
                         ? nlohmann::json()
                         : nlohmann::json::parse(data.config_json);
  auto& tensor_list = header["tensors"] = nlohmann::json::array();

  std::string payload;
  std::vector<torch::Tensor> prepared;
  prepared.reserve(data.tensors.size());
  for (const auto& [name, t] : data.tensors) {
    auto cpu = t.detach().to(torch::kCPU).contiguous();
    tensor_list.push_back({{"name", name},
                           {"dtype", dtype_name(cpu.scalar_type())},
                           {"shape", cpu.sizes().vec()}});
    payload.append(static_cast<const char*>(cpu.const_data_ptr()),
                   cpu.nbytes());
    prepared.push_back(std::move(cpu));
  }

  const std::string header_str = header.dump();
  std::string bytes;
  bytes.reserve(8 + 4 + 8 + header_str.size() + payload.size() + kDigestChars);
  bytes.append(kMagic, sizeof(kMagic));
  append_le<std::uint32_t>(bytes, kCheckpointVersion);
  append_le<std::uint64_t>(bytes, header_str.size());
  bytes += header_str;
  bytes += payload;
  bytes += sha256_hex(bytes);

  atomic_write_file(path, bytes);
  // Verify-after-write: re-read and check the digest before declaring success.
  const auto reread = read_file(path);
  if (reread.size() != bytes.size() ||
      sha256_hex(std::string_view(reread).substr(0, reread.size() - kDigestChars)) !=
          reread.substr(reread.size() - kDigestChars)) {
    throw IntegrityError("verify-after-write failed for " + path.string());
  }
}

CheckpointData load_checkpoint(const fs::path& path) {
  const auto bytes = read_file(path);
  constexpr std::size_t kMinSize = 8 + 4 + 8 + kDigestChars;
  if (bytes.size() < kMinSize) {
    throw IntegrityError("checkpoint " + path.string() +
                         " is empty or truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError(path.string() + " is not a checkpoint archive");
  }
  const auto version = read_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto body = std::string_view(bytes).substr(0, bytes.size() - kDigestChars);
  const auto stored_digest = bytes.substr(bytes.size() - kDigestChars);
  if (sha256_hex(body) != stored_digest) {
    throw IntegrityError("digest mismatch in " + path.string());
  }

  const auto header_len = read_le<std::uint64_t>(bytes, 12);
  const std::size_t header_begin = 20;
  if (header_begin + header_len > body.size()) {
    throw IntegrityError("corrupt header length in " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(body.substr(header_begin, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("corrupt checkpoint header: " + std::string(e.what()));
  }

  CheckpointData data;
  data.epoch = header.at("epoch").get<std::int64_t>();
  data.manifest_hash = header.value("manifest_hash", "");
  data.config_json =
      header.at("config").is_null() ? "" : header.at("config").dump();

  std::size_t offset = header_begin + header_len;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto dtype = dtype_from_name(entry.at("dtype").get<std::string>());
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, dtype);
    const auto nbytes = t.nbytes();
    if (offset + nbytes > body.size()) {
      throw IntegrityError("payload truncated in " + path.string());
    }
    std::memcpy(t.data_ptr(), bytes.data() + offset, nbytes);
    offset += nbytes;
    data.tensors.emplace_back(name, std::move(t));
  }
  if (offset != body.size()) {
    throw IntegrityError("trailing bytes in " + path.string());
  }
  return data;
}

void capture_module_state(const torch::nn::Module& m, CheckpointData& out) {
  for (const auto& p : m.named_parameters(/*recurse=*/true)) {
    out.tensors.emplace_back("param/" + p.key(), p.value().detach().clone());
  }
  for (const auto& b : m.named_buffers(/*recurse=*/true)) {
    out.tensors.emplace_back("buffer/" + b.key(), b.value().detach().clone());
  }
}

void restore_module_state(torch::nn::Module& m,
                          const std::map<std::string, torch::Tensor>& tensors) {
  torch::NoGradGuard no_grad;
  std::size_t used = 0;
  auto restore_one = [&](const std::string& key, torch::Tensor target) {
    const auto it = tensors.find(key);
    if (it == tensors.end()) {
      throw ConfigMismatchError("checkpoint lacks tensor '" + key + "'");
    }
    if (it->second.sizes() != target.sizes()) {
      throw ConfigMismatchError("tensor '" + key + "' has shape " +
                                c10::str(it->second.sizes()) +
                                " but the model expects " +
                                c10::str(target.sizes()));
    }
    target.copy_(it->second);
    ++used;
  };
  for (const auto& p : m.named_parameters(/*recurse=*/true)) {
    restore_one("param/" + p.key(), p.value());
  }
  for (const auto& b : m.named_buffers(/*recurse=*/true)) {
    restore_one("buffer/" + b.key(), b.value());
  }
  std::size_t present = 0;
  for (const auto& [name, t] : tensors) {
    present += name.starts_with("param/") || name.starts_with("buffer/");
  }
  if (present != used) {
    throw ConfigMismatchError(
        "checkpoint carries tensors the model does not have");
  }
}

void capture_adam_state(
    const torch::optim::Adam& opt,
    const std::vector<std::pair<std::string, torch::Tensor>>& named_params,
    const std::string& prefix, CheckpointData& out) {
  const auto& state = opt.state();
  for (const auto& [name, param] : named_params) {
    const auto it = state.find(param.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
    out.tensors.emplace_back(prefix + "/m/" + name,
                             st.exp_avg().detach().clone());
    out.tensors.emplace_back(prefix + "/v/" + name,
                             st.exp_avg_sq().detach().clone());
    out.tensors.emplace_back(prefix + "/step/" + name,
                             torch::tensor(st.step(), torch::kInt64));
  }
}

void restore_adam_state(
    torch::optim::Adam& opt,
    const std::vector<std::pair<std::string, torch::Tensor>>& named_params,
    const std::string& prefix,
    const std::map<std::string, torch::Tensor>& tensors) {
  for (const auto& [name, param] : named_params) {
    const auto m = tensors.find(prefix + "/m/" + name);
    const auto v = tensors.find(prefix + "/v/" + name);
    const auto step = tensors.find(prefix + "/step/" + name);
    if (m == tensors.end() || v == tensors.end() || step == tensors.end()) {
      continue;  // parameter was never stepped before the snapshot
    }
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(step->second.item<std::int64_t>());
    st->exp_avg(m->second.clone());
    st->exp_avg_sq(v->second.clone());
    opt.state()[param.unsafeGetTensorImpl()] = std::move(st);
  }
}

namespace {

std::string manifest_body(const std::vector<ManifestEntry>& entries) {
  std::string body;
  for (const auto& e : entries) {
    body += e.stem;
    body += ',';
    body += e.split;
    body += '\n';
  }
  return body;
}

}  // namespace

std::string manifest_hash(const std::vector<ManifestEntry>& entries) {
  return sha256_hex(manifest_body(entries));
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const fs::path& path) {
  const auto body = manifest_body(entries);
  atomic_write_file(path, body + "#sha256=" + sha256_hex(body) + "\n");
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const auto content = read_file(path);
  std::vector<ManifestEntry> entries;
  std::string body;
  std::string digest;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with("#sha256=")) {
      digest = line.substr(8);
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw IntegrityError("malformed manifest line: '" + line + "'");
    }
    entries.push_back({line.substr(0, comma), line.substr(comma + 1)});
    body += line;
    body += '\n';
  }
  if (digest.empty() || sha256_hex(body) != digest) {
    throw IntegrityError("manifest digest mismatch in " + path.string());
  }
  return entries;
}

void verify_manifest(const fs::path& path,
                     const std::vector<ManifestEntry>& entries) {
  const auto stored = read_manifest(path);
  const bool equal =
      stored.size() == entries.size() &&
      std::equal(stored.begin(), stored.end(), entries.begin(),
                 [](const auto& a, const auto& b) {
                   return a.stem == b.stem && a.split == b.split;
                 });
  if (!equal) {
    throw Error("manifest-mismatch",
                "split assignment differs from the manifest at " +
                    path.string());
  }
}

namespace {

std::string csv_preamble(const std::string& manifest_hex) {
  std::string line = "# cris-csv v1";
  if (!manifest_hex.empty()) line += " manifest=" + manifest_hex;
  return line + "\n";
}

std::vector<std::string> data_lines(const std::string& content) {
  std::vector<std::string> lines;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() != '#') lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = line.find(',', pos);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return fields;
}

double parse_double(const std::string& s) {
  double value = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc{}) {
    throw IntegrityError("malformed number '" + s + "' in CSV");
  }
  return value;
}

}  // namespace

void write_history_csv(const TrainHistory& history, const fs::path& path,
                       const std::string& manifest_hex) {
  std::string out = csv_preamble(manifest_hex);
  out += "epoch,active_loss,train_loss,val_dice,val_mse\n";
  for (const auto& r : history.epochs) {
    out += std::to_string(r.epoch) + "," + r.active_loss + "," +
           format_double(r.train_loss) + "," + format_double(r.val_dice) +
           "," + format_double(r.val_mse) + "\n";
  }
  atomic_write_file(path, out);
}

TrainHistory read_history_csv(const fs::path& path) {
  TrainHistory history;
  const auto lines = data_lines(read_file(path));
  for (std::size_t i = 1; i < lines.size(); ++i) {  // skip column header
    const auto f = split_csv(lines[i]);
    if (f.size() != 5) {
      throw IntegrityError("malformed history row: '" + lines[i] + "'");
    }
    EpochRecord r;
    r.epoch = std::stoll(f[0]);
    r.active_loss = f[1];
    r.train_loss = parse_double(f[2]);
    r.val_dice = parse_double(f[3]);
    r.val_mse = parse_double(f[4]);
    history.epochs.push_back(std::move(r));
  }
  return history;
}

void write_report_csv(const std::string& model, const std::string& dataset,
                      const std::string& strategy, const EvalReport& report,
                      const fs::path& path, const std::string& manifest_hex) {
  std::string out = csv_preamble(manifest_hex);
  out += "model,dataset,strategy,dice,mse,best_threshold\n";
  out += model + "," + dataset + "," + strategy + "," +
         format_double(report.dice) + "," + format_double(report.mse) + "," +
         format_double(report.best_threshold) + "\n";
  atomic_write_file(path, out);
}

void write_pr_csv(const std::vector<PRPoint>& curve, const fs::path& path,
                  const std::string& manifest_hex) {
  std::string out = csv_preamble(manifest_hex);
  out += "threshold,precision,recall\n";
  for (const auto& p : curve) {
    out += format_double(p.threshold) + "," + format_double(p.precision) +
           "," + format_double(p.recall) + "\n";
  }
  atomic_write_file(path, out);
}

std::vector<PRPoint> read_pr_csv(const fs::path& path) {
  std::vector<PRPoint> curve;
  const auto lines = data_lines(read_file(path));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv(lines[i]);
    if (f.size() != 3) {
      throw IntegrityError("malformed PR row: '" + lines[i] + "'");
    }
    curve.push_back({parse_double(f[0]), parse_double(f[1]), parse_double(f[2])});
  }
  return curve;
}

void write_report_json(const std::string& model, const std::string& dataset,
                       const std::string& strategy, const EvalReport& report,
                       const std::string& manifest_hex, const fs::path& path) {
  nlohmann::json j;
  j["format"] = kCheckpointVersion;
  j["model"] = model;
  j["dataset"] = dataset;
  j["strategy"] = strategy;
  j["dice"] = report.dice;
  j["mse"] = report.mse;
  j["best_threshold"] = report.best_threshold;
  j["per_image_dice"] = report.per_image_dice;
  j["manifest_hash"] = manifest_hex;
  atomic_write_file(path, j.dump(2) + "\n");
}

void Trainer::save(const fs::path& path) const {
  CheckpointData data;
  data.epoch = next_epoch_;
  data.manifest_hash = manifest_hash_;

  nlohmann::json cfg;
  cfg["format"] = kCheckpointVersion;
  cfg["train"] = cfg_;
  cfg["backbone"] = backbone_config();
  if (full_ && full_->refinement()) {
    cfg["refinement"] = full_->refinement()->config();
  } else {
    cfg["refinement"] = nullptr;
  }
  cfg["best_val_dice"] = best_val_dice_;
  data.config_json = cfg.dump();

  capture_module_state(trained_module(), data);
  if (full_) {
    capture_adam_state(*opt_.backbone,
                       named_with_prefix(*full_->backbone(), "backbone."),
                       "adam/backbone", data);
    if (opt_.head) {
      capture_adam_state(*opt_.head,
                         named_with_prefix(*full_->head_module(), "refine."),
                         "adam/head", data);
    }
  } else {
    capture_adam_state(*opt_.backbone, named_with_prefix(*bare_, ""),
                       "adam/backbone", data);
  }
  save_checkpoint(data, path);
}

void Trainer::apply_checkpoint(const CheckpointData& data) {
  const auto cfg = nlohmann::json::parse(data.config_json);
  const auto map = data.tensor_map();
  std::map<std::string, torch::Tensor> module_state;
  for (const auto& [name, t] : map) {
    if (name.starts_with("param/") || name.starts_with("buffer/")) {
      module_state.emplace(name, t);
    }
  }
  restore_module_state(trained_module(), module_state);
  if (full_) {
    restore_adam_state(*opt_.backbone,
                       named_with_prefix(*full_->backbone(), "backbone."),
                       "adam/backbone", map);
    if (opt_.head) {
      restore_adam_state(*opt_.head,
                         named_with_prefix(*full_->head_module(), "refine."),
                         "adam/head", map);
    }
  } else {
    restore_adam_state(*opt_.backbone, named_with_prefix(*bare_, ""),
                       "adam/backbone", map);
  }
  next_epoch_ = data.epoch;
  best_val_dice_ = cfg.value("best_val_dice", -1.0);
  manifest_hash_ = data.manifest_hash;
}

Trainer Trainer::load(const fs::path& path) {
  const auto data = load_checkpoint(path);
  const auto cfg = nlohmann::json::parse(data.config_json);
  const auto tcfg = cfg.at("train").get<TrainConfig>();
  const auto bcfg = cfg.at("backbone").get<BackboneConfig>();

  auto trainer = [&] {
    if (tcfg.strategy == Strategy::kBackboneOnly) {
      return Trainer(build_backbone(bcfg), tcfg);
    }
    const auto rcfg = cfg.at("refinement").get<RefinementConfig>();
    return Trainer(compose(build_backbone(bcfg), build_refinement(rcfg)), tcfg);
  }();
  trainer.apply_checkpoint(data);
  return trainer;
}

void Trainer::restore(const fs::path& path) {
  const auto data = load_checkpoint(path);
  const auto cfg = nlohmann::json::parse(data.config_json);

  const auto stored_backbone = cfg.at("backbone").get<BackboneConfig>();
  if (!(stored_backbone == backbone_config())) {
    throw ConfigMismatchError("checkpoint backbone config does not match");
  }
  const bool has_refinement = full_ && full_->refinement();
  if (cfg.at("refinement").is_null() == has_refinement) {
    throw ConfigMismatchError("checkpoint refinement config does not match");
  }
  if (has_refinement) {
    const auto stored = cfg.at("refinement").get<RefinementConfig>();
    if (!(stored == full_->refinement()->config())) {
      throw ConfigMismatchError("checkpoint refinement config does not match");
    }
  }
  const auto stored_train = cfg.at("train").get<TrainConfig>();
  // Trajectory-defining fields must agree; epoch budget and checkpoint
  // plumbing may legitimately differ when resuming.
  if (stored_train.strategy != cfg_.strategy ||
      stored_train.batch_size != cfg_.batch_size ||
      stored_train.learning_rate != cfg_.learning_rate ||
      stored_train.adam_betas != cfg_.adam_betas ||
      stored_train.seed != cfg_.seed ||
      stored_train.baseline_loss != cfg_.baseline_loss) {
    throw ConfigMismatchError("checkpoint training config does not match");
  }
  apply_checkpoint(data);
}

}  // namespace cris
