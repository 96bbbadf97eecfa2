#include "unn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace unn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'U', 'N', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

json arch_json(const DenoiserConfig& c) {
  return json{{"base_filters", c.base_filters},
              {"down_stages", c.down_stages},
              {"up_stages", c.up_stages},
              {"dense_block_layers", c.dense_block_layers},
              {"se_reduction", c.se_reduction}};
}

DenoiserConfig denoiser_config_from(const json& j) {
  DenoiserConfig c;
  c.base_filters = j.at("base_filters").get<std::int64_t>();
  c.down_stages = j.at("down_stages").get<int>();
  c.up_stages = j.at("up_stages").get<int>();
  c.dense_block_layers = j.at("dense_block_layers").get<int>();
  c.se_reduction = j.at("se_reduction").get<std::int64_t>();
  return c;
}

json arch_json(const NoiseAwareConfig& c) {
  return json{{"filters", c.filters},
              {"fc_hidden", c.fc_hidden},
              {"slab_shape", {c.slab_shape[0], c.slab_shape[1], c.slab_shape[2]}}};
}

NoiseAwareConfig noise_aware_config_from(const json& j) {
  NoiseAwareConfig c;
  c.filters = j.at("filters").get<std::int64_t>();
  c.fc_hidden = j.at("fc_hidden").get<std::int64_t>();
  const auto& s = j.at("slab_shape");
  c.slab_shape = {s.at(0).get<std::int64_t>(), s.at(1).get<std::int64_t>(),
                  s.at(2).get<std::int64_t>()};
  return c;
}

json meta_json(const CheckpointMeta& m) {
  return json{{"stage", m.stage},
              {"count_level", m.count_level},
              {"step", m.step},
              {"val_metric", m.val_metric}};
}

CheckpointMeta meta_from(const json& j) {
  CheckpointMeta m;
  m.stage = j.at("stage").get<int>();
  m.count_level = j.at("count_level").get<double>();
  m.step = j.at("step").get<std::int64_t>();
  m.val_metric = j.at("val_metric").get<double>();
  return m;
}

json tensor_table(const NamedParams<float>& params) {
  json t = json::array();
  for (const auto& [name, tensor] : params)
    t.push_back(json{{"name", name}, {"shape", tensor.shape()}});
  return t;
}

std::int64_t total_count(const NamedParams<float>& params) {
  std::int64_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

void write_blob(std::ofstream& out, const float* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(float)));
}

void read_blob(std::ifstream& in, float* data, std::size_t n, const fs::path& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          "checkpoint " + path.string() + " is truncated");
}

void save_file(const fs::path& path, const json& header, const NamedParams<float>& params,
               const TrainState* ts) {
  json h = header;
  h["has_train_state"] = ts != nullptr;
  if (ts) {
    h["train_state"] = json{{"rng", ts->rng_state},
                            {"adam_step", ts->adam_step},
                            {"best_metric", ts->best_metric},
                            {"best_step", ts->best_step},
                            {"evals_since_best", ts->evals_since_best},
                            {"has_best", ts->has_best}};
  }
  const std::string hs = h.dump();

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointError::Kind::Io,
                                    "cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    std::uint64_t hsize = hs.size();
    out.write(reinterpret_cast<const char*>(&hsize), sizeof(hsize));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : params) write_blob(out, t.raw(), t.numel());
    if (ts) {
      if (ts->adam_m.size() != params.size() || ts->adam_v.size() != params.size())
        throw UsageError("checkpoint: train state does not match the parameter list");
      for (std::size_t i = 0; i < params.size(); ++i)
        write_blob(out, ts->adam_m[i].data(), ts->adam_m[i].size());
      for (std::size_t i = 0; i < params.size(); ++i)
        write_blob(out, ts->adam_v[i].data(), ts->adam_v[i].size());
    }
    if (!out) throw CheckpointError(CheckpointError::Kind::Io,
                                    "failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

json load_header(std::ifstream& in, const fs::path& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          "not a checkpoint file: " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (in.gcount() != sizeof(version))
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          "checkpoint " + path.string() + " is truncated");
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                          "checkpoint " + path.string() + " has format version " +
                              std::to_string(version) + ", expected " +
                              std::to_string(kVersion));
  std::uint64_t hsize = 0;
  in.read(reinterpret_cast<char*>(&hsize), sizeof(hsize));
  if (in.gcount() != sizeof(hsize) || hsize > (1ull << 30))
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          "checkpoint " + path.string() + " has a bad header size");
  std::string hs(hsize, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hsize));
  if (in.gcount() != static_cast<std::streamsize>(hsize))
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          "checkpoint " + path.string() + " is truncated");
  json h = json::parse(hs, nullptr, false);
  if (h.is_discarded())
    throw CheckpointError(CheckpointError::Kind::Corrupt,
                          "checkpoint " + path.string() + " has a malformed header");
  return h;
}

// Verifies the stored tensor table against a freshly built model of the same
// declared architecture.
void verify_fingerprint(const json& h, const NamedParams<float>& params,
                        const fs::path& path) {
  const json expected_table = tensor_table(params);
  if (h.at("tensors") != expected_table ||
      h.at("fingerprint").at("param_count").get<std::int64_t>() != total_count(params))
    throw CheckpointError(CheckpointError::Kind::FingerprintMismatch,
                          "checkpoint " + path.string() +
                              " does not match the declared architecture fingerprint");
}

void load_params_and_state(std::ifstream& in, const fs::path& path, const json& h,
                           NamedParams<float>& params, TrainState* ts) {
  for (auto& [name, t] : params) read_blob(in, t.raw(), t.numel(), path);
  const bool has_ts = h.value("has_train_state", false);
  if (ts) {
    if (!has_ts)
      throw CheckpointError(CheckpointError::Kind::Corrupt,
                            "checkpoint " + path.string() + " holds no training state");
    ts->adam_m.clear();
    ts->adam_v.clear();
    for (auto& [name, t] : params) ts->adam_m.emplace_back(t.numel());
    for (auto& [name, t] : params) ts->adam_v.emplace_back(t.numel());
    for (auto& blob : ts->adam_m) read_blob(in, blob.data(), blob.size(), path);
    for (auto& blob : ts->adam_v) read_blob(in, blob.data(), blob.size(), path);
    const json& tj = h.at("train_state");
    ts->rng_state = tj.at("rng").get<std::string>();
    ts->adam_step = tj.at("adam_step").get<std::int64_t>();
    ts->best_metric = tj.at("best_metric").get<double>();
    ts->best_step = tj.at("best_step").get<std::int64_t>();
    ts->evals_since_best = tj.at("evals_since_best").get<std::int64_t>();
    ts->has_best = tj.at("has_best").get<bool>();
  }
}

}  // namespace

void save_denoiser_checkpoint(const fs::path& path, const DenoiserModel<float>& model,
                              const CheckpointMeta& meta, const TrainState* ts) {
  const auto params = named_parameters(model);
  json h{{"kind", "denoiser"},
         {"arch", arch_json(model.cfg)},
         {"fingerprint", {{"param_count", total_count(params)}}},
         {"meta", meta_json(meta)},
         {"tensors", tensor_table(params)}};
  save_file(path, h, params, ts);
}

DenoiserModel<float> load_denoiser_checkpoint(const fs::path& path, CheckpointMeta* meta,
                                              TrainState* ts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io,
                                 "cannot open checkpoint " + path.string());
  json h = load_header(in, path);
  if (h.at("kind") != "denoiser")
    throw CheckpointError(CheckpointError::Kind::FingerprintMismatch,
                          "checkpoint " + path.string() + " is not a denoiser checkpoint");
  DenoiserConfig cfg = denoiser_config_from(h.at("arch"));
  Rng rng(0);
  DenoiserModel<float> model = make_denoiser<float>(cfg, rng);
  auto params = named_parameters(model);
  verify_fingerprint(h, params, path);
  load_params_and_state(in, path, h, params, ts);
  if (meta) *meta = meta_from(h.at("meta"));
  return model;
}

DenoiserConfig peek_denoiser_config(const fs::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io,
                                 "cannot open checkpoint " + path.string());
  json h = load_header(in, path);
  if (h.at("kind") != "denoiser")
    throw CheckpointError(CheckpointError::Kind::FingerprintMismatch,
                          "checkpoint " + path.string() + " is not a denoiser checkpoint");
  if (meta) *meta = meta_from(h.at("meta"));
  return denoiser_config_from(h.at("arch"));
}

DenoiserModel<float> load_denoiser_for_assembly(const fs::path& path,
                                                const DenoiserConfig& expected,
                                                double expected_level) {
  CheckpointMeta meta;
  DenoiserModel<float> m = load_denoiser_checkpoint(path, &meta);
  if (!(m.cfg == expected))
    throw CheckpointError(CheckpointError::Kind::FingerprintMismatch,
                          "checkpoint " + path.string() +
                              " was trained with a different denoiser architecture");
  if (std::abs(meta.count_level - expected_level) > 1e-9)
    throw CheckpointError(CheckpointError::Kind::FingerprintMismatch,
                          "checkpoint " + path.string() + " holds the " +
                              count_level_label(meta.count_level) + " model, expected " +
                              count_level_label(expected_level));
  return m;
}

void save_unn_checkpoint(const fs::path& path, const UnnModel<float>& model,
                         const CheckpointMeta& meta, const TrainState* ts) {
  const auto params = named_parameters(model);
  json h{{"kind", "unn"},
         {"arch",
          {{"denoiser", arch_json(model.denoisers[0].cfg)},
           {"gating", arch_json(model.gating.cfg)},
           {"fusion", {{"filters", model.fusion.cfg.filters}}},
           {"count_levels", kCountLevels}}},
         {"fingerprint", {{"param_count", total_count(params)}}},
         {"slab_shape",
          {model.gating.cfg.slab_shape[0], model.gating.cfg.slab_shape[1],
           model.gating.cfg.slab_shape[2]}},
         {"meta", meta_json(meta)},
         {"tensors", tensor_table(params)}};

  // Training state covers only the trainable (gating + fusion) parameters.
  if (!ts) {
    save_file(path, h, params, nullptr);
    return;
  }
  NamedParams<float> trainable;
  for (const auto& [name, t] : params)
    if (name.rfind("den", 0) != 0) trainable.emplace_back(name, t);
  json full = h;
  full["has_train_state"] = true;
  full["train_state"] = json{{"rng", ts->rng_state},
                             {"adam_step", ts->adam_step},
                             {"best_metric", ts->best_metric},
                             {"best_step", ts->best_step},
                             {"evals_since_best", ts->evals_since_best},
                             {"has_best", ts->has_best}};
  const std::string hs = full.dump();
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointError::Kind::Io,
                                    "cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    std::uint64_t hsize = hs.size();
    out.write(reinterpret_cast<const char*>(&hsize), sizeof(hsize));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : params) write_blob(out, t.raw(), t.numel());
    if (ts->adam_m.size() != trainable.size() || ts->adam_v.size() != trainable.size())
      throw UsageError("checkpoint: train state does not match the trainable parameters");
    for (std::size_t i = 0; i < trainable.size(); ++i)
      write_blob(out, ts->adam_m[i].data(), ts->adam_m[i].size());
    for (std::size_t i = 0; i < trainable.size(); ++i)
      write_blob(out, ts->adam_v[i].data(), ts->adam_v[i].size());
    if (!out) throw CheckpointError(CheckpointError::Kind::Io,
                                    "failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

UnnModel<float> load_unn_checkpoint(const fs::path& path, CheckpointMeta* meta,
                                    TrainState* ts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io,
                                 "cannot open checkpoint " + path.string());
  json h = load_header(in, path);
  if (h.at("kind") != "unn")
    throw CheckpointError(CheckpointError::Kind::FingerprintMismatch,
                          "checkpoint " + path.string() + " is not a full-model checkpoint");
  DenoiserConfig den_cfg = denoiser_config_from(h.at("arch").at("denoiser"));
  NoiseAwareConfig gate_cfg = noise_aware_config_from(h.at("arch").at("gating"));
  FusionConfig fus_cfg;
  fus_cfg.filters = h.at("arch").at("fusion").at("filters").get<std::int64_t>();

  Rng rng(0);
  UnnModel<float> model;
  for (int i = 0; i < kNumLevels; ++i) model.denoisers[i] = make_denoiser<float>(den_cfg, rng);
  model.gating = make_noise_aware<float>(gate_cfg, rng);
  model.fusion = make_fusion<float>(fus_cfg, rng);
  model.frozen_denoisers = true;

  auto params = named_parameters(model);
  verify_fingerprint(h, params, path);
  for (auto& [name, t] : params) read_blob(in, t.raw(), t.numel(), path);

  if (ts) {
    if (!h.value("has_train_state", false))
      throw CheckpointError(CheckpointError::Kind::Corrupt,
                            "checkpoint " + path.string() + " holds no training state");
    NamedParams<float> trainable;
    for (const auto& [name, t] : params)
      if (name.rfind("den", 0) != 0) trainable.emplace_back(name, t);
    ts->adam_m.clear();
    ts->adam_v.clear();
    for (auto& [name, t] : trainable) ts->adam_m.emplace_back(t.numel());
    for (auto& [name, t] : trainable) ts->adam_v.emplace_back(t.numel());
    for (auto& blob : ts->adam_m) read_blob(in, blob.data(), blob.size(), path);
    for (auto& blob : ts->adam_v) read_blob(in, blob.data(), blob.size(), path);
    const json& tj = h.at("train_state");
    ts->rng_state = tj.at("rng").get<std::string>();
    ts->adam_step = tj.at("adam_step").get<std::int64_t>();
    ts->best_metric = tj.at("best_metric").get<double>();
    ts->best_step = tj.at("best_step").get<std::int64_t>();
    ts->evals_since_best = tj.at("evals_since_best").get<std::int64_t>();
    ts->has_best = tj.at("has_best").get<bool>();
  }
  if (meta) *meta = meta_from(h.at("meta"));
  return model;
}

}  // namespace unn
