#include "unn/train.hpp"

#include <cmath>
#include <fstream>

#include "unn/adam.hpp"
#include "unn/patches.hpp"

namespace unn {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("train: stage must be 1 or 2");
  if (stage == 2 && batch_size != 1)
    throw ConfigError("train: stage 2 runs with batch_size 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (learning_rate < 0) throw ConfigError("train: learning_rate must be >= 0");
  if (max_steps < 1) throw ConfigError("train: max_steps must be >= 1");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  for (auto e : patch_shape)
    if (e < 1) throw ConfigError("train: patch extents must be >= 1");
}

fs::path stage1_checkpoint_name(const fs::path& dir, double level, bool best) {
  return dir / ("denoiser_" + format_count_level(level) + (best ? "_best" : "_last") +
                ".ckpt");
}

fs::path stage2_checkpoint_name(const fs::path& dir, bool best) {
  return dir / (std::string("unn_") + (best ? "best" : "last") + ".ckpt");
}

namespace {

struct VolumePair {
  Volume input;
  Volume label;
};

VolumePair load_pair(const DatasetManifest& manifest, const std::string& subject,
                     double level) {
  auto in_row = manifest.find(subject, level);
  auto lbl_row = manifest.find(subject, 1.0);
  if (!in_row)
    throw DataError("train: manifest has no " + format_count_level(level) +
                    " volume for subject " + subject);
  if (!lbl_row)
    throw DataError("train: manifest has no full-count label for subject " + subject);
  return {load_volume(manifest.resolve(*in_row)), load_volume(manifest.resolve(*lbl_row))};
}

// Deterministic validation slab corners: evenly spaced along depth, centered
// in-plane.
std::vector<std::array<std::int64_t, 3>> val_corners(const Volume& v,
                                                     const std::array<std::int64_t, 3>& patch,
                                                     int n_slabs) {
  std::vector<std::array<std::int64_t, 3>> corners;
  const std::int64_t dmax = v.dims[0] - patch[0];
  const std::int64_t h0 = (v.dims[1] - patch[1]) / 2;
  const std::int64_t w0 = (v.dims[2] - patch[2]) / 2;
  for (int k = 0; k < n_slabs; ++k) {
    const std::int64_t d =
        n_slabs == 1 ? dmax / 2 : (dmax * k) / (n_slabs - 1);
    corners.push_back({d, h0, w0});
  }
  return corners;
}

double ssim3_value(const TensorT<float>& label, const TensorT<float>& pred, double lambda_a) {
  LossConfig lc;
  lc.lambda_a = lambda_a;
  lc.ssim.dynamic_range = label_dynamic_range(label);
  return static_cast<double>(ssim_3axis(label, pred, lc.ssim).data()[0]);
}

struct CurveWriter {
  std::ofstream out;
  CurveWriter(const fs::path& path, bool append) {
    out.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw DataError("train: cannot write curve csv " + path.string());
    if (!append) out << "step,train_loss,val_ssim\n";
  }
  void row(std::int64_t step, double loss) { out << step << ',' << loss << ",\n"; }
  void row(std::int64_t step, double loss, double val) {
    out << step << ',' << loss << ',' << val << '\n';
  }
};

struct BestTracker {
  double best_metric = -1e300;
  std::int64_t best_step = -1;
  std::int64_t evals_since_best = 0;
  bool has_best = false;

  // Returns true when this evaluation improved on the best.
  bool update(double metric, std::int64_t step) {
    if (!has_best || metric > best_metric) {
      best_metric = metric;
      best_step = step;
      evals_since_best = 0;
      has_best = true;
      return true;
    }
    evals_since_best += 1;
    return false;
  }
};

void fill_train_state(TrainState& ts, const AdamState<float>& adam, const AdamConfig& acfg,
                      const Rng& rng, const BestTracker& bt) {
  ts.adam_m = adam.m;
  ts.adam_v = adam.v;
  ts.adam_step = acfg.step_count;
  ts.rng_state = rng.serialize();
  ts.best_metric = bt.best_metric;
  ts.best_step = bt.best_step;
  ts.evals_since_best = bt.evals_since_best;
  ts.has_best = bt.has_best;
}

void restore_train_state(const TrainState& ts, AdamState<float>& adam, AdamConfig& acfg,
                         Rng& rng, BestTracker& bt) {
  adam.m = ts.adam_m;
  adam.v = ts.adam_v;
  acfg.step_count = ts.adam_step;
  rng.deserialize(ts.rng_state);
  bt.best_metric = ts.best_metric;
  bt.best_step = ts.best_step;
  bt.evals_since_best = ts.evals_since_best;
  bt.has_best = ts.has_best;
}

}  // namespace

TrainResult train_stage1(const DatasetManifest& manifest, const SplitSpec& split,
                         const DenoiserConfig& arch, const TrainConfig& cfg,
                         const fs::path& ckpt_dir, bool resume) {
  cfg.validate();
  if (cfg.stage != 1) throw ConfigError("train_stage1: config is for stage " +
                                        std::to_string(cfg.stage));
  if (manifest.rows.empty()) throw DataError("train: empty manifest");
  fs::create_directories(ckpt_dir);

  const auto train_subjects = split_subjects(manifest, split, Split::Train);
  const auto val_subjects = split_subjects(manifest, split, Split::Val);
  if (train_subjects.empty()) throw DataError("train: no training subjects in split");

  std::vector<VolumePair> train_data, val_data;
  for (const auto& s : train_subjects) train_data.push_back(load_pair(manifest, s, cfg.count_level));
  for (const auto& s : val_subjects) val_data.push_back(load_pair(manifest, s, cfg.count_level));

  TrainResult result;
  result.best_checkpoint = stage1_checkpoint_name(ckpt_dir, cfg.count_level, true);
  result.last_checkpoint = stage1_checkpoint_name(ckpt_dir, cfg.count_level, false);
  result.curve_csv =
      ckpt_dir / ("denoiser_" + format_count_level(cfg.count_level) + "_curve.csv");

  Rng sample_rng(Rng(cfg.seed).fork(1).next_u64());
  Rng init_rng(Rng(cfg.seed).fork(2).next_u64());

  DenoiserModel<float> model;
  AdamConfig acfg;
  acfg.learning_rate = cfg.learning_rate;
  AdamState<float> adam;
  BestTracker best;
  std::int64_t start_step = 0;

  if (resume) {
    TrainState ts;
    CheckpointMeta meta;
    model = load_denoiser_checkpoint(result.last_checkpoint, &meta, &ts);
    if (!(model.cfg == arch))
      throw CheckpointError(CheckpointError::Kind::FingerprintMismatch,
                            "resume: checkpoint architecture differs from the requested one");
    auto params = parameters(named_parameters(model));
    for (auto& p : params) p.set_requires_grad(true);
    adam.init_for(params);
    restore_train_state(ts, adam, acfg, sample_rng, best);
    acfg.learning_rate = cfg.learning_rate;
    start_step = meta.step;
  } else {
    model = make_denoiser<float>(arch, init_rng);
    auto params = parameters(named_parameters(model));
    for (auto& p : params) p.set_requires_grad(true);
    adam.init_for(params);
  }
  auto params = parameters(named_parameters(model));

  LossConfig lc;
  lc.lambda_a = cfg.lambda_a;

  auto run_validation = [&]() {
    double acc = 0;
    int n = 0;
    for (const auto& pair : val_data) {
      for (const auto& corner : val_corners(pair.input, cfg.patch_shape,
                                            cfg.val_slabs_per_subject)) {
        TensorT<float> x = crop_patch(pair.input, corner, cfg.patch_shape);
        TensorT<float> y = crop_patch(pair.label, corner, cfg.patch_shape);
        TensorT<float> pred = denoiser_forward(x, model);
        acc += ssim3_value(y, pred, cfg.lambda_a);
        n += 1;
      }
    }
    return n > 0 ? acc / n : 0.0;
  };

  CurveWriter curve(result.curve_csv, resume);
  CheckpointMeta meta;
  meta.stage = 1;
  meta.count_level = cfg.count_level;

  auto save_last = [&](std::int64_t step) {
    TrainState ts;
    fill_train_state(ts, adam, acfg, sample_rng, best);
    meta.step = step;
    meta.val_metric = best.has_best ? best.best_metric : 0.0;
    save_denoiser_checkpoint(result.last_checkpoint, model, meta, &ts);
  };

  std::int64_t step = start_step;
  while (step < cfg.max_steps) {
    step += 1;
    const auto& pair = train_data[sample_rng.uniform_index(train_data.size())];
    PatchBatch batch =
        extract_patches(pair.input, pair.label, cfg.patch_shape, cfg.batch_size, sample_rng);

    Tape<float> tape;
    lc.ssim.dynamic_range = label_dynamic_range(batch.label);
    TensorT<float> pred = denoiser_forward(batch.input, model, &tape);
    TensorT<float> loss = composite_loss(batch.label, pred, lc, &tape);
    const double loss_v = static_cast<double>(loss.data()[0]);
    if (!std::isfinite(loss_v))
      throw TrainingError("stage-1 training diverged at step " + std::to_string(step) +
                          " (loss " + std::to_string(loss_v) + ", level " +
                          format_count_level(cfg.count_level) + ")");
    tape.backward(loss);
    adam_step(params, adam, acfg);

    const bool eval_now = step % cfg.eval_every == 0 || step == cfg.max_steps;
    if (eval_now) {
      const double val = run_validation();
      curve.row(step, loss_v, val);
      if (best.update(val, step)) {
        meta.step = step;
        meta.val_metric = val;
        save_denoiser_checkpoint(result.best_checkpoint, model, meta);
      }
      save_last(step);
      if (best.evals_since_best >= cfg.patience) break;
    } else {
      curve.row(step, loss_v);
    }
  }
  save_last(step);
  if (!best.has_best) {
    const double val = run_validation();
    best.update(val, step);
    meta.step = step;
    meta.val_metric = val;
    save_denoiser_checkpoint(result.best_checkpoint, model, meta);
  }

  result.best_val_metric = best.best_metric;
  result.best_step = best.best_step;
  result.steps_run = step;
  return result;
}

TrainResult train_stage2(const DatasetManifest& manifest, const SplitSpec& split,
                         const std::array<fs::path, 6>& denoiser_checkpoints,
                         std::int64_t gating_filters, std::int64_t fusion_filters,
                         const TrainConfig& cfg, const fs::path& ckpt_dir, bool resume) {
  cfg.validate();
  if (cfg.stage != 2) throw ConfigError("train_stage2: config is for stage " +
                                        std::to_string(cfg.stage));
  if (manifest.rows.empty()) throw DataError("train: empty manifest");
  fs::create_directories(ckpt_dir);

  const auto train_subjects = split_subjects(manifest, split, Split::Train);
  const auto val_subjects = split_subjects(manifest, split, Split::Val);

  // label + six input volumes per subject, kCountLevels order
  struct SubjectData {
    Volume label;
    std::array<Volume, 6> inputs;
  };
  auto load_subject = [&](const std::string& s) {
    SubjectData d;
    auto lbl = manifest.find(s, 1.0);
    if (!lbl) throw DataError("train: manifest has no full-count label for subject " + s);
    d.label = load_volume(manifest.resolve(*lbl));
    for (int i = 0; i < kNumLevels; ++i) {
      auto row = manifest.find(s, kCountLevels[i]);
      if (!row)
        throw DataError("train: manifest has no " + format_count_level(kCountLevels[i]) +
                        " volume for subject " + s);
      d.inputs[i] = load_volume(manifest.resolve(*row));
    }
    return d;
  };
  std::vector<SubjectData> train_data, val_data;
  for (const auto& s : train_subjects) train_data.push_back(load_subject(s));
  for (const auto& s : val_subjects) val_data.push_back(load_subject(s));
  if (train_data.empty()) throw DataError("train: no training subjects in split");

  const std::array<std::int64_t, 3> slab_shape = {
      cfg.patch_shape[0], train_data[0].label.dims[1], train_data[0].label.dims[2]};

  TrainResult result;
  result.best_checkpoint = stage2_checkpoint_name(ckpt_dir, true);
  result.last_checkpoint = stage2_checkpoint_name(ckpt_dir, false);
  result.curve_csv = ckpt_dir / "unn_curve.csv";

  Rng sample_rng(Rng(cfg.seed).fork(11).next_u64());
  Rng init_rng(Rng(cfg.seed).fork(12).next_u64());

  UnnModel<float> model;
  AdamConfig acfg;
  acfg.learning_rate = cfg.learning_rate;
  AdamState<float> adam;
  BestTracker best;
  std::int64_t start_step = 0;

  if (resume) {
    TrainState ts;
    CheckpointMeta meta0;
    model = load_unn_checkpoint(result.last_checkpoint, &meta0, &ts);
    NamedParams<float> trainable;
    for (auto& [name, t] : named_parameters(model))
      if (name.rfind("den", 0) != 0) trainable.emplace_back(name, t);
    set_requires_grad(trainable, true);
    auto tp = parameters(trainable);
    adam.init_for(tp);
    restore_train_state(ts, adam, acfg, sample_rng, best);
    acfg.learning_rate = cfg.learning_rate;
    start_step = meta0.step;
  } else {
    DenoiserConfig den_cfg = peek_denoiser_config(denoiser_checkpoints[0]);
    for (int i = 0; i < kNumLevels; ++i)
      model.denoisers[i] =
          load_denoiser_for_assembly(denoiser_checkpoints[i], den_cfg, kCountLevels[i]);
    NoiseAwareConfig gcfg;
    gcfg.filters = gating_filters;
    gcfg.slab_shape = slab_shape;
    model.gating = make_noise_aware<float>(gcfg, init_rng);
    FusionConfig fcfg;
    fcfg.filters = fusion_filters;
    model.fusion = make_fusion<float>(fcfg, init_rng);
    model.frozen_denoisers = true;
    NamedParams<float> trainable;
    for (auto& [name, t] : named_parameters(model))
      if (name.rfind("den", 0) != 0) trainable.emplace_back(name, t);
    set_requires_grad(trainable, true);
    auto tp = parameters(trainable);
    adam.init_for(tp);
  }
  NamedParams<float> trainable_named;
  for (auto& [name, t] : named_parameters(model))
    if (name.rfind("den", 0) != 0) trainable_named.emplace_back(name, t);
  auto trainable = parameters(trainable_named);

  LossConfig lc;
  lc.lambda_a = cfg.lambda_a;

  auto val_slab_list = [&]() {
    std::vector<std::pair<const SubjectData*, std::array<std::int64_t, 3>>> slabs;
    for (const auto& d : val_data)
      for (const auto& corner : val_corners(d.label, slab_shape, cfg.val_slabs_per_subject))
        slabs.emplace_back(&d, corner);
    return slabs;
  };
  const auto val_slabs = val_slab_list();

  auto run_validation = [&]() {
    double acc = 0;
    int n = 0;
    for (const auto& [d, corner] : val_slabs)
      for (int li = 0; li < kNumLevels; ++li) {
        TensorT<float> x = crop_patch(d->inputs[li], corner, slab_shape);
        TensorT<float> y = crop_patch(d->label, corner, slab_shape);
        UnnForwardResult<float> r = unn_forward(x, model);
        acc += ssim3_value(y, r.out, cfg.lambda_a);
        n += 1;
      }
    return n > 0 ? acc / n : 0.0;
  };

  // Mean Eq.-5-style validation loss, optionally with fixed uniform weights.
  auto val_loss = [&](bool uniform) {
    TensorT<float> uw = TensorT<float>::full({1, kNumLevels}, 1.0f / kNumLevels);
    double acc = 0;
    int n = 0;
    for (const auto& [d, corner] : val_slabs)
      for (int li = 0; li < kNumLevels; ++li) {
        TensorT<float> x = crop_patch(d->inputs[li], corner, slab_shape);
        TensorT<float> y = crop_patch(d->label, corner, slab_shape);
        LossConfig vlc = lc;
        vlc.ssim.dynamic_range = label_dynamic_range(y);
        UnnForwardResult<float> r =
            uniform ? unn_forward_with_weights(x, model, uw) : unn_forward(x, model);
        acc += static_cast<double>(stage2_loss(y, r.out, r.ws, vlc).data()[0]);
        n += 1;
      }
    return n > 0 ? acc / n : 0.0;
  };

  CurveWriter curve(result.curve_csv, resume);
  CheckpointMeta meta;
  meta.stage = 2;
  meta.count_level = 0.0;

  auto save_last = [&](std::int64_t step) {
    TrainState ts;
    fill_train_state(ts, adam, acfg, sample_rng, best);
    meta.step = step;
    meta.val_metric = best.has_best ? best.best_metric : 0.0;
    save_unn_checkpoint(result.last_checkpoint, model, meta, &ts);
  };

  std::int64_t step = start_step;
  while (step < cfg.max_steps) {
    step += 1;
    const auto& d = train_data[sample_rng.uniform_index(train_data.size())];
    const int li = static_cast<int>(sample_rng.uniform_index(kNumLevels));
    const std::int64_t dmax = d.label.dims[0] - slab_shape[0];
    const std::array<std::int64_t, 3> corner = {
        static_cast<std::int64_t>(sample_rng.uniform_index(dmax + 1)), 0, 0};
    TensorT<float> x = crop_patch(d.inputs[li], corner, slab_shape);
    TensorT<float> y = crop_patch(d.label, corner, slab_shape);

    Tape<float> tape;
    lc.ssim.dynamic_range = label_dynamic_range(y);
    UnnForwardResult<float> r = unn_forward(x, model, &tape);
    TensorT<float> loss = stage2_loss(y, r.out, r.ws, lc, &tape);
    const double loss_v = static_cast<double>(loss.data()[0]);
    if (!std::isfinite(loss_v))
      throw TrainingError("stage-2 training diverged at step " + std::to_string(step));
    tape.backward(loss);
    adam_step(trainable, adam, acfg);

    const bool eval_now = step % cfg.eval_every == 0 || step == cfg.max_steps;
    if (eval_now) {
      const double val = run_validation();
      curve.row(step, loss_v, val);
      if (best.update(val, step)) {
        meta.step = step;
        meta.val_metric = val;
        save_unn_checkpoint(result.best_checkpoint, model, meta);
      }
      save_last(step);
      if (best.evals_since_best >= cfg.patience) break;
    } else {
      curve.row(step, loss_v);
    }
  }
  save_last(step);
  if (!best.has_best) {
    const double val = run_validation();
    best.update(val, step);
    meta.step = step;
    meta.val_metric = val;
    save_unn_checkpoint(result.best_checkpoint, model, meta);
  }

  // Reload the best parameters for the final comparison numbers.
  model = load_unn_checkpoint(result.best_checkpoint);
  result.final_val_loss = val_loss(false);
  result.uniform_baseline_val_loss = val_loss(true);
  result.best_val_metric = best.best_metric;
  result.best_step = best.best_step;
  result.steps_run = step;
  return result;
}

}  // namespace unn
