#include "unn/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace unn {

namespace fs = std::filesystem;

RunConfig default_run_config() {
  RunConfig c;
  c.train1.stage = 1;
  c.train2.stage = 2;
  c.train2.batch_size = 1;
  return c;
}

void RunConfig::validate() const {
  if (n_subjects < split.train + split.val + split.test)
    throw ConfigError("config: subjects < train+val+test split");
  recon.validate(n_angles);
  denoiser_config().validate();
  train1.validate();
  train2.validate();
  inference.validate();
  if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
}

DenoiserConfig RunConfig::denoiser_config() const {
  DenoiserConfig d;
  d.base_filters = base_filters;
  d.se_reduction = se_reduction;
  return d;
}

SimConfig RunConfig::sim_config() const {
  SimConfig s;
  s.n_subjects = n_subjects;
  s.phantom = default_phantom_template(grid, voxel_mm);
  s.phantom.center_jitter_vox = center_jitter;
  s.phantom.intensity_jitter = intensity_jitter;
  s.geometry.n_angles = n_angles;
  s.geometry.n_bins = n_bins;
  s.recon = recon;
  s.full_counts = full_counts;
  s.seed = seed;
  s.out_dir = data_dir;
  s.jobs = jobs;
  return s;
}

namespace {

struct Parser {
  RunConfig cfg = default_run_config();
  fs::path base_dir;
  std::string section;
  int lineno = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(lineno) + ": " + msg);
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  template <typename T>
  T parse_num(const std::string& v) {
    std::istringstream is(v);
    T out;
    if (!(is >> out)) fail("cannot parse value '" + v + "'");
    std::string rest;
    if (is >> rest) fail("trailing content after value '" + v + "'");
    return out;
  }

  template <typename T, std::size_t N>
  std::array<T, N> parse_tuple(const std::string& v) {
    std::istringstream is(v);
    std::array<T, N> out;
    for (auto& x : out)
      if (!(is >> x)) fail("expected " + std::to_string(N) + " values in '" + v + "'");
    std::string rest;
    if (is >> rest) fail("too many values in '" + v + "'");
    return out;
  }

  fs::path parse_path(const std::string& v) {
    fs::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  }

  void train_key(TrainConfig& t, const std::string& key, const std::string& val, int stage) {
    if (key == "batch_size") t.batch_size = parse_num<int>(val);
    else if (key == "patch" && stage == 1) t.patch_shape = parse_tuple<std::int64_t, 3>(val);
    else if (key == "slab_depth" && stage == 2) t.patch_shape[0] = parse_num<std::int64_t>(val);
    else if (key == "learning_rate") t.learning_rate = parse_num<double>(val);
    else if (key == "max_steps") t.max_steps = parse_num<std::int64_t>(val);
    else if (key == "eval_every") t.eval_every = parse_num<int>(val);
    else if (key == "patience") t.patience = parse_num<int>(val);
    else if (key == "lambda_a") t.lambda_a = parse_num<double>(val);
    else if (key == "val_slabs") t.val_slabs_per_subject = parse_num<int>(val);
    else fail("unknown key '" + key + "' in section [" + section + "]");
  }

  void apply(const std::string& key, const std::string& val) {
    if (section == "dataset") {
      if (key == "data_dir") cfg.data_dir = parse_path(val);
      else if (key == "subjects") cfg.n_subjects = parse_num<int>(val);
      else if (key == "train_subjects") cfg.split.train = parse_num<int>(val);
      else if (key == "val_subjects") cfg.split.val = parse_num<int>(val);
      else if (key == "test_subjects") cfg.split.test = parse_num<int>(val);
      else if (key == "full_counts") cfg.full_counts = parse_num<double>(val);
      else if (key == "angles") cfg.n_angles = parse_num<int>(val);
      else if (key == "bins") cfg.n_bins = parse_num<int>(val);
      else fail("unknown key '" + key + "' in section [dataset]");
    } else if (section == "phantom") {
      if (key == "grid") cfg.grid = parse_tuple<std::int64_t, 3>(val);
      else if (key == "voxel_mm") cfg.voxel_mm = parse_tuple<double, 3>(val);
      else if (key == "center_jitter") cfg.center_jitter = parse_num<double>(val);
      else if (key == "intensity_jitter") cfg.intensity_jitter = parse_num<double>(val);
      else fail("unknown key '" + key + "' in section [phantom]");
    } else if (section == "recon") {
      if (key == "iterations") cfg.recon.iterations = parse_num<int>(val);
      else if (key == "subsets") cfg.recon.subsets = parse_num<int>(val);
      else if (key == "postfilter_fwhm_mm") cfg.recon.postfilter_fwhm_mm = parse_num<double>(val);
      else fail("unknown key '" + key + "' in section [recon]");
    } else if (section == "model") {
      if (key == "base_filters") cfg.base_filters = parse_num<std::int64_t>(val);
      else if (key == "gating_filters") cfg.gating_filters = parse_num<std::int64_t>(val);
      else if (key == "fusion_filters") cfg.fusion_filters = parse_num<std::int64_t>(val);
      else if (key == "se_reduction") cfg.se_reduction = parse_num<std::int64_t>(val);
      else fail("unknown key '" + key + "' in section [model]");
    } else if (section == "train1") {
      train_key(cfg.train1, key, val, 1);
    } else if (section == "train2") {
      train_key(cfg.train2, key, val, 2);
    } else if (section == "inference") {
      if (key == "patch_depth") cfg.inference.patch_depth = parse_num<std::int64_t>(val);
      else if (key == "stride") cfg.inference.stride = parse_num<std::int64_t>(val);
      else fail("unknown key '" + key + "' in section [inference]");
    } else if (section == "output") {
      if (key == "dir") cfg.out_dir = parse_path(val);
      else if (key == "seed") cfg.seed = parse_num<std::uint64_t>(val);
      else if (key == "jobs") cfg.jobs = parse_num<int>(val);
      else fail("unknown key '" + key + "' in section [output]");
    } else {
      fail("key '" + key + "' outside any known section");
    }
  }
};

}  // namespace

RunConfig parse_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Parser p;
  p.base_dir = path.parent_path();
  std::string line;
  while (std::getline(in, line)) {
    p.lineno += 1;
    std::string s = Parser::trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') p.fail("malformed section header");
      p.section = s.substr(1, s.size() - 2);
      static const char* known[] = {"dataset", "phantom", "recon", "model",
                                    "train1",  "train2",  "inference", "output"};
      bool ok = false;
      for (const char* k : known) ok |= p.section == k;
      if (!ok) p.fail("unknown section [" + p.section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) p.fail("expected key=value");
    p.apply(Parser::trim(s.substr(0, eq)), Parser::trim(s.substr(eq + 1)));
  }
  // Propagate seeds unless the file set them explicitly later via [output].
  p.cfg.train1.seed = p.cfg.seed;
  p.cfg.train2.seed = p.cfg.seed;
  p.cfg.validate();
  return p.cfg;
}

std::string RunConfig::snapshot() const {
  std::ostringstream os;
  os << "[dataset]\n"
     << "data_dir = " << data_dir.string() << "\n"
     << "subjects = " << n_subjects << "\n"
     << "train_subjects = " << split.train << "\n"
     << "val_subjects = " << split.val << "\n"
     << "test_subjects = " << split.test << "\n"
     << "full_counts = " << full_counts << "\n"
     << "angles = " << n_angles << "\n"
     << "bins = " << n_bins << "\n"
     << "[phantom]\n"
     << "grid = " << grid[0] << ' ' << grid[1] << ' ' << grid[2] << "\n"
     << "voxel_mm = " << voxel_mm[0] << ' ' << voxel_mm[1] << ' ' << voxel_mm[2] << "\n"
     << "center_jitter = " << center_jitter << "\n"
     << "intensity_jitter = " << intensity_jitter << "\n"
     << "[recon]\n"
     << "iterations = " << recon.iterations << "\n"
     << "subsets = " << recon.subsets << "\n"
     << "postfilter_fwhm_mm = " << recon.postfilter_fwhm_mm << "\n"
     << "[model]\n"
     << "base_filters = " << base_filters << "\n"
     << "gating_filters = " << gating_filters << "\n"
     << "fusion_filters = " << fusion_filters << "\n"
     << "se_reduction = " << se_reduction << "\n";
  auto dump_train = [&](const char* name, const TrainConfig& t) {
    os << '[' << name << "]\n"
       << "batch_size = " << t.batch_size << "\n";
    if (t.stage == 1)
      os << "patch = " << t.patch_shape[0] << ' ' << t.patch_shape[1] << ' '
         << t.patch_shape[2] << "\n";
    else
      os << "slab_depth = " << t.patch_shape[0] << "\n";
    os << "learning_rate = " << t.learning_rate << "\n"
       << "max_steps = " << t.max_steps << "\n"
       << "eval_every = " << t.eval_every << "\n"
       << "patience = " << t.patience << "\n"
       << "lambda_a = " << t.lambda_a << "\n"
       << "val_slabs = " << t.val_slabs_per_subject << "\n";
  };
  dump_train("train1", train1);
  dump_train("train2", train2);
  os << "[inference]\n"
     << "patch_depth = " << inference.patch_depth << "\n"
     << "stride = " << inference.stride << "\n"
     << "[output]\n"
     << "dir = " << out_dir.string() << "\n"
     << "seed = " << seed << "\n"
     << "jobs = " << jobs << "\n";
  return os.str();
}

}  // namespace unn
