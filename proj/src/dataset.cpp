#include "unn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace unn {

namespace fs = std::filesystem;

std::string format_count_level(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", f);
  return buf;
}

std::vector<std::string> DatasetManifest::subjects() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.subject_id) == out.end())
      out.push_back(r.subject_id);
  return out;
}

std::optional<ManifestRow> DatasetManifest::find(const std::string& subject,
                                                 double count_level) const {
  for (const auto& r : rows)
    if (r.subject_id == subject && std::abs(r.count_level - count_level) < 1e-9) return r;
  return std::nullopt;
}

fs::path DatasetManifest::resolve(const ManifestRow& row) const {
  fs::path p(row.path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "subject_id,count_level,path,role\n";
  for (const auto& r : m.rows)
    out << r.subject_id << ',' << format_count_level(r.count_level) << ',' << r.path << ','
        << r.role << '\n';
  if (!out) throw DataError("failed writing manifest " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.manifest_path = path;
  std::string line;
  if (!std::getline(in, line) || line != "subject_id,count_level,path,role")
    throw DataError("manifest " + path.string() + " has an unexpected header");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    ManifestRow r;
    std::string level;
    if (!std::getline(is, r.subject_id, ',') || !std::getline(is, level, ',') ||
        !std::getline(is, r.path, ',') || !std::getline(is, r.role))
      throw DataError("manifest " + path.string() + ": malformed line " +
                      std::to_string(lineno));
    try {
      r.count_level = std::stod(level);
    } catch (const std::exception&) {
      throw DataError("manifest " + path.string() + ": bad count_level on line " +
                      std::to_string(lineno));
    }
    if (r.role != "label" && r.role != "input")
      throw DataError("manifest " + path.string() + ": unknown role '" + r.role + "'");
    m.rows.push_back(std::move(r));
  }
  return m;
}

std::vector<std::string> split_subjects(const DatasetManifest& m, const SplitSpec& spec,
                                        Split which) {
  auto subs = m.subjects();
  const int total = spec.train + spec.val + spec.test;
  if (static_cast<int>(subs.size()) < total)
    throw DataError("manifest has " + std::to_string(subs.size()) +
                    " subjects, split needs " + std::to_string(total));
  std::size_t begin = 0, count = 0;
  switch (which) {
    case Split::Train: begin = 0, count = spec.train; break;
    case Split::Val: begin = spec.train, count = spec.val; break;
    case Split::Test: begin = spec.train + spec.val, count = spec.test; break;
  }
  return {subs.begin() + begin, subs.begin() + begin + count};
}

}  // namespace unn
