#include "wbh/manifest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wbh/error.hpp"
#include "wbh/rng.hpp"

namespace wbh {
namespace {

constexpr const char* kManifestHeader = "weatherbias-manifest v1";

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("invalid number in " + what + ": '" + std::string(s) + "'", 0);
  return v;
}

int parse_int(std::string_view s, const std::string& what) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("invalid integer in " + what + ": '" + std::string(s) + "'", 0);
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

void check_field_text(const std::string& s, const char* what) {
  if (s.find('\t') != std::string::npos || s.find('\n') != std::string::npos)
    throw ConfigError(std::string(what) + " must not contain tabs or newlines");
}

} // namespace

void validate_manifest(const DatasetManifest& m) {
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const ImageRecord& rec = m.records[i];
    if (rec.width <= 0 || rec.height <= 0)
      throw ContractError("record " + std::to_string(i) + ": non-positive image size");
    for (std::size_t j = 0; j < rec.annotations.size(); ++j) {
      const Annotation& a = rec.annotations[j];
      std::string where =
          "record " + std::to_string(i) + " annotation " + std::to_string(j);
      if (!a.bbox.valid())
        throw ContractError(where + ": invalid bbox");
      if (a.bbox.xmax > rec.width || a.bbox.ymax > rec.height)
        throw ContractError(where + ": bbox outside image bounds");
      if (a.class_id < 0 || std::size_t(a.class_id) >= m.classes.size())
        throw ContractError(where + ": class_id out of range");
    }
  }
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  check_field_text(m.provenance, "provenance");
  std::ostringstream out;
  out << kManifestHeader << '\n';
  out << "# classes\t";
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    if (i)
      out << ',';
    out << m.classes.name(i);
  }
  out << '\n';
  out << "# seed\t" << m.provenance << '\n';
  for (const ImageRecord& rec : m.records) {
    check_field_text(rec.image_path, "image_path");
    check_field_text(rec.condition, "condition");
    out << rec.image_path << '\t' << rec.width << '\t' << rec.height << '\t'
        << rec.condition << '\t';
    for (std::size_t j = 0; j < rec.annotations.size(); ++j) {
      const Annotation& a = rec.annotations[j];
      if (j)
        out << ';';
      out << a.class_id << ':' << format_double(a.bbox.xmin) << ','
          << format_double(a.bbox.ymin) << ',' << format_double(a.bbox.xmax)
          << ',' << format_double(a.bbox.ymax);
      if (a.difficult)
        out << ",d";
    }
    out << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open for write: " + path.string());
  f << out.str();
  if (!f)
    throw IoError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(f, line))
    throw IoError("empty manifest: " + path.string());
  if (line != kManifestHeader)
    throw VersionError("unsupported manifest header: '" + line + "'");

  DatasetManifest m;
  bool have_classes = false, have_seed = false;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.starts_with("# classes\t")) {
      std::string_view names = std::string_view(line).substr(10);
      std::vector<std::string> list;
      if (!names.empty())
        for (std::string_view n : split(names, ','))
          list.emplace_back(n);
      m.classes = ClassSet(std::move(list));
      have_classes = true;
      continue;
    }
    if (line.starts_with("# seed\t")) {
      m.provenance = line.substr(7);
      have_seed = true;
      continue;
    }
    auto fields = split(line, '\t');
    if (fields.size() != 5)
      throw ParseError("manifest line " + std::to_string(lineno) +
                           ": expected 5 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       0);
    ImageRecord rec;
    rec.image_path = std::string(fields[0]);
    rec.width = parse_int(fields[1], "width");
    rec.height = parse_int(fields[2], "height");
    rec.condition = std::string(fields[3]);
    if (!fields[4].empty()) {
      for (std::string_view ann : split(fields[4], ';')) {
        std::size_t colon = ann.find(':');
        if (colon == std::string_view::npos)
          throw ParseError("manifest line " + std::to_string(lineno) +
                               ": missing ':' in annotation",
                           0);
        Annotation a;
        a.class_id = parse_int(ann.substr(0, colon), "class_id");
        auto coords = split(ann.substr(colon + 1), ',');
        if (coords.size() == 5 && coords[4] == "d") {
          a.difficult = true;
          coords.pop_back();
        }
        if (coords.size() != 4)
          throw ParseError("manifest line " + std::to_string(lineno) +
                               ": expected 4 coordinates",
                           0);
        a.bbox = BBox{parse_double(coords[0], "xmin"), parse_double(coords[1], "ymin"),
                      parse_double(coords[2], "xmax"), parse_double(coords[3], "ymax")};
        rec.annotations.push_back(a);
      }
    }
    m.records.push_back(std::move(rec));
  }
  if (!have_classes || !have_seed)
    throw ParseError("manifest missing '# classes' or '# seed' metadata line", 0);
  return m;
}

std::filesystem::path resolve_image_path(const std::filesystem::path& base_dir,
                                         const ImageRecord& rec) {
  std::filesystem::path p(rec.image_path);
  if (p.is_absolute())
    return p;
  return base_dir / p;
}

DatasetManifest filter_classes(const DatasetManifest& m, const ClassSet& keep) {
  std::vector<int> remap(m.classes.size(), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    auto src = m.classes.index_of(keep.name(k));
    if (!src)
      throw ConfigError("filter_classes: class '" + keep.name(k) +
                        "' not present in source class set");
    remap[std::size_t(*src)] = int(k);
  }
  DatasetManifest out;
  out.classes = keep;
  out.provenance = m.provenance;
  out.records.reserve(m.records.size());
  for (const ImageRecord& rec : m.records) {
    ImageRecord r = rec;
    r.annotations.clear();
    for (const Annotation& a : rec.annotations) {
      int mapped = remap.at(std::size_t(a.class_id));
      if (mapped < 0)
        continue;
      Annotation b = a;
      b.class_id = mapped;
      r.annotations.push_back(b);
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

DatasetManifest mix_datasets(const DatasetManifest& clean,
                             const DatasetManifest& corrupted,
                             double fraction_corrupted, std::uint64_t seed) {
  if (clean.classes != corrupted.classes)
    throw ConfigError("mix_datasets: class sets differ");
  if (!(fraction_corrupted >= 0.0 && fraction_corrupted <= 1.0))
    throw ConfigError("mix_datasets: fraction_corrupted must be in [0,1]");

  const std::size_t n = corrupted.records.size();
  const std::size_t take = std::size_t(std::floor(fraction_corrupted * double(n)));

  Rng rng(seed, hash64("mix_datasets"));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i)
    idx[i] = i;
  // partial Fisher-Yates: first `take` entries form the sample
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + std::size_t(rng.next_below(n - i));
    std::swap(idx[i], idx[j]);
  }

  DatasetManifest out;
  out.classes = clean.classes;
  out.provenance = "mix(fraction=" + format_double(fraction_corrupted) +
                   ",seed=" + std::to_string(seed) + ") of [" + clean.provenance +
                   "] + [" + corrupted.provenance + "]";
  out.records = clean.records;
  for (std::size_t i = 0; i < take; ++i)
    out.records.push_back(corrupted.records[idx[i]]);
  rng.shuffle(out.records);
  return out;
}

} // namespace wbh
