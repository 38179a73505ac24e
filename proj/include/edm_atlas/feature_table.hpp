#ifndef EDM_ATLAS_FEATURE_TABLE_HPP
#define EDM_ATLAS_FEATURE_TABLE_HPP

// Track manifests and feature matrices: assembly, CSV persistence, and import
// of precomputed embedding matrices.
//
// Matrix CSV layout:
//   track_id,<col_1>,...,<col_d>
//   #group:,<tag_1>,...,<tag_d>        (optional; absent means "embedding")
//   <id>,<v_11>,...,<v_1d>

#include "edm_atlas/common.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace edm_atlas {

class TableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrackRecord {
  std::string track_id;
  std::filesystem::path path;
  std::string genre;
  std::optional<double> bpm;
  std::optional<std::string> key;
  std::optional<double> length_s;
};

struct FeatureMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<FeatureGroup> groups;
  Matrix data;

  Eigen::Index n_rows() const { return data.rows(); }
  Eigen::Index n_cols() const { return data.cols(); }

  std::optional<Eigen::Index> col_index(std::string_view name) const {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] == name) return static_cast<Eigen::Index>(j);
    }
    return std::nullopt;
  }

  /// Checks shape agreement, name uniqueness and finiteness.
  void validate() const {
    if (rows.size() != static_cast<std::size_t>(data.rows()) || cols.size() != static_cast<std::size_t>(data.cols()) ||
        groups.size() != cols.size()) {
      throw TableError("feature matrix: names do not match data shape");
    }
    if (std::set<std::string>(rows.begin(), rows.end()).size() != rows.size()) throw TableError("feature matrix: duplicate row id");
    if (std::set<std::string>(cols.begin(), cols.end()).size() != cols.size()) throw TableError("feature matrix: duplicate column name");
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      for (Eigen::Index j = 0; j < data.cols(); ++j) {
        if (!std::isfinite(data(i, j))) {
          throw TableError("feature matrix: non-finite value at track " + rows[static_cast<std::size_t>(i)] + ", column " +
                           cols[static_cast<std::size_t>(j)]);
        }
      }
    }
  }

  /// Sub-matrix with the given columns, in the given order.
  FeatureMatrix select_columns(const std::vector<Eigen::Index>& idx) const {
    FeatureMatrix out;
    out.rows = rows;
    out.data.resize(data.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.cols.push_back(cols[static_cast<std::size_t>(idx[k])]);
      out.groups.push_back(groups[static_cast<std::size_t>(idx[k])]);
      out.data.col(static_cast<Eigen::Index>(k)) = data.col(idx[k]);
    }
    return out;
  }

  FeatureMatrix select_rows(const std::vector<Eigen::Index>& idx) const {
    FeatureMatrix out;
    out.cols = cols;
    out.groups = groups;
    out.data.resize(static_cast<Eigen::Index>(idx.size()), data.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.rows.push_back(rows[static_cast<std::size_t>(idx[k])]);
      out.data.row(static_cast<Eigen::Index>(k)) = data.row(idx[k]);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// CSV primitives.

namespace csv {

/// Splits one record, honoring double-quoted fields with "" escapes.
inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

/// Non-empty lines of a file with trailing CR removed.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TableError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Shortest-exact decimal form (17 significant digits), stable across runs.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TableError("cannot write " + path.string());
  out << content;
  if (!out) throw TableError("write failed: " + path.string());
}

}  // namespace csv

// ---------------------------------------------------------------------------
// Manifest.

/// Reads track_id,path,genre[,bpm,key,length_s]. Relative audio paths resolve
/// against the manifest's directory.
inline std::vector<TrackRecord> load_manifest(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw TableError("manifest is empty: " + path.string());
  const auto header = csv::split(lines.front());
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;
  for (const char* required : {"track_id", "path", "genre"}) {
    if (!col.count(required)) throw TableError("manifest schema error: missing column '" + std::string(required) + "' in " + path.string());
  }
  const auto base = path.parent_path();
  std::vector<TrackRecord> records;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = csv::split(lines[i]);
    if (cells.size() != header.size()) throw TableError("manifest line " + std::to_string(i + 1) + ": expected " + std::to_string(header.size()) + " fields");
    auto cell = [&](const char* name) -> std::string { return col.count(name) ? cells[col[name]] : std::string(); };
    TrackRecord r;
    r.track_id = cell("track_id");
    if (r.track_id.empty()) throw TableError("manifest line " + std::to_string(i + 1) + ": empty track_id");
    if (!seen.insert(r.track_id).second) throw TableError("manifest: duplicate track_id '" + r.track_id + "'");
    r.path = cell("path");
    if (r.path.is_relative() && !base.empty()) r.path = base / r.path;
    r.genre = cell("genre");
    if (r.genre.empty()) throw TableError("manifest: empty genre for track '" + r.track_id + "'");
    auto numeric = [&](const char* name) -> std::optional<double> {
      const std::string s = cell(name);
      if (s.empty()) return std::nullopt;
      const auto v = csv::parse_double(s);
      if (!v) throw TableError("manifest: non-numeric " + std::string(name) + " '" + s + "' for track '" + r.track_id + "'");
      return v;
    };
    r.bpm = numeric("bpm");
    r.length_s = numeric("length_s");
    if (const std::string k = cell("key"); !k.empty()) r.key = k;
    records.push_back(std::move(r));
  }
  return records;
}

inline std::string manifest_to_csv(const std::vector<TrackRecord>& records) {
  std::string out = "track_id,path,genre,bpm,key,length_s\n";
  for (const auto& r : records) {
    out += csv::quote(r.track_id) + "," + csv::quote(r.path.generic_string()) + "," + csv::quote(r.genre) + ",";
    out += (r.bpm ? csv::format_double(*r.bpm) : "") + ",";
    out += (r.key ? csv::quote(*r.key) : "") + ",";
    out += (r.length_s ? csv::format_double(*r.length_s) : "") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly and persistence.

/// Stacks per-track vectors in manifest order and appends catalog bpm and
/// length columns (tagged meta) when every record carries them.
inline FeatureMatrix assemble_matrix(const std::vector<TrackRecord>& records, const std::vector<FeatureVector>& vectors) {
  if (records.empty()) throw TableError("assemble_matrix: no tracks");
  if (vectors.size() != records.size()) throw TableError("assemble_matrix: missing feature vector (records and vectors differ in count)");
  const FeatureVector& schema = vectors.front();
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    if (vectors[i].names != schema.names || vectors[i].groups != schema.groups) {
      throw TableError("assemble_matrix: schema mismatch for track " + records[i].track_id);
    }
  }
  const bool with_bpm = std::all_of(records.begin(), records.end(), [](const TrackRecord& r) { return r.bpm.has_value(); });
  const bool with_len = std::all_of(records.begin(), records.end(), [](const TrackRecord& r) { return r.length_s.has_value(); });
  const bool some_bpm = std::any_of(records.begin(), records.end(), [](const TrackRecord& r) { return r.bpm.has_value(); });
  const bool some_len = std::any_of(records.begin(), records.end(), [](const TrackRecord& r) { return r.length_s.has_value(); });
  if ((some_bpm && !with_bpm) || (some_len && !with_len)) {
    spdlog::warn("assemble_matrix: catalog metadata missing for some tracks; those meta columns are omitted");
  }

  FeatureMatrix m;
  m.cols = schema.names;
  m.groups = schema.groups;
  if (with_bpm) {
    m.cols.emplace_back("meta_bpm");
    m.groups.push_back(FeatureGroup::meta);
  }
  if (with_len) {
    m.cols.emplace_back("meta_length_s");
    m.groups.push_back(FeatureGroup::meta);
  }
  m.data.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(m.cols.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    m.rows.push_back(records[i].track_id);
    const auto& v = vectors[i].values;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!std::isfinite(v[j])) throw TableError("assemble_matrix: non-finite value for track " + records[i].track_id + ", column " + schema.names[j]);
      m.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
    }
    auto j = static_cast<Eigen::Index>(v.size());
    if (with_bpm) m.data(static_cast<Eigen::Index>(i), j++) = *records[i].bpm;
    if (with_len) m.data(static_cast<Eigen::Index>(i), j++) = *records[i].length_s;
  }
  m.validate();
  return m;
}

inline std::string matrix_to_csv(const FeatureMatrix& m) {
  std::string out = "track_id";
  for (const auto& c : m.cols) out += "," + csv::quote(c);
  out += "\n#group:";
  for (auto g : m.groups) out += "," + std::string(to_string(g));
  out += "\n";
  for (Eigen::Index i = 0; i < m.data.rows(); ++i) {
    out += csv::quote(m.rows[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.data.cols(); ++j) out += "," + csv::format_double(m.data(i, j));
    out += "\n";
  }
  return out;
}

inline void save_matrix(const FeatureMatrix& m, const std::filesystem::path& path) { csv::write_file(path, matrix_to_csv(m)); }

namespace detail {

struct RawTable {
  std::vector<std::string> cols;
  std::optional<std::vector<std::string>> group_tags;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> values;
};

inline RawTable read_numeric_table(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw TableError("empty table: " + path.string());
  RawTable t;
  auto header = csv::split(lines.front());
  if (header.size() < 2) throw TableError("malformed header in " + path.string() + ": need an id column and at least one value column");
  t.cols.assign(header.begin() + 1, header.end());
  std::size_t first = 1;
  if (lines.size() > 1 && lines[1].rfind("#group:", 0) == 0) {
    auto tags = csv::split(lines[1]);
    if (tags.size() != header.size()) throw TableError("malformed #group line in " + path.string());
    t.group_tags = std::vector<std::string>(tags.begin() + 1, tags.end());
    first = 2;
  }
  for (std::size_t i = first; i < lines.size(); ++i) {
    const auto cells = csv::split(lines[i]);
    if (cells.size() != header.size()) {
      throw TableError(path.string() + ": ragged row " + std::to_string(i + 1) + " (" + std::to_string(cells.size()) + " fields, expected " +
                       std::to_string(header.size()) + ")");
    }
    std::vector<double> row(cells.size() - 1);
    for (std::size_t j = 1; j < cells.size(); ++j) {
      const auto v = csv::parse_double(cells[j]);
      if (!v) {
        throw TableError(path.string() + ": non-numeric or missing value '" + cells[j] + "' at row " + std::to_string(i + 1) + ", column " +
                         std::to_string(j + 1) + " (" + t.cols[j - 1] + ")");
      }
      row[j - 1] = *v;
    }
    t.ids.push_back(cells[0]);
    t.values.push_back(std::move(row));
  }
  return t;
}

}  // namespace detail

inline FeatureMatrix load_matrix(const std::filesystem::path& path) {
  auto t = detail::read_numeric_table(path);
  FeatureMatrix m;
  m.cols = std::move(t.cols);
  m.rows = std::move(t.ids);
  if (t.group_tags) {
    for (const auto& tag : *t.group_tags) {
      const auto g = parse_feature_group(tag);
      if (!g) throw TableError(path.string() + ": unknown group tag '" + tag + "'");
      m.groups.push_back(*g);
    }
  } else {
    m.groups.assign(m.cols.size(), FeatureGroup::embedding);
  }
  m.data.resize(static_cast<Eigen::Index>(m.rows.size()), static_cast<Eigen::Index>(m.cols.size()));
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    for (std::size_t j = 0; j < m.cols.size(); ++j) m.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.values[i][j];
  }
  m.validate();
  return m;
}

struct EmbeddingImport {
  FeatureMatrix matrix;
  std::size_t ignored_rows = 0;
};

/// Loads a precomputed embedding table keyed by track_id and reorders it to
/// manifest order. Rows for tracks outside the manifest are dropped.
inline EmbeddingImport import_embeddings(const std::filesystem::path& path, const std::vector<TrackRecord>& manifest) {
  auto t = detail::read_numeric_table(path);
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    if (!by_id.emplace(t.ids[i], i).second) throw TableError(path.string() + ": duplicate track_id '" + t.ids[i] + "'");
  }
  EmbeddingImport out;
  out.matrix.cols = t.cols;
  out.matrix.groups.assign(t.cols.size(), FeatureGroup::embedding);
  out.matrix.data.resize(static_cast<Eigen::Index>(manifest.size()), static_cast<Eigen::Index>(t.cols.size()));
  std::unordered_set<std::string> wanted;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto it = by_id.find(manifest[i].track_id);
    if (it == by_id.end()) throw TableError(path.string() + ": missing embedding for track '" + manifest[i].track_id + "'");
    wanted.insert(manifest[i].track_id);
    out.matrix.rows.push_back(manifest[i].track_id);
    const auto& row = t.values[it->second];
    for (std::size_t j = 0; j < row.size(); ++j) out.matrix.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  out.ignored_rows = t.ids.size() - wanted.size();
  if (out.ignored_rows > 0) spdlog::warn("import_embeddings: ignored {} rows not in the manifest", out.ignored_rows);
  out.matrix.validate();
  return out;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_FEATURE_TABLE_HPP
