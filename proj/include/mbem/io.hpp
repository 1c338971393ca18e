/* Copyright (c) 2026 The mbem Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

// CSV files read and written by the tools.
//
//   annotations   example_id,worker_id,label
//   truth         example_id,label
//   features      example_id,x0,...,x{d-1}
//   soft labels   example_id,p0,...,p{K-1}            (12 significant digits)
//   confusions    worker_id,k,s,prob                  (long format)
//   checkpoint    <stem>.meta.csv: kind,K,d,hidden_units
//                 <stem>.params.csv: param, one value per line (17 significant digits)
//
// All ids and labels are 0-based.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mbem/core.hpp"
#include "mbem/learn.hpp"
#include "mbem/matrix.hpp"

namespace mbem::io {

/// printf-style %.<digits>g.
inline std::string format_number(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.remove_suffix(1);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Whole CSV file: header fields plus data rows. Blank lines are skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string source;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  CsvTable t;
  t.source = path.string();
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != t.header.size()) {
        throw Error(path.string() + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                    std::to_string(fields.size()) + " fields, expected " + std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw Error(path.string() + ": empty file");
  return t;
}

inline void require_header(const CsvTable& t, const std::vector<std::string>& expected) {
  if (t.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw Error(t.source + ": expected header '" + want + "'");
  }
}

inline std::size_t parse_index(const std::string& s, const std::string& where) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(where + ": '" + s + "' is not a nonnegative integer");
  return v;
}

inline double parse_real(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw Error(where + ": '" + s + "' is not a number");
  return v;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path), path_(path) {
    if (!out_) throw Error("cannot write " + path.string());
  }
  void line(const std::string& text) { out_ << text << '\n'; }
  void close() {
    out_.close();
    if (!out_) throw Error("error writing " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

/// Dimensions not given (0) are inferred as max id + 1. num_classes is at least 2.
inline AnnotationSet read_annotations(const std::filesystem::path& path, std::size_t num_examples = 0,
                                      std::size_t num_workers = 0, std::size_t num_classes = 0) {
  const CsvTable t = read_csv(path);
  require_header(t, {"example_id", "worker_id", "label"});
  std::vector<Annotation> records;
  records.reserve(t.rows.size());
  std::size_t n = 0, m = 0, k = 2;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = t.source + ":" + std::to_string(r + 2);
    Annotation a{parse_index(t.rows[r][0], where), parse_index(t.rows[r][1], where), parse_index(t.rows[r][2], where)};
    n = std::max(n, a.example + 1);
    m = std::max(m, a.worker + 1);
    k = std::max(k, a.label + 1);
    records.push_back(a);
  }
  return AnnotationSet(num_examples ? num_examples : n, num_workers ? num_workers : m, num_classes ? num_classes : k,
                       std::move(records));
}

inline void write_annotations(const std::filesystem::path& path, const AnnotationSet& ann) {
  CsvWriter w(path);
  w.line("example_id,worker_id,label");
  for (const auto& a : ann.records()) {
    w.line(std::to_string(a.example) + "," + std::to_string(a.worker) + "," + std::to_string(a.label));
  }
  w.close();
}

inline Labels read_truth(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  require_header(t, {"example_id", "label"});
  Labels out(t.rows.size());
  std::vector<bool> seen(t.rows.size(), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = t.source + ":" + std::to_string(r + 2);
    const std::size_t i = parse_index(t.rows[r][0], where);
    if (i >= out.size() || seen[i]) throw Error(where + ": example ids must be a permutation of 0..n-1");
    seen[i] = true;
    out[i] = parse_index(t.rows[r][1], where);
  }
  return out;
}

inline void write_truth(const std::filesystem::path& path, const Labels& truth) {
  CsvWriter w(path);
  w.line("example_id,label");
  for (std::size_t i = 0; i < truth.size(); ++i) w.line(std::to_string(i) + "," + std::to_string(truth[i]));
  w.close();
}

// Rows keyed by example_id in column 0 followed by real columns.
inline Matrix read_indexed_matrix(const CsvTable& t) {
  if (t.header.empty() || t.header[0] != "example_id") throw Error(t.source + ": first column must be example_id");
  Matrix out(t.rows.size(), t.header.size() - 1);
  std::vector<bool> seen(t.rows.size(), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = t.source + ":" + std::to_string(r + 2);
    const std::size_t i = parse_index(t.rows[r][0], where);
    if (i >= out.rows() || seen[i]) throw Error(where + ": example ids must be a permutation of 0..n-1");
    seen[i] = true;
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = parse_real(t.rows[r][j + 1], where);
  }
  return out;
}

inline void write_indexed_matrix(const std::filesystem::path& path, const Matrix& m, const std::string& prefix,
                                 int digits) {
  CsvWriter w(path);
  std::string header = "example_id";
  for (std::size_t j = 0; j < m.cols(); ++j) header += "," + prefix + std::to_string(j);
  w.line(header);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::string row = std::to_string(i);
    for (double v : m.row(i)) row += "," + format_number(v, digits);
    w.line(row);
  }
  w.close();
}

inline Matrix read_features(const std::filesystem::path& path) { return read_indexed_matrix(read_csv(path)); }

inline void write_features(const std::filesystem::path& path, const Matrix& features) {
  write_indexed_matrix(path, features, "x", 17);
}

inline void write_soft_labels(const std::filesystem::path& path, const SoftLabels& soft) {
  write_indexed_matrix(path, soft.rows, "p", 12);
}

inline SoftLabels read_soft_labels(const std::filesystem::path& path) {
  return {read_indexed_matrix(read_csv(path))};
}

inline void write_confusions(const std::filesystem::path& path, std::span<const ConfusionMatrix> confusions) {
  CsvWriter w(path);
  w.line("worker_id,k,s,prob");
  for (std::size_t a = 0; a < confusions.size(); ++a) {
    for (std::size_t k = 0; k < confusions[a].num_classes(); ++k) {
      for (std::size_t s = 0; s < confusions[a].num_classes(); ++s) {
        w.line(std::to_string(a) + "," + std::to_string(k) + "," + std::to_string(s) + "," +
               format_number(confusions[a](k, s), 12));
      }
    }
  }
  w.close();
}

/// Cells not listed are zero; every listed worker must have full stochastic rows.
inline std::vector<ConfusionMatrix> read_confusions(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  require_header(t, {"worker_id", "k", "s", "prob"});
  std::size_t m = 0, k_max = 0;
  struct Cell {
    std::size_t a, k, s;
    double p;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = t.source + ":" + std::to_string(r + 2);
    Cell c{parse_index(t.rows[r][0], where), parse_index(t.rows[r][1], where), parse_index(t.rows[r][2], where),
           parse_real(t.rows[r][3], where)};
    m = std::max(m, c.a + 1);
    k_max = std::max({k_max, c.k + 1, c.s + 1});
    cells.push_back(c);
  }
  std::vector<Matrix> mats(m, Matrix(k_max, k_max));
  for (const auto& c : cells) mats[c.a](c.k, c.s) = c.p;
  std::vector<ConfusionMatrix> out;
  out.reserve(m);
  for (auto& mat : mats) out.emplace_back(std::move(mat));
  return out;
}

inline void write_checkpoint(const std::filesystem::path& stem, const TrainedModel& model) {
  CsvWriter meta(stem.string() + ".meta.csv");
  meta.line("kind,K,d,hidden_units");
  meta.line(to_string(model.kind) + "," + std::to_string(model.num_classes) + "," + std::to_string(model.dim) + "," +
            std::to_string(model.hidden_units));
  meta.close();
  CsvWriter params(stem.string() + ".params.csv");
  params.line("param");
  for (double p : model.params) params.line(format_number(p, 17));
  params.close();
}

inline TrainedModel read_checkpoint(const std::filesystem::path& stem) {
  const CsvTable meta = read_csv(stem.string() + ".meta.csv");
  require_header(meta, {"kind", "K", "d", "hidden_units"});
  if (meta.rows.size() != 1) throw Error(meta.source + ": expected exactly one row");
  TrainedModel m;
  m.kind = parse_learner_kind(meta.rows[0][0]);
  m.num_classes = parse_index(meta.rows[0][1], meta.source);
  m.dim = parse_index(meta.rows[0][2], meta.source);
  m.hidden_units = parse_index(meta.rows[0][3], meta.source);
  const CsvTable params = read_csv(stem.string() + ".params.csv");
  require_header(params, {"param"});
  for (const auto& row : params.rows) m.params.push_back(parse_real(row[0], params.source));
  if (m.params.size() != parameter_count(m.kind, m.num_classes, m.dim, m.hidden_units)) {
    throw Error(params.source + ": parameter count does not match metadata");
  }
  return m;
}

}  // namespace mbem::io
