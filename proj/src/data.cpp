// Copyright 2026 The HMK Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hmk/data.hpp"

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace hmk::data {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, int line) {
  if (cell.empty()) throw ParseError("empty cell", line);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE) {
    throw ParseError("not a number: '" + cell + "'", line);
  }
  return v;
}

}  // namespace

Index Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<Index>(i);
  }
  throw SchemaMismatch("missing column '" + name + "'");
}

Table parse_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  Table t;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (t.header.empty()) {
      for (const auto& c : cells) {
        if (c.empty()) throw ParseError("empty column name", lineno);
      }
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError("expected " + std::to_string(t.header.size()) + " cells, got " + std::to_string(cells.size()),
                       lineno);
    }
    std::vector<double> r;
    r.reserve(cells.size());
    for (const auto& c : cells) r.push_back(parse_number(c, lineno));
    rows.push_back(std::move(r));
  }
  if (t.header.empty()) throw ParseError("missing header", lineno);
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return t;
}

Table read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path, 0);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

void write_csv(const std::string& path, const std::vector<std::string>& header, const RMatrix& values) {
  if (static_cast<Index>(header.size()) != values.cols()) throw linalg::ShapeMismatch("write_csv: header width");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j) f << (j ? "," : "") << header[j];
  f << '\n';
  char buf[32];
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", values(i, j));
      f << (j ? "," : "") << buf;
    }
    f << '\n';
  }
}

SplitSpec split_from_json(const nlohmann::json& j) {
  SplitSpec s;
  if (j.is_null()) return s;
  if (j.contains("test_intervals")) {
    s.kind = SplitSpec::Kind::kIntervals;
    for (const auto& iv : j.at("test_intervals")) {
      s.test_intervals.emplace_back(iv.at(0).get<double>(), iv.at(1).get<double>());
    }
    s.column = j.value("column", std::string());
  } else if (j.value("kind", std::string()) == "head") {
    s.kind = SplitSpec::Kind::kHead;
    s.head = j.at("train_count").get<Index>();
  } else if (j.value("kind", std::string("none")) != "none") {
    throw SchemaMismatch("unknown split kind");
  }
  s.train_count = j.value("train_count", Index{-1});
  s.test_count = j.value("test_count", Index{-1});
  return s;
}

Standardizer Standardizer::fit(const RMatrix& x) {
  if (x.rows() == 0) throw linalg::ShapeMismatch("Standardizer::fit: no rows");
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Index d = 0; d < x.cols(); ++d) {
    const double var = (x.col(d).array() - s.mean(d)).square().mean();
    s.scale(d) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(Index dims) { return {RVector::Zero(dims), RVector::Ones(dims)}; }

RMatrix Standardizer::apply(const RMatrix& x) const {
  if (x.cols() != mean.size()) throw linalg::ShapeMismatch("Standardizer::apply");
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

RMatrix Standardizer::invert(const RMatrix& z) const {
  if (z.cols() != mean.size()) throw linalg::ShapeMismatch("Standardizer::invert");
  return (z.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
}

RMatrix Dataset::x_rows(const std::vector<Index>& idx) const {
  RMatrix out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = x.row(idx[i]);
  return out;
}

RVector Dataset::y_rows(const std::vector<Index>& idx) const {
  RVector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = y(idx[i]);
  return out;
}

Dataset load_csv_dataset(const std::string& path, const Schema& schema, const SplitSpec& split) {
  if (schema.inputs.empty()) throw SchemaMismatch("schema declares no input columns");
  const Table t = read_csv(path);
  Dataset d;
  const Index n = t.values.rows();
  d.x.resize(n, static_cast<Index>(schema.inputs.size()));
  for (std::size_t k = 0; k < schema.inputs.size(); ++k) d.x.col(static_cast<Index>(k)) = t.values.col(t.column(schema.inputs[k]));
  d.y = t.values.col(t.column(schema.target));

  switch (split.kind) {
    case SplitSpec::Kind::kNone:
      for (Index i = 0; i < n; ++i) d.train.push_back(i);
      break;
    case SplitSpec::Kind::kHead:
      if (split.head < 1 || split.head > n) throw SchemaMismatch("head split larger than the file");
      for (Index i = 0; i < n; ++i) (i < split.head ? d.train : d.test).push_back(i);
      break;
    case SplitSpec::Kind::kIntervals: {
      const Index c = split.column.empty() ? t.column(schema.inputs.front()) : t.column(split.column);
      for (Index i = 0; i < n; ++i) {
        const double v = t.values(i, c);
        bool held_out = false;
        for (const auto& [lo, hi] : split.test_intervals) held_out = held_out || (v >= lo && v <= hi);
        (held_out ? d.test : d.train).push_back(i);
      }
      break;
    }
  }
  const auto check = [](Index want, std::size_t got, const char* what) {
    if (want >= 0 && static_cast<std::size_t>(want) != got) {
      throw SchemaMismatch(std::string(what) + " count " + std::to_string(got) + " differs from the declared " +
                           std::to_string(want));
    }
  };
  check(split.train_count, d.train.size(), "train");
  check(split.test_count, d.test.size(), "test");
  if (d.train.empty()) throw SchemaMismatch("split leaves no training rows");
  d.x_stats = Standardizer::fit(d.x_rows(d.train));
  return d;
}

}  // namespace hmk::data
