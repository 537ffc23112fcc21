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

#pragma once

// Numeric CSV ingestion, train/test splits and per-dimension standardization.

#include "hmk/linalg.hpp"

#include <nlohmann/json_fwd.hpp>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hmk::data {

using linalg::Index;
using linalg::RMatrix;
using linalg::RVector;

/// Malformed file contents; `line` is 1-based and counts the header.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& w, int line) : std::runtime_error(w), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// A declared column is missing, or a split does not match its declared counts.
class SchemaMismatch : public std::runtime_error {
 public:
  explicit SchemaMismatch(const std::string& w) : std::runtime_error(w) {}
};

struct Table {
  std::vector<std::string> header;
  RMatrix values;  // rows x header.size()

  Index column(const std::string& name) const;  // throws SchemaMismatch
};

/// Comma separated, one header line, numeric cells. Blank lines are skipped.
Table read_csv(const std::string& path);
Table parse_csv(const std::string& text);

/// Writes with 17 significant digits so values survive a round trip.
void write_csv(const std::string& path, const std::vector<std::string>& header, const RMatrix& values);

struct Schema {
  std::vector<std::string> inputs;
  std::string target;
};

struct SplitSpec {
  enum class Kind { kNone, kHead, kIntervals };
  Kind kind = Kind::kNone;
  Index head = 0;  // kHead: the first `head` rows train, the rest test
  std::string column;  // kIntervals: column tested against the closed intervals; default first input
  std::vector<std::pair<double, double>> test_intervals;
  Index train_count = -1, test_count = -1;  // checked when non-negative
};

/// {"kind": "head", "train_count": n} or {"test_intervals": [[a, b], ...],
/// "train_count": ..., "test_count": ..., "column": ...}.
SplitSpec split_from_json(const nlohmann::json& j);

struct Standardizer {
  RVector mean, scale;

  /// Population statistics; zero spread maps to scale 1.
  static Standardizer fit(const RMatrix& x);
  static Standardizer identity(Index dims);
  RMatrix apply(const RMatrix& x) const;
  RMatrix invert(const RMatrix& z) const;
};

struct Dataset {
  RMatrix x;  // raw inputs, n x D
  RVector y;  // raw targets
  std::vector<Index> train, test;
  Standardizer x_stats;  // fitted on training rows

  RMatrix x_rows(const std::vector<Index>& idx) const;
  RVector y_rows(const std::vector<Index>& idx) const;
};

/// Parses, checks the schema and splits. Indices come out ascending.
Dataset load_csv_dataset(const std::string& path, const Schema& schema, const SplitSpec& split);

}  // namespace hmk::data
