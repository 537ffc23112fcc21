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
#include "hmk/experiments.hpp"
#include "hmk/parallel.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hmk;
using namespace hmk::experiments;
using linalg::Index;
using linalg::RMatrix;
using linalg::RVector;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kSource = HMK_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hmk_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json banana_data() {
  return {{"path", kSource + "/data/banana.csv"},
          {"inputs", {"x1", "x2"}},
          {"target", "label"},
          {"split", {{"kind", "head"}, {"train_count", 500}, {"test_count", 500}}}};
}

json solar_data() {
  return {{"path", kSource + "/data/solar_irradiance.csv"},
          {"inputs", {"year"}},
          {"target", "irradiance"},
          {"split", kSource + "/data/solar_split.json"}};
}

}  // namespace

TEST_CASE("toy CSV values are recovered exactly") {
  const auto dir = scratch("toy");
  write_text(dir / "toy.csv", "a,b,y\n1.5,-2,0.25\n3e-3,4,1\n\n5,6.125,-7\n");
  const auto ds = data::load_csv_dataset((dir / "toy.csv").string(), {{"b", "a"}, "y"}, {});
  REQUIRE(ds.x.rows() == 3);
  CHECK(ds.x(0, 0) == -2.0);
  CHECK(ds.x(0, 1) == 1.5);
  CHECK(ds.x(1, 1) == 3e-3);
  CHECK(ds.x(2, 0) == 6.125);
  CHECK(ds.y(2) == -7.0);
  CHECK(ds.train.size() == 3);
  CHECK(ds.test.empty());
}

TEST_CASE("malformed rows report their line number") {
  try {
    data::parse_csv("a,b\n1,2\n3,x\n");
    FAIL("no ParseError");
  } catch (const data::ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    data::parse_csv("a,b\n1,2\n\n3\n");
    FAIL("no ParseError");
  } catch (const data::ParseError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(data::parse_csv(""), data::ParseError);
}

TEST_CASE("missing columns raise SchemaMismatch") {
  const auto dir = scratch("schema");
  write_text(dir / "t.csv", "a,y\n1,2\n");
  CHECK_THROWS_AS(data::load_csv_dataset((dir / "t.csv").string(), {{"a", "b"}, "y"}, {}), data::SchemaMismatch);
  CHECK_THROWS_AS(data::load_csv_dataset((dir / "t.csv").string(), {{"a"}, "z"}, {}), data::SchemaMismatch);
}

TEST_CASE("interval split of the irradiance file matches its declared counts") {
  std::ifstream f(kSource + "/data/solar_split.json");
  const auto split = data::split_from_json(json::parse(f));
  const auto ds = data::load_csv_dataset(kSource + "/data/solar_irradiance.csv", {{"year"}, "irradiance"}, split);
  CHECK(ds.train.size() == 322);
  CHECK(ds.test.size() == 80);
  for (auto i : ds.test) {
    const double year = ds.x(i, 0);
    bool inside = false;
    for (const auto& [lo, hi] : split.test_intervals) inside = inside || (year >= lo && year <= hi);
    CHECK(inside);
  }
  auto wrong = split;
  wrong.train_count = 321;
  CHECK_THROWS_AS(data::load_csv_dataset(kSource + "/data/solar_irradiance.csv", {{"year"}, "irradiance"}, wrong),
                  data::SchemaMismatch);
}

TEST_CASE("split indices are disjoint and in range") {
  data::SplitSpec head;
  head.kind = data::SplitSpec::Kind::kHead;
  head.head = 500;
  const auto ds = data::load_csv_dataset(kSource + "/data/banana.csv", {{"x1", "x2"}, "label"}, head);
  CHECK(ds.train.size() == 500);
  CHECK(ds.train.size() + ds.test.size() == static_cast<std::size_t>(ds.x.rows()));
  std::vector<int> seen(static_cast<std::size_t>(ds.x.rows()), 0);
  for (auto i : ds.train) ++seen[static_cast<std::size_t>(i)];
  for (auto i : ds.test) ++seen[static_cast<std::size_t>(i)];
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("standardization round trip") {
  Rng rng(1);
  RMatrix x(50, 3);
  for (Index i = 0; i < 50; ++i) {
    for (Index d = 0; d < 3; ++d) x(i, d) = 1000.0 * d + (d + 1) * rng.normal();
  }
  x.col(2).setConstant(7.0);
  const auto s = data::Standardizer::fit(x);
  const RMatrix z = s.apply(x);
  CHECK(std::abs(z.col(0).mean()) < 1e-12);
  CHECK(z.col(1).squaredNorm() / 50.0 == doctest::Approx(1.0));
  CHECK(s.scale(2) == 1.0);
  CHECK((s.invert(z) - x).cwiseAbs().maxCoeff() < 1e-12 * 2000.0);
}

TEST_CASE("written CSVs parse back exactly") {
  const auto dir = scratch("csv");
  Rng rng(2);
  RMatrix v(7, 3);
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 3; ++j) v(i, j) = rng.normal() * std::pow(10.0, static_cast<double>(i - 3));
  }
  data::write_csv((dir / "v.csv").string(), {"p", "q", "r"}, v);
  const auto t = data::read_csv((dir / "v.csv").string());
  CHECK(t.header == std::vector<std::string>{"p", "q", "r"});
  CHECK(t.values == v);
}

TEST_CASE("config defaults merge and validate") {
  const auto c = parse_config({{"seed", 9}, {"optimizer", {{"iterations", 10}}}}, "recover", "");
  CHECK(c.seed == 9);
  CHECK(c.recover.optimizer.iterations == 10);
  CHECK(c.recover.optimizer.restarts == 5);
  CHECK(c.recover.optimizer.batch == 256);
  CHECK(c.recover.target == "ifbm");

  const auto d = parse_config({{"data", banana_data()}}, "classify", "");
  CHECK(d.classify.train.schedule.natgrad_warmup_iters == 200);
  CHECK(d.classify.train.schedule.alternating_rounds == 700);
  CHECK(d.classify.train.natgrad_gamma == 0.1);
  CHECK(d.classify.kernel.components == 4);

  CHECK_THROWS_AS(parse_config({{"target", "nope"}}, "recover", ""), ConfigError);
  CHECK_THROWS_AS(parse_config({{"kernel", {{"components", 0}}}}, "recover", ""), ConfigError);
  CHECK_THROWS_AS(parse_config({{"optimizer", {{"adam", {{"lr", -1.0}}}}}}, "recover", ""), ConfigError);
  CHECK_THROWS_AS(parse_config({{"grid", {{"points", "many"}}}}, "recover", ""), ConfigError);
  CHECK_THROWS_AS(parse_config({}, "classify", ""), ConfigError);
  CHECK_THROWS_AS(parse_config({}, "train", ""), ConfigError);
  CHECK_THROWS_AS(parse_config({{"experiment", "regress"}}, "recover", ""), ConfigError);
}

TEST_CASE("config hash follows content and seed only") {
  auto a = parse_config({{"seed", 1}}, "gradcheck", "");
  auto b = parse_config({{"seed", 1}, {"output_dir", "elsewhere"}}, "gradcheck", "");
  auto c = parse_config({{"seed", 2}}, "gradcheck", "");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("stationary dump has a WDF constant along the input axis") {
  auto cfg = parse_config({{"kernel", "se"}, {"output_dir", scratch("dump_se").string()}}, "dump-spectral", "");
  const auto r = run_experiment(cfg);
  CHECK(r["wdf_max_variation_along_x"].get<double>() < 1e-10);
  CHECK(fs::exists(fs::path(cfg.output_dir) / "sd.csv"));
}

TEST_CASE("LSG dump equals the closed forms") {
  auto cfg = parse_config({{"kernel", "lsg"}, {"output_dir", scratch("dump_lsg").string()}}, "dump-spectral", "");
  const auto r = run_experiment(cfg);
  CHECK(r["lsg_closed_form_max_abs_diff"].get<double>() < 1e-12);
}

TEST_CASE("random HMK dump has a Hermitian GSD grid") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto cfg = parse_config({{"kernel", "hmk"}, {"seed", seed}, {"output_dir", scratch("dump_hmk").string()}},
                            "dump-spectral", "");
    const auto r = run_experiment(cfg);
    CHECK(r["gsd_max_hermitian_residual"].get<double>() < 1e-12);
    const auto t = data::read_csv((fs::path(cfg.output_dir) / "gsd.csv").string());
    CHECK(t.values.rows() == 41 * 41);
  }
}

TEST_CASE("self-target recovery smoke") {
  auto cfg = parse_config({{"target", "self"},
                           {"grid", {{"points", 20}}},
                           {"optimizer", {{"iterations", 50}, {"restarts", 1}, {"trace_every", 10}}},
                           {"output_dir", scratch("self").string()}},
                          "recover", "");
  const auto r = run_experiment(cfg);
  CHECK(r["mse"].get<double>() < 1e-12);
  CHECK(r["pass"].get<bool>());
  const auto grid = data::read_csv((fs::path(cfg.output_dir) / "kernel_grid.csv").string());
  CHECK(grid.values.rows() == 400);
  CHECK(fs::exists(fs::path(cfg.output_dir) / "manifest.json"));
}

TEST_CASE("short classification run is reproducible and writes valid probabilities") {
  const json doc = {{"data", banana_data()},
                    {"inducing", {{"per_component", {2}}}},
                    {"optimizer", {{"warmup", 3}, {"rounds", 5}}},
                    {"grid", {{"resolution", 12}}}};
  auto a = parse_config(doc, "classify", "");
  a.output_dir = scratch("cls_a").string();
  auto b = a;
  b.output_dir = scratch("cls_b").string();
  run_experiment(a);
  run_experiment(b);
  CHECK(read_text(fs::path(a.output_dir) / "results.json") == read_text(fs::path(b.output_dir) / "results.json"));
  const auto g = data::read_csv((fs::path(a.output_dir) / "mp_2/boundary.csv").string());
  CHECK(g.values.rows() == 144);
  CHECK(g.values.col(2).minCoeff() >= 0.0);
  CHECK(g.values.col(2).maxCoeff() <= 1.0);
  const auto trace = data::read_csv((fs::path(a.output_dir) / "mp_2/trace.csv").string());
  CHECK(trace.values.rows() == 9);
}

TEST_CASE("short regression run is reproducible") {
  const json doc = {{"data", solar_data()},
                    {"hmk", {{"components", 2}, {"freqs", 2}, {"inducing_per_component", 3}}},
                    {"sm", {{"components", 2}, {"inducing", 10}}},
                    {"se", {{"inducing", 10}}},
                    {"optimizer", {{"iterations", 5}}},
                    {"grid", {{"points", 30}}}};
  auto a = parse_config(doc, "regress", "");
  a.output_dir = scratch("reg_a").string();
  auto b = a;
  b.output_dir = scratch("reg_b").string();
  const auto r = run_experiment(a);
  run_experiment(b);
  CHECK(read_text(fs::path(a.output_dir) / "results.json") == read_text(fs::path(b.output_dir) / "results.json"));
  for (const char* m : {"se", "sm", "hmk"}) {
    CHECK(std::isfinite(r["models"][m]["test_rmse"].get<double>()));
    const auto p = data::read_csv((fs::path(a.output_dir) / (std::string("predictions_") + m + ".csv")).string());
    CHECK(p.values.rows() == 30);
    CHECK((p.values.col(2).array() <= p.values.col(1).array()).all());
    CHECK((p.values.col(3).array() >= p.values.col(1).array()).all());
  }
}

TEST_CASE("gradient check run passes") {
  auto cfg = parse_config({{"points", 2}, {"output_dir", scratch("gc").string()}}, "gradcheck", "");
  const auto r = run_experiment(cfg);
  CHECK(r["pass"].get<bool>());
  CHECK(r["objectives"].size() == 5);
}

TEST_CASE("exceptions map to exit codes") {
  auto code = [](auto thrower) {
    try {
      thrower();
    } catch (...) {
      return exit_code_for_current_exception();
    }
    return -1;
  };
  CHECK(code([] { throw ConfigError("x"); }) == kConfigError);
  CHECK(code([] { throw data::ParseError("x", 2); }) == kDataError);
  CHECK(code([] { throw data::SchemaMismatch("x"); }) == kDataError);
  CHECK(code([] { throw linalg::NotPositiveDefinite("x"); }) == kNumericalError);
  CHECK(code([] { throw optim::StepFailed("x"); }) == kNumericalError);
  CHECK(code([] { throw NumericalFailure("x"); }) == kNumericalError);
}

TEST_CASE("command line exit codes") {
  const std::string cli = HMK_CLI_PATH;
  const auto dir = scratch("cli");
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  write_text(dir / "gc.json", R"({"experiment": "gradcheck", "points": 1})");
  CHECK(run("gradcheck --config " + (dir / "gc.json").string() + " --seed 4 --out " + (dir / "gc").string()) == 0);
  const auto manifest = json::parse(read_text(dir / "gc/manifest.json"));
  CHECK(manifest["seed"] == 4);
  CHECK(manifest["outputs"].size() == 1);

  write_text(dir / "bad.json", R"({"experiment": "gradcheck", "points": 0})");
  CHECK(run("gradcheck --config " + (dir / "bad.json").string()) == kConfigError);
  write_text(dir / "broken.json", "{not json");
  CHECK(run("recover --config " + (dir / "broken.json").string()) == kConfigError);
  CHECK(run("recover") == kConfigError);

  write_text(dir / "bad.csv", "x1,x2,label\n1,2,1\n3,oops,0\n");
  const json cls = {{"experiment", "classify"},
                    {"data", {{"path", "bad.csv"}, {"inputs", {"x1", "x2"}}, {"target", "label"}, {"split", json::object()}}}};
  write_text(dir / "cls.json", cls.dump());
  CHECK(run("classify --config " + (dir / "cls.json").string() + " --out " + (dir / "cls").string()) == kDataError);
}
