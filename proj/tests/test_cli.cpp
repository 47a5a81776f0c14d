#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "odmr/data_io.hpp"
#include "odmr_cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = odmr::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("odmr_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& p) const { return (dir / p).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream s;
  s << is.rdbuf();
  return s.str();
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("simulate writes one spectrum and a manifest by default") {
  Scratch s("sim");
  const auto r = run({"simulate", "--out", s / "out", "--verbosity", "0"});
  CHECK(r.code == 0);
  CHECK(fs::exists(s.dir / "out" / "spectrum_000_000.txt"));
  const auto m = load(s.dir / "out" / "manifest.json");
  CHECK(m["command"] == "simulate");
  CHECK(m["options"]["seed"] == 1);
  CHECK(m["outputs"].size() == 2);
  CHECK(slurp(s.dir / "out" / "manifest.json").find("time") == std::string::npos);
  const auto spec = odmr::read_spectrum(s.dir / "out" / "spectrum_000_000.txt");
  CHECK(spec.size() == 2001);
  CHECK(spec.meta.power_mw == 1.0);
  CHECK(spec.meta.rabi_mhz == 0.5);
}

TEST_CASE("fluorescence and IR spectra give the same fitted width") {
  Scratch s("readout");
  for (const std::string model : {"five-level-fluorescence", "five-level-ir"}) {
    const auto r = run({"simulate", "--model", model, "--noise", "0", "--powers", "5", "--rabis",
                        "0.8", "--out", s / model, "--verbosity", "0"});
    REQUIRE(r.code == 0);
    const auto f = run({"fit", "--input", s / (model + "/spectrum_000_000.txt"), "--out",
                        s / (model + "-fit"), "--verbosity", "0"});
    REQUIRE(f.code == 0);
  }
  auto width_of = [&](const std::string& model) {
    const std::string text = slurp(s.dir / (model + "-fit") / "spectrum_000_000.fit.txt");
    const auto j = nlohmann::json::parse(text.substr(text.find("--- machine ---") + 16));
    for (const auto& p : j["params"]) {
      if (p["name"] == "g") return p["value"].get<double>();
    }
    return -1.0;
  };
  const double wf = width_of("five-level-fluorescence");
  const double wi = width_of("five-level-ir");
  CHECK(wf > 0.0);
  CHECK(wi == doctest::Approx(wf).epsilon(1e-6));
}

TEST_CASE("invalid parameters exit with a config error") {
  Scratch s("bad");
  const auto r = run({"simulate", "--gamma1", "-1", "--out", s / "out", "--verbosity", "0"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: kind=InvalidParameter exit=2 message=", 0) == 0);

  CHECK(run({"simulate", "--model", "three-level", "--out", s / "o2"}).code == 2);
  CHECK(run({"simulate", "--no-such-flag"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"--version"}).code == 0);
  CHECK(run({"fit", "--input", s / "missing.txt", "--out", s / "o3"}).code == 2);
}

TEST_CASE("batch fit builds a grid") {
  Scratch s("batch");
  REQUIRE(run({"simulate", "--powers", "0.5,5", "--rabis", "0.2,0.6,1.2", "--out", s / "spectra",
               "--verbosity", "0"})
              .code == 0);
  const auto r = run({"fit", "--input", s / "spectra", "--out", s / "fits", "--verbosity", "0"});
  CHECK(r.code == 0);
  const auto grid = odmr::read_grid(s.dir / "fits" / "grid.txt");
  CHECK(grid.records.size() == 6);
  CHECK(grid.distinct_powers() == std::vector<double>{0.5, 5.0});
  for (const auto& rec : grid.records) {
    CHECK(rec.width_mhz > 3.0);
    CHECK(rec.width_sigma > 0.0);
  }

  fs::create_directories(s.dir / "empty");
  const auto e = run({"fit", "--input", s / "empty", "--out", s / "x", "--verbosity", "0"});
  CHECK(e.code == 2);
  CHECK(e.err.find("kind=ConfigError") != std::string::npos);
}

TEST_CASE("global fit on a grid with one power surfaces what it cannot identify") {
  Scratch s("single");
  REQUIRE(run({"synth-grid", "--powers", "2", "--out", s / "g", "--verbosity", "0"}).code == 0);
  const auto r = run({"global-fit", "--input", s / "g/grid.txt", "--out", s / "fit", "--verbosity",
                      "0"});
  CHECK(r.code == 0);
  CHECK(r.err.find("campaign=width kind=InsufficientData") != std::string::npos);
  CHECK(r.err.find("campaign=contrast kind=UnidentifiableParameter") != std::string::npos);
  const auto summary = load(s.dir / "fit" / "summary.json");
  CHECK(summary["width"]["error"] == "InsufficientData");
  CHECK_FALSE(summary["contrast"]["unidentifiable"].empty());
  CHECK(slurp(s.dir / "fit" / "summary.txt").find("unidentifiable = contrast") != std::string::npos);
}

TEST_CASE("global fit on a full grid") {
  Scratch s("full");
  REQUIRE(run({"synth-grid", "--seed", "20261019", "--out", s / "g", "--verbosity", "0"}).code == 0);
  const auto r = run({"global-fit", "--input", s / "g/grid.txt", "--out", s / "fit", "--verbosity",
                      "0"});
  CHECK(r.code == 0);
  const auto j = load(s.dir / "fit" / "summary.json");
  CHECK(j["width"]["params"]["dnu_inh_mhz"]["value"].get<double>() ==
        doctest::Approx(3.08).epsilon(0.05));
  CHECK(j["contrast"]["params"]["theta"]["value"].get<double>() ==
        doctest::Approx(22.9e-3).epsilon(0.1));
  CHECK(j["ap"]["params"].contains("b1"));
  CHECK(j["width"]["powers_mw"].size() == 12);
  for (const char* f : {"width_fit.txt", "ap_fit.txt", "contrast_fit.txt", "summary.txt"}) {
    CHECK(fs::exists(s.dir / "fit" / f));
  }
}

TEST_CASE("sensitivity map cells and rate boost") {
  Scratch s("map");
  REQUIRE(run({"sensitivity-map", "--powers", "1,100", "--rabis", "0.5,1", "--out", s / "a",
               "--verbosity", "0"})
              .code == 0);
  REQUIRE(run({"sensitivity-map", "--powers", "1,100", "--rabis", "0.5,1", "--rate-boost", "100",
               "--out", s / "b", "--verbosity", "0"})
              .code == 0);
  auto cells = [&](const std::string& d) {
    std::istringstream is(slurp(s.dir / d / "sensitivity_columns.txt"));
    std::string line;
    std::vector<double> v;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#' || line[0] == 'p') continue;
      v.push_back(std::stod(line.substr(line.rfind(' ') + 1)));
    }
    return v;
  };
  const auto a = cells("a");
  const auto b = cells("b");
  REQUIRE(a.size() == 4);
  REQUIRE(b.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(b[i] == doctest::Approx(a[i] / 10.0).epsilon(1e-12));
  const auto m = load(s.dir / "a" / "manifest.json");
  CHECK(m["results"]["argmin_power_mw"] == 100.0);
}

TEST_CASE("a manifest reruns the same command") {
  Scratch s("rerun");
  REQUIRE(run({"simulate", "--powers", "3", "--rabis", "0.4,0.9", "--noise", "2e-4", "--seed", "5",
               "--out", s / "first", "--verbosity", "0"})
              .code == 0);
  // point the rerun elsewhere through a flat config on top of the manifest
  auto manifest = load(s.dir / "first" / "manifest.json");
  manifest["options"]["out"] = s / "second";
  {
    std::ofstream os(s.dir / "rerun.json");
    os << manifest.dump();
  }
  REQUIRE(run({"simulate", "--config", s / "rerun.json", "--verbosity", "0"}).code == 0);
  for (const char* f : {"spectrum_000_000.txt", "spectrum_000_001.txt"}) {
    CHECK(slurp(s.dir / "first" / f) == slurp(s.dir / "second" / f));
  }

  {
    std::ofstream os(s.dir / "bad.json");
    os << R"({"no_such_option": 1})";
  }
  const auto bad = run({"simulate", "--config", s / "bad.json", "--out", s / "x"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("kind=ConfigError") != std::string::npos);

  {
    std::ofstream os(s.dir / "other.json");
    os << R"({"command": "fit", "options": {}})";
  }
  CHECK(run({"simulate", "--config", s / "other.json", "--out", s / "y"}).code == 2);
}
