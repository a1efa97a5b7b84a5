#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "espectra/cli.hpp"
#include "espectra/ensembles.hpp"

using namespace espectra;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "espectra_cli_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("complex, seed and list parsing") {
  CHECK(parse_complex("0.2i") == Complex(0, 0.2));
  CHECK(parse_complex("0.3+0.1i") == Complex(0.3, 0.1));
  CHECK(parse_complex("1e-3-2e-1i") == Complex(1e-3, -0.2));
  CHECK(parse_complex("i") == Complex(0, 1));
  CHECK(parse_complex("-i") == Complex(0, -1));
  CHECK(parse_complex("2") == Complex(2, 0));
  CHECK(parse_complex("-0.5") == Complex(-0.5, 0));
  for (const char* bad : {"", "abc", "1+", "0.2j", "1+2i3", "++1"}) CHECK_THROWS_AS(parse_complex(bad), SpecError);

  CHECK(parse_seed("0") == 0);
  CHECK(parse_seed("18446744073709551615") == 18446744073709551615ull);
  for (const char* bad : {"", "-1", "1.5", "18446744073709551616", "7x"}) CHECK_THROWS_AS(parse_seed(bad), SpecError);

  CHECK(parse_real_list("0.5,0.7") == std::vector<double>{0.5, 0.7});
  CHECK(parse_real_list("1") == std::vector<double>{1.0});
  CHECK_THROWS_AS(parse_real_list("0.5,,1"), SpecError);
}

TEST_CASE("generate") {
  const fs::path dir = scratch();
  const std::vector<std::string> args = {"generate", "--ensemble", "elliptic", "--n", "256", "--rho", "0.5",
                                         "--atoms", "gaussian", "--seed", "7", "--out", (dir / "m.csv").string()};
  const Run r1 = run(args);
  CHECK(r1.code == kExitOk);
  CHECK(r1.out.find("provenance spec_hash=") != std::string::npos);
  CHECK(r1.out.find("seed=7") != std::string::npos);
  const RealMatrix m = read_matrix(dir / "m.csv");
  CHECK(m.rows() == 256);
  CHECK(m.cols() == 256);
  const std::string first = slurp(dir / "m.csv");
  CHECK(run(args).code == kExitOk);
  CHECK(slurp(dir / "m.csv") == first);

  SUBCASE("thread count does not change the output") {
    auto threaded = args;
    threaded.insert(threaded.begin(), {"--threads", "2"});
    threaded.back() = (dir / "m2.csv").string();
    CHECK(run(threaded).code == kExitOk);
    CHECK(slurp(dir / "m2.csv") == first);
  }
  SUBCASE("binary and product outputs") {
    CHECK(run({"generate", "--ensemble", "product", "--m", "2", "--n", "16", "--out", (dir / "p.bin").string()}).code ==
          kExitOk);
    CHECK(read_matrix(dir / "p.bin").rows() == 16);
    CHECK(run({"generate", "--ensemble", "linearization", "--m", "3", "--n", "8", "--out", (dir / "z.csv").string()})
              .code == kExitOk);
    CHECK(read_matrix(dir / "z.csv").rows() == 24);
  }
  SUBCASE("rho = 1 needs the Wigner flag") {
    const Run bad = run({"generate", "--rho", "1.0", "--out", (dir / "w.csv").string()});
    CHECK(bad.code == kExitConfig);
    CHECK(bad.err.find("|rho| < 1") != std::string::npos);
    CHECK(run({"generate", "--rho", "1.0", "--wigner", "--out", (dir / "w.csv").string()}).code == kExitOk);
    const RealMatrix w = read_matrix(dir / "w.csv");
    CHECK(w == w.transpose());
  }
  SUBCASE("config errors and I/O errors") {
    CHECK(run({"generate", "--n", "0", "--out", (dir / "x.csv").string()}).code == kExitConfig);
    CHECK(run({"generate", "--bogus", "--out", (dir / "x.csv").string()}).code == kExitConfig);
    CHECK(run({"generate"}).code == kExitConfig);
    CHECK(run({}).code == kExitConfig);
    CHECK(run({"--threads", "0", "generate", "--out", (dir / "x.csv").string()}).code == kExitConfig);
    CHECK(run({"generate", "--n", "4", "--out", "/nonexistent-dir/x.csv"}).code == kExitIo);
  }
}

TEST_CASE("config files") {
  const fs::path dir = scratch();
  const fs::path cfg = dir / "cfg.json";
  {
    std::ofstream(cfg) << R"({"n": 12, "rho": [0.3], "seed": 5, "atoms": "rademacher"})";
  }
  CHECK(run({"--config", cfg.string(), "generate", "--out", (dir / "c1.csv").string()}).code == kExitOk);
  CHECK(run({"generate", "--n", "12", "--rho", "0.3", "--seed", "5", "--atoms", "rademacher", "--out",
             (dir / "c2.csv").string()})
            .code == kExitOk);
  CHECK(slurp(dir / "c1.csv") == slurp(dir / "c2.csv"));

  // A flag on the command line wins over the config file.
  CHECK(run({"--config", cfg.string(), "generate", "--n", "6", "--out", (dir / "c3.csv").string()}).code == kExitOk);
  CHECK(read_matrix(dir / "c3.csv").rows() == 6);

  {
    std::ofstream(cfg) << R"({"n": 12, "colour": "red"})";
  }
  const Run unknown = run({"--config", cfg.string(), "generate", "--out", (dir / "c4.csv").string()});
  CHECK(unknown.code == kExitConfig);
  CHECK(unknown.err.find("colour") != std::string::npos);
  {
    std::ofstream(cfg) << R"({"wigner": "yes"})";
  }
  CHECK(run({"--config", cfg.string(), "generate", "--out", (dir / "c4.csv").string()}).code == kExitConfig);
  {
    std::ofstream(cfg) << "{not json";
  }
  CHECK(run({"--config", cfg.string(), "generate", "--out", (dir / "c4.csv").string()}).code == kExitConfig);
  CHECK(run({"--config", (dir / "missing.json").string(), "generate", "--out", (dir / "c4.csv").string()}).code ==
        kExitIo);
}

TEST_CASE("ESPECTRA_THREADS") {
  const fs::path dir = scratch();
  ::setenv("ESPECTRA_THREADS", "2", 1);
  CHECK(run({"generate", "--n", "20", "--seed", "3", "--out", (dir / "t1.csv").string()}).code == kExitOk);
  ::setenv("ESPECTRA_THREADS", "junk", 1);
  CHECK(run({"generate", "--n", "20", "--seed", "3", "--out", (dir / "t2.csv").string()}).code == kExitConfig);
  ::unsetenv("ESPECTRA_THREADS");
  CHECK(run({"generate", "--n", "20", "--seed", "3", "--out", (dir / "t2.csv").string()}).code == kExitOk);
  CHECK(slurp(dir / "t1.csv") == slurp(dir / "t2.csv"));
}

TEST_CASE("spectrum") {
  const fs::path dir = scratch();
  CHECK(run({"generate", "--n", "10", "--seed", "2", "--out", (dir / "s.csv").string()}).code == kExitOk);
  CHECK(run({"spectrum", "--in", (dir / "s.csv").string(), "--out", (dir / "eig.csv").string()}).code == kExitOk);
  std::istringstream lines(slurp(dir / "eig.csv"));
  std::string line;
  int count = 0;
  std::getline(lines, line);
  while (std::getline(lines, line))
    if (!line.empty()) ++count;
  CHECK(count == 10);
  CHECK(run({"spectrum", "--in", (dir / "s.csv").string(), "--kind", "singular", "--z", "0.5", "--out",
             (dir / "sv.json").string()})
            .code == kExitOk);
  const auto j = nlohmann::json::parse(slurp(dir / "sv.json"));
  CHECK(j.is_object());
  CHECK(run({"spectrum", "--in", (dir / "missing.csv").string(), "--out", (dir / "e.csv").string()}).code == kExitIo);
  CHECK(run({"spectrum", "--in", (dir / "s.csv").string(), "--kind", "weird", "--out", (dir / "e.csv").string()})
            .code == kExitConfig);
}

TEST_CASE("dyson solve") {
  const Run r = run({"dyson", "solve", "--m", "2", "--z", "0.3+0.1i", "--eta", "0.2i", "--rho", "0.5,0.7"});
  CHECK(r.code == kExitOk);
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header.find("converged=true") != std::string::npos);
  const auto pos = header.find("residual=");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(header.substr(pos + 9)) <= 1e-12);
  std::string line;
  int rows = 0;
  std::getline(lines, line);
  CHECK(line == "a,b,re,im");
  while (std::getline(lines, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 16);

  const Run json_run = run({"dyson", "solve", "--z", "0.3+0.1i", "--eta", "0.2i", "--format", "json"});
  CHECK(json_run.code == kExitOk);
  const auto j = nlohmann::json::parse(json_run.out);
  CHECK(j.contains("residual"));

  CHECK(run({"dyson", "solve", "--eta", "0.1i", "--z", "0.9", "--max-iter", "1"}).code == kExitNumerical);
  CHECK(run({"dyson", "solve", "--eta", "-0.1i"}).code == kExitConfig);
  CHECK(run({"dyson", "solve", "--z", "nonsense"}).code == kExitConfig);
}

TEST_CASE("density") {
  const fs::path dir = scratch();
  const Run r = run({"density", "--z", "0", "--eps", "1e-4", "--points", "401", "--out", (dir / "d.csv").string()});
  CHECK(r.code == kExitOk);
  std::istringstream lines(slurp(dir / "d.csv"));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "x,rho");
  double at_zero = -1;
  while (std::getline(lines, line)) {
    const auto comma = line.find(',');
    if (std::abs(std::stod(line.substr(0, comma))) < 1e-12) at_zero = std::stod(line.substr(comma + 1));
  }
  CHECK(at_zero == doctest::Approx(0.3183).epsilon(1e-3));
  CHECK(run({"density", "--eps", "0"}).code == kExitConfig);
}

TEST_CASE("verify and lsv reports") {
  const fs::path dir = scratch();
  const fs::path rep = dir / "r.json";
  const Run r = run({"verify", "product-law", "--m", "2", "--n", "64", "--trials", "4", "--seed", "1", "--report",
                     rep.string()});
  CHECK((r.code == kExitOk || r.code == kExitThreshold));
  const auto j = nlohmann::json::parse(slurp(rep));
  CHECK(j["name"] == "product-law");
  CHECK(j["per_N"].size() >= 1);
  CHECK(r.code == (j["pass"].get<bool>() ? kExitOk : kExitThreshold));

  // An impossible threshold fails with exit 1 and still writes the report.
  fs::remove(rep);
  CHECK(run({"verify", "product-law", "--n", "32", "--trials", "2", "--ks-threshold", "0", "--report", rep.string()})
            .code == kExitThreshold);
  CHECK(fs::exists(rep));

  CHECK(run({"verify", "gap", "--m", "2", "--n-list", "8,16", "--reps", "3", "--report", rep.string()}).code !=
        kExitConfig);
  CHECK(run({"verify", "concentration", "--eta", "0.05i", "--n-list", "8,16"}).code == kExitConfig);
  CHECK(run({"lsv", "--m", "2", "--n", "16", "--trials", "3", "--z", "1", "--report", rep.string()}).code == kExitOk);
  CHECK(nlohmann::json::parse(slurp(rep))["name"] == "lsv");
  CHECK(run({"verify", "nothing"}).code == kExitConfig);
}

#ifdef ESPECTRA_CLI_PATH
TEST_CASE("installed binary") {
  const fs::path dir = scratch();
  const std::string cmd = std::string(ESPECTRA_CLI_PATH) + " generate --n 8 --out " + (dir / "bin.csv").string() +
                          " > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  const std::string bad = std::string(ESPECTRA_CLI_PATH) + " generate --rho 1.0 --out x.csv > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == kExitConfig);
}
#endif
