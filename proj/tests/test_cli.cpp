#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "semfx/cli.hpp"
#include "semfx/csv.hpp"
#include "semfx/effects.hpp"
#include "semfx/inference.hpp"
#include "support.hpp"

using namespace semfx;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "semfx");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("semfx_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p.string();
}

std::string write_matrix(const std::string& name, const std::vector<std::string>& header,
                         const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::ostringstream os;
  os.precision(17);
  os << "y";
  for (const auto& h : header) os << "," << h;
  os << "\n";
  for (long i = 0; i < y.size(); ++i) {
    os << y[i];
    for (long k = 0; k < x.cols(); ++k) os << "," << x(i, k);
    os << "\n";
  }
  return write_file(name, os.str());
}

std::string continuous_csv() {
  static const std::string path = [] {
    const Dataset d = testdata::trunc_normal(400, Eigen::Vector2d(0.8, -0.5), 12);
    return write_matrix("cont.csv", {"a", "b"}, d.raw_x(), d.y);
  }();
  return path;
}

std::string count_csv() {
  static const std::string path = [] {
    const Dataset d = testdata::poisson(400, 12);
    return write_matrix("count.csv", {"a", "b"}, d.raw_x(), d.y);
  }();
  return path;
}

}  // namespace

TEST_CASE("csv reader") {
  std::istringstream ok("y,x\n1,2\n\"3\", 4.5e-1\n");
  const NumericTable t = read_csv(ok);
  CHECK(t.rows() == 2);
  CHECK(t.column("x")[1] == doctest::Approx(0.45));
  CHECK_THROWS_AS(t.column("z"), Error);

  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), Error);
  std::istringstream header_only("y,x\n");
  CHECK_THROWS_AS(read_csv(header_only), Error);
  std::istringstream ragged("y,x\n1,2\n3\n");
  CHECK_THROWS_AS(read_csv(ragged), Error);

  std::istringstream bad("y,x\n1,2\n3,abc\n");
  try {
    read_csv(bad, "data.csv");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }
}

TEST_CASE("exit codes") {
  CHECK(exit_code(ErrorKind::parse) == 3);
  CHECK(exit_code(ErrorKind::non_convergence) == 4);
  CHECK(exit_code(ErrorKind::divergence) == 4);
  CHECK(exit_code(ErrorKind::unsupported) == 5);
  CHECK(exit_code(ErrorKind::singular_information) == 6);
  CHECK(cli({}).code == 2);
  CHECK(cli({"fit"}).code == 2);
  CHECK(cli({"--help"}).code == 0);

  const std::string empty = write_file("empty.csv", "");
  CHECK(cli({"fit", "--input", empty, "--response", "y"}).code == 3);
  const std::string bad = write_file("bad.csv", "y,x\n1,2\n2,NA\n3,1\n");
  const Run r = cli({"fit", "--input", bad, "--response", "y"});
  CHECK(r.code == 3);
  CHECK(r.err.find("row 3") != std::string::npos);
  CHECK(cli({"fit", "--input", continuous_csv(), "--response", "nope"}).code == 2);
  CHECK(cli({"fit", "--input", continuous_csv(), "--response", "y", "--max-iter", "1"}).code == 4);
  CHECK(cli({"effects", "--input", count_csv(), "--response", "y", "--discrete", "--tau", "0.5"}).code == 5);
  CHECK(cli({"curve", "--input", count_csv(), "--response", "y", "--discrete"}).code == 5);
  CHECK(cli({"effects", "--input", continuous_csv(), "--response", "y", "--tau", "1.5"}).code == 2);
  CHECK(cli({"simulate", "weibull"}).code == 2);
}

TEST_CASE("fit report") {
  const Run r = cli({"fit", "--input", continuous_csv(), "--response", "y", "--support", "-5,5"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["command"] == "fit");
  CHECK(j["n"] == 400);
  CHECK(j["coefficients"].size() == 2);
  CHECK(j["coefficients"][0]["covariate"] == "a");
  CHECK(j["support"]["lo"] == -5.0);
  CHECK(j["carrier"]["gamma"][0] == 0.0);
  CHECK(j["df"] == 2 + static_cast<int>(j["carrier"]["gamma"].size()) - 1);

  const Run c = cli({"fit", "--input", continuous_csv(), "--response", "y", "--support", "-5,5",
                     "--format", "csv"});
  REQUIRE(c.code == 0);
  CHECK(c.out.rfind("quantity,name,estimate", 0) == 0);
  CHECK(c.out.find("beta,a," + j["coefficients"][0]["estimate"].dump()) != std::string::npos);

  const std::string out = (scratch() / "fit.json").string();
  CHECK(cli({"fit", "--input", continuous_csv(), "--response", "y", "--output", out}).code == 0);
  CHECK(fs::file_size(out) > 0);
}

TEST_CASE("effects: default grid and serialization parity") {
  const Run r = cli({"effects", "--input", continuous_csv(), "--response", "y"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  int eta = 0;
  int xi = 0;
  for (const auto& row : j["effects"]) {
    if (row["effect"] == "eta") ++eta;
    if (row["effect"] == "xi") ++xi;
  }
  CHECK(xi == 2);
  CHECK(eta == 5 * 2);

  const Run c = cli({"effects", "--input", continuous_csv(), "--response", "y", "--format", "csv"});
  REQUIRE(c.code == 0);
  std::istringstream lines(c.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "effect,tau,covariate,estimate,se,ci_lo,ci_hi,p_value,significant");
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    const auto& row = j["effects"][i++];
    std::ostringstream expect;
    expect << row["effect"].get<std::string>() << ","
           << (row["tau"].is_null() ? "" : row["tau"].dump()) << "," << row["covariate"].get<std::string>()
           << "," << row["estimate"].dump() << "," << row["se"].dump() << "," << row["ci_lo"].dump()
           << "," << row["ci_hi"].dump() << "," << row["p_value"].dump() << ","
           << (row["significant"].get<bool>() ? "true" : "false");
    CHECK(line == expect.str());
  }
  CHECK(i == j["effects"].size());

  const Run d = cli({"effects", "--input", count_csv(), "--response", "y", "--discrete"});
  REQUIRE(d.code == 0);
  CHECK(json::parse(d.out)["effects"].size() == 2);
}

TEST_CASE("curve export") {
  const Run r = cli({"curve", "--input", continuous_csv(), "--response", "y", "--grid", "2", "--format", "csv"});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string head, first, second, extra;
  std::getline(lines, head);
  std::getline(lines, first);
  std::getline(lines, second);
  CHECK(head == "y,c,band_lo,band_hi");
  CHECK(!second.empty());
  CHECK(!std::getline(lines, extra));
  CHECK(first.find(",0.0,0.0,0.0") != std::string::npos);
}

TEST_CASE("simulate") {
  const Run one = cli({"simulate", "poisson", "--replicates", "1", "--n", "200", "--format", "json"});
  REQUIRE(one.code == 0);
  CHECK(one.out.find("\"sd_sim\": null") != std::string::npos);
  const Run table = cli({"simulate", "poisson", "--replicates", "1", "--n", "200"});
  CHECK(table.out.find("NA") != std::string::npos);

  const std::vector<std::string> args = {"simulate", "trunc-normal", "--replicates", "3", "--n", "300",
                                         "--seed", "5", "--format", "json"};
  CHECK(cli(args).out == cli(args).out);

  const std::string out = (scratch() / "sim.txt").string();
  REQUIRE(cli({"simulate", "bernoulli", "--replicates", "2", "--n", "200", "--output", out}).code == 0);
  CHECK(fs::exists(scratch() / "sim.json"));

  const std::string file = write_file("scn.json", R"({"preset": "negbinomial", "n": 200, "replicates": 2})");
  const Run f = cli({"simulate", file, "--methods", "aMLE", "--format", "csv"});
  REQUIRE(f.code == 0);
  CHECK(f.out.find("aMLE,xi2,") != std::string::npos);
  CHECK(f.out.find("MLE,") == f.out.find("aMLE,") + 1);
}

TEST_CASE("analyze on labour-market shaped data") {
  const auto sw = testdata::swiss_like(871, 7);
  const std::string path = write_matrix("swiss.csv", sw.names, sw.x, sw.y);
  const Run r = cli({"analyze", "--input", path, "--response", "y", "--tau", "0.5"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["models"].size() >= 2);
  CHECK(j["models"][0]["model"] == "aMLE");
  double age = 0.0, age2 = 0.0;
  for (const auto& row : j["effects"]) {
    if (row["model"] == "aMLE" && row["effect"] == "xi") {
      if (row["covariate"] == "age") age = row["estimate"];
      if (row["covariate"] == "age2") age2 = row["estimate"];
    }
  }
  CHECK(age > 0.0);
  CHECK(age2 < 0.0);
  const Run c = cli({"analyze", "--input", path, "--response", "y", "--format", "csv"});
  REQUIRE(c.code == 0);
  CHECK(c.out.rfind("model,loglik,df,aic,bic", 0) == 0);
}

TEST_CASE("null effects have roughly uniform p-values") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z;
  int small = 0;
  int total = 0;
  for (int rep = 0; rep < 150; ++rep) {
    Eigen::MatrixXd x(300, 2);
    Eigen::VectorXd y(300);
    for (int i = 0; i < 300; ++i) {
      x(i, 0) = z(rng);
      x(i, 1) = z(rng);
      y[i] = z(rng);
    }
    const Dataset d = Dataset::make(x, y, padded_support(y));
    const FittedModel fm = fit(d);
    const SigmaBlocks sb = sigma_blocks(fm, d);
    const EffectEstimate xi = estimate_xi(fm, d, sb);
    for (int k = 0; k < 2; ++k) {
      small += xi.p_value[k] < 0.05 ? 1 : 0;
      ++total;
    }
  }
  const double rate = static_cast<double>(small) / total;
  CHECK(rate > 0.01);
  CHECK(rate < 0.11);
}
