#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "mestlab/io.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("mestlab_cli_" + std::to_string(std::rand()) + "_" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

RunResult run(const TempDir& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + MESTLAB_CLI_PATH + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = mestlab::io::read_text(out);
  r.err = mestlab::io::read_text(err);
  return r;
}

}  // namespace

TEST_CASE("fit on a 5x2 design reproduces least squares") {
  TempDir dir;
  Eigen::MatrixXd X(5, 2);
  X << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4;
  Eigen::VectorXd y(5);
  y << 1.0, 2.9, 5.2, 7.1, 8.8;
  mestlab::io::write_matrix_csv(dir / "X.csv", X);
  mestlab::io::write_vector_csv(dir / "y.csv", y);
  const RunResult r = run(dir, "fit --design " + (dir / "X.csv").string() + " --response " +
                                   (dir / "y.csv").string() + " --loss square --intercept --out " +
                                   (dir / "fit.json").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json doc = json::parse(mestlab::io::read_text(dir / "fit.json"));
  // Normal equations by hand: Sxy = 19.8, Sxx = 10, so slope 1.98 and intercept 5 - 2 * 1.98 = 1.04.
  const Eigen::VectorXd oracle = oracle::lse(X, y);
  CHECK(oracle(0) == doctest::Approx(1.04).epsilon(1e-12));
  CHECK(oracle(1) == doctest::Approx(1.98).epsilon(1e-12));
  CHECK(doc["converged"].get<bool>());
  CHECK(doc["beta"][0].get<double>() == doctest::Approx(1.04).epsilon(1e-10));
  CHECK(doc["beta"][1].get<double>() == doctest::Approx(1.98).epsilon(1e-10));
  CHECK(doc["weights"].size() == 5);
  CHECK(fs::exists(dir / "fit.json.manifest.json"));
}

TEST_CASE("missing input file exits 2 and names the path") {
  TempDir dir;
  const std::string missing = (dir / "nope.csv").string();
  const RunResult r = run(dir, "fit --design " + missing + " --response " + missing +
                                   " --out " + (dir / "f.json").string());
  CHECK(r.code == 2);
  CHECK(r.err.find(missing) != std::string::npos);
}

TEST_CASE("singular design exits 3 and mentions rank") {
  TempDir dir;
  Eigen::MatrixXd X(6, 2);
  X << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
  mestlab::io::write_matrix_csv(dir / "X.csv", X);
  mestlab::io::write_vector_csv(dir / "y.csv", Eigen::VectorXd::LinSpaced(6, 0.0, 1.0));
  const RunResult r = run(dir, "fit --design " + (dir / "X.csv").string() + " --response " +
                                   (dir / "y.csv").string() + " --out " +
                                   (dir / "f.json").string());
  CHECK(r.code == 3);
  CHECK(r.err.find("rank") != std::string::npos);
}

TEST_CASE("generated design is read back bit-identically") {
  TempDir dir;
  const RunResult g = run(dir, "design gen --family \"iid(gaussian)\" --n 30 --p 5 --seed 11 --out " +
                                   (dir / "X.csv").string());
  REQUIRE_MESSAGE(g.code == 0, g.err);
  const Eigen::MatrixXd X = mestlab::io::read_matrix_csv(dir / "X.csv");
  REQUIRE(X.rows() == 30);
  REQUIRE(X.cols() == 5);
  mestlab::io::write_matrix_csv(dir / "X2.csv", X);
  CHECK(mestlab::io::read_text(dir / "X.csv") == mestlab::io::read_text(dir / "X2.csv"));

  const Eigen::VectorXd y = oracle::gaussian_vector(30, 4, 1.0);
  mestlab::io::write_vector_csv(dir / "y.csv", y);
  const RunResult f = run(dir, "fit --design " + (dir / "X.csv").string() + " --response " +
                                   (dir / "y.csv").string() + " --loss square --out " +
                                   (dir / "fit.json").string());
  REQUIRE_MESSAGE(f.code == 0, f.err);
  const json doc = json::parse(mestlab::io::read_text(dir / "fit.json"));
  const Eigen::VectorXd oracle = oracle::lse(X, y);
  for (int j = 0; j < 5; ++j) {
    CHECK(doc["beta"][j].get<double>() == doctest::Approx(oracle(j)).epsilon(1e-10));
  }

  const json man = json::parse(mestlab::io::read_text(dir / "X.csv.manifest.json"));
  CHECK(man["subcommand"] == "design gen");
  CHECK(man["outputs"][0]["git_blob_sha1"] ==
        mestlab::io::git_blob_hash(mestlab::io::read_text(dir / "X.csv")));
  CHECK(man.contains("runtime_seconds"));
  CHECK(man["config"]["seed"] == "11");
}

TEST_CASE("unknown flags are rejected") {
  TempDir dir;
  CHECK(run(dir, "fit --bogus 1").code == 2);
  CHECK(run(dir, "frobnicate").code == 2);
}

TEST_CASE("invalid loss spec exits 2") {
  TempDir dir;
  const RunResult g = run(dir, "design gen --n 10 --p 2 --out " + (dir / "X.csv").string());
  REQUIRE(g.code == 0);
  mestlab::io::write_vector_csv(dir / "y.csv", Eigen::VectorXd::Ones(10));
  const RunResult r = run(dir, "fit --design " + (dir / "X.csv").string() + " --response " +
                                   (dir / "y.csv").string() + " --loss \"huber(k=-1)\" --out " +
                                   (dir / "f.json").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("huber") != std::string::npos);
}

TEST_CASE("--version prints build metadata") {
  TempDir dir;
  const RunResult r = run(dir, "--version");
  CHECK(r.code == 0);
  CHECK(r.out.find("mestlab") != std::string::npos);
  CHECK(r.out.find("eigen") != std::string::npos);
}

TEST_CASE("loo, jackknife, sensitivity and check write outputs and manifests") {
  TempDir dir;
  REQUIRE(run(dir, "design gen --n 40 --p 8 --seed 3 --out " + (dir / "X.csv").string()).code == 0);
  mestlab::io::write_vector_csv(dir / "y.csv", oracle::gaussian_vector(40, 9, 1.0));
  const std::string X = (dir / "X.csv").string();
  const std::string y = (dir / "y.csv").string();

  RunResult r = run(dir, "loo --design " + X + " --response " + y + " --coords 1..3 --out " +
                             (dir / "loo.csv").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::string text = mestlab::io::read_text(dir / "loo.csv");
  CHECK(text.rfind("j,bj,beta_j,Nj,xij,delta_c_contrib", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(fs::exists(dir / "loo.csv.manifest.json"));

  r = run(dir, "jackknife --design " + X + " --response " + y + " --coords 2 --out " +
                   (dir / "jk.csv").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(mestlab::io::read_text(dir / "jk.csv").rfind("j,jackknife_variance\n2,", 0) == 0);

  r = run(dir, "--threads 1 sensitivity --design " + X + " --reps 100 --coords 1 --out " +
                   (dir / "s.csv").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(mestlab::io::read_text(dir / "s.csv").find("kappa0") != std::string::npos);
  const json man = json::parse(mestlab::io::read_text(dir / "s.csv.manifest.json"));
  CHECK(man["threads"] == 1);

  r = run(dir, "design check --design " + X + " --qj-reps 30 --delta-reps 3 --coords 1,2 --out " +
                   (dir / "check.json").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json doc = json::parse(mestlab::io::read_text(dir / "check.json"));
  CHECK(doc["verdicts"].size() >= 5);

  CHECK(run(dir, "loo --design " + X + " --response " + y + " --coords 9 --out " +
                     (dir / "bad.csv").string())
            .code == 2);
}

TEST_CASE("coverage and ks write directories with manifests") {
  TempDir dir;
  mestlab::io::write_text(dir / "exp.cfg",
                          "design = iid(gaussian)\nloss = huber\nerrors = gaussian(1)\n"
                          "n = 40\nkappa = 0.25\nouter_reps = 2\ninner_reps = 30\n"
                          "coords = 1,2\nseed = 5\nks_n0 = 20\nks_n = 40\nks_reps = 10\n");
  RunResult r = run(dir, "coverage --config " + (dir / "exp.cfg").string() + " --out " +
                             (dir / "cov").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "cov/coverage_rows.csv"));
  CHECK(fs::exists(dir / "cov/coverage_summary.csv"));
  const json man = json::parse(mestlab::io::read_text(dir / "cov/manifest.json"));
  CHECK(man["outputs"].size() == 2);

  r = run(dir, "ks --config " + (dir / "exp.cfg").string() + " --seeds 2 --out " +
                   (dir / "ks").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "ks/ks.csv"));

  mestlab::io::write_text(dir / "bad.cfg", "design = iid(gaussian)\nkappaa = 0.3\n");
  r = run(dir, "coverage --config " + (dir / "bad.cfg").string() + " --out " +
                   (dir / "cov2").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("kappaa") != std::string::npos);
}
