#include <doctest.h>

#include <filesystem>

#include "mestlab/errors.hpp"
#include "mestlab/io.hpp"
#include "mestlab/stats.hpp"

using namespace mestlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mestlab_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("parse_call") {
  const io::CallSpec a = io::parse_call("Huber(k=1.5, 0.1)");
  CHECK(a.name == "huber");
  REQUIRE(a.args.size() == 2);
  CHECK(a.args[0].first == "k");
  CHECK(a.args[1].first.empty());
  CHECK(a.get_double("k", 9, 0.0) == 1.5);
  CHECK(a.get_double("eps", 0, 0.0) == 0.1);
  CHECK(a.get_double("delta", 1, 7.0) == 7.0);

  const io::CallSpec b = io::parse_call("elliptical(factor=t(df=2), entries=gaussian)");
  CHECK(b.get("factor", 9).value() == "t(df=2)");
  const io::CallSpec c = io::parse_call("anova([2,4,9])");
  REQUIRE(c.args.size() == 1);
  CHECK(c.args[0].second == "[2,4,9]");
  const io::CallSpec d = io::parse_call("elliptical(t(df=2))");
  CHECK(d.args[0].first.empty());
  CHECK(io::parse_call("matrix-normal").name == "matrix_normal");
  CHECK_THROWS_AS(io::parse_call("huber(1"), ParseError);
  CHECK_THROWS_AS(io::parse_call("huber(1,,2)"), ParseError);
}

TEST_CASE("number and list parsing") {
  CHECK(io::parse_double(" 1e-3 ") == 1e-3);
  CHECK(io::parse_double("+2") == 2.0);
  CHECK_THROWS_AS(io::parse_double("1.0x"), ParseError);
  CHECK_THROWS_AS(io::parse_double(""), ParseError);
  CHECK(io::parse_int("-4") == -4);
  CHECK_THROWS_AS(io::parse_uint("-4"), ParseError);
  CHECK(io::parse_bool("Yes"));
  CHECK_FALSE(io::parse_bool("off"));
  CHECK_THROWS_AS(io::parse_bool("maybe"), ParseError);
  CHECK(io::parse_int_list("1..3, 7") == std::vector<long long>{1, 2, 3, 7});
  CHECK(io::parse_int_list("[2,4,9]") == std::vector<long long>{2, 4, 9});
  CHECK(io::parse_double_list("{0.5, 0.8}") == std::vector<double>{0.5, 0.8});
  CHECK_THROWS_AS(io::parse_int_list("5..1"), ParseError);
}

TEST_CASE("CSV round trip is bit exact") {
  Eigen::MatrixXd m(3, 2);
  m << 0.1, -1.0 / 3.0, 1e-300, 12345678.901234567, -0.0, M_PI;
  const fs::path path = scratch("m.csv");
  io::write_matrix_csv(path, m);
  const Eigen::MatrixXd back = io::read_matrix_csv(path);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 2);
  for (Eigen::Index i = 0; i < m.size(); ++i) CHECK(back.data()[i] == m.data()[i]);

  Eigen::VectorXd v(4);
  v << 1.5, 2.5, -3.25, 1.0 / 7.0;
  io::write_vector_csv(path, v);
  CHECK(io::read_vector_csv(path) == v);
  io::write_text(path, "1,2,3\n");
  CHECK(io::read_vector_csv(path).size() == 3);
}

TEST_CASE("CSV errors name the path") {
  const fs::path missing = scratch("does_not_exist.csv");
  fs::remove(missing);
  try {
    io::read_matrix_csv(missing);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(missing.string()) != std::string::npos);
  }
  const fs::path ragged = scratch("ragged.csv");
  io::write_text(ragged, "1,2\n3\n");
  CHECK_THROWS_AS(io::read_matrix_csv(ragged), ParseError);
  io::write_text(ragged, "1,abc\n");
  CHECK_THROWS_AS(io::read_matrix_csv(ragged), ParseError);
  io::write_text(ragged, "\n\n");
  CHECK_THROWS_AS(io::read_matrix_csv(ragged), ParseError);
}

TEST_CASE("key value config") {
  const auto cfg = io::KeyValueConfig::parse("# comment\n n = 100, 200 \nkappa=0.5 # trailing\n\n");
  CHECK(cfg.get("n", "") == "100, 200");
  CHECK(cfg.require("kappa") == "0.5");
  CHECK(cfg.unused_keys().empty());
  const auto cfg2 = io::KeyValueConfig::parse("a = 1\nb = 2\n");
  cfg2.get("a", "");
  CHECK(cfg2.unused_keys() == std::vector<std::string>{"b"});
  CHECK_THROWS_AS(cfg2.require("c"), ParseError);
  CHECK_THROWS_AS(io::KeyValueConfig::parse("a = 1\na = 2\n"), ParseError);
  CHECK_THROWS_AS(io::KeyValueConfig::parse("novalue\n"), ParseError);
}

TEST_CASE("git blob hash") {
  // git hash-object of an empty file and of "hello world\n"
  CHECK(io::git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(io::git_blob_hash("hello world\n") == "3b18e512dba79e4c8300dd08aeb37f8e728b8dad");
}

TEST_CASE("format_double keeps 17 digits") {
  CHECK(io::format_double(0.1) == "0.10000000000000001");
  CHECK(io::parse_double(io::format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("summary statistics") {
  const std::vector<double> xs{4.0, 1.0, 3.0, 2.0};
  CHECK(stats::mean(xs) == 2.5);
  CHECK(stats::sample_variance(xs) == doctest::Approx(5.0 / 3.0));
  CHECK(stats::median(xs) == 2.5);
  CHECK(stats::quantile(xs, 0.25) == doctest::Approx(1.75));
  CHECK(stats::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(stats::normal_cdf(stats::normal_quantile(0.3)) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(stats::student_t_quantile(2.0, 0.75) == doctest::Approx(0.5 / std::sqrt(0.375)).epsilon(1e-14));
  CHECK(stats::student_t_quantile(5.0, 0.975) == doctest::Approx(2.5705818356363155).epsilon(1e-10));
}
