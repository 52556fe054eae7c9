#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "uvi/io.hpp"
#include "uvi/rng.hpp"
#include "uvi/var.hpp"

namespace io = uvi::io;
using uvi::MatrixXd;
using uvi::VarPath;

namespace {

std::string temp_file(const std::string& tag) {
  static int counter = 0;
  return "/tmp/uvi_io_test_" + std::to_string(getpid()) + "_" + tag + "_" +
         std::to_string(counter++) + ".csv";
}

std::string slurp(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

VarPath random_path(int n, int d, std::uint64_t seed) {
  uvi::rng::Stream s(seed);
  VarPath p;
  p.data.resize(n, d);
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j < d; ++j) p.data(t, j) = s.normal() * std::pow(10.0, s.uniform(-8, 8));
  }
  return p;
}

}  // namespace

TEST_CASE("format_double survives a strtod round trip") {
  for (double v : {1.0 / 3.0, 3.141592653589793, 1e-300, 2.2250738585072014e-308, -7.1,
                   123456789.123456789, 0.0}) {
    std::string s = io::format_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
}

TEST_CASE("path file round trip is bit identical") {
  VarPath path = random_path(25, 3, 99);
  std::string file = temp_file("path");
  io::save_path(path, file);

  VarPath back = io::load_path(file);
  REQUIRE(back.n() == path.n());
  REQUIRE(back.d() == path.d());
  CHECK((back.data.array() == path.data.array()).all());

  // Saving the loaded path reproduces the file bytes exactly.
  std::string file2 = temp_file("path");
  io::save_path(back, file2);
  CHECK(slurp(file) == slurp(file2));
  std::remove(file.c_str());
  std::remove(file2.c_str());
}

TEST_CASE("load_path rejects malformed files") {
  auto write = [](const std::string& content) {
    std::string file = temp_file("bad");
    std::ofstream os(file);
    os << content;
    os.close();
    return file;
  };

  std::string empty = write("");
  CHECK_THROWS_AS(io::load_path(empty), uvi::IoError);

  std::string bad_header = write("time,x1\n1,0.5\n");
  CHECK_THROWS_AS(io::load_path(bad_header), uvi::IoError);

  std::string wrong_cols = write("t,x1,x3\n1,0.5,0.2\n");
  CHECK_THROWS_AS(io::load_path(wrong_cols), uvi::IoError);

  std::string ragged = write("t,x1,x2\n1,0.5,0.2\n2,0.1\n");
  CHECK_THROWS_AS(io::load_path(ragged), uvi::IoError);

  std::string bad_number = write("t,x1\n1,0.5\n2,zebra\n");
  CHECK_THROWS_AS(io::load_path(bad_number), uvi::IoError);

  std::string skipped_t = write("t,x1\n1,0.5\n3,0.2\n");
  CHECK_THROWS_AS(io::load_path(skipped_t), uvi::IoError);

  std::string header_only = write("t,x1\n");
  CHECK_THROWS_AS(io::load_path(header_only), uvi::IoError);

  CHECK_THROWS_AS(io::load_path("/tmp/uvi_io_test_does_not_exist.csv"), uvi::IoError);
  for (const std::string& f : {empty, bad_header, wrong_cols, ragged, bad_number, skipped_t,
                               header_only}) {
    std::remove(f.c_str());
  }
}

TEST_CASE("save_path refuses unwritable locations") {
  VarPath path = random_path(10, 1, 4);
  CHECK_THROWS_AS(io::save_path(path, "/nonexistent-dir-uvi/x.csv"), uvi::IoError);
  CHECK_THROWS_AS(io::save_matrix(path.data, "/nonexistent-dir-uvi/x.csv"), uvi::IoError);
  CHECK_THROWS_AS(io::save_text("x", "/nonexistent-dir-uvi/x.txt"), uvi::IoError);
}

TEST_CASE("matrix round trip is exact") {
  uvi::rng::Stream s(7);
  MatrixXd m(4, 3);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 3; ++j) m(i, j) = s.normal() * std::pow(10.0, s.uniform(-6, 6));
  }
  std::string file = temp_file("mat");
  io::save_matrix(m, file);
  MatrixXd back = io::load_matrix(file);
  REQUIRE(back.rows() == 4);
  REQUIRE(back.cols() == 3);
  CHECK((back.array() == m.array()).all());
  std::remove(file.c_str());
}

TEST_CASE("text files round trip") {
  std::string file = temp_file("txt");
  std::string content = "line one\nline two\n";
  io::save_text(content, file);
  CHECK(io::load_text(file) == content);
  std::remove(file.c_str());
  CHECK_THROWS_AS(io::load_text(file), uvi::IoError);
}

TEST_CASE("model params survive a json round trip") {
  uvi::ModelParams p;
  p.gamma = MatrixXd(2, 2);
  p.gamma << 0.5, 1.0 / 3.0, -0.1, 0.97;
  p.sigma = MatrixXd(2, 2);
  p.sigma << 1.0, 0.3, 0.3, 2.0;
  p.moment_bound = 1.5;
  Eigen::EigenSolver<MatrixXd> es(p.gamma);
  p.spectrum = es.eigenvalues();

  uvi::json j = p;
  uvi::ModelParams back = j.get<uvi::ModelParams>();
  CHECK((back.gamma.array() == p.gamma.array()).all());
  CHECK((back.sigma.array() == p.sigma.array()).all());
  CHECK(back.moment_bound == p.moment_bound);
  REQUIRE(back.spectrum.has_value());
  CHECK((back.spectrum->array() == p.spectrum->array()).all());

  // Serialized again, the document is unchanged.
  uvi::json j2 = back;
  CHECK(j.dump() == j2.dump());

  // The optional spectrum stays absent when never set.
  p.spectrum.reset();
  uvi::json j3 = p;
  uvi::ModelParams back3 = j3.get<uvi::ModelParams>();
  CHECK_FALSE(back3.spectrum.has_value());
}
