#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "spheremix/io.hpp"

using namespace spheremix;
namespace fs = std::filesystem;

namespace {

io::Table parse(const std::string& text) {
  std::istringstream in(text);
  return io::parse_csv(in);
}

std::size_t parse_error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("spheremix_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

}  // namespace

TEST(ParseCsv, HeaderAndValues) {
  const io::Table t = parse("x,y,z\n1,0,0\r\n\n0,\"1\",0\n");
  ASSERT_EQ(t.values.rows(), 2);
  EXPECT_EQ(t.names, (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_EQ(t.values(1, 1), 1.0);
  EXPECT_EQ(t.find("Y"), 1);
  EXPECT_FALSE(t.find("w").has_value());
  EXPECT_THROW(t.require("w"), DomainError);
}

TEST(ParseCsv, ErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line("x,y,z\n1,0,0\n1,0\n"), 3u);
  EXPECT_EQ(parse_error_line("x,y,z\n1,0,0\n\n0,abc,1\n"), 4u);
  EXPECT_EQ(parse_error_line("1,0,0\n0,1,0\n"), 1u);
  EXPECT_EQ(parse_error_line(""), 1u);
  EXPECT_EQ(parse_error_line("x,,z\n"), 1u);
}

TEST(LoadPoints, CartesianRenormalization) {
  const io::LoadedData unit = io::load_points(parse("x,y,z\n1,0,0\n0,0.6,0.8\n"));
  EXPECT_FALSE(unit.renormalized);
  EXPECT_FALSE(unit.geographic);
  const io::LoadedData off = io::load_points(parse("x,y,z\n2,0,0\n0,0.6,0.8\n"));
  EXPECT_TRUE(off.renormalized);
  EXPECT_EQ(off.data.matrix()(0, 0), 1.0);
  EXPECT_THROW(io::load_points(parse("x,y,z\n0,0,0\n")), DegenerateError);
  EXPECT_THROW(io::load_points(parse("x,y\n1,0\n")), DomainError);
}

TEST(LoadPoints, ExcludedColumnsAndHigherDimension) {
  const io::LoadedData d = io::load_points(parse("a,b,c,d,age\n1,0,0,0,30\n0,0,0,1,40\n"), {"age"});
  EXPECT_EQ(d.data.dim(), 4);
  EXPECT_EQ(d.columns, (std::vector<std::string>{"a", "b", "c", "d"}));
  const io::Table t = parse("x,y,z,age\n1,0,0,30\n0,1,0,40\n");
  EXPECT_EQ(io::select_columns(t, {"age"}), Eigen::Vector2d(30, 40));
}

TEST(LoadPoints, GeographicColumns) {
  const io::LoadedData d = io::load_points(parse("id,Lat,Lon\n1,0,0\n2,90,0\n"));
  EXPECT_TRUE(d.geographic);
  EXPECT_TRUE(d.data.matrix().row(0).isApprox(Eigen::RowVector3d(1, 0, 0)));
  EXPECT_NEAR(d.data.matrix()(1, 2), 1.0, 1e-15);
  try {
    io::load_points(parse("lat,lon\n0,0\n95,0\n"));
    FAIL();
  } catch (const DegenerateError& e) {
    EXPECT_EQ(e.row(), 1u);
  }
}

TEST(Format, RoundTripsDoubles) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(io::fmt(v)), v);
  EXPECT_EQ(io::fmt(std::nan("")), "NA");
}

TEST_F(TempDir, WritersProduceExpectedSchemas) {
  Eigen::MatrixXd w(2, 2);
  w << 0.9, 0.1, 0.25, 0.75;
  io::write_labels(path("labels.csv"), w);
  EXPECT_EQ(slurp(path("labels.csv")), "row,label,max_responsibility\n1,1,0.90000000000000002\n2,2,0.75\n");
  io::write_truth(path("truth.csv"), {0, 1});
  EXPECT_EQ(slurp(path("truth.csv")), "row,label\n1,1\n2,2\n");
  EXPECT_EQ(io::read_labels(path("truth.csv")), (std::vector<int>{1, 2}));
  io::write_responsibilities(path("resp.csv"), w);
  EXPECT_EQ(slurp(path("resp.csv")).substr(0, 10), "row,w1,w2\n");

  KSelection sel;
  KSelectionRow r1;
  r1.k = 1;
  r1.ok = true;
  r1.loglik = -10;
  r1.bic = 25;
  r1.icl = 25;
  r1.n_params = 5;
  KSelectionRow r2;
  r2.k = 2;
  sel.table = {r1, r2};
  io::write_icl_table(path("icl.csv"), sel);
  EXPECT_EQ(slurp(path("icl.csv")), "K,loglik,bic,icl,nu\n1,-10,25,25,5\n2,NA,NA,NA,0\n");

  Eigen::MatrixXd x(1, 4);
  x << 0.5, 0.5, 0.5, 0.5;
  io::write_points(path("p4.csv"), DataMatrix(x));
  EXPECT_EQ(slurp(path("p4.csv")), "x1,x2,x3,x4\n0.5,0.5,0.5,0.5\n");
  const io::LoadedData back = io::load_points(io::read_csv(path("p4.csv")));
  EXPECT_EQ(back.data.matrix(), x);
}

TEST_F(TempDir, ReadLabelsRejectsFractions) {
  std::ofstream(path("bad.csv")) << "label\n1\n1.5\n";
  EXPECT_THROW(io::read_labels(path("bad.csv")), ParseError);
  std::ofstream(path("two.csv")) << "a,b\n1,2\n";
  EXPECT_THROW(io::read_labels(path("two.csv")), DomainError);
  EXPECT_THROW(io::read_csv(path("missing.csv")), DomainError);
}

TEST_F(TempDir, ModelJsonOrderAndRoundTrip) {
  FitResult r;
  r.model = {Kind::Sespc,
             {{Eigen::Vector3d(1, 2, 3), Eigen::Vector2d(0.1, -0.2)}, {Eigen::Vector3d(-1, 0, 0.5), Eigen::Vector2d(0, 0)}},
             Eigen::Vector2d(0.4, 0.6)};
  r.loglik = -12.5;
  r.bic = 30;
  r.icl = 31;
  const io::json j = io::model_json(r, 200, 42);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"kind", "K", "weights", "components", "loglik", "bic", "icl", "n", "seed"}));
  io::write_json(path("model.json"), j);
  const MixtureModel m = io::model_from_json(io::read_json(path("model.json")));
  EXPECT_EQ(m.kind, Kind::Sespc);
  EXPECT_EQ(m.weights, r.model.weights);
  EXPECT_EQ(m.components[0].mu, r.model.components[0].mu);
  EXPECT_EQ(m.components[0].gamma, r.model.components[0].gamma);

  io::json c = j;
  ConcomitantCoefficients coef = ConcomitantCoefficients::zeros(2, 1);
  io::add_concomitant(c, coef, {"age"});
  EXPECT_EQ(c["beta"].size(), 1u);
  EXPECT_EQ(c["beta"][0].size(), 2u);
  EXPECT_EQ(c["covariates"][0], "age");
}
