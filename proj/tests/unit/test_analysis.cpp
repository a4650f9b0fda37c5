#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <limits>

#include "skillworld/analysis/export.hpp"
#include "skillworld/analysis/ksg.hpp"
#include "skillworld/analysis/mds.hpp"
#include "skillworld/util/rng.hpp"

using namespace skillworld;
using namespace skillworld::analysis;

namespace {

struct Pair {
  std::vector<double> x, y;
};

Pair gaussian_pair(double rho, std::size_t n, std::uint64_t seed) {
  auto rng = make_stream(seed, "ksg");
  Pair p;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = standard_normal(rng), b = standard_normal(rng);
    p.x.push_back(a);
    p.y.push_back(rho * a + std::sqrt(1 - rho * rho) * b);
  }
  return p;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

Eigen::MatrixXd pairwise(const Eigen::MatrixXd& p) {
  Eigen::MatrixXd d(p.rows(), p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.rows(); ++j) d(i, j) = (p.row(i) - p.row(j)).norm();
  return d;
}

Eigen::MatrixXd random_rotation(int d, Rng& rng) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = standard_normal(rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

}  // namespace

// ---------------------------------------------------------------------------
// KSG

TEST(Ksg, IndependentUniformsNearZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = make_stream(seed, "ind");
    std::vector<double> x(5000), y(5000);
    for (auto& v : x) v = uniform01(rng);
    for (auto& v : y) v = uniform01(rng);
    EXPECT_NEAR(knn_mi(x, y, 3), 0.0, 0.05) << "seed " << seed;
  }
}

TEST(Ksg, CorrelatedGaussianMatchesClosedForm) {
  const double truth = -0.5 * std::log(1 - 0.81);
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = gaussian_pair(0.9, 5000, seed);
    mean += knn_mi(p.x, p.y, 3) / 10.0;
  }
  EXPECT_NEAR(truth, 0.830, 1e-3);
  EXPECT_NEAR(mean, truth, 0.1);
}

TEST(Ksg, FunctionalDependenceIsLarge) {
  const auto p = gaussian_pair(0.0, 5000, 3);
  EXPECT_GT(knn_mi(p.x, p.x, 3), 3.0);
}

TEST(Ksg, Symmetric) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = gaussian_pair(0.6, 2000, seed);
    EXPECT_NEAR(knn_mi(p.x, p.y), knn_mi(p.y, p.x), 1e-9);
  }
}

TEST(Ksg, MonotoneTransformInvariance) {
  const auto p = gaussian_pair(0.7, 5000, 11);
  std::vector<double> ex, cube;
  for (double v : p.x) {
    ex.push_back(std::exp(v));
    cube.push_back(v * v * v + v);
  }
  const double base = knn_mi(p.x, p.y);
  EXPECT_NEAR(knn_mi(ex, p.y), base, 0.05);
  EXPECT_NEAR(knn_mi(cube, p.y), base, 0.05);
}

TEST(Ksg, TiedValuesAreDeterministic) {
  std::vector<double> x, y;
  for (int i = 0; i < 400; ++i) {
    x.push_back(i % 7);
    y.push_back((i * 3) % 5);
  }
  const double a = knn_mi(x, y), b = knn_mi(x, y);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::isfinite(a));
}

TEST(Ksg, InputContract) {
  std::vector<double> four{1, 2, 3, 4}, three{1, 2, 3};
  EXPECT_NO_THROW(knn_mi(four, four, 3));
  EXPECT_THROW(knn_mi(three, three, 3), std::invalid_argument);
  EXPECT_THROW(knn_mi(four, three, 1), std::invalid_argument);
  EXPECT_THROW(knn_mi(four, four, 0), std::invalid_argument);
  std::vector<double> bad{1, std::nan(""), 3, 4};
  EXPECT_THROW(knn_mi(bad, four, 1), std::invalid_argument);
}

TEST(MiMatrix, CopyMakesDiagonalDominant) {
  auto rng = make_stream(1, "copy");
  std::vector<std::vector<double>> g(3, std::vector<double>(3000));
  for (auto& col : g)
    for (auto& v : col) v = standard_normal(rng);
  const auto m = mi_matrix(g, {"a", "b", "c"}, g);
  ASSERT_EQ(m.col_labels, (std::vector<std::string>{"z1", "z2", "z3"}));
  for (std::size_t i = 0; i < 3; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < 3; ++j)
      if (j != i) off = std::max(off, m.values[i][j]);
    EXPECT_GE(m.values[i][i], 2.0 * off);
    EXPECT_GT(m.values[i][i], 3.0);
  }
}

TEST(MiMatrix, NoiseStaysSmallAndNonNegative) {
  auto rng = make_stream(2, "noise");
  std::vector<std::vector<double>> g(4, std::vector<double>(3000)), z(3, std::vector<double>(3000));
  for (auto* set : {&g, &z})
    for (auto& col : *set)
      for (auto& v : col) v = uniform(rng, -1, 1);
  const auto m = mi_matrix(g, {"x", "y", "vx", "vy"}, z);
  for (const auto& row : m.values)
    for (double v : row) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 0.1);
    }
  EXPECT_THROW(mi_matrix(g, {"x"}, z), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// MDS

TEST(Mds, SquareCornersIn5DRecoverDistances) {
  auto rng = make_stream(3, "mds");
  Eigen::MatrixXd sq(4, 5);
  sq.setZero();
  sq.row(1)(0) = 1;
  sq.row(2)(1) = 1;
  sq.row(3)(0) = 1;
  sq.row(3)(1) = 1;
  Eigen::MatrixXd pts = sq * random_rotation(5, rng);
  pts.rowwise() += Eigen::RowVectorXd::Constant(5, 3.5);
  const auto e = classical_mds(pts, 2);
  EXPECT_FALSE(e.rank_deficient);
  EXPECT_LE((pairwise(e.coords) - pairwise(sq)).cwiseAbs().maxCoeff(), 1e-8);
  // Procrustes: the centered embedding maps onto the centered square by an orthogonal map.
  Eigen::MatrixXd a = e.coords, b = sq.leftCols(2);
  a.rowwise() -= a.colwise().mean();
  b.rowwise() -= b.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd R = svd.matrixU() * svd.matrixV().transpose();
  EXPECT_LE((a * R - b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Mds, CollinearPointsHaveZeroSecondCoordinate) {
  Eigen::MatrixXd pts(5, 3);
  for (int i = 0; i < 5; ++i) pts.row(i) = Eigen::RowVector3d(1, 2, -1) * (0.7 * i * i - 1.0);
  const auto e = classical_mds(pts, 2);
  EXPECT_TRUE(e.rank_deficient);
  EXPECT_LE(e.coords.col(1).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE((pairwise(e.coords) - pairwise(pts)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mds, IdenticalPointsGiveZeros) {
  const Eigen::MatrixXd pts = Eigen::MatrixXd::Constant(6, 4, 2.5);
  const auto e = classical_mds(pts, 2);
  EXPECT_TRUE(e.rank_deficient);
  EXPECT_EQ(e.coords.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mds, RotationInvariantDistances) {
  auto rng = make_stream(4, "rot");
  Eigen::MatrixXd pts(30, 4);
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index j = 0; j < pts.cols(); ++j) pts(i, j) = standard_normal(rng) * (j < 2 ? 3.0 : 0.1);
  const auto a = classical_mds(pts, 2);
  const auto b = classical_mds(pts * random_rotation(4, rng), 2);
  EXPECT_LE((pairwise(a.coords) - pairwise(b.coords)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mds, SignConventionAndContract) {
  auto rng = make_stream(5, "sign");
  Eigen::MatrixXd pts(10, 3);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts(i) = standard_normal(rng);
  const auto e = classical_mds(pts, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index first = 0;
    while (std::abs(e.coords(first, c)) <= 1e-9) ++first;
    EXPECT_GT(e.coords(first, c), 0.0);
  }
  EXPECT_THROW(classical_mds(pts.topRows(2), 2), std::invalid_argument);
  EXPECT_THROW(classical_mds(pts, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Export

TEST(Export, CsvRoundTripIsBitExact) {
  auto rng = make_stream(6, "rt");
  const auto dir = fresh_dir("skillworld_export_rt");
  MIMatrix m{{"x", "y", "vx", "vy"}, {"z1", "z2", "z3"}, {}};
  for (int i = 0; i < 4; ++i) {
    std::vector<double> row;
    for (int j = 0; j < 3; ++j) row.push_back(std::ldexp(standard_normal(rng), static_cast<int>(uniform_index(rng, 80)) - 40));
    m.values.push_back(row);
  }
  m.values[0][0] = std::numeric_limits<double>::denorm_min();
  m.values[1][2] = 0.1;
  std::vector<MdsRow> rows;
  for (int i = 0; i < 50; ++i)
    rows.push_back({standard_normal(rng), standard_normal(rng), uniform01(rng), uniform01(rng) / 3.0});
  std::vector<planner::CurvePoint> curve{{0, 0.0, -120.5, 1.0, 0.0}, {1000, 0.3, 1.0 / 3.0, 0.73, 12.25}};
  Manifest man;
  man.command = "test";
  export_metrics({m, rows, curve}, dir, man);

  const auto m2 = read_mi_matrix((dir / "mi_matrix.csv").string());
  EXPECT_EQ(m2.row_labels, m.row_labels);
  EXPECT_EQ(m2.col_labels, m.col_labels);
  EXPECT_EQ(m2.values, m.values);
  EXPECT_EQ(read_mds((dir / "mds.csv").string()), rows);
  const auto t = csv::read((dir / "curves.csv").string());
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(csv::parse_double(t.rows[1][t.column("mean_return")]), 1.0 / 3.0);
  EXPECT_EQ(csv::parse_double(t.rows[1][t.column("wallclock_s")]), 12.25);
  std::filesystem::remove_all(dir);
}

TEST(Export, EmptyRunWritesOnlyManifest) {
  const auto dir = fresh_dir("skillworld_export_empty");
  Manifest man;
  man.command = "mds";
  man.seed = 4;
  export_metrics({}, dir, man);
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files.push_back(e.path().filename().string());
  EXPECT_EQ(files, std::vector<std::string>{"manifest.json"});
  std::ifstream in(dir / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("seed"), 4);
  EXPECT_TRUE(j.at("outputs").empty());
  EXPECT_EQ(j.at("config_hash"), config_hash(nlohmann::json::object()));
  std::filesystem::remove_all(dir);
}

TEST(Export, ConfigHashChangesIffAFieldChanges) {
  auto rng = make_stream(7, "hash");
  auto random_config = [&] {
    nlohmann::json c;
    c["seed"] = uniform_index(rng, 1000);
    c["lr"] = uniform(rng, 1e-5, 1e-2);
    c["obs_mode"] = bernoulli(rng, 0.5) ? "state" : "pixel";
    c["hidden"] = {uniform_index(rng, 256) + 1, uniform_index(rng, 256) + 1};
    c["plan"] = {{"goal", {uniform01(rng), uniform01(rng)}}, {"real_steps", uniform_index(rng, 100000)}};
    return c;
  };
  for (int i = 0; i < 100; ++i) {
    const auto c = random_config();
    const auto h = config_hash(c);
    EXPECT_EQ(config_hash(nlohmann::json::parse(c.dump())), h);
    // Same content inserted in another order.
    nlohmann::json r;
    for (const char* k : {"plan", "hidden", "obs_mode", "lr", "seed"}) r[k] = c[k];
    EXPECT_EQ(config_hash(r), h);
    auto mutated = c;
    switch (i % 5) {
      case 0: mutated["seed"] = c["seed"].get<std::size_t>() + 1; break;
      case 1: mutated["lr"] = std::nextafter(c["lr"].get<double>(), 1.0); break;
      case 2: mutated["obs_mode"] = c["obs_mode"] == "state" ? "pixel" : "state"; break;
      case 3: mutated["hidden"][1] = c["hidden"][1].get<std::size_t>() + 1; break;
      case 4: mutated["plan"]["goal"][0] = c["plan"]["goal"][0].get<double>() + 0.25; break;
    }
    EXPECT_NE(config_hash(mutated), h) << "case " << i % 5;
  }
}

TEST(Export, MdsRowsCheckCounts) {
  Eigen::MatrixXd c(2, 2);
  c << 1, 2, 3, 4;
  const auto rows = mds_rows(c, {{0.1, 0.2}, {0.3, 0.4}});
  EXPECT_EQ(rows[1], (MdsRow{3, 4, 0.3, 0.4}));
  EXPECT_THROW(mds_rows(c, {{0.1, 0.2}}), std::invalid_argument);
}
