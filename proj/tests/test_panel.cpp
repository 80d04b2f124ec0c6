#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "stayers/error.hpp"
#include "stayers/panel.hpp"
#include "stayers/rng.hpp"

namespace stayers {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("stayers-panel-" + std::to_string(counter_++))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path file(const std::string& name, const std::string& contents) const {
    std::ofstream(path_ / name) << contents;
    return path_ / name;
  }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

PanelDataset random_panel(std::size_t n, std::uint64_t seed) {
  rng::Stream s(seed, rng::Domain::test, 0);
  PanelDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    d.unit_id.push_back("u" + std::to_string(i));
    d.x1.push_back(s.normal());
    d.x2.push_back(s.normal());
    d.y1.push_back(s.normal());
    d.y2.push_back(s.normal());
  }
  return d;
}

TEST(LoadCsv, BalancedInput) {
  TempDir dir;
  const auto path = dir.file("a.csv", "id,t,y,x\n1,1,0.5,1\n1,2,0.7,1.5\n2,1,1,2\n2,2,3,2\n");
  const auto r = load_csv(path);
  EXPECT_EQ(r.data.size(), 2U);
  EXPECT_EQ(r.log.units_dropped, 0U);
  EXPECT_EQ(r.log.rows_read, 4U);
  EXPECT_DOUBLE_EQ(r.data.y2[0], 0.7);
  EXPECT_DOUBLE_EQ(r.data.x2[0], 1.5);
}

TEST(LoadCsv, UnbalancedUnitDropped) {
  TempDir dir;
  const auto path =
      dir.file("a.csv", "id,t,y,x\n1,1,0,1\n1,2,0,1\n2,1,1,2\n2,2,1,2\n3,1,5,5\n");
  const auto r = load_csv(path);
  EXPECT_EQ(r.data.size(), 2U);
  EXPECT_EQ(r.log.units_dropped, 1U);
  ASSERT_EQ(r.log.dropped_ids.size(), 1U);
  EXPECT_EQ(r.log.dropped_ids[0], "3");
}

TEST(LoadCsv, MissingValueDropsUnit) {
  TempDir dir;
  const auto path = dir.file(
      "a.csv", "id,t,y,x\n1,1,0,1\n1,2,0,1\n2,1,NA,2\n2,2,1,2\n3,1,1,2\n3,2,1,2\n");
  const auto r = load_csv(path);
  EXPECT_EQ(r.data.size(), 2U);
  EXPECT_EQ(r.log.units_dropped, 1U);
  EXPECT_EQ(r.log.dropped_ids[0], "2");
  EXPECT_FALSE(r.log.reasons.empty());
}

TEST(LoadCsv, ColumnMappingAndQuotes) {
  TempDir dir;
  const auto path = dir.file(
      "a.csv", "hh,year,share,\"log exp\"\n\"a,1\",1,0.1,3\n\"a,1\",2,0.2,4\nb,1,1,1\nb,2,1,2\n");
  ColumnMap cols{"hh", "year", "share", "log exp"};
  const auto r = load_csv(path, cols);
  ASSERT_EQ(r.data.size(), 2U);
  EXPECT_EQ(r.data.unit_id[0], "a,1");
}

TEST(LoadCsv, StructuralErrors) {
  TempDir dir;
  EXPECT_THROW((void)load_csv(dir.path() / "missing.csv"), DataError);
  EXPECT_THROW((void)load_csv(dir.file("a.csv", "id,t,y\n1,1,0\n")), DataError);
  EXPECT_THROW(
      (void)load_csv(dir.file("b.csv", "id,t,y,x\n1,1,0,1\n1,1,0,1\n1,2,0,1\n2,1,0,1\n2,2,0,1\n")),
      DataError);
  EXPECT_THROW((void)load_csv(dir.file("c.csv", "id,t,y,x\n1,1,0,1\n1,2,0,1\n")), DataError);
  EXPECT_THROW((void)load_csv(dir.file("d.csv", "id,t,y,x\n1,3,0,1\n1,2,0,1\n")), DataError);
}

TEST(WriteCsv, RoundTripIsExact) {
  TempDir dir;
  const auto d = random_panel(50, 1);
  write_csv(d, dir.path() / "out.csv");
  const auto r = load_csv(dir.path() / "out.csv");
  EXPECT_EQ(r.data.unit_id, d.unit_id);
  EXPECT_EQ(r.data.x1, d.x1);
  EXPECT_EQ(r.data.x2, d.x2);
  EXPECT_EQ(r.data.y1, d.y1);
  EXPECT_EQ(r.data.y2, d.y2);
}

TEST(Validate, RejectsBadShapes) {
  PanelDataset d = random_panel(3, 2);
  d.y2.pop_back();
  EXPECT_THROW(d.validate(), DataError);
  PanelDataset e = random_panel(3, 2);
  e.x1[1] = std::nan("");
  EXPECT_THROW(e.validate(), DataError);
  PanelDataset f = random_panel(1, 2);
  EXPECT_THROW(f.validate(), DataError);
}

double brute_within(const std::vector<double>& a, const std::vector<double>& b) {
  double grand = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) grand += a[i] + b[i];
  grand /= 2.0 * static_cast<double>(a.size());
  double within = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double m = 0.5 * (a[i] + b[i]);
    within += (a[i] - m) * (a[i] - m) + (b[i] - m) * (b[i] - m);
    total += (a[i] - grand) * (a[i] - grand) + (b[i] - grand) * (b[i] - grand);
  }
  return 100.0 * within / total;
}

TEST(Within, PureStayersIsZero) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(within_variation_pct(x, x), 0.0);
}

TEST(Within, PureWithinIsHundred) {
  const std::vector<double> a{1, -2, 3, 0.5};
  const std::vector<double> b{-1, 2, -3, -0.5};
  EXPECT_NEAR(within_variation_pct(a, b), 100.0, 1e-12);
}

TEST(Within, MatchesTwoPassOracleAndIsShiftInvariant) {
  const auto d = random_panel(200, 3);
  const double w = within_variation_pct(d.x1, d.x2);
  EXPECT_NEAR(w, brute_within(d.x1, d.x2), 1e-10);
  auto a = d.x1;
  auto b = d.x2;
  for (auto& v : a) v += 1000.0;
  for (auto& v : b) v += 1000.0;
  EXPECT_NEAR(within_variation_pct(a, b), w, 1e-6);
  EXPECT_GE(w, 0.0);
  EXPECT_LE(w, 100.0);
}

TEST(Within, ConstantVariableIsZero) {
  const std::vector<double> c{2, 2, 2};
  EXPECT_DOUBLE_EQ(within_variation_pct(c, c), 0.0);
}

TEST(Histogram, StayersLandInZeroBin) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto h = change_histogram(x, x);
  EXPECT_EQ(h.zero_count, 5U);
  EXPECT_EQ(h.total(), 5U);
}

TEST(Histogram, CountsSumToNAndArePermutationInvariant) {
  auto d = random_panel(300, 4);
  for (std::size_t i = 0; i < 60; ++i) d.x2[i] = d.x1[i];
  const auto h = change_histogram(d.x1, d.x2);
  EXPECT_EQ(h.total(), 300U);
  EXPECT_EQ(h.zero_count, 60U);
  EXPECT_EQ(h.edges.size(), h.counts.size() + 1);
  // Zero is a bin edge so the atom is never smeared into neighbouring bins.
  EXPECT_TRUE(std::any_of(h.edges.begin(), h.edges.end(),
                          [](double e) { return std::abs(e) < 1e-12; }) ||
              h.edges.front() > 0.0 || h.edges.back() < 0.0);

  auto x1 = d.x1;
  auto x2 = d.x2;
  std::reverse(x1.begin(), x1.end());
  std::reverse(x2.begin(), x2.end());
  const auto g = change_histogram(x1, x2);
  EXPECT_EQ(g.counts, h.counts);
  EXPECT_EQ(g.edges, h.edges);
}

TEST(Summarize, ReportsBothVariables) {
  const auto d = random_panel(100, 5);
  const auto s = summarize(d);
  EXPECT_EQ(s.n, 100U);
  ASSERT_EQ(s.variables.size(), 2U);
  EXPECT_EQ(s.change_x.total(), 100U);
  for (const auto& v : s.variables) {
    EXPECT_GE(v.within_pct, 0.0);
    EXPECT_LE(v.within_pct, 100.0);
    EXPECT_GT(v.pooled_sd, 0.0);
  }
}

}  // namespace
}  // namespace stayers
