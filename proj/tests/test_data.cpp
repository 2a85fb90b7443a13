#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "support.hpp"
#include "surf/data.hpp"
#include "surf/error.hpp"

using namespace surf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("surf_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("generated dataset has the configured shapes and valid labels") {
  const FLDataset ds = testing::small_dataset(7, 5, 3, 12, 6, 1);
  CHECK_NOTHROW(ds.validate());
  CHECK(ds.num_agents() == 7);
  CHECK(ds.model_dim() == 18);
  CHECK(ds.example_width() == 8);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(ds.train[i].x.rows() == 12);
    CHECK(ds.test[i].x.cols() == 5);
    double total = 0.0;
    for (double v : ds.label_distribution.row(i)) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("generation is deterministic per seed") {
  const FLDataset a = testing::small_dataset(4, 3, 2, 5, 5, 9);
  const FLDataset b = testing::small_dataset(4, 3, 2, 5, 5, 9);
  const FLDataset c = testing::small_dataset(4, 3, 2, 5, 5, 10);
  CHECK(a.same_examples(b));
  CHECK_FALSE(a.same_examples(c));
}

TEST_CASE("class means have norm class_sep") {
  SyntheticConfig cfg;
  cfg.class_sep = 2.5;
  const Matrix means = class_means(cfg);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    double sq = 0.0;
    for (double v : means.row(c)) sq += v * v;
    CHECK(std::sqrt(sq) == doctest::Approx(2.5).epsilon(1e-12));
  }
}

TEST_CASE("Dirichlet proportions average to the uniform vector") {
  // E[p_c] = 1/C and Var[p_c] = (1/C)(1 - 1/C) / (C alpha + 1).
  SyntheticConfig cfg;
  cfg.num_agents = 2000;
  cfg.num_features = 1;
  cfg.num_classes = 4;
  cfg.m_train = 1;
  cfg.m_test = 1;
  cfg.alpha = 0.5;
  const FLDataset ds = gen_dataset(cfg, class_means(cfg), 3);
  const double var = 0.25 * 0.75 / (4 * 0.5 + 1);
  const double sigma = std::sqrt(var / 2000.0);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < 2000; ++i) {
      mean += ds.label_distribution(i, c);
      sq += ds.label_distribution(i, c) * ds.label_distribution(i, c);
    }
    mean /= 2000.0;
    CHECK(std::abs(mean - 0.25) < 4 * sigma);
    CHECK(sq / 2000.0 - mean * mean == doctest::Approx(var).epsilon(0.15));
  }
}

TEST_CASE("features are the class mean plus unit Gaussian noise") {
  SyntheticConfig cfg;
  cfg.num_agents = 50;
  cfg.num_features = 3;
  cfg.num_classes = 2;
  cfg.m_train = 200;
  cfg.m_test = 1;
  cfg.alpha = 100.0;
  cfg.class_sep = 3.0;
  const Matrix means = class_means(cfg);
  const FLDataset ds = gen_dataset(cfg, means, 5);
  std::vector<std::vector<double>> sum(2, std::vector<double>(3, 0.0));
  std::vector<double> sq(2, 0.0);
  std::vector<std::size_t> count(2, 0);
  for (const auto& s : ds.train)
    for (std::size_t e = 0; e < s.size(); ++e) {
      const auto y = static_cast<std::size_t>(s.y[e]);
      ++count[y];
      for (std::size_t j = 0; j < 3; ++j) {
        sum[y][j] += s.x(e, j);
        const double r = s.x(e, j) - means(y, j);
        sq[y] += r * r;
      }
    }
  for (std::size_t y = 0; y < 2; ++y) {
    REQUIRE(count[y] > 1000);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(count[y]));
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(std::abs(sum[y][j] / count[y] - means(y, j)) < 5 * sigma);
    CHECK(sq[y] / (3.0 * count[y]) == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("meta datasets share class means across roles but differ in examples") {
  SyntheticConfig cfg;
  cfg.num_agents = 3;
  cfg.m_train = 4;
  cfg.m_test = 4;
  const MetaDataset train = gen_meta_dataset(cfg, 3, MetaRole::meta_train, 1);
  const MetaDataset test = gen_meta_dataset(cfg, 2, MetaRole::meta_test, 2);
  CHECK(train.size() == 3);
  CHECK(test.role == MetaRole::meta_test);
  CHECK_FALSE(train.datasets[0].same_examples(train.datasets[1]));
  CHECK_FALSE(train.datasets[0].same_examples(test.datasets[0]));
  CHECK(gen_meta_dataset(cfg, 3, MetaRole::meta_train, 1).datasets[2].same_examples(
      train.datasets[2]));
}

TEST_CASE("layer batches cover every example and never repeat inside a batch") {
  const FLDataset ds = testing::small_dataset(5, 3, 3, 10, 2, 4);
  for (std::size_t layers : {2u, 3u, 5u}) {
    const std::size_t b = (10 + layers - 1) / layers;
    const auto batches = sample_layer_batches(ds, layers, b, 11);
    REQUIRE(batches.size() == layers);
    for (std::size_t i = 0; i < 5; ++i) {
      std::set<std::size_t> seen;
      for (const auto& lb : batches) {
        const auto& idx = lb.indices[i];
        CHECK(idx.size() == b);
        CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == b);
        seen.insert(idx.begin(), idx.end());
      }
      CHECK(seen.size() == 10);
    }
  }
}

TEST_CASE("layer batch rows hold features followed by one-hot labels") {
  const FLDataset ds = testing::small_dataset(2, 3, 4, 6, 2, 8);
  const auto batches = sample_layer_batches(ds, 3, 2, 1);
  for (const auto& lb : batches)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t e = 0; e < 2; ++e) {
        const std::size_t ex = lb.indices[i][e];
        for (std::size_t j = 0; j < 3; ++j) CHECK(lb.b(i, e * 7 + j) == ds.train[i].x(ex, j));
        for (std::size_t c = 0; c < 4; ++c)
          CHECK(lb.b(i, e * 7 + 3 + c) == (static_cast<int>(c) == ds.train[i].y[ex] ? 1.0 : 0.0));
      }
}

TEST_CASE("layer batches are a function of the seed") {
  const FLDataset ds = testing::small_dataset(3, 2, 2, 8, 2, 2);
  CHECK(sample_layer_batches(ds, 4, 2, 5)[3].b == sample_layer_batches(ds, 4, 2, 5)[3].b);
  CHECK_FALSE(sample_layer_batches(ds, 4, 2, 5)[0].b == sample_layer_batches(ds, 4, 2, 6)[0].b);
}

TEST_CASE("layer batch sizes are validated") {
  const FLDataset ds = testing::small_dataset(2, 2, 2, 8, 2, 2);
  CHECK_THROWS_AS(sample_layer_batches(ds, 4, 0, 0), ParameterError);
  CHECK_THROWS_AS(sample_layer_batches(ds, 4, 9, 0), ParameterError);
  CHECK_THROWS_AS(sample_layer_batches(ds, 3, 2, 0), ParameterError);  // 3 * 2 < 8
  CHECK(sample_layer_batches(ds, 0, 2, 0).empty());
}

TEST_CASE("feature files round-trip bit for bit") {
  const fs::path dir = scratch_dir("roundtrip");
  const FLDataset ds = testing::small_dataset(4, 3, 3, 5, 3, 6);
  write_features(ds, dir / "d.csv");
  const FLDataset back = load_features(dir / "d.csv", 3);
  CHECK(back.same_examples(ds));
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0.0;
    for (double v : back.label_distribution.row(i)) total += v;
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("malformed feature files are rejected with a line number") {
  const fs::path dir = scratch_dir("bad");
  auto expect_line = [&](const std::string& text, const std::string& where) {
    write_text(dir / "bad.csv", text);
    try {
      load_features(dir / "bad.csv");
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(where) != std::string::npos);
    }
  };
  expect_line("", "bad.csv:1");
  expect_line("agent,split,y,f0\n", "bad.csv:1");
  expect_line("agent,split,label,f0\n0,train,1,0.5\n0,train,0\n", "bad.csv:3");
  expect_line("agent,split,label,f0\n0,valid,1,0.5\n", "bad.csv:2");
  expect_line("agent,split,label,f0\n0,train,1,abc\n", "bad.csv:2");
  expect_line("agent,split,label,f0\n0,train,-1,0.5\n", "bad.csv:2");
  CHECK_THROWS_AS(load_features(dir / "missing.csv"), IoError);
}

TEST_CASE("loading infers the class count from the largest label") {
  const fs::path dir = scratch_dir("infer");
  write_text(dir / "d.csv",
             "agent,split,label,f0\n0,train,2,1.0\n0,test,0,2.0\n1,train,1,3.0\n1,test,1,4.0\n");
  const FLDataset ds = load_features(dir / "d.csv");
  CHECK(ds.num_classes == 3);
  CHECK(ds.num_agents() == 2);
  CHECK(ds.label_distribution(0, 2) == 1.0);
  CHECK_THROWS_AS(load_features(dir / "d.csv", 2), FormatError);
}

}
