#include "surf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>

#include "surf/error.hpp"
#include "surf/kernels.hpp"
#include "surf/rng.hpp"

namespace surf {

void FLDataset::validate() const {
  if (train.empty()) throw ParameterError("dataset: no agents");
  if (test.size() != train.size()) throw ParameterError("dataset: train/test agent count mismatch");
  if (num_features == 0 || num_classes == 0) throw ParameterError("dataset: empty dimensions");
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto check = [&](const Shard& s, std::size_t m) {
      if (s.size() != m || s.x.rows() != m || (m > 0 && s.x.cols() != num_features))
        throw ParameterError("dataset: shard shape mismatch");
      for (int y : s.y)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
          throw ParameterError("dataset: label out of range");
    };
    check(train[i], m_train);
    check(test[i], m_test);
  }
}

bool FLDataset::same_examples(const FLDataset& o) const {
  return num_features == o.num_features && num_classes == o.num_classes &&
         m_train == o.m_train && m_test == o.m_test && train == o.train && test == o.test;
}

void MetaDataset::validate() const {
  if (datasets.empty()) throw ParameterError("meta-dataset: empty");
  const FLDataset& first = datasets.front();
  for (const auto& ds : datasets) {
    ds.validate();
    if (ds.num_agents() != first.num_agents() || ds.num_features != first.num_features ||
        ds.num_classes != first.num_classes || ds.m_train != first.m_train ||
        ds.m_test != first.m_test)
      throw ParameterError("meta-dataset: entries disagree on dimensions");
  }
}

Matrix class_means(const SyntheticConfig& cfg) {
  Rng rng = make_rng(cfg.means_seed, "class_means");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(cfg.num_classes, cfg.num_features);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < cfg.num_features; ++j) {
      means(c, j) = normal(rng);
      norm += means(c, j) * means(c, j);
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < cfg.num_features; ++j)
      means(c, j) = norm > 0.0 ? cfg.class_sep * means(c, j) / norm : 0.0;
  }
  return means;
}

namespace {

void check_config(const SyntheticConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw ParameterError("synthetic data: alpha must be positive");
  if (cfg.num_agents == 0 || cfg.num_features == 0 || cfg.num_classes == 0 || cfg.m_train == 0 ||
      cfg.m_test == 0)
    throw ParameterError("synthetic data: all counts must be positive");
}

std::vector<double> dirichlet(double alpha, std::size_t k, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) {
    v = gamma(rng);
    sum += v;
  }
  if (sum <= 0.0) {
    // Every draw underflowed (tiny alpha): put all mass on one class.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
    return p;
  }
  for (double& v : p) v /= sum;
  return p;
}

Shard draw_shard(std::size_t m, const std::vector<double>& proportions, const Matrix& means,
                 Rng& rng) {
  std::discrete_distribution<int> label(proportions.begin(), proportions.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  Shard s{Matrix(m, means.cols()), std::vector<int>(m)};
  for (std::size_t e = 0; e < m; ++e) {
    const int y = label(rng);
    s.y[e] = y;
    for (std::size_t j = 0; j < means.cols(); ++j)
      s.x(e, j) = means(static_cast<std::size_t>(y), j) + normal(rng);
  }
  return s;
}

}  // namespace

FLDataset gen_dataset(const SyntheticConfig& cfg, const Matrix& means, std::uint64_t seed) {
  check_config(cfg);
  if (means.rows() != cfg.num_classes || means.cols() != cfg.num_features)
    throw ParameterError("gen_dataset: class means shape mismatch");
  Rng rng = make_rng(seed, "dataset");
  FLDataset ds;
  ds.num_features = cfg.num_features;
  ds.num_classes = cfg.num_classes;
  ds.m_train = cfg.m_train;
  ds.m_test = cfg.m_test;
  ds.label_distribution = Matrix(cfg.num_agents, cfg.num_classes);
  ds.train.resize(cfg.num_agents);
  ds.test.resize(cfg.num_agents);
  for (std::size_t i = 0; i < cfg.num_agents; ++i) {
    const auto props = dirichlet(cfg.alpha, cfg.num_classes, rng);
    std::copy(props.begin(), props.end(), ds.label_distribution.row(i).begin());
    ds.train[i] = draw_shard(cfg.m_train, props, means, rng);
    ds.test[i] = draw_shard(cfg.m_test, props, means, rng);
  }
  return ds;
}

MetaDataset gen_meta_dataset(const SyntheticConfig& cfg, std::size_t count, MetaRole role,
                             std::uint64_t seed) {
  check_config(cfg);
  const Matrix means = class_means(cfg);
  MetaDataset meta;
  meta.role = role;
  meta.datasets.resize(count);
  kernels::for_each_index(count, [&](std::size_t q) {
    meta.datasets[q] = gen_dataset(cfg, means, derive_seed(seed, "meta_dataset", q));
  });
  return meta;
}

void flatten_examples(const FLDataset& ds, std::size_t agent, const std::vector<std::size_t>& idx,
                      std::span<double> out) {
  const std::size_t p = ds.num_features;
  const std::size_t width = ds.example_width();
  if (out.size() != idx.size() * width) throw ParameterError("flatten_examples: output size");
  std::fill(out.begin(), out.end(), 0.0);
  const Shard& shard = ds.train[agent];
  for (std::size_t e = 0; e < idx.size(); ++e) {
    double* slot = out.data() + e * width;
    const auto x = shard.x.row(idx[e]);
    std::copy(x.begin(), x.end(), slot);
    slot[p + static_cast<std::size_t>(shard.y[idx[e]])] = 1.0;
  }
}

std::vector<LayerBatch> sample_layer_batches(const FLDataset& ds, std::size_t num_layers,
                                             std::size_t b_count, std::uint64_t seed) {
  const std::size_t m = ds.m_train;
  if (num_layers == 0) return {};
  if (b_count == 0 || b_count > m)
    throw ParameterError("sample_layer_batches: b_count must lie in [1, m_train]");
  if (b_count * num_layers < m)
    throw ParameterError("sample_layer_batches: b_count must be at least ceil(m_train / L)");
  const std::size_t n = ds.num_agents();
  std::vector<LayerBatch> batches(num_layers);
  for (auto& lb : batches) {
    lb.b = Matrix(n, b_count * ds.example_width());
    lb.indices.assign(n, {});
  }
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, "layer_batches", i);
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t l = 0; l < num_layers; ++l) {
      std::vector<std::size_t> bucket;
      std::vector<bool> used(m, false);
      for (std::size_t k = l; k < m; k += num_layers) {
        bucket.push_back(perm[k]);
        used[perm[k]] = true;
      }
      std::vector<std::size_t> rest;
      for (std::size_t e = 0; e < m; ++e)
        if (!used[e]) rest.push_back(e);
      std::shuffle(rest.begin(), rest.end(), rng);
      for (std::size_t k = 0; bucket.size() < b_count; ++k) bucket.push_back(rest[k]);
      std::shuffle(bucket.begin(), bucket.end(), rng);
      flatten_examples(ds, i, bucket, batches[l].b.row(i));
      batches[l].indices[i] = std::move(bucket);
    }
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Feature files

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

void write_features(const FLDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  std::string line = "agent,split,label";
  for (std::size_t j = 0; j < ds.num_features; ++j) line += ",f" + std::to_string(j);
  out << line << '\n';
  for (std::size_t i = 0; i < ds.num_agents(); ++i) {
    for (const bool train : {true, false}) {
      const Shard& s = train ? ds.train[i] : ds.test[i];
      for (std::size_t e = 0; e < s.size(); ++e) {
        line = std::to_string(i);
        line += train ? ",train," : ",test,";
        line += std::to_string(s.y[e]);
        for (double v : s.x.row(e)) {
          line += ',';
          append_double(line, v);
        }
        out << line << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

FLDataset load_features(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError(path.filename().string() + ":" + std::to_string(line_no) + ": " + why);
  };
  if (!std::getline(in, line)) {
    line_no = 1;
    throw fail("empty file");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "agent" || header[1] != "split" || header[2] != "label")
    throw fail("header must be agent,split,label,f0..f{p-1}");
  const std::size_t p = header.size() - 3;
  for (std::size_t j = 0; j < p; ++j)
    if (header[3 + j] != "f" + std::to_string(j)) throw fail("unexpected feature column name");

  struct Row {
    std::vector<double> x;
    int y;
  };
  std::vector<std::vector<Row>> train, test;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != p + 3)
      throw fail("expected " + std::to_string(p + 3) + " fields, got " + std::to_string(f.size()));
    std::size_t agent = 0;
    if (!parse_number(f[0], agent)) throw fail("bad agent index");
    const bool is_train = f[1] == "train";
    if (!is_train && f[1] != "test") throw fail("unknown split '" + std::string(f[1]) + "'");
    int y = 0;
    if (!parse_number(f[2], y) || y < 0) throw fail("bad label");
    if (num_classes > 0 && static_cast<std::size_t>(y) >= num_classes)
      throw fail("label exceeds class count");
    Row row{std::vector<double>(p), y};
    for (std::size_t j = 0; j < p; ++j)
      if (!parse_number(f[3 + j], row.x[j]) || !std::isfinite(row.x[j]))
        throw fail("bad feature value in column f" + std::to_string(j));
    max_label = std::max(max_label, y);
    auto& table = is_train ? train : test;
    if (agent >= train.size()) {
      train.resize(agent + 1);
      test.resize(agent + 1);
    }
    table[agent].push_back(std::move(row));
  }
  if (train.empty()) throw fail("no examples");
  const std::size_t n = train.size();
  FLDataset ds;
  ds.num_features = p;
  ds.num_classes = num_classes > 0 ? num_classes : static_cast<std::size_t>(max_label + 1);
  ds.m_train = train[0].size();
  ds.m_test = test[0].size();
  if (ds.m_train == 0) throw fail("agent 0 has no train examples");
  ds.train.resize(n);
  ds.test.resize(n);
  ds.label_distribution = Matrix(n, ds.num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    if (train[i].size() != ds.m_train || test[i].size() != ds.m_test)
      throw fail("agent " + std::to_string(i) + " has inconsistent shard sizes");
    const auto fill = [&](const std::vector<Row>& rows, Shard& s) {
      s.x = Matrix(rows.size(), p);
      s.y.resize(rows.size());
      for (std::size_t e = 0; e < rows.size(); ++e) {
        std::copy(rows[e].x.begin(), rows[e].x.end(), s.x.row(e).begin());
        s.y[e] = rows[e].y;
      }
    };
    fill(train[i], ds.train[i]);
    fill(test[i], ds.test[i]);
    for (int y : ds.train[i].y)
      ds.label_distribution(i, static_cast<std::size_t>(y)) += 1.0 / static_cast<double>(ds.m_train);
  }
  return ds;
}

}  // namespace surf
