#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "surf/matrix.hpp"

namespace surf {

/// Examples held by one agent: features (m x p) and integer labels.
struct Shard {
  Matrix x;
  std::vector<int> y;

  std::size_t size() const noexcept { return y.size(); }
  friend bool operator==(const Shard&, const Shard&) = default;
};

/// One federated learning problem: n agents, each with a train and test shard.
struct FLDataset {
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::size_t m_train = 0;
  std::size_t m_test = 0;
  std::vector<Shard> train;  // one shard per agent
  std::vector<Shard> test;
  // Per-agent class proportions used by the generator (n x C). Not persisted in
  // feature files; load_features fills it with empirical train-shard proportions.
  Matrix label_distribution;

  std::size_t num_agents() const noexcept { return train.size(); }
  // Model dimension d = (p + 1) * C.
  std::size_t model_dim() const noexcept { return (num_features + 1) * num_classes; }
  // Width of one flattened example inside a layer batch: p + C.
  std::size_t example_width() const noexcept { return num_features + num_classes; }

  void validate() const;

  // Compares dimensions and shards only.
  bool same_examples(const FLDataset& other) const;
};

enum class MetaRole { meta_train, meta_test };

struct MetaDataset {
  MetaRole role = MetaRole::meta_train;
  std::vector<FLDataset> datasets;

  std::size_t size() const noexcept { return datasets.size(); }
  void validate() const;
};

struct SyntheticConfig {
  std::size_t num_agents = 20;
  std::size_t num_features = 16;
  std::size_t num_classes = 5;
  std::size_t m_train = 20;
  std::size_t m_test = 10;
  double alpha = 1.0;      // Dirichlet concentration of per-agent class proportions
  double class_sep = 1.0;  // distance of class means from the origin
  // Class means depend only on this seed, so meta-train and meta-test share them.
  std::uint64_t means_seed = 1;
};

// Class means (C x p): class_sep times random unit directions.
Matrix class_means(const SyntheticConfig& cfg);

FLDataset gen_dataset(const SyntheticConfig& cfg, const Matrix& means, std::uint64_t seed);
MetaDataset gen_meta_dataset(const SyntheticConfig& cfg, std::size_t count, MetaRole role,
                             std::uint64_t seed);

/// Row i is agent i's flattened mini-batch: b_count examples of [x ; onehot(y)].
struct LayerBatch {
  Matrix b;
  std::vector<std::vector<std::size_t>> indices;  // per agent, train-shard indices
};

// L coverage-stratified batches: a random permutation of each agent's shard is
// dealt round-robin into L buckets, each bucket padded to b_count by uniform
// draws without replacement from the remaining examples.
std::vector<LayerBatch> sample_layer_batches(const FLDataset& ds, std::size_t num_layers,
                                             std::size_t b_count, std::uint64_t seed);

// Flattens the given train examples of one agent into out (length b_count*(p+C)).
void flatten_examples(const FLDataset& ds, std::size_t agent, const std::vector<std::size_t>& idx,
                      std::span<double> out);

// CSV with header "agent,split,label,f0..f{p-1}".
void write_features(const FLDataset& ds, const std::filesystem::path& path);
// num_classes == 0 infers C as max label + 1.
FLDataset load_features(const std::filesystem::path& path, std::size_t num_classes = 0);

}  // namespace surf
