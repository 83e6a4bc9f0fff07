#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace midgn {

using Id = std::uint32_t;
using IdPair = std::pair<Id, Id>;

/// Sparse binary relation between `n_rows` left entities and `n_cols` right
/// entities. Pairs are kept sorted lexicographically and duplicate-free.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;
  /// Sorts and deduplicates `pairs`; throws BoundsError on out-of-range ids.
  InteractionMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<IdPair> pairs);

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_cols() const noexcept { return n_cols_; }
  std::size_t nnz() const noexcept { return pairs_.size(); }
  const std::vector<IdPair>& pairs() const noexcept { return pairs_; }
  bool contains(Id row, Id col) const;
  double density() const;

  /// Number of duplicate pairs dropped at construction.
  std::size_t duplicates_dropped() const noexcept { return duplicates_; }

  bool operator==(const InteractionMatrix& o) const {
    return n_rows_ == o.n_rows_ && n_cols_ == o.n_cols_ && pairs_ == o.pairs_;
  }

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<IdPair> pairs_;
  std::size_t duplicates_ = 0;
};

InteractionMatrix load_interactions(const std::filesystem::path& path,
                                    std::optional<std::size_t> expected_rows = std::nullopt,
                                    std::optional<std::size_t> expected_cols = std::nullopt);

void write_interactions(const std::filesystem::path& path, const InteractionMatrix& m);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct SplitDataset {
  InteractionMatrix train;
  InteractionMatrix val;
  InteractionMatrix test;
  std::uint64_t seed = 0;
};

/// Per-user random partition. Counts are floor(ratio * n) for val and test,
/// train takes the remainder; a user whose train share would be empty keeps
/// every pair in train.
SplitDataset split_interactions(const InteractionMatrix& m, SplitRatios ratios, std::uint64_t seed);

struct TrainingTriple {
  Id user;
  Id pos_bundle;
  Id neg_bundle;
};

/// One triple per train pair with a uniformly drawn negative that the user
/// has not interacted with in train, val or test. Users who interacted with
/// every bundle are skipped with a warning.
std::vector<TrainingTriple> sample_triples(const SplitDataset& split, std::uint64_t rng_seed);

/// The three relations of a bundle-recommendation dataset.
struct Dataset {
  std::string name;
  InteractionMatrix user_bundle;  // Y, M x O
  InteractionMatrix bundle_item;  // H, O x N
  InteractionMatrix user_item;    // R, M x N

  std::size_t n_users() const { return user_bundle.n_rows(); }
  std::size_t n_bundles() const { return user_bundle.n_cols(); }
  std::size_t n_items() const { return bundle_item.n_cols(); }
};

/// Loads `user_bundle.txt`, `bundle_item.txt` and `user_item.txt` from `dir`.
/// Entity counts come from an optional `data_size.txt` ("users bundles
/// items", whitespace separated); otherwise they are inferred from the ids.
Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

struct PublishedStats {
  std::size_t users, bundles, items;
  std::size_t user_bundle, bundle_item, user_item;
};

std::optional<PublishedStats> published_stats(const std::string& dataset_name);

struct StatsReport {
  std::string dataset;
  std::size_t users = 0, bundles = 0, items = 0;
  std::size_t user_bundle = 0, bundle_item = 0, user_item = 0;
  double user_bundle_density = 0, bundle_item_density = 0, user_item_density = 0;
  bool has_reference = false;
  std::vector<std::string> mismatches;

  nlohmann::json to_json() const;
};

StatsReport validate_stats(const InteractionMatrix& y, const InteractionMatrix& h,
                           const InteractionMatrix& r, const std::string& dataset_name);

}  // namespace midgn
