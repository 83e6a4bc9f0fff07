#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "midgn/data_ingest.hpp"
#include "midgn/disentangle.hpp"
#include "midgn/graph.hpp"

namespace midgn {

struct SynthConfig {
  std::size_t n_users = 500;
  std::size_t n_items = 0;  // 0: true_intents * items_per_intent
  std::size_t n_bundles = 400;
  std::size_t true_intents = 4;
  std::size_t items_per_intent = 200;
  std::size_t bundles_per_user = 8;
  std::size_t intents_per_bundle = 2;
  std::size_t items_per_bundle = 10;
  std::size_t items_per_user = 20;
  std::size_t intents_per_user = 2;
  double noise_rate = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
  std::size_t item_count() const { return n_items == 0 ? true_intents * items_per_intent : n_items; }
  nlohmann::json to_json() const;
  void merge_json(const nlohmann::json& j);
};

inline constexpr int kNoiseLabel = -1;

/// Generating intent per edge, aligned with the sorted pairs of the
/// corresponding matrix. Rewired (noise) edges carry kNoiseLabel.
struct GroundTruth {
  std::vector<int> item_intent;
  std::vector<int> user_item_labels;
  std::vector<int> bundle_item_labels;

  nlohmann::json to_json(const Dataset& ds) const;
};

struct SynthData {
  Dataset dataset;
  GroundTruth truth;
};

SynthData generate_synthetic(const SynthConfig& cfg);

/// Writes the three TSV files, data_size.txt and ground_truth.json.
void write_synthetic(const std::filesystem::path& dir, const SynthData& data);

/// Maximum-weight assignment between rows and columns of `weights`
/// (rows <= cols or rows > cols both allowed). Returns, per row, the matched
/// column or -1.
std::vector<int> hungarian_max(const std::vector<std::vector<double>>& weights);

/// Fraction of labeled edges whose argmax routing intent maps, under the
/// best one-to-one matching of model intents to true intents, onto the
/// edge's generating intent. Edges labeled kNoiseLabel are ignored.
double intent_alignment(const IntentConfidence& normalized, const std::vector<int>& edge_labels,
                        std::size_t true_intents);

}  // namespace midgn
