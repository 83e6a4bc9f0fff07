#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "midgn/matrix.hpp"

namespace midgn {

enum class Table : std::uint8_t { user = 0, bundle = 1, item = 2 };
inline constexpr Table kTables[] = {Table::user, Table::bundle, Table::item};
const char* table_name(Table t);

enum class InitScheme { xavier_uniform, normal };

/// Trainable embeddings plus Adam state. User and bundle rows are `dim`
/// wide and split into `intents` chunks of width `chunk_width()`; item rows
/// are a single chunk wide.
struct ParameterStore {
  std::size_t dim = 0;
  std::size_t intents = 1;
  std::uint64_t seed = 0;

  Matrix user;
  Matrix bundle;
  Matrix item;

  Matrix user_m, user_v;
  Matrix bundle_m, bundle_v;
  Matrix item_m, item_v;
  std::uint64_t step = 0;

  std::size_t chunk_width() const { return dim / intents; }

  Matrix& table(Table t);
  const Matrix& table(Table t) const;
  Matrix& first_moment(Table t);
  Matrix& second_moment(Table t);
  const Matrix& first_moment(Table t) const;
  const Matrix& second_moment(Table t) const;

  bool all_finite() const;
};

ParameterStore init_parameters(std::size_t n_users, std::size_t n_bundles, std::size_t n_items,
                               std::size_t dim, std::size_t intents, std::uint64_t seed,
                               InitScheme scheme = InitScheme::xavier_uniform);

/// Dense gradient accumulators with a touched-row mask per table. Only
/// touched rows are visited by the optimizer.
class GradientBuffer {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(const ParameterStore& shape_of);

  Matrix& table(Table t) { return grads_[static_cast<int>(t)]; }
  const Matrix& table(Table t) const { return grads_[static_cast<int>(t)]; }

  std::span<double> row(Table t, std::size_t r) {
    touched_[static_cast<int>(t)][r] = 1;
    return table(t).row(r);
  }
  void touch(Table t, std::size_t r) { touched_[static_cast<int>(t)][r] = 1; }
  bool touched(Table t, std::size_t r) const { return touched_[static_cast<int>(t)][r] != 0; }

  void zero();
  /// this += other (rows touched in either become touched).
  void accumulate(const GradientBuffer& other);
  double norm_squared() const;

 private:
  Matrix grads_[3];
  std::vector<std::uint8_t> touched_[3];
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2 = 1e-5;

  void validate() const;
};

/// One Adam step over the touched rows of `grads`. Throws NumericError when
/// a touched gradient entry is not finite; parameters are left unchanged in
/// that case.
void adam_step(ParameterStore& store, const GradientBuffer& grads, const OptimizerConfig& cfg);

struct ParamCoord {
  Table table;
  std::size_t row;
  std::size_t col;
};

struct GradCheckEntry {
  ParamCoord coord;
  double analytic;
  double numeric;
  double rel_error;
  bool pass;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool pass = true;
};

/// Central differences of `loss_fn` at the sampled coordinates against the
/// analytic gradient. Relative error is |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport finite_difference_check(const std::function<double(const ParameterStore&)>& loss_fn,
                                        const ParameterStore& store, const GradientBuffer& analytic,
                                        const std::vector<ParamCoord>& sample, double h, double tol,
                                        double abs_floor = 1e-7);

/// Binary checkpoint: magic, format version, a JSON metadata block, then
/// every matrix as raw little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const nlohmann::json& meta = nlohmann::json::object());
ParameterStore load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

}  // namespace midgn
