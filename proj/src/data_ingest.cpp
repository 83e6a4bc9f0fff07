#include "midgn/data_ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "midgn/error.hpp"

namespace midgn {

InteractionMatrix::InteractionMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<IdPair> pairs)
    : n_rows_(n_rows), n_cols_(n_cols), pairs_(std::move(pairs)) {
  for (const auto& [r, c] : pairs_) {
    if (r >= n_rows_ || c >= n_cols_) {
      throw BoundsError("pair (" + std::to_string(r) + ", " + std::to_string(c) +
                        ") outside " + std::to_string(n_rows_) + "x" + std::to_string(n_cols_));
    }
  }
  std::sort(pairs_.begin(), pairs_.end());
  const auto before = pairs_.size();
  pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
  duplicates_ = before - pairs_.size();
}

bool InteractionMatrix::contains(Id row, Id col) const {
  return std::binary_search(pairs_.begin(), pairs_.end(), IdPair{row, col});
}

double InteractionMatrix::density() const {
  if (n_rows_ == 0 || n_cols_ == 0) return 0.0;
  return static_cast<double>(pairs_.size()) /
         (static_cast<double>(n_rows_) * static_cast<double>(n_cols_));
}

namespace {

bool parse_id(std::string_view tok, std::uint64_t& out) {
  if (tok.empty()) return false;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc{} && ptr == tok.data() + tok.size();
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

InteractionMatrix load_interactions(const std::filesystem::path& path,
                                    std::optional<std::size_t> expected_rows,
                                    std::optional<std::size_t> expected_cols) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::vector<IdPair> pairs;
  std::uint64_t max_row = 0, max_col = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto tab = body.find('\t');
    if (tab == std::string_view::npos) throw ParseError("expected row_id<TAB>col_id in " + path.string(), line_no);
    std::uint64_t r = 0, c = 0;
    if (!parse_id(trim(body.substr(0, tab)), r) || !parse_id(trim(body.substr(tab + 1)), c)) {
      throw ParseError("malformed id pair in " + path.string(), line_no);
    }
    if (expected_rows && r >= *expected_rows) {
      throw BoundsError(path.string() + " line " + std::to_string(line_no) + ": row id " + std::to_string(r) +
                        " >= " + std::to_string(*expected_rows));
    }
    if (expected_cols && c >= *expected_cols) {
      throw BoundsError(path.string() + " line " + std::to_string(line_no) + ": col id " + std::to_string(c) +
                        " >= " + std::to_string(*expected_cols));
    }
    max_row = std::max(max_row, r);
    max_col = std::max(max_col, c);
    pairs.emplace_back(static_cast<Id>(r), static_cast<Id>(c));
  }

  const std::size_t rows = expected_rows ? *expected_rows : (pairs.empty() ? 0 : max_row + 1);
  const std::size_t cols = expected_cols ? *expected_cols : (pairs.empty() ? 0 : max_col + 1);
  InteractionMatrix m(rows, cols, std::move(pairs));
  if (m.duplicates_dropped() > 0) {
    spdlog::warn("{}: dropped {} duplicate pairs", path.string(), m.duplicates_dropped());
  }
  return m;
}

void write_interactions(const std::filesystem::path& path, const InteractionMatrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [r, c] : m.pairs()) out << r << '\t' << c << '\n';
}

SplitDataset split_interactions(const InteractionMatrix& m, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<IdPair> train, val, test;
  const auto& pairs = m.pairs();
  std::size_t begin = 0;
  while (begin < pairs.size()) {
    std::size_t end = begin;
    while (end < pairs.size() && pairs[end].first == pairs[begin].first) ++end;
    std::vector<IdPair> user_pairs(pairs.begin() + begin, pairs.begin() + end);
    std::shuffle(user_pairs.begin(), user_pairs.end(), rng);
    const std::size_t n = user_pairs.size();
    auto n_val = static_cast<std::size_t>(std::floor(ratios.val * n + 1e-9));
    auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n + 1e-9));
    if (n_val + n_test >= n) n_val = n_test = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j < n_test) test.push_back(user_pairs[j]);
      else if (j < n_test + n_val) val.push_back(user_pairs[j]);
      else train.push_back(user_pairs[j]);
    }
    begin = end;
  }
  SplitDataset split;
  split.train = InteractionMatrix(m.n_rows(), m.n_cols(), std::move(train));
  split.val = InteractionMatrix(m.n_rows(), m.n_cols(), std::move(val));
  split.test = InteractionMatrix(m.n_rows(), m.n_cols(), std::move(test));
  split.seed = seed;
  return split;
}

std::vector<TrainingTriple> sample_triples(const SplitDataset& split, std::uint64_t rng_seed) {
  const std::size_t n_users = split.train.n_rows();
  const std::size_t n_bundles = split.train.n_cols();
  std::vector<std::vector<Id>> seen(n_users);
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& [u, b] : part->pairs()) seen[u].push_back(b);
  }
  for (auto& s : seen) std::sort(s.begin(), s.end());

  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<Id> pick(0, n_bundles == 0 ? 0 : static_cast<Id>(n_bundles - 1));
  std::vector<TrainingTriple> triples;
  triples.reserve(split.train.nnz());
  Id warned_user = static_cast<Id>(-1);
  for (const auto& [u, b] : split.train.pairs()) {
    if (seen[u].size() >= n_bundles) {
      if (warned_user != u) spdlog::warn("user {} interacted with every bundle; skipped", u);
      warned_user = u;
      continue;
    }
    Id neg;
    do {
      neg = pick(rng);
    } while (std::binary_search(seen[u].begin(), seen[u].end(), neg));
    triples.push_back({u, b, neg});
  }
  std::shuffle(triples.begin(), triples.end(), rng);
  return triples;
}

namespace {

std::optional<std::array<std::size_t, 3>> read_data_size(const std::filesystem::path& dir) {
  std::filesystem::path file = dir / "data_size.txt";
  if (!std::filesystem::exists(file)) {
    // releases often name it <Dataset>_data_size.txt
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.size() > 13 && name.ends_with("data_size.txt")) {
        file = entry.path();
        break;
      }
    }
  }
  if (!std::filesystem::exists(file)) return std::nullopt;
  std::ifstream in(file);
  std::array<std::size_t, 3> sizes{};
  if (!(in >> sizes[0] >> sizes[1] >> sizes[2])) throw ParseError("bad " + file.string(), 1);
  return sizes;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  Dataset ds;
  ds.name = dir.filename().string();
  if (ds.name.empty()) ds.name = dir.parent_path().filename().string();
  if (auto sizes = read_data_size(dir)) {
    const auto [m, o, n] = *sizes;
    ds.user_bundle = load_interactions(dir / "user_bundle.txt", m, o);
    ds.bundle_item = load_interactions(dir / "bundle_item.txt", o, n);
    ds.user_item = load_interactions(dir / "user_item.txt", m, n);
    return ds;
  }
  auto y = load_interactions(dir / "user_bundle.txt");
  auto h = load_interactions(dir / "bundle_item.txt");
  auto r = load_interactions(dir / "user_item.txt");
  const std::size_t m = std::max(y.n_rows(), r.n_rows());
  const std::size_t o = std::max(y.n_cols(), h.n_rows());
  const std::size_t n = std::max(h.n_cols(), r.n_cols());
  ds.user_bundle = InteractionMatrix(m, o, y.pairs());
  ds.bundle_item = InteractionMatrix(o, n, h.pairs());
  ds.user_item = InteractionMatrix(m, n, r.pairs());
  return ds;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  write_interactions(dir / "user_bundle.txt", ds.user_bundle);
  write_interactions(dir / "bundle_item.txt", ds.bundle_item);
  write_interactions(dir / "user_item.txt", ds.user_item);
  std::ofstream out(dir / "data_size.txt");
  out << ds.n_users() << '\t' << ds.n_bundles() << '\t' << ds.n_items() << '\n';
}

std::optional<PublishedStats> published_stats(const std::string& dataset_name) {
  std::string key;
  for (char ch : dataset_name) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (key == "youshu") return PublishedStats{8039, 4771, 32770, 51337, 176667, 138515};
  if (key == "netease") return PublishedStats{18528, 22864, 123628, 302303, 1778838, 1128065};
  return std::nullopt;
}

StatsReport validate_stats(const InteractionMatrix& y, const InteractionMatrix& h,
                           const InteractionMatrix& r, const std::string& dataset_name) {
  if (y.n_cols() != h.n_rows() || y.n_rows() != r.n_rows() || h.n_cols() != r.n_cols()) {
    throw StructuralError("inconsistent dimensions: Y " + std::to_string(y.n_rows()) + "x" +
                          std::to_string(y.n_cols()) + ", H " + std::to_string(h.n_rows()) + "x" +
                          std::to_string(h.n_cols()) + ", R " + std::to_string(r.n_rows()) + "x" +
                          std::to_string(r.n_cols()));
  }
  StatsReport rep;
  rep.dataset = dataset_name;
  rep.users = y.n_rows();
  rep.bundles = y.n_cols();
  rep.items = h.n_cols();
  rep.user_bundle = y.nnz();
  rep.bundle_item = h.nnz();
  rep.user_item = r.nnz();
  rep.user_bundle_density = y.density();
  rep.bundle_item_density = h.density();
  rep.user_item_density = r.density();

  if (auto ref = published_stats(dataset_name)) {
    rep.has_reference = true;
    auto check = [&](const char* what, std::size_t got, std::size_t want) {
      if (got != want) {
        rep.mismatches.push_back(std::string(what) + ": got " + std::to_string(got) + ", published " +
                                 std::to_string(want));
      }
    };
    check("users", rep.users, ref->users);
    check("bundles", rep.bundles, ref->bundles);
    check("items", rep.items, ref->items);
    check("user-bundle", rep.user_bundle, ref->user_bundle);
    check("bundle-item", rep.bundle_item, ref->bundle_item);
    check("user-item", rep.user_item, ref->user_item);
  }
  return rep;
}

nlohmann::json StatsReport::to_json() const {
  auto pct = [](double d) { return std::round(d * 10000.0) / 100.0; };
  return {
      {"dataset", dataset},
      {"users", users},
      {"bundles", bundles},
      {"items", items},
      {"user_bundle", user_bundle},
      {"bundle_item", bundle_item},
      {"user_item", user_item},
      {"user_bundle_density", user_bundle_density},
      {"bundle_item_density", bundle_item_density},
      {"user_item_density", user_item_density},
      {"user_bundle_density_pct", pct(user_bundle_density)},
      {"bundle_item_density_pct", pct(bundle_item_density)},
      {"user_item_density_pct", pct(user_item_density)},
      {"has_reference", has_reference},
      {"mismatches", mismatches},
  };
}

}  // namespace midgn
