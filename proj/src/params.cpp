#include "midgn/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "midgn/error.hpp"

namespace midgn {

const char* table_name(Table t) {
  switch (t) {
    case Table::user: return "user";
    case Table::bundle: return "bundle";
    case Table::item: return "item";
  }
  return "?";
}

Matrix& ParameterStore::table(Table t) {
  return t == Table::user ? user : t == Table::bundle ? bundle : item;
}
const Matrix& ParameterStore::table(Table t) const {
  return t == Table::user ? user : t == Table::bundle ? bundle : item;
}
Matrix& ParameterStore::first_moment(Table t) {
  return t == Table::user ? user_m : t == Table::bundle ? bundle_m : item_m;
}
Matrix& ParameterStore::second_moment(Table t) {
  return t == Table::user ? user_v : t == Table::bundle ? bundle_v : item_v;
}
const Matrix& ParameterStore::first_moment(Table t) const {
  return t == Table::user ? user_m : t == Table::bundle ? bundle_m : item_m;
}
const Matrix& ParameterStore::second_moment(Table t) const {
  return t == Table::user ? user_v : t == Table::bundle ? bundle_v : item_v;
}

bool ParameterStore::all_finite() const {
  for (Table t : kTables) {
    for (double x : table(t).flat())
      if (!std::isfinite(x)) return false;
  }
  return true;
}

namespace {

void fill_chunked(Matrix& m, std::size_t width, InitScheme scheme, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(2 * width));
  std::uniform_real_distribution<double> uni(-bound, bound);
  std::normal_distribution<double> gauss(0.0, 0.01);
  const std::size_t chunks = m.cols() / width;
  // chunk-major so each intent's block is an independent stream of draws
  for (std::size_t k = 0; k < chunks; ++k) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (double& x : m.chunk(r, k, width)) x = scheme == InitScheme::normal ? gauss(rng) : uni(rng);
    }
  }
}

}  // namespace

ParameterStore init_parameters(std::size_t n_users, std::size_t n_bundles, std::size_t n_items,
                               std::size_t dim, std::size_t intents, std::uint64_t seed,
                               InitScheme scheme) {
  if (intents == 0 || dim == 0 || dim % intents != 0) {
    throw ConfigError("embedding size " + std::to_string(dim) + " is not divisible by intent count " +
                      std::to_string(intents));
  }
  ParameterStore s;
  s.dim = dim;
  s.intents = intents;
  s.seed = seed;
  const std::size_t w = dim / intents;
  s.user = Matrix(n_users, dim);
  s.bundle = Matrix(n_bundles, dim);
  s.item = Matrix(n_items, w);
  std::seed_seq seq{seed};
  std::uint64_t sub[3];
  {
    std::uint32_t raw[6];
    seq.generate(raw, raw + 6);
    for (int j = 0; j < 3; ++j) sub[j] = (std::uint64_t{raw[2 * j]} << 32) | raw[2 * j + 1];
  }
  fill_chunked(s.user, w, scheme, sub[0]);
  fill_chunked(s.bundle, w, scheme, sub[1]);
  fill_chunked(s.item, w, scheme, sub[2]);
  s.user_m = s.user_v = Matrix(n_users, dim);
  s.bundle_m = s.bundle_v = Matrix(n_bundles, dim);
  s.item_m = s.item_v = Matrix(n_items, w);
  return s;
}

GradientBuffer::GradientBuffer(const ParameterStore& shape_of) {
  for (Table t : kTables) {
    const auto& m = shape_of.table(t);
    grads_[static_cast<int>(t)] = Matrix(m.rows(), m.cols());
    touched_[static_cast<int>(t)].assign(m.rows(), 0);
  }
}

void GradientBuffer::zero() {
  for (int j = 0; j < 3; ++j) {
    grads_[j].fill(0.0);
    std::fill(touched_[j].begin(), touched_[j].end(), 0);
  }
}

void GradientBuffer::accumulate(const GradientBuffer& other) {
  for (int j = 0; j < 3; ++j) {
    auto dst = grads_[j].flat();
    auto src = other.grads_[j].flat();
    for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += src[x];
    for (std::size_t r = 0; r < touched_[j].size(); ++r) touched_[j][r] |= other.touched_[j][r];
  }
}

double GradientBuffer::norm_squared() const {
  double s = 0.0;
  for (const auto& g : grads_)
    for (double x : g.flat()) s += x * x;
  return s;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("epsilon must be > 0");
  if (!(l2 >= 0)) throw ConfigError("l2 coefficient must be >= 0");
}

void adam_step(ParameterStore& store, const GradientBuffer& grads, const OptimizerConfig& cfg) {
  for (Table t : kTables) {
    const Matrix& g = grads.table(t);
    if (g.rows() != store.table(t).rows() || g.cols() != store.table(t).cols()) {
      throw StructuralError(std::string("gradient shape mismatch for ") + table_name(t) + " table");
    }
    for (std::size_t r = 0; r < g.rows(); ++r) {
      if (!grads.touched(t, r)) continue;
      for (std::size_t c = 0; c < g.cols(); ++c) {
        if (!std::isfinite(g(r, c))) {
          throw NumericError(std::string("non-finite gradient at ") + table_name(t) + "[" + std::to_string(r) +
                             "][" + std::to_string(c) + "] = " + std::to_string(g(r, c)) + " (step " +
                             std::to_string(store.step + 1) + ")");
        }
      }
    }
  }

  ++store.step;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Table tab : kTables) {
    Matrix& p = store.table(tab);
    Matrix& m = store.first_moment(tab);
    Matrix& v = store.second_moment(tab);
    const Matrix& g = grads.table(tab);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      if (!grads.touched(tab, r)) continue;
      auto pr = p.row(r);
      auto mr = m.row(r);
      auto vr = v.row(r);
      auto gr = g.row(r);
      for (std::size_t c = 0; c < pr.size(); ++c) {
        mr[c] = cfg.beta1 * mr[c] + (1.0 - cfg.beta1) * gr[c];
        vr[c] = cfg.beta2 * vr[c] + (1.0 - cfg.beta2) * gr[c] * gr[c];
        const double m_hat = mr[c] / c1;
        const double v_hat = vr[c] / c2;
        pr[c] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
    }
  }
}

GradCheckReport finite_difference_check(const std::function<double(const ParameterStore&)>& loss_fn,
                                        const ParameterStore& store, const GradientBuffer& analytic,
                                        const std::vector<ParamCoord>& sample, double h, double tol,
                                        double abs_floor) {
  GradCheckReport rep;
  ParameterStore probe = store;
  for (const auto& coord : sample) {
    double& x = probe.table(coord.table)(coord.row, coord.col);
    const double saved = x;
    x = saved + h;
    const double up = loss_fn(probe);
    x = saved - h;
    const double down = loss_fn(probe);
    x = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.table(coord.table)(coord.row, coord.col);
    const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
    const double rel = std::abs(a - numeric) / denom;
    const bool ok = rel <= tol;
    rep.entries.push_back({coord, a, numeric, rel, ok});
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
    rep.pass = rep.pass && ok;
  }
  return rep;
}

namespace {

constexpr char kMagic[8] = {'M', 'I', 'D', 'G', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

void put_matrix(std::ofstream& out, const Matrix& m) {
  put<std::uint64_t>(out, m.rows());
  put<std::uint64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.flat().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix get_matrix(std::ifstream& in) {
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  if (cols != 0 && rows > (std::uint64_t{1} << 34) / cols) throw IoError("implausible checkpoint matrix shape");
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.flat().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint matrix");
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  nlohmann::json header = meta;
  header["dim"] = store.dim;
  header["intents"] = store.intents;
  header["seed"] = store.seed;
  header["step"] = store.step;
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Table t : kTables) {
    put_matrix(out, store.table(t));
    put_matrix(out, store.first_moment(t));
    put_matrix(out, store.second_moment(t));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kFormatVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in);
  if (len > (1u << 24)) throw IoError("implausible checkpoint header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(text, nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw IoError("malformed checkpoint header");

  ParameterStore s;
  s.dim = header.at("dim").get<std::size_t>();
  s.intents = header.at("intents").get<std::size_t>();
  s.seed = header.at("seed").get<std::uint64_t>();
  s.step = header.at("step").get<std::uint64_t>();
  for (Table t : kTables) {
    s.table(t) = get_matrix(in);
    s.first_moment(t) = get_matrix(in);
    s.second_moment(t) = get_matrix(in);
  }
  if (meta) *meta = header;
  return s;
}

}  // namespace midgn
