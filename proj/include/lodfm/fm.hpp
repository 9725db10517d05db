#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lodfm/errors.hpp"
#include "lodfm/rng.hpp"
#include "lodfm/sparse_vector.hpp"

namespace lodfm {

struct FmHyperparams {
  std::size_t factors = 10;       // latent dimensionality m
  double learn_rate = 0.05;
  double l2_reg = 1e-4;           // applied to w and V, never to the bias
  double init_stddev = 0.01;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 42;
  // One uniformly sampled negative per positive per epoch, or the full
  // positive x negative product (only sensible for small datasets).
  enum class PairStrategy { sampled, full };
  PairStrategy pair_strategy = PairStrategy::sampled;
  double validation_fraction = 0.1;

  void validate() const {
    if (factors == 0) throw StructuralError("factors must be positive");
    if (!(learn_rate > 0.0)) throw StructuralError("learn_rate must be positive");
    if (l2_reg < 0.0) throw StructuralError("l2_reg must be non-negative");
    if (!(init_stddev > 0.0)) throw StructuralError("init_stddev must be positive");
    if (max_epochs == 0) throw StructuralError("max_epochs must be positive");
    if (!(validation_fraction > 0.0) || validation_fraction >= 1.0)
      throw StructuralError("validation_fraction must be in (0,1)");
  }
};

/// Second-order factorization machine: global bias w0, linear weights w and
/// per-feature latent vectors V (p x m, row-major).
struct FmModel {
  double w0 = 0.0;
  std::vector<double> w;
  std::vector<double> v;
  std::size_t p = 0;
  std::size_t m = 0;

  double v_at(std::size_t i, std::size_t f) const { return v[i * m + f]; }
  double& v_at(std::size_t i, std::size_t f) { return v[i * m + f]; }

  // w0 = 0, w = 0, V ~ Normal(0, init_stddev^2), seeded.
  static FmModel init(std::size_t p, const FmHyperparams& hp) {
    FmModel model;
    model.p = p;
    model.m = hp.factors;
    model.w.assign(p, 0.0);
    model.v.assign(p * hp.factors, 0.0);
    Rng rng(hp.seed);
    for (double& x : model.v) x = rng.normal(0.0, hp.init_stddev);
    return model;
  }

  bool operator==(const FmModel&) const = default;
};

namespace detail {
inline void check_range(const FmModel& model, const SparseVector& x) {
  if (!x.empty() && x.max_index() >= model.p)
    throw DimensionError("feature index " + std::to_string(x.max_index()) +
                         " out of range for model with p=" + std::to_string(model.p));
}
}  // namespace detail

// Model equation evaluated through the linear-time reformulation
//   y = w0 + sum_i w_i x_i + 1/2 sum_f [(sum_i v_if x_i)^2 - sum_i v_if^2 x_i^2],
// costing O(nnz * m).
inline double fm_predict(const FmModel& model, const SparseVector& x) {
  detail::check_range(model, x);
  double y = model.w0;
  for (const auto& e : x.entries()) y += model.w[e.index] * e.value;
  for (std::size_t f = 0; f < model.m; ++f) {
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& e : x.entries()) {
      const double t = model.v_at(e.index, f) * e.value;
      sum += t;
      sum_sq += t * t;
    }
    y += 0.5 * (sum * sum - sum_sq);
  }
  return y;
}

// Literal transcription of the model equation with the explicit double sum
// over feature pairs. O(nnz^2 * m); serves as the independent reference for
// fm_predict.
inline double fm_predict_naive(const FmModel& model, const SparseVector& x) {
  detail::check_range(model, x);
  double y = model.w0;
  const auto& entries = x.entries();
  for (const auto& e : entries) y += model.w[e.index] * e.value;
  for (std::size_t a = 0; a < entries.size(); ++a) {
    for (std::size_t b = a + 1; b < entries.size(); ++b) {
      double dot = 0.0;
      for (std::size_t f = 0; f < model.m; ++f)
        dot += model.v_at(entries[a].index, f) * model.v_at(entries[b].index, f);
      y += dot * entries[a].value * entries[b].value;
    }
  }
  return y;
}

/// Partial derivatives of the prediction with respect to the parameters
/// touched by x; parameters tied to zero features get no entry (their
/// derivative is exactly zero).
struct FmGradient {
  double w0 = 1.0;
  std::vector<std::pair<std::size_t, double>> w;               // dy/dw_i = x_i
  std::vector<std::pair<std::size_t, std::vector<double>>> v;  // dy/dv_if
};

inline FmGradient fm_gradient(const FmModel& model, const SparseVector& x) {
  detail::check_range(model, x);
  FmGradient g;
  g.w0 = 1.0;
  // s_f = sum_j v_jf x_j, shared by every dv_if.
  std::vector<double> s(model.m, 0.0);
  for (const auto& e : x.entries())
    for (std::size_t f = 0; f < model.m; ++f)
      s[f] += model.v_at(e.index, f) * e.value;
  g.w.reserve(x.nnz());
  g.v.reserve(x.nnz());
  for (const auto& e : x.entries()) {
    g.w.emplace_back(e.index, e.value);
    std::vector<double> dv(model.m);
    for (std::size_t f = 0; f < model.m; ++f)
      dv[f] = e.value * s[f] - model.v_at(e.index, f) * e.value * e.value;
    g.v.emplace_back(e.index, std::move(dv));
  }
  return g;
}

namespace detail {
// Doubles are stored as their 64-bit pattern in hex: exact round-trip without
// relying on hexfloat stream input, which standard libraries do not guarantee.
inline std::string double_to_hex(double d) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(d));
  std::memcpy(&bits, &d, sizeof(bits));
  std::ostringstream os;
  os << std::hex << bits;
  return os.str();
}

inline double double_from_hex(const std::string& s) {
  std::uint64_t bits = 0;
  std::size_t consumed = 0;
  try {
    bits = std::stoull(s, &consumed, 16);
  } catch (const std::exception&) {
    throw ParseError("bad double literal '" + s + "'");
  }
  if (consumed != s.size()) throw ParseError("bad double literal '" + s + "'");
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}
}  // namespace detail

// Checkpoint: line-oriented text holding p, m, w0, w and V. The feature index
// fingerprint is stored and verified on load, catching checkpoints applied to
// a different index.
inline void save_fm(const FmModel& model, const std::string& index_fingerprint,
                    std::ostream& os) {
  os << "lodfm-fm-checkpoint v1\n";
  os << "index " << index_fingerprint << "\n";
  os << "p " << model.p << "\nm " << model.m << "\n";
  os << "w0 " << detail::double_to_hex(model.w0) << "\n";
  os << "w";
  for (double x : model.w) os << ' ' << detail::double_to_hex(x);
  os << "\nv";
  for (double x : model.v) os << ' ' << detail::double_to_hex(x);
  os << "\n";
}

inline void save_fm_file(const FmModel& model, const std::string& index_fingerprint,
                         const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write checkpoint to " + path.string());
  save_fm(model, index_fingerprint, os);
}

inline FmModel load_fm(std::istream& is, const std::string& expected_fingerprint) {
  std::string header;
  std::getline(is, header);
  if (header != "lodfm-fm-checkpoint v1")
    throw ParseError("not an fm checkpoint (bad header)");
  std::string tag, fingerprint;
  is >> tag >> fingerprint;
  if (tag != "index") throw ParseError("fm checkpoint: expected index line");
  if (!expected_fingerprint.empty() && fingerprint != expected_fingerprint)
    throw StructuralError("checkpoint was trained against a different feature index (" +
                          fingerprint + " != " + expected_fingerprint + ")");
  FmModel model;
  std::string word;
  is >> tag >> model.p;
  if (tag != "p") throw ParseError("fm checkpoint: expected p line");
  is >> tag >> model.m;
  if (tag != "m") throw ParseError("fm checkpoint: expected m line");
  is >> tag >> word;
  if (tag != "w0") throw ParseError("fm checkpoint: expected w0 line");
  model.w0 = detail::double_from_hex(word);
  is >> tag;
  if (tag != "w") throw ParseError("fm checkpoint: expected w block");
  model.w.resize(model.p);
  for (double& x : model.w) {
    if (!(is >> word)) throw ParseError("fm checkpoint: truncated w block");
    x = detail::double_from_hex(word);
  }
  is >> tag;
  if (tag != "v") throw ParseError("fm checkpoint: expected v block");
  model.v.resize(model.p * model.m);
  for (double& x : model.v) {
    if (!(is >> word)) throw ParseError("fm checkpoint: truncated v block");
    x = detail::double_from_hex(word);
  }
  return model;
}

inline FmModel load_fm_file(const std::filesystem::path& path,
                            const std::string& expected_fingerprint) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read checkpoint from " + path.string());
  return load_fm(is, expected_fingerprint);
}

}  // namespace lodfm
