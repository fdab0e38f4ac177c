#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "nstab/closed_forms.hpp"
#include "nstab/hermite.hpp"
#include "nstab/interval.hpp"
#include "nstab/noise.hpp"
#include "nstab/simulate.hpp"
#include "nstab/stability_mc.hpp"

namespace nstab::experiments {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One row of a verification check. gap = estimate - predicted. paired_gap compares the model with
/// its large-d limit on one sample stream; lower/upper carry bounds where the check has them.
struct VerifyRow {
  std::string which;
  std::string series;  // e.g. "d=256", "gamma=0.8"
  std::string x_name;
  double x = 0.0;
  double estimate = kNaN, std_error = kNaN, predicted = kNaN, gap = kNaN;
  double paired_gap = kNaN, paired_gap_stderr = kNaN;
  double lower = kNaN, upper = kNaN;
  std::uint64_t n_samples = 0;
};

inline const std::vector<std::string>& verify_kinds() {
  static const std::vector<std::string> kinds{"relu-kernel",      "attention-identity", "attention-lowrank",
                                              "attention-unstructured", "pattern-agreement", "mlp-recurrence",
                                              "gamma-dampening",  "interval-enclosure", "spectral-tail"};
  return kinds;
}

struct VerifyParams {
  std::string which = "relu-kernel";
  int n = 8;
  std::vector<int> d{64, 128, 256};
  std::vector<double> rho{0.5};
  std::uint64_t samples = 200000;
  std::uint64_t seed = 0;
  std::string score_scale = "none";  // none | inv-sqrt-d
  int rank = 16;                     // attention-lowrank factor width
  std::vector<double> gamma{0.8, 1.0};
  int depth = 12;
  int width = 512;
  int ensembles = 32;
  int instances = 50;
  std::uint64_t pilot = 200000;
  int spectra = 100;

  void validate() const {
    const auto& k = verify_kinds();
    detail::require(std::find(k.begin(), k.end(), which) != k.end(), "verify: unknown --which '" + which + "'");
    detail::require(n >= 1, "verify: n must be >= 1");
    detail::require(!d.empty(), "verify: need at least one d");
    for (int v : d) detail::require(v >= 1, "verify: d must be >= 1");
    detail::require(!rho.empty(), "verify: need at least one rho");
    for (double r : rho) detail::require(r >= -1.0 && r <= 1.0, "verify: rho must lie in [-1, 1]");
    detail::require(samples >= 2, "verify: samples must be >= 2");
    detail::require(score_scale == "none" || score_scale == "inv-sqrt-d", "verify: score_scale is none or inv-sqrt-d");
    detail::require(rank >= 1 && depth >= 1 && width >= 1 && ensembles >= 2, "verify: rank/depth/width/ensembles");
    detail::require(instances >= 1 && spectra >= 1 && pilot >= 2, "verify: instances/spectra/pilot");
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VerifyParams, which, n, d, rho, samples, seed, score_scale, rank, gamma,
                                                depth, width, ensembles, instances, pilot, spectra)

namespace impl {

inline std::string fmt(const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s=%g", key, v);
  return buf;
}

inline double scale_for(const VerifyParams& p, int d) {
  return p.score_scale == "inv-sqrt-d" ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;
}

inline VerifyRow row(const VerifyParams& p, std::string series, std::string x_name, double x) {
  VerifyRow r;
  r.which = p.which;
  r.series = std::move(series);
  r.x_name = std::move(x_name);
  r.x = x;
  return r;
}

inline void set_estimate(VerifyRow& r, const StabilityEstimate& e, double predicted) {
  r.estimate = e.mean;
  r.std_error = e.std_error;
  r.n_samples = e.n_samples;
  r.predicted = predicted;
  r.gap = e.mean - predicted;
}

// Attention layers with W_V = I (unit value columns) checked at entry (0, 0) against the
// linear limit X -> X W_V on a shared sample stream.
template <class MakeLayer>
std::vector<VerifyRow> attention_vs_limit(const VerifyParams& p, MakeLayer&& make) {
  std::vector<VerifyRow> out;
  for (double rho : p.rho) {
    for (int d : p.d) {
      const Matrix wv = Matrix::Identity(d, d);
      const auto layer = make(d, wv, scale_for(p, d));
      GaussianPairSampler sampler(rho, p.n, d, derive_seed(p.seed, static_cast<std::uint64_t>(d)));
      const PairedEstimate e = estimate_paired_entrywise(layer, LinearMap{wv}, sampler, p.samples, 0, 0);
      VerifyRow r = row(p, fmt("rho", rho), "d", d);
      set_estimate(r, e.first, attention_identity_stability(rho, 1.0));
      r.paired_gap = e.difference.mean;
      r.paired_gap_stderr = e.difference.std_error;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace impl

inline std::vector<VerifyRow> verify_relu_kernel(const VerifyParams& p) {
  std::vector<VerifyRow> out;
  auto relu = [](const Matrix& x) { return std::max(0.0, x(0, 0)); };
  for (std::size_t k = 0; k < p.rho.size(); ++k) {
    GaussianPairSampler sampler(p.rho[k], 1, 1, derive_seed(p.seed, k));
    VerifyRow r = impl::row(p, "mc", "rho", p.rho[k]);
    impl::set_estimate(r, estimate_stability(relu, sampler, p.samples), relu_stability(p.rho[k]));
    out.push_back(r);
  }
  return out;
}

inline std::vector<VerifyRow> verify_attention_identity(const VerifyParams& p) {
  return impl::attention_vs_limit(p, [](int, const Matrix& wv, double s) { return AttentionLayer::identity(wv, s); });
}

/// W_Q W_K^T = U U^T with U a d x rank matrix of N(0, 1/rank) entries, so the diagonal of the
/// score matrix has the same scale as in the identity case.
inline std::vector<VerifyRow> verify_attention_lowrank(const VerifyParams& p) {
  return impl::attention_vs_limit(p, [&p](int d, const Matrix& wv, double s) {
    Rng rng = Rng::substream(p.seed, 1000 + static_cast<std::uint64_t>(d));
    Matrix u(d, p.rank);
    const double sd = 1.0 / std::sqrt(static_cast<double>(p.rank));
    for (Eigen::Index k = 0; k < u.size(); ++k) u.data()[k] = sd * rng.normal();
    return AttentionLayer::low_rank(std::move(u), wv, s);
  });
}

inline std::vector<VerifyRow> verify_attention_unstructured(const VerifyParams& p) {
  std::vector<VerifyRow> out;
  for (double rho : p.rho) {
    for (int d : p.d) {
      VerifyRow r = impl::row(p, impl::fmt("rho", rho), "d", d);
      const auto e = estimate_unstructured_attention_stability(p.n, d, rho, p.samples,
                                                               derive_seed(p.seed, static_cast<std::uint64_t>(d)),
                                                               impl::scale_for(p, d));
      impl::set_estimate(r, e, attention_unstructured_stability(p.n, rho, 1.0));
      out.push_back(r);
    }
  }
  return out;
}

inline std::vector<VerifyRow> verify_pattern_agreement(const VerifyParams& p) {
  std::vector<VerifyRow> out;
  for (int d : p.d) {
    for (std::size_t k = 0; k < p.rho.size(); ++k) {
      VerifyRow r = impl::row(p, impl::fmt("d", d), "rho", p.rho[k]);
      const auto e = estimate_pattern_agreement(p.n, d, p.rho[k], p.samples,
                                                derive_seed(p.seed, 7919 * static_cast<std::uint64_t>(d) + k));
      impl::set_estimate(r, e, pattern_agreement_s(p.n, p.rho[k]));
      out.push_back(r);
    }
  }
  return out;
}

/// Simulated deep ReLU network (width, ensembles) against the depth recurrence. rho holds the
/// starting correlations.
inline std::vector<VerifyRow> verify_mlp_recurrence(const VerifyParams& p) {
  std::vector<VerifyRow> out;
  for (std::size_t k = 0; k < p.rho.size(); ++k) {
    const RecurrenceTrace t = mlp_recurrence(p.rho[k], p.depth);
    const auto sim = simulate_deep_mlp(p.width, p.depth, p.rho[k], p.ensembles, derive_seed(p.seed, k));
    for (int l = 0; l < p.depth; ++l) {
      VerifyRow r = impl::row(p, impl::fmt("rho0", p.rho[k]), "L", l + 1);
      impl::set_estimate(r, sim[static_cast<std::size_t>(l)], t.values[static_cast<std::size_t>(l)]);
      out.push_back(r);
    }
  }
  return out;
}

/// Attention stack ReLU(gamma softmax(Y Y^T) Y); predicted is left empty since the check is a
/// trend (decay relative to the first block).
inline std::vector<VerifyRow> verify_gamma_dampening(const VerifyParams& p) {
  std::vector<VerifyRow> out;
  const int d = p.d.back();
  for (std::size_t g = 0; g < p.gamma.size(); ++g) {
    const auto stack = simulate_attention_stack(p.n, d, p.gamma[g], p.depth, p.rho.front(), p.samples,
                                                derive_seed(p.seed, g), impl::scale_for(p, d));
    for (int l = 0; l < p.depth; ++l) {
      const auto& e = stack[static_cast<std::size_t>(l)];
      VerifyRow r = impl::row(p, impl::fmt("gamma", p.gamma[g]), "depth", l + 1);
      r.estimate = e.mean;
      r.std_error = e.std_error;
      r.n_samples = e.n_samples;
      out.push_back(r);
    }
  }
  return out;
}

/// Random premise-satisfying instances; gap is the signed distance outside [lower, upper]
/// (negative inside).
inline std::vector<VerifyRow> verify_interval_enclosure(const VerifyParams& p) {
  std::vector<VerifyRow> out;
  Rng rng = Rng::substream(p.seed, 0);
  for (int k = 0; k < p.instances; ++k) {
    const IntervalInstance inst = random_interval_instance(rng, p.pilot);
    const StabilityInterval iv = interval_for(inst);
    const auto e = estimate_attention_cross_moment(inst, p.samples, derive_seed(p.seed, 1 + static_cast<std::uint64_t>(k)));
    VerifyRow r = impl::row(p, "instance", "instance", k);
    r.estimate = e.mean;
    r.std_error = e.std_error;
    r.n_samples = e.n_samples;
    r.lower = iv.lower;
    r.upper = iv.upper;
    r.gap = std::max(iv.lower - e.mean, e.mean - iv.upper);
    out.push_back(r);
  }
  return out;
}

/// Random sparse Hermite spectra with rho ~ U(0.05, 0.95) and epsilon ~ U(delta, 1), so the
/// bound applies. estimate is the tail fraction at degrees >= ceil(T), predicted is epsilon,
/// upper is the chained bound delta / (1 - rho^cutoff).
inline std::vector<VerifyRow> verify_spectral_tail(const VerifyParams& p) {
  std::vector<VerifyRow> out;
  Rng rng = Rng::substream(p.seed, 0);
  for (int k = 0; k < p.spectra; ++k) {
    const HermiteSpectrum s = random_sparse_spectrum(rng, 3, 10, 8);
    const double rho = rng.uniform(0.05, 0.95);
    const double delta = std::max(0.0, 1.0 - spectral_stability(s, rho) / s.norm_sq());
    double eps = delta + (1.0 - delta) * rng.uniform();
    eps = std::clamp(eps, std::nextafter(delta, 1.0), std::nextafter(1.0, 0.0));
    const ConcentrationReport rep = verify_tail_bound(s, rho, eps);
    VerifyRow r = impl::row(p, impl::fmt("rho", rho), "spectrum", k);
    r.estimate = rep.tail_mass / rep.norm_sq;
    r.predicted = eps;
    r.gap = r.estimate - eps;
    r.upper = rep.chain_bound / rep.norm_sq;
    out.push_back(r);
  }
  return out;
}

inline std::vector<VerifyRow> verify(const VerifyParams& p) {
  p.validate();
  if (p.which == "relu-kernel") return verify_relu_kernel(p);
  if (p.which == "attention-identity") return verify_attention_identity(p);
  if (p.which == "attention-lowrank") return verify_attention_lowrank(p);
  if (p.which == "attention-unstructured") return verify_attention_unstructured(p);
  if (p.which == "pattern-agreement") return verify_pattern_agreement(p);
  if (p.which == "mlp-recurrence") return verify_mlp_recurrence(p);
  if (p.which == "gamma-dampening") return verify_gamma_dampening(p);
  if (p.which == "interval-enclosure") return verify_interval_enclosure(p);
  return verify_spectral_tail(p);
}

inline const std::vector<std::string>& verify_columns() {
  static const std::vector<std::string> cols{"which", "series", "x_name", "x", "estimate", "stderr", "predicted",
                                             "gap", "paired_gap", "paired_gap_stderr", "lower", "upper",
                                             "n_samples"};
  return cols;
}

}  // namespace nstab::experiments
