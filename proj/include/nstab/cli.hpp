#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nstab/boolean_fourier.hpp"
#include "nstab/catalog.hpp"
#include "nstab/closed_forms.hpp"
#include "nstab/error.hpp"
#include "nstab/experiments.hpp"
#include "nstab/hermite.hpp"
#include "nstab/interval.hpp"
#include "nstab/io.hpp"
#include "nstab/rng.hpp"
#include "nstab/runtime.hpp"
#include "nstab/stability_mc.hpp"
#include "nstab/tinynn/checkpoint.hpp"
#include "nstab/training/trainer.hpp"

#ifndef NSTAB_CODE_VERSION
#define NSTAB_CODE_VERSION "unknown"
#endif

namespace nstab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kUnexpected = 1, kUsage = 2, kValidation = 3, kNumerical = 4 };

/// Bad flags, unknown config keys or an unusable output directory.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Options shared by every subcommand plus the flag overrides registered for it.
struct Invocation {
  std::string out;
  std::string config_path;
  std::string tag;
  std::optional<std::uint64_t> seed;
  std::vector<std::function<void(json&)>> overrides;

  template <class T>
  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    overrides.push_back([value, opt, pointer](json& j) {
      if (opt->count() > 0) j[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }

  template <class T>
  CLI::Option* list_flag(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help) {
    return flag<std::vector<T>>(app, name, pointer, help)->delimiter(',');
  }

  void on_set(CLI::Option* opt, std::function<void(json&)> apply) {
    overrides.push_back([opt, apply = std::move(apply)](json& j) {
      if (opt->count() > 0) apply(j);
    });
  }
};

namespace detail {

inline void reject_unknown_keys(const json& patch, const json& defaults, const std::string& where) {
  if (!patch.is_object()) throw UsageError("config" + where + " must be a JSON object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where + "/" + it.key();
    if (!defaults.contains(it.key())) throw UsageError("unknown config key '" + path + "'");
    if (defaults.at(it.key()).is_object()) reject_unknown_keys(it.value(), defaults.at(it.key()), path);
  }
}

/// Inclusive grid "start:stop:step".
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("grid '" + text + "': '" + item + "' is not a number");
    }
  }
  if (parts.size() != 3 || parts[2] <= 0.0 || parts[1] < parts[0])
    throw UsageError("grid '" + text + "' must be start:stop:step with step > 0 and stop >= start");
  const auto count = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
  if (count > 1000000) throw UsageError("grid '" + text + "' has too many points");
  std::vector<double> grid;
  for (long k = 0; k < count; ++k) grid.push_back(parts[0] + static_cast<double>(k) * parts[2]);
  return grid;
}

/// "gamma=0.75,rho=0.25,S=1"; unspecified fields keep their current values.
inline void apply_reg_spec(const std::string& text, json& reg) {
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--reg: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key != "gamma" && key != "rho" && key != "S") throw UsageError("--reg: unknown key '" + key + "'");
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      if (key == "S") {
        reg[key] = static_cast<int>(v);
      } else {
        reg[key] = v;
      }
    } catch (const std::exception&) {
      throw UsageError("--reg: '" + value + "' is not a number");
    }
  }
}

inline std::string num(double v) { return io::format_double(v); }

inline json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

/// Resolved configuration and output locations for one subcommand run.
class Run {
 public:
  Run(std::string subcommand, const Invocation& inv, json defaults) : subcommand_(std::move(subcommand)) {
    if (!inv.out.empty()) {
      out_dir_ = inv.out;
    } else if (const char* env = std::getenv("NSTAB_OUT_DIR"); env && *env) {
      out_dir_ = env;
    } else {
      out_dir_ = ".";
    }
    if (!fs::is_directory(out_dir_)) throw UsageError("output directory '" + out_dir_.string() + "' does not exist");
    tag_ = inv.tag.empty() ? subcommand_ : inv.tag;
    if (tag_.find('/') != std::string::npos) throw UsageError("--tag must not contain '/'");

    config_ = std::move(defaults);
    if (!inv.config_path.empty()) {
      json patch;
      try {
        patch = io::read_json(inv.config_path);
      } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
      }
      detail::reject_unknown_keys(patch, config_, "");
      config_.merge_patch(patch);
    }
    for (const auto& apply : inv.overrides) apply(config_);
    if (inv.seed) config_["seed"] = *inv.seed;
  }

  const json& config() const { return config_; }
  json& config() { return config_; }

  /// Freezes the config (call after any normalization) and writes the manifest.
  void begin(const std::vector<std::string>& suffixes) {
    hash_ = io::config_hash(config_);
    json outputs = json::array();
    for (const auto& s : suffixes) outputs.push_back(tag_ + s);
    json manifest = {{"subcommand", subcommand_},
                     {"config", config_},
                     {"config_hash", hash_},
                     {"seed", config_.value("seed", std::uint64_t{0})},
                     {"prng", std::string(kPrngIdentity)},
                     {"code_version", NSTAB_CODE_VERSION},
                     {"outputs", outputs},
                     {"timestamp", io::utc_timestamp()}};
    if (!notes_.empty()) manifest["notes"] = notes_;
    io::write_json(path(".manifest.json"), manifest);
  }

  void note(const std::string& key, const std::string& text) { notes_[key] = text; }

  const std::string& hash() const { return hash_; }
  fs::path path(const std::string& suffix) const { return out_dir_ / (tag_ + suffix); }

 private:
  std::string subcommand_;
  fs::path out_dir_;
  std::string tag_;
  json config_;
  json notes_ = json::object();
  std::string hash_;
};

template <class T>
T typed(const json& j) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
}

// ---------------------------------------------------------------- kernel

struct KernelConfig {
  std::string kernel = "relu";  // relu | attention-identity | attention-unstructured
  std::vector<double> rho = detail::parse_grid("-1:1:0.1");
  int n = 8;
  std::uint64_t mc_samples = 0;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(KernelConfig, kernel, rho, n, mc_samples, seed)

inline int run_kernel(const Invocation& inv) {
  Run run("kernel", inv, json(KernelConfig{}));
  const auto cfg = typed<KernelConfig>(run.config());
  nstab::detail::require(cfg.kernel == "relu" || cfg.kernel == "attention-identity" ||
                             cfg.kernel == "attention-unstructured",
                         "kernel: unknown kernel '" + cfg.kernel + "'");
  nstab::detail::require(!cfg.rho.empty(), "kernel: empty rho grid");
  for (double r : cfg.rho) nstab::detail::require(r >= -1.0 && r <= 1.0, "kernel: rho must lie in [-1, 1]");
  nstab::detail::require(cfg.mc_samples == 0 || cfg.kernel == "relu", "kernel: MC is available for relu only");
  run.begin({".manifest.json", ".csv"});

  io::CsvWriter csv(run.path(".csv"), {"rho", "value", "method", "stderr", "n_samples", "config_hash"});
  for (std::size_t k = 0; k < cfg.rho.size(); ++k) {
    const double rho = cfg.rho[k];
    auto emit = [&](double v, const char* method, double se, std::uint64_t samples) {
      csv.row({detail::num(rho), detail::num(v), method, detail::num(se), std::to_string(samples), run.hash()});
    };
    const double nan = experiments::kNaN;
    if (cfg.kernel == "relu") {
      emit(relu_stability(rho), "exact", nan, 0);
      emit(relu_stability_taylor(rho), "taylor", nan, 0);
      if (cfg.mc_samples > 0) {
        GaussianPairSampler sampler(rho, 1, 1, derive_seed(cfg.seed, k));
        const auto e = estimate_stability([](const Matrix& x) { return std::max(0.0, x(0, 0)); }, sampler,
                                          cfg.mc_samples);
        emit(e.mean, "mc", e.std_error, e.n_samples);
      }
    } else if (cfg.kernel == "attention-identity") {
      emit(attention_identity_stability(rho, 1.0), "exact", nan, 0);
    } else {
      emit(attention_unstructured_stability(cfg.n, rho, 1.0), "exact", nan, 0);
    }
  }
  return kOk;
}

// ---------------------------------------------------------------- recur

struct RecurConfig {
  std::vector<double> rho0{0.0, 0.5, 1.0};
  std::vector<double> gamma{1.0};
  int L = 30;
  bool proxy = true;  // also emit the affine proxy started at rho_1 (gamma = 1 only)
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RecurConfig, rho0, gamma, L, proxy, seed)

inline int run_recur(const Invocation& inv) {
  Run run("recur", inv, json(RecurConfig{}));
  const auto cfg = typed<RecurConfig>(run.config());
  nstab::detail::require(!cfg.rho0.empty() && !cfg.gamma.empty(), "recur: need rho0 and gamma values");
  std::vector<RecurrenceTrace> traces;
  for (double g : cfg.gamma)
    for (double r : cfg.rho0) traces.push_back(gamma_recurrence(r, g, cfg.L));
  run.begin({".manifest.json", ".csv", ".summary.json"});

  io::CsvWriter csv(run.path(".csv"), {"rho0", "gamma", "L", "value", "method", "config_hash"});
  json summary = {{"config_hash", run.hash()}, {"traces", json::array()}};
  for (const auto& t : traces) {
    for (std::size_t l = 0; l < t.values.size(); ++l)
      csv.row({detail::num(t.rho0), detail::num(t.gamma), std::to_string(l + 1), detail::num(t.values[l]),
               "recurrence", run.hash()});
    json entry = {{"rho0", t.rho0},
                  {"gamma", t.gamma},
                  {"fixed_point", t.fixed_point},
                  {"proxy_fixed_point", t.proxy_fixed_point},
                  {"final", t.values.back()}};
    if (cfg.proxy && t.gamma == 1.0) {
      const RecurrenceTrace p = linear_proxy_recurrence(t.values.front(), cfg.L);
      for (std::size_t l = 0; l < p.values.size(); ++l)
        csv.row({detail::num(t.rho0), detail::num(t.gamma), std::to_string(l + 1), detail::num(p.values[l]),
                 "linear-proxy", run.hash()});
      entry["linear_proxy_final"] = p.values.back();
    }
    summary["traces"].push_back(entry);
  }
  io::write_json(run.path(".summary.json"), summary);
  return kOk;
}

// ---------------------------------------------------------------- interval

inline Matrix matrix_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw UsageError(std::string("interval: ") + name + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size()), cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw UsageError(std::string("interval: ") + name + " rows differ in length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = typed<double>(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

inline json interval_defaults() {
  return {{"rho_l", 0.1},
          {"rho_r", 0.3},
          {"B", 1.0},
          {"n", 2},
          {"W_K", {{1.0, 0.0}, {0.0, 1.0}}},
          {"W_Q", {{1.0, 0.0}, {0.0, 1.0}}},
          {"W_V", {{1.0, 0.0}, {0.0, 1.0}}},
          {"seed", 0}};
}

inline int run_interval(const Invocation& inv) {
  Run run("interval", inv, interval_defaults());
  const json& c = run.config();
  const double rho_l = typed<double>(c.at("rho_l")), rho_r = typed<double>(c.at("rho_r")), B = typed<double>(c.at("B"));
  const auto n = typed<Eigen::Index>(c.at("n"));
  const Matrix W_K = matrix_from_json(c.at("W_K"), "W_K"), W_Q = matrix_from_json(c.at("W_Q"), "W_Q"),
               W_V = matrix_from_json(c.at("W_V"), "W_V");
  const StabilityInterval r = attention_interval_report(rho_l, rho_r, B, W_K, W_Q, W_V, n);
  run.begin({".manifest.json", ".summary.json"});
  json out = {{"config_hash", run.hash()},
              {"R_l", r.R_l},
              {"R_r", r.R_r},
              {"E", r.E},
              {"premise_ok", r.premise_ok}};
  if (r.premise_ok) {
    out["lower"] = r.lower;
    out["upper"] = r.upper;
  } else {
    out["lower"] = nullptr;
    out["upper"] = nullptr;
    out["violating_columns"] = {r.bad_j, r.bad_jp};
    out["violating_value"] = r.bad_value;
  }
  io::write_json(run.path(".summary.json"), out);
  if (!r.premise_ok) {
    std::cerr << "nstab: premise failure: rho_l S+ + rho_r S- <= 0 for columns (" << r.bad_j << ", " << r.bad_jp
              << ")\n";
    return kValidation;
  }
  return kOk;
}

// ---------------------------------------------------------------- spectrum

struct SpectrumConfig {
  std::string domain = "boolean";  // boolean | hermite
  std::string function = "majority";
  int n = 5;  // boolean arity
  int degree = kDefaultHermiteDegree;
  int quad_order = kDefaultQuadOrder;
  std::vector<double> rho{0.5, 0.9};
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SpectrumConfig, domain, function, n, degree, quad_order, rho, seed)

inline int run_spectrum(const Invocation& inv) {
  Run run("spectrum", inv, json(SpectrumConfig{}));
  const auto cfg = typed<SpectrumConfig>(run.config());
  nstab::detail::require(cfg.domain == "boolean" || cfg.domain == "hermite", "spectrum: domain is boolean or hermite");
  json summary;
  if (cfg.domain == "boolean") {
    const BooleanSpectrum s = wht(catalog::boolean_function(cfg.function, cfg.n));
    for (double r : cfg.rho) nstab::detail::require(r >= -1.0 && r <= 1.0, "spectrum: rho must lie in [-1, 1]");
    run.begin({".manifest.json", ".csv", ".summary.json"});
    io::CsvWriter csv(run.path(".csv"), {"subset", "degree", "coefficient", "config_hash"});
    for (std::uint32_t U = 0; U < s.coeffs.size(); ++U) {
      std::string key;
      for (int i = 1; i <= cfg.n; ++i)
        if ((U >> (i - 1)) & 1u) key += (key.empty() ? "" : "-") + std::to_string(i);
      csv.row({key.empty() ? "{}" : key, std::to_string(std::popcount(U)), detail::num(s.coeffs[U]), run.hash()});
    }
    summary = {{"norm_sq", std::accumulate(s.coeffs.begin(), s.coeffs.end(), 0.0,
                                           [](double a, double c) { return a + c * c; })},
               {"level_weights", degree_weights(s)},
               {"degree", degree(s)},
               {"total_influence", total_influence(s)}};
    summary["stability"] = json::array();
    for (double r : cfg.rho) summary["stability"].push_back({{"rho", r}, {"value", boolean_stability(s, r)}});
  } else {
    const HermiteSpectrum s = project(catalog::gaussian_function(cfg.function),
                                      catalog::gaussian_arity(cfg.function), cfg.degree, cfg.quad_order);
    for (double r : cfg.rho) nstab::detail::require(r >= 0.0 && r <= 1.0, "spectrum: hermite rho must lie in [0, 1]");
    run.begin({".manifest.json", ".csv", ".summary.json"});
    io::CsvWriter csv(run.path(".csv"), {"alpha", "degree", "coefficient", "config_hash"});
    for (const auto& [a, coeff] : s.coeffs) {
      std::string key;
      for (std::size_t i = 0; i < a.size(); ++i) key += (i ? "-" : "") + std::to_string(a[i]);
      csv.row({key, std::to_string(total_degree(a)), detail::num(coeff), run.hash()});
    }
    summary = {{"norm_sq", s.norm_sq()}, {"level_weights", s.level_weights()}};
    summary["stability"] = json::array();
    for (double r : cfg.rho) summary["stability"].push_back({{"rho", r}, {"value", spectral_stability(s, r)}});
  }
  summary["config_hash"] = run.hash();
  io::write_json(run.path(".summary.json"), summary);
  return kOk;
}

// ---------------------------------------------------------------- stab-mc

struct StabMcConfig {
  std::string quantity = "relu";  // relu | gaussian | boolean | mlp-bb
  std::string function = "relu";  // catalog name for gaussian and boolean
  int n = 5;
  std::vector<double> rho{0.5};
  std::uint64_t samples = 100000;
  double mu = 0.0, sigma = 1.0, alpha = 1.0;  // mlp-bb entry law
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StabMcConfig, quantity, function, n, rho, samples, mu, sigma, alpha,
                                                seed)

inline int run_stab_mc(const Invocation& inv) {
  Run run("stab-mc", inv, json(StabMcConfig{}));
  const auto cfg = typed<StabMcConfig>(run.config());
  const std::string& q = cfg.quantity;
  nstab::detail::require(q == "relu" || q == "gaussian" || q == "boolean" || q == "mlp-bb",
                         "stab-mc: unknown quantity '" + q + "'");
  nstab::detail::require(!cfg.rho.empty(), "stab-mc: need at least one rho");
  nstab::detail::require(cfg.samples >= 2, "stab-mc: need at least 2 samples");

  std::optional<BooleanFunction> bf;
  std::optional<HermiteSpectrum> hs;
  std::function<double(const Eigen::VectorXd&)> gf;
  int arity = 1;
  if (q == "boolean") bf = catalog::boolean_function(cfg.function, cfg.n);
  if (q == "gaussian") {
    gf = catalog::gaussian_function(cfg.function);
    arity = catalog::gaussian_arity(cfg.function);
    hs = project(gf, arity);
  }
  run.begin({".manifest.json", ".json"});

  json records = json::array();
  for (std::size_t k = 0; k < cfg.rho.size(); ++k) {
    const double rho = cfg.rho[k];
    const std::uint64_t seed = derive_seed(cfg.seed, k);
    StabilityEstimate e;
    double exact = experiments::kNaN;
    if (q == "relu") {
      GaussianPairSampler sampler(rho, 1, 1, seed);
      e = estimate_stability([](const Matrix& x) { return std::max(0.0, x(0, 0)); }, sampler, cfg.samples);
      exact = relu_stability(rho);
    } else if (q == "gaussian") {
      GaussianPairSampler sampler(rho, 1, arity, seed);
      e = estimate_stability([&](const Matrix& x) { return gf(x.row(0).transpose()); }, sampler, cfg.samples);
      if (rho >= 0.0) exact = spectral_stability(*hs, rho);
    } else if (q == "boolean") {
      e = sampled_boolean_stability(*bf, rho, cfg.samples, seed);
      exact = boolean_stability(wht(*bf), rho);
    } else {
      e = estimate_mlp_bb_stability(cfg.mu, cfg.sigma, rho, cfg.alpha, cfg.samples, seed);
      exact = mlp_bb_stability(cfg.mu, cfg.sigma, rho, cfg.alpha);
    }
    records.push_back({{"quantity", q},
                       {"function", q == "gaussian" || q == "boolean" ? cfg.function : q},
                       {"rho", rho},
                       {"mean", e.mean},
                       {"stderr", e.std_error},
                       {"n_samples", e.n_samples},
                       {"exact", detail::num_or_null(exact)},
                       {"config_hash", run.hash()}});
  }
  io::write_json(run.path(".json"), {{"config_hash", run.hash()}, {"records", records}});
  return kOk;
}

// ---------------------------------------------------------------- verify-theorem

inline int run_verify(const Invocation& inv) {
  Run run("verify-theorem", inv, json(experiments::VerifyParams{}));
  const auto p = typed<experiments::VerifyParams>(run.config());
  p.validate();
  run.begin({".manifest.json", ".csv", ".json"});
  const std::vector<experiments::VerifyRow> rows = experiments::verify(p);

  std::vector<std::string> cols = experiments::verify_columns();
  cols.push_back("config_hash");
  io::CsvWriter csv(run.path(".csv"), cols);
  json records = json::array();
  for (const auto& r : rows) {
    csv.row({r.which, r.series, r.x_name, detail::num(r.x), detail::num(r.estimate), detail::num(r.std_error),
             detail::num(r.predicted), detail::num(r.gap), detail::num(r.paired_gap),
             detail::num(r.paired_gap_stderr), detail::num(r.lower), detail::num(r.upper),
             std::to_string(r.n_samples), run.hash()});
    records.push_back({{"which", r.which},
                       {"series", r.series},
                       {"x_name", r.x_name},
                       {"x", r.x},
                       {"estimate", detail::num_or_null(r.estimate)},
                       {"stderr", detail::num_or_null(r.std_error)},
                       {"predicted", detail::num_or_null(r.predicted)},
                       {"gap", detail::num_or_null(r.gap)},
                       {"paired_gap", detail::num_or_null(r.paired_gap)},
                       {"paired_gap_stderr", detail::num_or_null(r.paired_gap_stderr)},
                       {"lower", detail::num_or_null(r.lower)},
                       {"upper", detail::num_or_null(r.upper)},
                       {"n_samples", r.n_samples},
                       {"config_hash", run.hash()}});
  }
  io::write_json(run.path(".json"), {{"config_hash", run.hash()}, {"rows", records}});
  return kOk;
}

// ---------------------------------------------------------------- train

inline int run_train(const Invocation& inv) {
  Run run("train", inv, json(train::TrainConfig{}));
  const auto cfg = typed<train::TrainConfig>(run.config());
  cfg.validate();
  run.note("regularizer_noise",
           "every input position, including the '=' token, is kept with probability (1 + rho) / 2 and "
           "otherwise resampled uniformly over the vocabulary");
  run.note("timing", "wall-clock time is written to the .timing.json file only");
  run.begin({".manifest.json", ".csv", ".summary.json", ".timing.json", ".ckpt"});

  io::CsvWriter csv(run.path(".csv"), {"epoch", "step", "train_loss", "val_loss", "val_acc", "reg_value",
                                       "stab_probe", "stab_probe_normalized", "lr", "influence_total",
                                       "config_hash"});
  auto on_epoch = [&](const train::EpochRecord& r, const nn::Transformer&) {
    csv.row({std::to_string(r.epoch), std::to_string(r.step), detail::num(r.train_loss), detail::num(r.val_loss),
             detail::num(r.val_acc), detail::num(r.reg_value), detail::num(r.stab_probe),
             detail::num(r.stab_probe_normalized), detail::num(r.lr),
             detail::num(r.influence_total), run.hash()});
    return true;
  };
  nn::Transformer model(cfg.resolved_model(), cfg.seed);
  const train::TrainRun result = train::train(cfg, &model, on_epoch);

  json summary = {{"config_hash", run.hash()},
                  {"seed", result.seed},
                  {"epochs_run", result.records.size()},
                  {"epochs_to_target", result.epochs_to_target ? json(*result.epochs_to_target) : json(nullptr)},
                  {"steps_to_target", result.steps_to_target ? json(*result.steps_to_target) : json(nullptr)},
                  {"test_acc", detail::num_or_null(result.test_acc)},
                  {"diverged", result.diverged},
                  {"message", result.message}};
  if (!result.records.empty()) {
    summary["final_val_acc"] = result.records.back().val_acc;
    summary["final_val_loss"] = result.records.back().val_loss;
  }
  io::write_json(run.path(".summary.json"), summary);
  io::write_json(run.path(".timing.json"),
                 {{"config_hash", run.hash()}, {"wall_clock_seconds", result.wall_clock_seconds}});
  nn::save_checkpoint(run.path(".ckpt"), model, {{"train_config", run.config()}, {"config_hash", run.hash()}});
  if (result.diverged) {
    std::cerr << "nstab: training diverged: " << result.message << "\n";
    return kNumerical;
  }
  return kOk;
}

// ---------------------------------------------------------------- influence

struct InfluenceConfig {
  std::string source = "toy";       // toy | checkpoint
  std::string function = "linear";  // toy: linear | square-first | relu-sum | quadratic
  int n = 4;
  std::uint64_t samples = 10000;
  std::string checkpoint;
  std::string split = "val";  // checkpoint inputs: train | val | test
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(InfluenceConfig, source, function, n, samples, checkpoint, split, seed)

/// Toy functions on R^n as tensor programs. "linear" is sum_i (i / n) x_i.
inline std::function<nn::Tensor(const nn::Tensor&)> toy_function(const std::string& name, int n) {
  if (name == "linear") {
    Matrix w(1, n);
    for (int i = 0; i < n; ++i) w(0, i) = static_cast<double>(i + 1) / n;
    return [w](const nn::Tensor& x) { return nn::sum(nn::mul(x, nn::Tensor::constant(w))); };
  }
  if (name == "square-first") {
    Matrix e = Matrix::Zero(1, n);
    e(0, 0) = 1.0;
    return [e](const nn::Tensor& x) { return nn::sum(nn::mul(nn::mul(x, x), nn::Tensor::constant(e))); };
  }
  if (name == "relu-sum") return [](const nn::Tensor& x) { return nn::sum(nn::relu(x)); };
  if (name == "quadratic") return [](const nn::Tensor& x) { return nn::sum(nn::mul(x, x)); };
  throw InvalidArgument("influence: unknown toy function '" + name + "'");
}

inline int run_influence(const Invocation& inv) {
  Run run("influence", inv, json(InfluenceConfig{}));
  const auto cfg = typed<InfluenceConfig>(run.config());
  nstab::detail::require(cfg.source == "toy" || cfg.source == "checkpoint", "influence: source is toy or checkpoint");
  train::InfluenceReport rep;
  if (cfg.source == "toy") {
    nstab::detail::require(cfg.n >= 1 && cfg.samples >= 1, "influence: need n >= 1 and samples >= 1");
    const auto f = toy_function(cfg.function, cfg.n);
    run.begin({".manifest.json", ".csv", ".summary.json"});
    Rng rng = Rng::substream(cfg.seed, 0);
    Matrix x(static_cast<Eigen::Index>(cfg.samples), cfg.n);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal();
    rep = train::geometric_influence(f, x);
  } else {
    nstab::detail::require(!cfg.checkpoint.empty(), "influence: checkpoint path is required");
    nstab::detail::require(cfg.split == "train" || cfg.split == "val" || cfg.split == "test",
                           "influence: split is train, val or test");
    const nn::LoadedCheckpoint ck = nn::load_checkpoint(cfg.checkpoint);
    if (!ck.metadata.contains("train_config"))
      throw InvalidArgument("influence: checkpoint carries no training config");
    const auto tc = typed<train::TrainConfig>(ck.metadata.at("train_config"));
    run.begin({".manifest.json", ".csv", ".summary.json"});
    const train::TaskData data = train::make_task(tc.task);
    const train::Dataset& ds = cfg.split == "train" ? data.train : cfg.split == "val" ? data.val : data.test;
    rep = train::geometric_influence(ck.model, ds);
  }
  io::CsvWriter csv(run.path(".csv"), {"coordinate", "influence", "config_hash"});
  for (std::size_t i = 0; i < rep.per_coordinate.size(); ++i)
    csv.row({std::to_string(i + 1), detail::num(rep.per_coordinate[i]), run.hash()});
  io::write_json(run.path(".summary.json"),
                 {{"config_hash", run.hash()}, {"total", rep.total}, {"per_coordinate", rep.per_coordinate}});
  return kOk;
}

// ---------------------------------------------------------------- entry point

inline void add_common(CLI::App* sub, Invocation& inv) {
  sub->add_option("--out", inv.out, "Output directory (default: $NSTAB_OUT_DIR or .)");
  sub->add_option("--config", inv.config_path, "JSON file merged over the defaults");
  sub->add_option("--tag", inv.tag, "Output file prefix (default: subcommand name)");
  sub->add_option("--seed", inv.seed, "Master seed");
}

inline int dispatch(const std::string& name, const Invocation& inv) {
  if (name == "kernel") return run_kernel(inv);
  if (name == "recur") return run_recur(inv);
  if (name == "interval") return run_interval(inv);
  if (name == "spectrum") return run_spectrum(inv);
  if (name == "stab-mc") return run_stab_mc(inv);
  if (name == "verify-theorem") return run_verify(inv);
  if (name == "train") return run_train(inv);
  return run_influence(inv);
}

inline int run(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Noise stability of attention layers, MLPs and small transformers"};
  app.require_subcommand(1, 1);
  std::vector<std::pair<CLI::App*, std::unique_ptr<Invocation>>> subs;
  auto make = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    subs.emplace_back(sub, std::make_unique<Invocation>());
    add_common(sub, *subs.back().second);
    return std::pair<CLI::App*, Invocation*>{sub, subs.back().second.get()};
  };

  {
    auto [sub, inv] = make("kernel", "Closed-form and MC stability kernels over a rho grid");
    auto relu = sub->add_flag("--relu", "Use the ReLU kernel (default)");
    inv->on_set(relu, [](json& j) { j["kernel"] = "relu"; });
    inv->flag<std::string>(sub, "--kernel", "/kernel", "relu | attention-identity | attention-unstructured");
    auto grid = std::make_shared<std::string>();
    CLI::Option* g = sub->add_option("--rho-grid", *grid, "Inclusive grid start:stop:step");
    inv->on_set(g, [grid](json& j) { j["rho"] = detail::parse_grid(*grid); });
    inv->list_flag<double>(sub, "--rho", "/rho", "Comma-separated rho values");
    inv->flag<int>(sub, "--n", "/n", "Sequence length for attention kernels");
    inv->flag<std::uint64_t>(sub, "--mc-samples", "/mc_samples", "MC samples per rho (0 disables)");
  }
  {
    auto [sub, inv] = make("recur", "Depth recurrences and their fixed points");
    inv->list_flag<double>(sub, "--rho0", "/rho0", "Starting correlations");
    inv->list_flag<double>(sub, "--gamma", "/gamma", "Residual dampening factors");
    inv->flag<int>(sub, "--L", "/L", "Depth");
    auto no_proxy = sub->add_flag("--no-proxy", "Skip the affine proxy");
    inv->on_set(no_proxy, [](json& j) { j["proxy"] = false; });
  }
  {
    auto [sub, inv] = make("interval", "Attention stability interval for a JSON instance");
    sub->add_option("--spec", inv->config_path, "Instance JSON (rho_l, rho_r, B, n, W_K, W_Q, W_V)");
  }
  {
    auto [sub, inv] = make("spectrum", "Fourier or Hermite spectrum of a catalog function");
    inv->flag<std::string>(sub, "--domain", "/domain", "boolean | hermite");
    inv->flag<std::string>(sub, "--function", "/function", "Catalog function name");
    inv->flag<int>(sub, "--n", "/n", "Boolean arity");
    inv->flag<int>(sub, "--degree", "/degree", "Hermite truncation degree");
    inv->flag<int>(sub, "--quad-order", "/quad_order", "Gauss-Hermite nodes per axis");
    inv->list_flag<double>(sub, "--rho", "/rho", "Correlations for the stability summary");
  }
  {
    auto [sub, inv] = make("stab-mc", "Monte Carlo stability estimates with exact references");
    inv->flag<std::string>(sub, "--quantity", "/quantity", "relu | gaussian | boolean | mlp-bb");
    inv->flag<std::string>(sub, "--function", "/function", "Catalog function name");
    inv->flag<int>(sub, "--n", "/n", "Boolean arity");
    inv->list_flag<double>(sub, "--rho", "/rho", "Correlations");
    inv->flag<std::uint64_t>(sub, "--samples", "/samples", "Samples per rho");
    inv->flag<double>(sub, "--mu", "/mu", "mlp-bb entry mean");
    inv->flag<double>(sub, "--sigma", "/sigma", "mlp-bb entry standard deviation");
    inv->flag<double>(sub, "--alpha", "/alpha", "mlp-bb noise scale");
  }
  {
    auto [sub, inv] = make("verify-theorem", "Checks a prediction against simulation");
    inv->flag<std::string>(sub, "--which", "/which", "One of the verification kinds");
    inv->flag<int>(sub, "--n", "/n", "Sequence length");
    inv->list_flag<int>(sub, "--d", "/d", "Model widths");
    inv->list_flag<double>(sub, "--rho", "/rho", "Correlations");
    inv->flag<std::uint64_t>(sub, "--samples", "/samples", "MC samples");
    inv->flag<std::string>(sub, "--score-scale", "/score_scale", "none | inv-sqrt-d");
    inv->flag<int>(sub, "--rank", "/rank", "Low-rank factor width");
    inv->list_flag<double>(sub, "--gamma", "/gamma", "Residual dampening factors");
    inv->flag<int>(sub, "--depth", "/depth", "Stack depth");
    inv->flag<int>(sub, "--width", "/width", "MLP width");
    inv->flag<int>(sub, "--ensembles", "/ensembles", "Independent weight draws");
    inv->flag<int>(sub, "--instances", "/instances", "Random interval instances");
    inv->flag<std::uint64_t>(sub, "--pilot", "/pilot", "Pilot samples per interval instance");
    inv->flag<int>(sub, "--spectra", "/spectra", "Random spectra for the tail check");
  }
  {
    auto [sub, inv] = make("train", "Trains the transformer on a synthetic task");
    inv->flag<std::string>(sub, "--task", "/task/kind", "mod-add | nsp");
    inv->flag<int>(sub, "--K", "/task/modulus", "Modulus for mod-add");
    inv->flag<int>(sub, "--n-bits", "/task/n_bits", "Sparse parity input length");
    inv->flag<int>(sub, "--k", "/task/k", "Sparse parity support size");
    inv->flag<double>(sub, "--eta", "/task/eta", "Training-label flip probability");
    inv->flag<std::size_t>(sub, "--train-size", "/task/train_size", "Training examples");
    inv->flag<std::size_t>(sub, "--val-size", "/task/val_size", "Validation examples");
    inv->flag<std::size_t>(sub, "--test-size", "/task/test_size", "Test examples");
    inv->flag<int>(sub, "--epochs", "/epochs", "Maximum epochs");
    inv->flag<int>(sub, "--batch-size", "/batch_size", "Minibatch size");
    inv->flag<double>(sub, "--lr", "/optimizer/lr", "Initial learning rate");
    inv->flag<double>(sub, "--wd", "/optimizer/weight_decay", "AdamW weight decay");
    auto constant = sub->add_flag("--constant-lr", "Disable the plateau scheduler");
    inv->on_set(constant, [](json& j) { j["scheduler"]["enabled"] = false; });
    inv->flag<int>(sub, "--d-model", "/model/d_model", "Model width");
    inv->flag<int>(sub, "--layers", "/model/n_layers", "Transformer blocks");
    inv->flag<int>(sub, "--heads", "/model/n_heads", "Attention heads");
    auto reg = std::make_shared<std::string>();
    CLI::Option* r = sub->add_option("--reg", *reg, "Enable the regularizer, e.g. gamma=0.75,rho=0.25,S=1");
    inv->on_set(r, [reg](json& j) {
      j["use_regularizer"] = true;
      detail::apply_reg_spec(*reg, j["regularizer"]);
    });
    inv->flag<int>(sub, "--probe-every", "/probe_every", "Epochs between stability probes (0 disables)");
    inv->flag<int>(sub, "--influence-every", "/influence_every", "Epochs between influence snapshots (0 disables)");
    inv->flag<double>(sub, "--target-acc", "/target_acc", "Validation accuracy target");
    inv->flag<int>(sub, "--epochs-after-target", "/epochs_after_target", "Epochs to run after the target (-1: all)");
  }
  {
    auto [sub, inv] = make("influence", "Geometric influence of a toy function or a trained model");
    inv->flag<std::string>(sub, "--source", "/source", "toy | checkpoint");
    inv->flag<std::string>(sub, "--function", "/function", "linear | square-first | relu-sum | quadratic");
    inv->flag<int>(sub, "--n", "/n", "Toy input dimension");
    inv->flag<std::uint64_t>(sub, "--samples", "/samples", "Toy samples");
    auto ck = sub->add_option("--checkpoint", "Checkpoint written by train (implies --source checkpoint)")->type_name("PATH");
    inv->on_set(ck, [ck](json& j) {
      j["source"] = "checkpoint";
      j["checkpoint"] = ck->as<std::string>();
    });
    inv->flag<std::string>(sub, "--split", "/split", "train | val | test");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  for (auto& [sub, inv] : subs) {
    if (!sub->parsed()) continue;
    try {
      return dispatch(sub->get_name(), *inv);
    } catch (const UsageError& e) {
      std::cerr << "nstab: usage error: " << e.what() << "\n";
      return kUsage;
    } catch (const json::exception& e) {
      std::cerr << "nstab: malformed config: " << e.what() << "\n";
      return kUsage;
    } catch (const PremiseFailure& e) {
      std::cerr << "nstab: premise failure: " << e.what() << "\n";
      return kValidation;
    } catch (const InvalidArgument& e) {
      std::cerr << "nstab: invalid argument: " << e.what() << "\n";
      return kValidation;
    } catch (const NumericalFailure& e) {
      std::cerr << "nstab: numerical failure: " << e.what() << "\n";
      return kNumerical;
    } catch (const std::exception& e) {
      std::cerr << "nstab: error: " << e.what() << "\n";
      return kUnexpected;
    }
  }
  return kUsage;
}

}  // namespace nstab::cli
