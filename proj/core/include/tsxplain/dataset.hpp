#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsxplain/model.hpp"

namespace tsx {

enum class Split { train, val, test };
std::string split_name(Split s);

/// Aligned multivariate windows. Each sample is a T*C row-major grid
/// (samples[i][t*C + c]). Ground-truth masks, when present, use the same
/// layout and mark cells modified by an injected pattern.
struct DatasetBundle {
  int T = 0;
  int C = 0;
  Task task = Task::classification;
  std::vector<std::vector<double>> samples;
  std::vector<double> targets;  // class index or regression value
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> timestamps;  // per sample, size T
  std::vector<Split> split_tags;
  std::vector<std::vector<double>> masks;  // empty when no ground truth
  std::vector<int> synthetic_channels;     // flagged columns (rv1/rv2)
  std::vector<int> zero_variance_channels;

  // per-channel normalization statistics, filled by normalize_channels
  std::string norm_mode;  // "", "zscore", or "unit"
  std::vector<double> norm_center;  // mean or min
  std::vector<double> norm_scale;   // std or max-min
  // regression targets are standardized alongside the channels
  double target_center = 0.0;
  double target_scale = 1.0;

  void validate() const;
  std::vector<size_t> indices_of(Split s) const;
  double& at(size_t i, int t, int c) { return samples[i][static_cast<size_t>(t) * C + c]; }
  double at(size_t i, int t, int c) const { return samples[i][static_cast<size_t>(t) * C + c]; }
};

struct SyntheticSpec {
  int n_samples = 2000;
  int T = 100;
  std::uint64_t seed = 0;
  double anomaly_rate = 0.5;
  double w_spike = 1.0 / 3.0;
  double w_drift = 1.0 / 3.0;
  double w_oscillation = 1.0 / 3.0;
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SyntheticSpec from_json(const nlohmann::ordered_json& j);
};

/// Five fixed channels (low-freq sine, step, Gaussian noise, high-freq sine,
/// quadratic trend t^2/100). Positive samples carry one injected spike,
/// drift, or oscillation; `masks` records the modified cells.
DatasetBundle generate_synthetic(const SyntheticSpec& spec);

/// Linear interpolation over NaN gaps; leading/trailing gaps copy the
/// nearest observed value. Throws if every value is missing.
std::vector<double> impute_linear(const std::vector<double>& series);

struct EnergyCsvOptions {
  int T = 100;
  int stride = 1;
  std::string target_column = "Appliances";
  bool allow_impute = true;
};

/// Sliding windows over a chronological CSV (date column first). The
/// regression target is the target column's value at the window end.
DatasetBundle load_energy_csv(const std::string& path,
                              const EnergyCsvOptions& opts = {});

/// Raw row count of a CSV (excluding the header), for ingest checks.
size_t csv_row_count(const std::string& path);

enum class NormMode { zscore, unit };

/// Statistics come from the train split only; val/test reuse them.
/// Regression targets are standardized with train statistics as well.
void normalize_channels(DatasetBundle& bundle, NormMode mode);

/// Circular time shift by a uniform integer in [-jitter_frac*T,
/// +jitter_frac*T] plus iid Gaussian noise. Deterministic under seed.
std::vector<double> augment(const std::vector<double>& sample, int T, int C,
                            double jitter_frac, double noise_sigma,
                            std::uint64_t seed);

/// Tags every sample train/val/test. Classification splits are stratified
/// per class; fractions must sum to 1.
void split(DatasetBundle& bundle, double train_frac, double val_frac,
           double test_frac, std::uint64_t seed);

/// Reproducibility record: seed, generating spec, and split assignment.
nlohmann::ordered_json bundle_manifest(const DatasetBundle& bundle,
                                       const nlohmann::ordered_json& spec);

void save_bundle(const DatasetBundle& bundle, const std::string& path);
DatasetBundle load_bundle(const std::string& path);

}  // namespace tsx
