#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsxplain/dataset.hpp"
#include "tsxplain/fusion.hpp"
#include "tsxplain/heatmap.hpp"
#include "tsxplain/model.hpp"
#include "tsxplain/stats.hpp"

namespace tsx {

struct ClassificationMetrics {
  double accuracy;
  double macro_f1;
};

/// Macro-F1 averages per-class F1; classes absent from both preds and labels
/// are skipped.
ClassificationMetrics classification_metrics(const std::vector<int>& preds,
                                             const std::vector<int>& labels);

struct RegressionMetrics {
  double rmse;
  double r2;
  bool r2_defined;  // false when the targets have zero variance
};

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& targets);

/// Argmax class predictions (classification) or raw outputs (regression)
/// for the given samples.
std::vector<double> predict(Model& model, const std::vector<std::vector<double>>& samples,
                            int T, int C);

/// Metric for masked/unmasked inputs: classification accuracy or negated
/// RMSE, so that higher is always better.
double task_metric(Model& model, const std::vector<std::vector<double>>& samples,
                   const std::vector<double>& targets, int T, int C);

struct DeletionCurve {
  std::vector<double> fractions;
  std::vector<double> metric;         // heatmap-ranked masking
  std::vector<double> random_metric;  // random-ranking baseline
  double base_metric;
  double auc_drop;         // trapezoid AUC of (base - metric) over f
  double random_auc_drop;
};

/// Default masking fractions 0.05, 0.10, ..., 0.50.
std::vector<double> default_fractions();

/// Masks the top-f cells ranked by each sample's heatmap (fill = per-channel
/// train mean) and re-scores the model; the random baseline re-ranks cells
/// uniformly per sample under `seed`.
DeletionCurve deletion_test(Model& model,
                            const std::vector<std::vector<double>>& samples,
                            const std::vector<double>& targets,
                            const std::vector<Heatmap>& heatmaps, int T, int C,
                            const std::vector<double>& channel_fill,
                            const std::vector<double>& fractions,
                            std::uint64_t seed);

/// Per-channel mean over the train split, the deletion-test fill value.
std::vector<double> train_channel_means(const DatasetBundle& bundle);

struct SensitivityResult {
  double score;  // mean |dOut| top-20% noise / mean |dOut| bottom-20% noise
  bool defined;  // false when sigma == 0
};

SensitivityResult sensitivity_test(Model& model,
                                   const std::vector<std::vector<double>>& samples,
                                   const std::vector<Heatmap>& heatmaps, int T,
                                   int C, double sigma, std::uint64_t seed);

struct ConsensusEntry {
  std::string strategy;
  double mean_error;  // mean ||normalize(fused) - H*||^2
  BootstrapCI ci;
};

struct ConsensusResult {
  std::vector<ConsensusEntry> entries;  // multiplicative, weighted, concat_project
  double paired_diff_mult_minus_weighted;
  BootstrapCI paired_diff_ci;
};

/// Fuses each (hr, ht) pair under each strategy and scores the normalized
/// result against the ground-truth mask.
ConsensusResult consensus_experiment(const std::vector<Heatmap>& hr_set,
                                     const std::vector<Heatmap>& ht_set,
                                     const std::vector<Heatmap>& masks,
                                     std::uint64_t seed);

nlohmann::ordered_json deletion_curve_json(const DeletionCurve& c);
std::string deletion_curve_csv(const DeletionCurve& c);

}  // namespace tsx
