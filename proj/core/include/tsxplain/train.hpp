#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsxplain/dataset.hpp"
#include "tsxplain/model.hpp"

namespace tsx {

struct TrainConfig {
  double lr = 3e-4;
  int batch_size = 32;
  double weight_decay = 1e-4;
  int max_epochs = 50;
  int patience = 10;
  std::uint64_t seed = 0;
  double huber_delta = 1.0;
  bool augment = true;          // train-split jitter + noise per batch
  double jitter_frac = 0.05;
  double noise_sigma = 0.1;
  // hybrid models add aux_branch_weight * (branch losses) to the combined
  // loss so neither branch can free-ride behind the gate
  double aux_branch_weight = 0.3;
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
};

/// Per-parameter first/second moment accumulators plus the shared step count.
struct OptimizerState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::int64_t step = 0;
};

struct Checkpoint {
  int version = 1;
  nlohmann::json model_config;
  std::map<std::string, std::vector<double>> params;
  std::map<std::string, std::vector<double>> buffers;
  OptimizerState opt;
  int epoch = 0;
  double val_metric = 0.0;
  std::uint64_t config_hash = 0;
  std::string rng_state;
};

struct EpochStats {
  int epoch;
  double train_loss;
  double val_loss;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochStats> history;
  int stopped_epoch = 0;
  bool early_stopped = false;
  nlohmann::ordered_json history_json() const;
};

std::uint64_t config_hash(const nlohmann::json& model_config);

/// AdamW (beta 0.9/0.999, eps 1e-8) with early stopping on validation loss.
/// Classification uses cross-entropy, regression mean Huber loss. Training
/// batches drop the final short batch; evaluation keeps it. Deterministic
/// under cfg.seed. Pass `resume` to continue from a saved checkpoint.
TrainResult train(Model& model, const DatasetBundle& bundle,
                  const TrainConfig& cfg, const Checkpoint* resume = nullptr);

/// Mean loss of the model over one split (no dropout, batch stats frozen).
double evaluate_loss(Model& model, const DatasetBundle& bundle, Split split,
                     double huber_delta = 1.0);

void apply_checkpoint(Model& model, const Checkpoint& ckpt);
Checkpoint snapshot(Model& model, const OptimizerState& opt, int epoch,
                    double val_metric, const std::string& rng_state);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Exhaustive scan; highest objective wins, ties broken toward 0.5.
double grid_search_alpha(const std::vector<double>& grid,
                         const std::function<double(double)>& objective);

}  // namespace tsx
