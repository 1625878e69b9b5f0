#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsxplain/heatmap.hpp"
#include "tsxplain/model.hpp"

namespace tsx {

/// Grad-CAM over the last-stage ResNet feature maps: alpha_k is the
/// time-average of d(score)/dA_k, map(t) = relu(sum_k alpha_k A_k(t)).
/// Returns a T'x1 temporal heatmap at the feature-map resolution.
Heatmap grad_cam(const ForwardCache& cache, int target);

struct RolloutResult {
  int T = 0;
  std::vector<double> matrix;     // TxT, row-major, row-stochastic
  std::vector<double> relevance;  // per-position column mean
};

/// Residual-corrected rollout: per layer A_bar = 0.5*(head-mean + I),
/// renormalized row-stochastic; R = A_bar_L * ... * A_bar_1.
RolloutResult attention_rollout(const ForwardCache& cache);

/// Arithmetic mean of all L*h attention maps (TxT, row-major).
std::vector<double> global_attention(const ForwardCache& cache);

/// s(c) = mean_t |d output[target] / d x[t,c]| for the chosen branch
/// ("resnet", "transformer", or "combined"), normalized to sum 1.
std::vector<double> channel_saliency(const ForwardCache& cache, int target,
                                     const std::string& branch);

/// TxC transformer map: rollout temporal relevance (sum 1) outer-product
/// with gradient channel saliency (sum 1).
Heatmap transformer_heatmap(const ForwardCache& cache, int target);

/// TxC ResNet map: Grad-CAM upsampled to T, broadcast across channels and
/// modulated by the same gradient channel saliency.
Heatmap resnet_heatmap(const ForwardCache& cache, int target);

struct ErfEntry {
  std::string name;
  int kernel;
  int stride;
  double erf;
};

/// ERF_l = ERF_{l-1} + (k_l - 1) * prod_{i<l} s_i over the conv/pool chain.
std::vector<ErfEntry> effective_receptive_field(const ResNetConfig& cfg);

/// Stem kernel waveforms for plotting, one entry per filter.
nlohmann::json first_layer_filters(const ResNet1D& model);

}  // namespace tsx
