#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsxplain/heatmap.hpp"

namespace tsx {

enum class FusionStrategy { multiplicative, weighted, learned, concat_project };

std::string fusion_strategy_name(FusionStrategy s);
FusionStrategy fusion_strategy_from_name(const std::string& s);

/// Per-cell 2->1 projection, the "1x1 kernel" fusion. `learned` passes the
/// combination through a ReLU; `concat_project` uses it unconstrained (output
/// still clamped at zero so heatmap nonnegativity holds).
struct LearnedFusionParams {
  double w_r = 0.5;
  double w_t = 0.5;
  double bias = 0.0;
  /// Least-squares fit of w_r, w_t, bias against target grids.
  static LearnedFusionParams fit(const std::vector<Heatmap>& hr_set,
                                 const std::vector<Heatmap>& ht_set,
                                 const std::vector<Heatmap>& targets);
};

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::multiplicative;
  double alpha = 1.0;          // meaning depends on strategy
  int smoothing_window = 3;    // odd
  double threshold_quantile = 0.2;
  bool use_dtw = false;
  LearnedFusionParams learned;
  void validate() const;
};

/// Per-channel linear interpolation of a T'xC map to target_T rows.
Heatmap upsample_linear(const Heatmap& h, int target_T);

struct DtwResult {
  std::vector<double> warped_a;            // a re-timed onto b's axis
  std::vector<std::pair<int, int>> path;   // monotone, (0,0)..(na-1,nb-1)
  double cost;
};

/// Classic O(n*m) dynamic-programming alignment under |a_i - b_j|.
DtwResult dtw_align(std::span<const double> a, std::span<const double> b);

/// Warps every channel of `a` onto `b`'s time axis using the DTW path of the
/// two maps' channel-mean temporal profiles.
Heatmap dtw_warp_to(const Heatmap& a, const Heatmap& b);

/// Combine two aligned nonnegative heatmaps. Strategies:
///   multiplicative:  alpha * (hr ⊙ ht)
///   weighted:        alpha * hr + (1-alpha) * ht
///   learned:         relu(w_r*hr + w_t*ht + bias)
///   concat_project:  max(0, w_r*hr + w_t*ht + bias)
Heatmap fuse(const Heatmap& hr, const Heatmap& ht, const FusionConfig& cfg);

/// Global (v-min)/(max-min); a constant grid maps to all zeros.
Heatmap minmax_normalize(const Heatmap& h);

/// Centered per-channel moving average with shrinking windows at the borders.
Heatmap smooth_moving_average(const Heatmap& h, int window);

struct SalientCells {
  int channel;
  int t_start, t_end;  // inclusive
  double peak_value;
  int peak_time;
};

/// Cells >= the (1-q)-quantile of the positive cells form the mask (ties
/// included); per channel, maximal runs of masked cells become regions, and
/// runs separated by <= gap_merge unmasked cells are merged.
std::vector<SalientCells> threshold_regions(const Heatmap& h, double q,
                                            int gap_merge = 2);

}  // namespace tsx
