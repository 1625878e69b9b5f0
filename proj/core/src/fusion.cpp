#include "tsxplain/fusion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tsx {

std::string fusion_strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::multiplicative: return "multiplicative";
    case FusionStrategy::weighted: return "weighted";
    case FusionStrategy::learned: return "learned";
    case FusionStrategy::concat_project: return "concat_project";
  }
  throw std::logic_error("bad fusion strategy");
}

FusionStrategy fusion_strategy_from_name(const std::string& s) {
  if (s == "multiplicative") return FusionStrategy::multiplicative;
  if (s == "weighted") return FusionStrategy::weighted;
  if (s == "learned") return FusionStrategy::learned;
  if (s == "concat_project") return FusionStrategy::concat_project;
  throw std::invalid_argument("unknown fusion strategy: " + s);
}

void FusionConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("fusion config: alpha must be in [0,1]");
  if (smoothing_window < 1 || smoothing_window % 2 == 0)
    throw std::invalid_argument("fusion config: smoothing window must be odd");
  if (threshold_quantile <= 0.0 || threshold_quantile >= 1.0)
    throw std::invalid_argument(
        "fusion config: threshold quantile must be in (0,1)");
}

Heatmap upsample_linear(const Heatmap& h, int target_T) {
  if (target_T < 1)
    throw std::invalid_argument("upsample_linear: target length < 1");
  if (h.T < 1) throw std::invalid_argument("upsample_linear: empty input");
  if (target_T == h.T) return h;
  Heatmap out(target_T, h.C, h.source);
  out.channel_names = h.channel_names;
  for (int c = 0; c < h.C; ++c) {
    for (int t = 0; t < target_T; ++t) {
      double v;
      if (h.T == 1) {
        v = h.at(0, c);
      } else if (target_T == 1) {
        v = h.at(0, c);
      } else {
        double pos = static_cast<double>(t) * (h.T - 1) / (target_T - 1);
        int lo = static_cast<int>(pos);
        if (lo >= h.T - 1) lo = h.T - 2;
        double f = pos - lo;
        v = (1.0 - f) * h.at(lo, c) + f * h.at(lo + 1, c);
      }
      out.at(t, c) = v;
    }
  }
  return out;
}

DtwResult dtw_align(std::span<const double> a, std::span<const double> b) {
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  if (na == 0 || nb == 0) throw std::invalid_argument("dtw_align: empty input");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(static_cast<size_t>(na) * nb, inf);
  auto D = [&](int i, int j) -> double& {
    return dp[static_cast<size_t>(i) * nb + j];
  };
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) {
      double c = std::abs(a[static_cast<size_t>(i)] - b[static_cast<size_t>(j)]);
      if (i == 0 && j == 0) {
        D(i, j) = c;
      } else {
        double best = inf;
        if (i > 0 && j > 0) best = std::min(best, D(i - 1, j - 1));
        if (i > 0) best = std::min(best, D(i - 1, j));
        if (j > 0) best = std::min(best, D(i, j - 1));
        D(i, j) = c + best;
      }
    }
  DtwResult r;
  r.cost = D(na - 1, nb - 1);
  // backtrack, diagonal preferred on ties
  int i = na - 1, j = nb - 1;
  r.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      double d = D(i - 1, j - 1), u = D(i - 1, j), l = D(i, j - 1);
      if (d <= u && d <= l) {
        --i; --j;
      } else if (u <= l) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    r.path.emplace_back(i, j);
  }
  std::reverse(r.path.begin(), r.path.end());
  // average the a-values mapped to each b index
  r.warped_a.assign(static_cast<size_t>(nb), 0.0);
  std::vector<int> counts(static_cast<size_t>(nb), 0);
  for (auto [pi, pj] : r.path) {
    r.warped_a[static_cast<size_t>(pj)] += a[static_cast<size_t>(pi)];
    counts[static_cast<size_t>(pj)]++;
  }
  for (int k = 0; k < nb; ++k) r.warped_a[static_cast<size_t>(k)] /= counts[static_cast<size_t>(k)];
  return r;
}

Heatmap dtw_warp_to(const Heatmap& a, const Heatmap& b) {
  std::vector<double> pa(a.T, 0.0), pb(b.T, 0.0);
  for (int t = 0; t < a.T; ++t) {
    for (int c = 0; c < a.C; ++c) pa[static_cast<size_t>(t)] += a.at(t, c);
    pa[static_cast<size_t>(t)] /= a.C;
  }
  for (int t = 0; t < b.T; ++t) {
    for (int c = 0; c < b.C; ++c) pb[static_cast<size_t>(t)] += b.at(t, c);
    pb[static_cast<size_t>(t)] /= b.C;
  }
  DtwResult r = dtw_align(pa, pb);
  Heatmap out(b.T, a.C, a.source);
  out.channel_names = a.channel_names;
  std::vector<int> counts(static_cast<size_t>(b.T), 0);
  for (auto [i, j] : r.path) {
    for (int c = 0; c < a.C; ++c) out.at(j, c) += a.at(i, c);
    counts[static_cast<size_t>(j)]++;
  }
  for (int j = 0; j < b.T; ++j)
    for (int c = 0; c < a.C; ++c) out.at(j, c) /= counts[static_cast<size_t>(j)];
  return out;
}

LearnedFusionParams LearnedFusionParams::fit(
    const std::vector<Heatmap>& hr_set, const std::vector<Heatmap>& ht_set,
    const std::vector<Heatmap>& targets) {
  if (hr_set.size() != ht_set.size() || hr_set.size() != targets.size() ||
      hr_set.empty())
    throw std::invalid_argument("learned fusion fit: set size mismatch");
  // normal equations for y ~ wr*r + wt*t + b
  double srr = 0, stt = 0, srt = 0, sr = 0, st = 0, sry = 0, sty = 0, sy = 0;
  double n = 0;
  for (size_t s = 0; s < hr_set.size(); ++s) {
    const auto& r = hr_set[s].values;
    const auto& t = ht_set[s].values;
    const auto& y = targets[s].values;
    if (r.size() != t.size() || r.size() != y.size())
      throw std::invalid_argument("learned fusion fit: grid size mismatch");
    for (size_t i = 0; i < r.size(); ++i) {
      srr += r[i] * r[i];
      stt += t[i] * t[i];
      srt += r[i] * t[i];
      sr += r[i];
      st += t[i];
      sry += r[i] * y[i];
      sty += t[i] * y[i];
      sy += y[i];
      n += 1;
    }
  }
  // solve [srr srt sr; srt stt st; sr st n] [wr wt b]^T = [sry sty sy]^T
  std::array<std::array<double, 4>, 3> m = {{{srr, srt, sr, sry},
                                             {srt, stt, st, sty},
                                             {sr, st, n, sy}}};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::abs(m[static_cast<size_t>(row)][static_cast<size_t>(col)]) >
          std::abs(m[static_cast<size_t>(piv)][static_cast<size_t>(col)]))
        piv = row;
    std::swap(m[static_cast<size_t>(col)], m[static_cast<size_t>(piv)]);
    double d = m[static_cast<size_t>(col)][static_cast<size_t>(col)];
    if (std::abs(d) < 1e-12) d = (d < 0 ? -1e-12 : 1e-12);
    for (int k = col; k < 4; ++k) m[static_cast<size_t>(col)][static_cast<size_t>(k)] /= d;
    for (int row = 0; row < 3; ++row) {
      if (row == col) continue;
      double f = m[static_cast<size_t>(row)][static_cast<size_t>(col)];
      for (int k = col; k < 4; ++k)
        m[static_cast<size_t>(row)][static_cast<size_t>(k)] -=
            f * m[static_cast<size_t>(col)][static_cast<size_t>(k)];
    }
  }
  LearnedFusionParams p;
  p.w_r = m[0][3];
  p.w_t = m[1][3];
  p.bias = m[2][3];
  return p;
}

Heatmap fuse(const Heatmap& hr, const Heatmap& ht, const FusionConfig& cfg) {
  cfg.validate();
  if (hr.T != ht.T || hr.C != ht.C)
    throw std::invalid_argument("fuse: heatmap shapes differ (" +
                                std::to_string(hr.T) + "x" + std::to_string(hr.C) +
                                " vs " + std::to_string(ht.T) + "x" +
                                std::to_string(ht.C) + ")");
  for (double v : hr.values)
    if (v < 0.0) throw std::invalid_argument("fuse: negative resnet heatmap");
  for (double v : ht.values)
    if (v < 0.0)
      throw std::invalid_argument("fuse: negative transformer heatmap");
  Heatmap out(hr.T, hr.C, "fused");
  out.strategy = fusion_strategy_name(cfg.strategy);
  out.channel_names =
      hr.channel_names.empty() ? ht.channel_names : hr.channel_names;
  out.timestamps = hr.timestamps.empty() ? ht.timestamps : hr.timestamps;
  const double a = cfg.alpha;
  for (size_t i = 0; i < out.values.size(); ++i) {
    const double r = hr.values[i], t = ht.values[i];
    double v = 0.0;
    switch (cfg.strategy) {
      case FusionStrategy::multiplicative: v = a * r * t; break;
      case FusionStrategy::weighted: v = a * r + (1.0 - a) * t; break;
      case FusionStrategy::learned:
        v = std::max(0.0, cfg.learned.w_r * r + cfg.learned.w_t * t +
                              cfg.learned.bias);
        break;
      case FusionStrategy::concat_project:
        v = std::max(0.0, cfg.learned.w_r * r + cfg.learned.w_t * t +
                              cfg.learned.bias);
        break;
    }
    out.values[i] = v;
  }
  return out;
}

Heatmap minmax_normalize(const Heatmap& h) {
  Heatmap out = h;
  if (h.values.empty()) return out;
  auto [mn_it, mx_it] = std::minmax_element(h.values.begin(), h.values.end());
  const double mn = *mn_it, mx = *mx_it;
  const double denom = mx - mn;
  for (auto& v : out.values) v = denom > 1e-12 ? (v - mn) / denom : 0.0;
  out.normalized = true;
  return out;
}

Heatmap smooth_moving_average(const Heatmap& h, int window) {
  if (window % 2 == 0)
    throw std::invalid_argument("smooth_moving_average: window must be odd");
  if (window > h.T)
    throw std::invalid_argument("smooth_moving_average: window exceeds T");
  if (window == 1) return h;
  Heatmap out = h;
  const int half = window / 2;
  for (int c = 0; c < h.C; ++c)
    for (int t = 0; t < h.T; ++t) {
      const int lo = std::max(0, t - half), hi = std::min(h.T - 1, t + half);
      double s = 0.0;
      for (int k = lo; k <= hi; ++k) s += h.at(k, c);
      out.at(t, c) = s / (hi - lo + 1);
    }
  return out;
}

std::vector<SalientCells> threshold_regions(const Heatmap& h, double q,
                                            int gap_merge) {
  if (q <= 0.0 || q >= 1.0)
    throw std::invalid_argument("threshold_regions: quantile must be in (0,1)");
  if (!h.normalized)
    throw std::invalid_argument("threshold_regions: heatmap not normalized");
  std::vector<double> positive;
  for (double v : h.values)
    if (v > 0.0) positive.push_back(v);
  std::vector<SalientCells> regions;
  if (positive.empty()) return regions;
  std::sort(positive.begin(), positive.end());
  const double p = 1.0 - q;
  int idx = static_cast<int>(std::ceil(p * static_cast<double>(positive.size()))) - 1;
  idx = std::clamp(idx, 0, static_cast<int>(positive.size()) - 1);
  const double threshold = positive[static_cast<size_t>(idx)];
  for (int c = 0; c < h.C; ++c) {
    int run_start = -1, run_end = -1;
    auto flush = [&]() {
      if (run_start < 0) return;
      SalientCells r;
      r.channel = c;
      r.t_start = run_start;
      r.t_end = run_end;
      r.peak_value = -1.0;
      r.peak_time = run_start;
      for (int t = run_start; t <= run_end; ++t)
        if (h.at(t, c) > r.peak_value) {
          r.peak_value = h.at(t, c);
          r.peak_time = t;
        }
      regions.push_back(r);
      run_start = run_end = -1;
    };
    for (int t = 0; t < h.T; ++t) {
      if (h.at(t, c) >= threshold) {
        if (run_start < 0) {
          run_start = run_end = t;
        } else if (t - run_end - 1 <= gap_merge) {
          run_end = t;  // extend across a small gap
        } else {
          flush();
          run_start = run_end = t;
        }
      }
    }
    flush();
  }
  return regions;
}

}  // namespace tsx
