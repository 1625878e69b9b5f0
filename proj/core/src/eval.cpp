#include "tsxplain/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tsx {

ClassificationMetrics classification_metrics(const std::vector<int>& preds,
                                             const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("metrics: length mismatch");
  if (preds.empty()) throw std::invalid_argument("metrics: empty input");
  size_t correct = 0;
  std::map<int, std::array<size_t, 3>> counts;  // class -> {tp, fp, fn}
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) {
      ++correct;
      ++counts[labels[i]][0];
    } else {
      ++counts[preds[i]][1];
      ++counts[labels[i]][2];
    }
  }
  double f1_sum = 0.0;
  size_t f1_classes = 0;
  for (const auto& [cls, c] : counts) {
    const double tp = static_cast<double>(c[0]);
    const double fp = static_cast<double>(c[1]);
    const double fn = static_cast<double>(c[2]);
    if (tp + fp + fn == 0.0) continue;
    f1_sum += tp > 0.0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    ++f1_classes;
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  m.macro_f1 = f1_classes ? f1_sum / static_cast<double>(f1_classes) : 0.0;
  return m;
}

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& targets) {
  if (preds.size() != targets.size())
    throw std::invalid_argument("metrics: length mismatch");
  if (preds.size() < 2) throw std::invalid_argument("metrics: need at least 2 points");
  double ss_res = 0.0, mean = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - targets[i];
    ss_res += d * d;
    mean += targets[i];
  }
  mean /= static_cast<double>(targets.size());
  double ss_tot = 0.0;
  for (double t : targets) ss_tot += (t - mean) * (t - mean);
  RegressionMetrics m;
  m.rmse = std::sqrt(ss_res / static_cast<double>(preds.size()));
  m.r2_defined = ss_tot > 0.0;
  m.r2 = m.r2_defined ? 1.0 - ss_res / ss_tot : 0.0;
  return m;
}

std::vector<double> predict(Model& model,
                            const std::vector<std::vector<double>>& samples,
                            int T, int C) {
  std::vector<double> out;
  std::mt19937_64 rng(0);
  const size_t bs = 64;
  for (size_t start = 0; start < samples.size(); start += bs) {
    const size_t end = std::min(samples.size(), start + bs);
    std::vector<std::vector<double>> batch(samples.begin() + static_cast<long>(start),
                                           samples.begin() + static_cast<long>(end));
    Tensor x = to_model_input(batch, T, C);
    Tensor y = model.forward(x, false, rng);
    const int K = y.dim(1);
    for (size_t i = 0; i < batch.size(); ++i) {
      if (model.task() == Task::classification) {
        int best = 0;
        for (int k = 1; k < K; ++k)
          if (y.at(static_cast<int>(i), k) > y.at(static_cast<int>(i), best))
            best = k;
        out.push_back(best);
      } else {
        out.push_back(y.at(static_cast<int>(i), 0));
      }
    }
  }
  return out;
}

double task_metric(Model& model, const std::vector<std::vector<double>>& samples,
                   const std::vector<double>& targets, int T, int C) {
  const std::vector<double> preds = predict(model, samples, T, C);
  if (model.task() == Task::classification) {
    size_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i)
      if (static_cast<int>(preds[i]) == static_cast<int>(targets[i])) ++correct;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
  }
  double ss = 0.0;
  for (size_t i = 0; i < preds.size(); ++i)
    ss += (preds[i] - targets[i]) * (preds[i] - targets[i]);
  return -std::sqrt(ss / static_cast<double>(preds.size()));
}

std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int i = 1; i <= 10; ++i) f.push_back(0.05 * i);
  return f;
}

std::vector<double> train_channel_means(const DatasetBundle& bundle) {
  const auto idx = bundle.indices_of(Split::train);
  if (idx.empty()) throw std::logic_error("channel means: empty train split");
  std::vector<double> mean(static_cast<size_t>(bundle.C), 0.0);
  for (size_t i : idx)
    for (int t = 0; t < bundle.T; ++t)
      for (int c = 0; c < bundle.C; ++c)
        mean[static_cast<size_t>(c)] += bundle.at(i, t, c);
  const double n = static_cast<double>(idx.size()) * bundle.T;
  for (auto& v : mean) v /= n;
  return mean;
}

namespace {

/// Cell indices of one sample ordered by descending heatmap value.
std::vector<size_t> ranked_cells(const Heatmap& h) {
  std::vector<size_t> order(h.values.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return h.values[a] > h.values[b];
  });
  return order;
}

std::vector<std::vector<double>> mask_samples(
    const std::vector<std::vector<double>>& samples,
    const std::vector<std::vector<size_t>>& rankings, double f, int C,
    const std::vector<double>& fill) {
  std::vector<std::vector<double>> out = samples;
  for (size_t i = 0; i < out.size(); ++i) {
    const size_t cells = out[i].size();
    const size_t k = std::min(
        cells, static_cast<size_t>(std::ceil(f * static_cast<double>(cells) - 1e-9)));
    for (size_t r = 0; r < k; ++r) {
      const size_t cell = rankings[i][r];
      out[i][cell] = fill[cell % static_cast<size_t>(C)];
    }
  }
  return out;
}

}  // namespace

DeletionCurve deletion_test(Model& model,
                            const std::vector<std::vector<double>>& samples,
                            const std::vector<double>& targets,
                            const std::vector<Heatmap>& heatmaps, int T, int C,
                            const std::vector<double>& channel_fill,
                            const std::vector<double>& fractions,
                            std::uint64_t seed) {
  if (samples.size() != heatmaps.size() || samples.size() != targets.size())
    throw std::invalid_argument("deletion: input count mismatch");
  if (samples.empty()) throw std::invalid_argument("deletion: no samples");
  if (static_cast<int>(channel_fill.size()) != C)
    throw std::invalid_argument("deletion: fill value count mismatch");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw std::invalid_argument("deletion: fraction outside (0,1]");
  for (const auto& h : heatmaps)
    if (h.T != T || h.C != C)
      throw std::invalid_argument("deletion: heatmap/sample shape mismatch");

  std::vector<std::vector<size_t>> ranked, random_ranked;
  std::mt19937_64 rng(seed);
  for (const auto& h : heatmaps) {
    ranked.push_back(ranked_cells(h));
    std::vector<size_t> shuffled = ranked.back();
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    random_ranked.push_back(std::move(shuffled));
  }

  DeletionCurve curve;
  curve.fractions = fractions;
  curve.base_metric = task_metric(model, samples, targets, T, C);
  for (double f : fractions) {
    curve.metric.push_back(task_metric(
        model, mask_samples(samples, ranked, f, C, channel_fill), targets, T, C));
    curve.random_metric.push_back(task_metric(
        model, mask_samples(samples, random_ranked, f, C, channel_fill), targets,
        T, C));
  }
  auto auc = [&](const std::vector<double>& m) {
    double a = 0.0;
    for (size_t i = 1; i < fractions.size(); ++i) {
      const double y0 = curve.base_metric - m[i - 1];
      const double y1 = curve.base_metric - m[i];
      a += 0.5 * (y0 + y1) * (fractions[i] - fractions[i - 1]);
    }
    return a;
  };
  curve.auc_drop = auc(curve.metric);
  curve.random_auc_drop = auc(curve.random_metric);
  return curve;
}

SensitivityResult sensitivity_test(Model& model,
                                   const std::vector<std::vector<double>>& samples,
                                   const std::vector<Heatmap>& heatmaps, int T,
                                   int C, double sigma, std::uint64_t seed) {
  if (sigma == 0.0) return {0.0, false};
  if (samples.size() != heatmaps.size() || samples.empty())
    throw std::invalid_argument("sensitivity: input count mismatch");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);

  double top_sum = 0.0, bottom_sum = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto order = ranked_cells(heatmaps[i]);
    const size_t cells = order.size();
    const size_t k = std::max<size_t>(1, cells / 5);

    std::vector<std::vector<double>> base = {samples[i]};
    Tensor y0t = [&] {
      std::mt19937_64 r(0);
      return model.forward(to_model_input(base, T, C), false, r);
    }();
    std::vector<double> y0(y0t.data());

    auto perturbed_delta = [&](bool top) {
      std::vector<double> x = samples[i];
      for (size_t r = 0; r < k; ++r) {
        const size_t cell = top ? order[r] : order[cells - 1 - r];
        x[cell] += noise(rng);
      }
      std::vector<std::vector<double>> in = {std::move(x)};
      std::mt19937_64 r2(0);
      Tensor y = model.forward(to_model_input(in, T, C), false, r2);
      double d = 0.0;
      for (size_t j = 0; j < y0.size(); ++j) d += std::abs(y.data()[j] - y0[j]);
      return d / static_cast<double>(y0.size());
    };
    top_sum += perturbed_delta(true);
    bottom_sum += perturbed_delta(false);
  }
  if (bottom_sum == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {top_sum / bottom_sum, true};
}

ConsensusResult consensus_experiment(const std::vector<Heatmap>& hr_set,
                                     const std::vector<Heatmap>& ht_set,
                                     const std::vector<Heatmap>& masks,
                                     std::uint64_t seed) {
  if (hr_set.size() != ht_set.size() || hr_set.size() != masks.size())
    throw std::invalid_argument("consensus: input count mismatch");
  if (masks.empty()) throw std::invalid_argument("consensus: missing masks");

  struct Setup {
    std::string name;
    FusionConfig cfg;
  };
  std::vector<Setup> setups;
  {
    FusionConfig mult;
    mult.strategy = FusionStrategy::multiplicative;
    mult.alpha = 1.0;
    FusionConfig weighted;
    weighted.strategy = FusionStrategy::weighted;
    weighted.alpha = 0.5;
    FusionConfig concat;
    concat.strategy = FusionStrategy::concat_project;
    setups = {{"multiplicative", mult}, {"weighted", weighted},
              {"concat_project", concat}};
  }

  ConsensusResult result;
  std::vector<std::vector<double>> per_sample(setups.size());
  for (size_t s = 0; s < setups.size(); ++s) {
    for (size_t i = 0; i < hr_set.size(); ++i) {
      Heatmap fused = minmax_normalize(fuse(hr_set[i], ht_set[i], setups[s].cfg));
      const Heatmap& gt = masks[i];
      if (fused.T != gt.T || fused.C != gt.C)
        throw std::invalid_argument("consensus: mask shape mismatch");
      double err = 0.0;
      for (size_t j = 0; j < fused.values.size(); ++j) {
        const double d = fused.values[j] - gt.values[j];
        err += d * d;
      }
      per_sample[s].push_back(err);
    }
    ConsensusEntry e;
    e.strategy = setups[s].name;
    e.ci = bootstrap_mean_ci(per_sample[s], seed + s);
    e.mean_error = e.ci.mean;
    result.entries.push_back(std::move(e));
  }
  std::vector<double> diff;
  for (size_t i = 0; i < hr_set.size(); ++i)
    diff.push_back(per_sample[0][i] - per_sample[1][i]);
  result.paired_diff_ci = bootstrap_mean_ci(diff, seed + 97);
  result.paired_diff_mult_minus_weighted = result.paired_diff_ci.mean;
  return result;
}

nlohmann::ordered_json deletion_curve_json(const DeletionCurve& c) {
  nlohmann::ordered_json j;
  j["fractions"] = c.fractions;
  j["metric"] = c.metric;
  j["random_metric"] = c.random_metric;
  j["base_metric"] = c.base_metric;
  j["auc_drop"] = c.auc_drop;
  j["random_auc_drop"] = c.random_auc_drop;
  return j;
}

std::string deletion_curve_csv(const DeletionCurve& c) {
  std::ostringstream os;
  os << "fraction,metric,random_metric,base_metric\n";
  for (size_t i = 0; i < c.fractions.size(); ++i)
    os << c.fractions[i] << "," << c.metric[i] << "," << c.random_metric[i]
       << "," << c.base_metric << "\n";
  return os.str();
}

}  // namespace tsx
