// tsxplain: synthetic data generation, training, explanation, and
// evaluation for the hybrid time-series interpretability pipeline.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "tsxplain/dataset.hpp"
#include "tsxplain/eval.hpp"
#include "tsxplain/explain.hpp"
#include "tsxplain/fusion.hpp"
#include "tsxplain/model.hpp"
#include "tsxplain/saliency.hpp"
#include "tsxplain/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct ExitError {
  int code;
  std::string message;
};

[[noreturn]] void data_error(const std::string& msg) { throw ExitError{3, msg}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) data_error("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    data_error("cannot create output directory " + out);
  return dir;
}

/// Wall-clock metadata lives in its own file so every other artifact is
/// byte-identical across reruns with the same flags and seed.
void write_run_info(const fs::path& dir, const std::string& command) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  ordered_json j;
  j["command"] = command;
  j["written_at"] = buf;
  write_json(dir / "run_info.json", j);
}

tsx::DatasetBundle load_bundle_checked(const std::string& path) {
  if (!fs::exists(path)) data_error("no such data file: " + path);
  try {
    return tsx::load_bundle(path);
  } catch (const std::exception& e) {
    data_error(std::string("cannot load bundle ") + path + ": " + e.what());
  }
}

/// Deterministic default preprocessing shared by train/explain/eval: split
/// 70/15/15 under split_seed when untagged, then z-score from train stats.
void prepare(tsx::DatasetBundle& bundle, std::uint64_t split_seed) {
  if (bundle.split_tags.empty())
    tsx::split(bundle, 0.7, 0.15, 0.15, split_seed);
  if (bundle.norm_mode.empty())
    tsx::normalize_channels(bundle, tsx::NormMode::zscore);
}

int outputs_for(const tsx::DatasetBundle& bundle) {
  if (bundle.task == tsx::Task::regression) return 1;
  int max_label = 1;
  for (double t : bundle.targets)
    max_label = std::max(max_label, static_cast<int>(t));
  return max_label + 1;
}

std::unique_ptr<tsx::Model> load_model(const std::string& ckpt_path,
                                       tsx::Checkpoint& ckpt_out) {
  if (!fs::exists(ckpt_path)) data_error("no such checkpoint: " + ckpt_path);
  try {
    ckpt_out = tsx::load_checkpoint(ckpt_path);
    std::mt19937_64 rng(0);
    auto model = tsx::model_from_config(ckpt_out.model_config, rng);
    tsx::apply_checkpoint(*model, ckpt_out);
    return model;
  } catch (const std::exception& e) {
    data_error(std::string("cannot load checkpoint ") + ckpt_path + ": " + e.what());
  }
}

/// Branch heatmaps for one sample, both already T x C and normalized.
/// Single-branch models fill only their own map.
struct BranchMaps {
  tsx::Heatmap resnet;
  tsx::Heatmap transformer;
  bool has_resnet = false;
  bool has_transformer = false;
  int predicted = 0;
  std::vector<double> outputs;

  /// The map fed to thresholding: fused when both branches exist,
  /// otherwise whichever single map the model produced.
  tsx::Heatmap fused(const tsx::FusionConfig& cfg) const {
    if (has_resnet && has_transformer)
      return tsx::minmax_normalize(tsx::fuse(resnet, transformer, cfg));
    return has_resnet ? resnet : transformer;
  }
};

BranchMaps branch_heatmaps(tsx::Model& model, const std::vector<double>& sample,
                           int T, int C) {
  std::mt19937_64 rng(0);
  std::vector<std::vector<double>> one = {sample};
  tsx::Tensor x = tsx::to_model_input(one, T, C, true);
  tsx::ForwardCache cache;
  tsx::Tensor y = model.forward(x, false, rng, &cache);
  BranchMaps out;
  out.outputs = y.data();
  if (model.task() == tsx::Task::classification) {
    for (size_t k = 1; k < out.outputs.size(); ++k)
      if (out.outputs[k] > out.outputs[static_cast<size_t>(out.predicted)])
        out.predicted = static_cast<int>(k);
  }
  const int target = out.predicted;
  out.has_resnet = cache.has_resnet();
  out.has_transformer = cache.has_transformer();
  if (!out.has_resnet && !out.has_transformer)
    throw ExitError{4, "model produced no saliency-capable branch"};
  if (out.has_resnet)
    out.resnet = tsx::minmax_normalize(tsx::resnet_heatmap(cache, target));
  if (out.has_transformer)
    out.transformer = tsx::minmax_normalize(tsx::transformer_heatmap(cache, target));
  return out;
}

tsx::FusionConfig fusion_from_flags(const std::string& strategy, double alpha,
                                    double quantile) {
  tsx::FusionConfig cfg;
  cfg.strategy = tsx::fusion_strategy_from_name(strategy);
  cfg.alpha = alpha;
  cfg.threshold_quantile = quantile;
  cfg.validate();
  return cfg;
}

double per_sample_loss(tsx::Model& model, const std::vector<double>& sample,
                       double target, int T, int C) {
  std::mt19937_64 rng(0);
  std::vector<std::vector<double>> one = {sample};
  tsx::Tensor y = model.forward(tsx::to_model_input(one, T, C), false, rng);
  if (model.task() == tsx::Task::classification) {
    const int K = y.dim(1);
    double mx = y.at(0, 0);
    for (int k = 1; k < K; ++k) mx = std::max(mx, y.at(0, k));
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(y.at(0, k) - mx);
    return -(y.at(0, static_cast<int>(target)) - mx - std::log(denom));
  }
  const double d = y.at(0, 0) - target;
  const double delta = 1.0;
  return std::abs(d) <= delta ? 0.5 * d * d : delta * (std::abs(d) - 0.5 * delta);
}

// ---- subcommands ----

int cmd_synth(int n, int T, std::uint64_t seed, double anomaly_rate,
              const std::string& out) {
  tsx::SyntheticSpec spec;
  spec.n_samples = n;
  spec.T = T;
  spec.seed = seed;
  spec.anomaly_rate = anomaly_rate;
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ExitError{2, e.what()};
  }
  const fs::path dir = prepare_out_dir(out);
  tsx::DatasetBundle bundle = tsx::generate_synthetic(spec);
  tsx::save_bundle(bundle, (dir / "bundle.json").string());
  write_json(dir / "manifest.json", tsx::bundle_manifest(bundle, spec.to_json()));
  ordered_json cfg;
  cfg["command"] = "synth";
  cfg["n"] = n;
  cfg["T"] = T;
  cfg["seed"] = seed;
  cfg["anomaly_rate"] = anomaly_rate;
  cfg["out"] = out;
  write_json(dir / "resolved_config.json", cfg);
  write_run_info(dir, "synth");
  size_t positives = 0;
  for (double t : bundle.targets) positives += t > 0.5;
  std::cout << "wrote " << bundle.samples.size() << " samples (" << positives
            << " anomalous) to " << (dir / "bundle.json").string() << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& model_kind,
              tsx::TrainConfig tcfg, std::uint64_t split_seed,
              const std::string& out) {
  tsx::DatasetBundle bundle = load_bundle_checked(data);
  prepare(bundle, split_seed);
  const fs::path dir = prepare_out_dir(out);

  std::mt19937_64 rng(tcfg.seed);
  auto model = tsx::make_model(model_kind, bundle.task, outputs_for(bundle),
                               bundle.C, bundle.T, rng);
  tsx::TrainResult result;
  try {
    result = tsx::train(*model, bundle, tcfg);
  } catch (const std::exception& e) {
    throw ExitError{4, std::string("training failed: ") + e.what()};
  }
  tsx::save_checkpoint(result.best, (dir / "checkpoint.json").string());
  write_json(dir / "history.json", result.history_json());
  ordered_json cfg;
  cfg["command"] = "train";
  cfg["data"] = data;
  cfg["model"] = model_kind;
  cfg["train"] = tcfg.to_json();
  cfg["split_seed"] = split_seed;
  cfg["out"] = out;
  write_json(dir / "resolved_config.json", cfg);
  write_run_info(dir, "train");
  std::cout << "best val loss " << result.best.val_metric << " at epoch "
            << result.best.epoch << " (" << result.stopped_epoch
            << " epochs run)\n";
  return 0;
}

int cmd_explain(const std::string& ckpt_path, const std::string& data,
                int sample_id, const std::string& fusion, double alpha,
                double quantile, const std::string& domain,
                const std::string& templates_path, bool use_stub_client,
                std::uint64_t split_seed, const std::string& out) {
  tsx::Checkpoint ckpt;
  auto model = load_model(ckpt_path, ckpt);
  tsx::DatasetBundle bundle = load_bundle_checked(data);
  prepare(bundle, split_seed);
  if (sample_id < 0 || sample_id >= static_cast<int>(bundle.samples.size()))
    data_error("sample id " + std::to_string(sample_id) + " out of range (" +
               std::to_string(bundle.samples.size()) + " samples)");
  const fs::path dir = prepare_out_dir(out);
  const tsx::FusionConfig fcfg = fusion_from_flags(fusion, alpha, quantile);

  BranchMaps maps;
  tsx::Heatmap fused;
  try {
    maps = branch_heatmaps(*model, bundle.samples[static_cast<size_t>(sample_id)],
                           bundle.T, bundle.C);
    fused = maps.fused(fcfg);
  } catch (const ExitError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExitError{4, std::string("saliency computation failed: ") + e.what()};
  }
  fused.channel_names = bundle.channel_names;
  fused.strategy = fusion;
  if (maps.has_resnet) {
    maps.resnet.channel_names = bundle.channel_names;
    maps.resnet.save((dir / "heatmap_resnet.json").string());
  }
  if (maps.has_transformer) {
    maps.transformer.channel_names = bundle.channel_names;
    maps.transformer.save((dir / "heatmap_transformer.json").string());
  }
  fused.save((dir / "heatmap_fused.json").string());

  tsx::TemplateSet tset = templates_path.empty()
                              ? tsx::TemplateSet::builtin(domain)
                              : tsx::TemplateSet::load(templates_path);
  ordered_json prediction;
  prediction["task"] = tsx::task_name(model->task());
  prediction["outputs"] = maps.outputs;
  if (model->task() == tsx::Task::classification)
    prediction["predicted_class"] = maps.predicted;

  tsx::StubTextClient stub;
  tsx::ReportRequest req;
  req.sample_id = std::to_string(sample_id);
  req.prediction = prediction;
  req.sample = &bundle.samples[static_cast<size_t>(sample_id)];
  req.T = bundle.T;
  req.C = bundle.C;
  req.channel_names = bundle.channel_names;
  req.timestamps = bundle.timestamps.empty()
                       ? std::vector<double>{}
                       : bundle.timestamps[static_cast<size_t>(sample_id)];
  req.threshold_quantile = quantile;
  req.mode = use_stub_client ? tsx::ReportMode::external_client
                             : tsx::ReportMode::template_mode;
  req.client = use_stub_client ? &stub : nullptr;
  req.pruning = tsx::flag_low_variance_channels(bundle, 0.001);
  tsx::ExplanationReport report = tsx::generate_report(req, fused, tset);
  write_text(dir / "report.md", report.to_markdown(bundle.channel_names));
  write_json(dir / "report.json", report.to_json());

  ordered_json cfg;
  cfg["command"] = "explain";
  cfg["checkpoint"] = ckpt_path;
  cfg["data"] = data;
  cfg["sample_id"] = sample_id;
  cfg["fusion"] = fusion;
  cfg["alpha"] = alpha;
  cfg["quantile"] = quantile;
  cfg["domain"] = domain;
  cfg["templates"] = templates_path;
  cfg["stub_client"] = use_stub_client;
  cfg["split_seed"] = split_seed;
  cfg["out"] = out;
  write_json(dir / "resolved_config.json", cfg);
  write_run_info(dir, "explain");
  std::cout << "wrote 3 heatmaps and report for sample " << sample_id << " to "
            << dir.string() << "\n";
  return 0;
}

int cmd_eval(const std::vector<std::string>& ckpt_paths, const std::string& data,
             const std::string& heatmaps_path, int max_samples,
             const std::string& fusion, double alpha, std::uint64_t seed,
             std::uint64_t split_seed, const std::string& out) {
  if (ckpt_paths.empty() || ckpt_paths.size() > 2)
    throw ExitError{2, "eval needs one or two --checkpoint arguments"};
  tsx::Checkpoint ckpt;
  auto model = load_model(ckpt_paths[0], ckpt);
  tsx::DatasetBundle bundle = load_bundle_checked(data);
  prepare(bundle, split_seed);
  const fs::path dir = prepare_out_dir(out);

  const auto test_idx = bundle.indices_of(tsx::Split::test);
  if (test_idx.empty()) data_error("bundle has no test split");
  std::vector<std::vector<double>> samples;
  std::vector<double> targets;
  for (size_t i : test_idx) {
    samples.push_back(bundle.samples[i]);
    targets.push_back(bundle.targets[i]);
  }

  ordered_json report;
  report["task"] = tsx::task_name(model->task());
  try {
    const std::vector<double> preds =
        tsx::predict(*model, samples, bundle.T, bundle.C);
    if (model->task() == tsx::Task::classification) {
      std::vector<int> pi, li;
      for (size_t i = 0; i < preds.size(); ++i) {
        pi.push_back(static_cast<int>(preds[i]));
        li.push_back(static_cast<int>(targets[i]));
      }
      const auto m = tsx::classification_metrics(pi, li);
      report["accuracy"] = m.accuracy;
      report["macro_f1"] = m.macro_f1;
    } else {
      const auto m = tsx::regression_metrics(preds, targets);
      report["rmse"] = m.rmse;
      report["r2"] = m.r2_defined ? ordered_json(m.r2) : ordered_json();
    }

    // faithfulness inputs: supplied heatmaps, or fused maps computed here
    const size_t n_eval = std::min(samples.size(), static_cast<size_t>(max_samples));
    std::vector<std::vector<double>> eval_samples(samples.begin(),
                                                  samples.begin() + static_cast<long>(n_eval));
    std::vector<double> eval_targets(targets.begin(),
                                     targets.begin() + static_cast<long>(n_eval));
    std::vector<tsx::Heatmap> heatmaps;
    if (!heatmaps_path.empty()) {
      if (!fs::exists(heatmaps_path)) data_error("no such heatmap file: " + heatmaps_path);
      std::ifstream f(heatmaps_path);
      ordered_json arr;
      f >> arr;
      for (const auto& h : arr) heatmaps.push_back(tsx::Heatmap::from_json(h));
      if (heatmaps.size() < n_eval)
        data_error("heatmap file has fewer maps than evaluated samples");
      heatmaps.resize(n_eval);
    } else {
      const tsx::FusionConfig fcfg = fusion_from_flags(fusion, alpha, 0.2);
      for (const auto& s : eval_samples) {
        BranchMaps maps = branch_heatmaps(*model, s, bundle.T, bundle.C);
        heatmaps.push_back(maps.fused(fcfg));
      }
    }
    const std::vector<double> fill = tsx::train_channel_means(bundle);
    const tsx::DeletionCurve curve =
        tsx::deletion_test(*model, eval_samples, eval_targets, heatmaps,
                           bundle.T, bundle.C, fill, tsx::default_fractions(), seed);
    report["deletion"] = tsx::deletion_curve_json(curve);
    const tsx::SensitivityResult sens = tsx::sensitivity_test(
        *model, eval_samples, heatmaps, bundle.T, bundle.C, 0.1, seed);
    report["sensitivity_score"] = sens.defined ? ordered_json(sens.score) : ordered_json();

    if (ckpt_paths.size() == 2) {
      tsx::Checkpoint ckpt2;
      auto model2 = load_model(ckpt_paths[1], ckpt2);
      std::vector<double> loss_a, loss_b;
      for (size_t i = 0; i < samples.size(); ++i) {
        loss_a.push_back(per_sample_loss(*model, samples[i], targets[i],
                                         bundle.T, bundle.C));
        loss_b.push_back(per_sample_loss(*model2, samples[i], targets[i],
                                         bundle.T, bundle.C));
      }
      const tsx::WilcoxonResult w = tsx::wilcoxon_signed_rank(loss_a, loss_b);
      report["comparison"] = {{"checkpoint_a", ckpt_paths[0]},
                              {"checkpoint_b", ckpt_paths[1]},
                              {"wilcoxon_statistic", w.statistic},
                              {"wilcoxon_p", w.p_value},
                              {"n_pairs", w.n},
                              {"exact", w.exact}};
    }
    write_text(dir / "faithfulness.csv", tsx::deletion_curve_csv(curve));
  } catch (const ExitError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExitError{4, std::string("evaluation failed: ") + e.what()};
  }
  write_json(dir / "metrics.json", report);

  ordered_json cfg;
  cfg["command"] = "eval";
  cfg["checkpoints"] = ckpt_paths;
  cfg["data"] = data;
  cfg["heatmaps"] = heatmaps_path;
  cfg["max_samples"] = max_samples;
  cfg["fusion"] = fusion;
  cfg["alpha"] = alpha;
  cfg["seed"] = seed;
  cfg["split_seed"] = split_seed;
  cfg["out"] = out;
  write_json(dir / "resolved_config.json", cfg);
  write_run_info(dir, "eval");
  std::cout << "wrote metrics.json and faithfulness.csv to " << dir.string() << "\n";
  return 0;
}

int cmd_ablate(const std::string& data, int n_instances, std::uint64_t seed,
               const std::string& out) {
  tsx::DatasetBundle bundle = load_bundle_checked(data);
  if (bundle.masks.empty())
    data_error("ablate needs a bundle with ground-truth masks (synth output)");
  const fs::path dir = prepare_out_dir(out);

  // disjoint-noise family: each branch sees the true mask plus its own
  // uncorrelated off-mask blob
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<tsx::Heatmap> hr_set, ht_set, gt_set;
  const int T = bundle.T, C = bundle.C;
  int made = 0;
  for (size_t i = 0; i < bundle.samples.size() && made < n_instances; ++i) {
    tsx::Heatmap gt(T, C, "ground_truth");
    gt.values = bundle.masks[i];
    gt.normalized = true;
    auto noisy = [&]() {
      tsx::Heatmap h = gt;
      h.normalized = false;
      for (int tries = 0; tries < 64; ++tries) {
        const int t0 = static_cast<int>((T - 8) * unit(rng));
        const int c0 = static_cast<int>(C * unit(rng));
        bool clear = true;
        for (int t = t0; t < t0 + 8; ++t)
          clear &= gt.at(t, c0) == 0.0;
        if (!clear) continue;
        for (int t = t0; t < t0 + 8; ++t) h.at(t, c0) = 0.5 + 0.5 * unit(rng);
        break;
      }
      return h;
    };
    hr_set.push_back(noisy());
    ht_set.push_back(noisy());
    gt_set.push_back(std::move(gt));
    ++made;
  }
  if (hr_set.empty()) data_error("ablate: no usable samples in bundle");

  tsx::ConsensusResult consensus;
  std::vector<std::pair<std::string, tsx::FusionConfig>> setups;
  {
    tsx::FusionConfig mult;
    mult.strategy = tsx::FusionStrategy::multiplicative;
    tsx::FusionConfig weighted;
    weighted.strategy = tsx::FusionStrategy::weighted;
    weighted.alpha = 0.5;
    tsx::FusionConfig learned;
    learned.strategy = tsx::FusionStrategy::learned;
    learned.learned = tsx::LearnedFusionParams::fit(hr_set, ht_set, gt_set);
    tsx::FusionConfig concat;
    concat.strategy = tsx::FusionStrategy::concat_project;
    setups = {{"multiplicative", mult},
              {"weighted", weighted},
              {"learned", learned},
              {"concat_project", concat}};
  }
  std::string csv = "strategy,mean_error,ci_lo,ci_hi\n";
  ordered_json table = ordered_json::array();
  try {
    consensus = tsx::consensus_experiment(hr_set, ht_set, gt_set, seed);
    for (const auto& [name, fcfg] : setups) {
      std::vector<double> errs;
      for (size_t i = 0; i < hr_set.size(); ++i) {
        tsx::Heatmap fused =
            tsx::minmax_normalize(tsx::fuse(hr_set[i], ht_set[i], fcfg));
        double e = 0.0;
        for (size_t j = 0; j < fused.values.size(); ++j) {
          const double d = fused.values[j] - gt_set[i].values[j];
          e += d * d;
        }
        errs.push_back(e);
      }
      const tsx::BootstrapCI ci = tsx::bootstrap_mean_ci(errs, seed + 13);
      char line[160];
      std::snprintf(line, sizeof line, "%s,%.10g,%.10g,%.10g\n", name.c_str(),
                    ci.mean, ci.lo, ci.hi);
      csv += line;
      table.push_back({{"strategy", name},
                       {"mean_error", ci.mean},
                       {"ci_lo", ci.lo},
                       {"ci_hi", ci.hi}});
    }
  } catch (const std::exception& e) {
    throw ExitError{4, std::string("ablation failed: ") + e.what()};
  }
  write_text(dir / "ablation.csv", csv);
  ordered_json j;
  j["strategies"] = table;
  j["consensus"] = ordered_json::array();
  for (const auto& e : consensus.entries)
    j["consensus"].push_back({{"strategy", e.strategy},
                              {"mean_error", e.mean_error},
                              {"ci_lo", e.ci.lo},
                              {"ci_hi", e.ci.hi}});
  j["paired_diff_mult_minus_weighted"] = consensus.paired_diff_mult_minus_weighted;
  j["paired_diff_ci"] = {consensus.paired_diff_ci.lo, consensus.paired_diff_ci.hi};
  write_json(dir / "ablation.json", j);

  ordered_json cfg;
  cfg["command"] = "ablate";
  cfg["data"] = data;
  cfg["n_instances"] = n_instances;
  cfg["seed"] = seed;
  cfg["out"] = out;
  write_json(dir / "resolved_config.json", cfg);
  write_run_info(dir, "ablate");
  std::cout << "wrote ablation.csv (" << table.size() << " strategies) to "
            << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid time-series interpretability pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value config file (flags override it)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark dataset");
  int s_n = 2000, s_T = 100;
  std::uint64_t s_seed = 0;
  double s_rate = 0.5;
  std::string s_out = "out/synth";
  synth->add_option("--n", s_n, "Number of samples")->envname("TSXPLAIN_N");
  synth->add_option("--T", s_T, "Timesteps per sample")->envname("TSXPLAIN_T");
  synth->add_option("--seed", s_seed, "Generator seed")->envname("TSXPLAIN_SEED");
  synth->add_option("--anomaly-rate", s_rate, "Fraction of anomalous samples");
  synth->add_option("--out", s_out, "Output directory")->envname("TSXPLAIN_OUT");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a bundle");
  std::string t_data, t_model = "hybrid", t_out = "out/train";
  tsx::TrainConfig tcfg;
  std::uint64_t t_split_seed = 0;
  train->add_option("--data", t_data, "Dataset bundle JSON")->required()
      ->envname("TSXPLAIN_DATA");
  train->add_option("--model", t_model, "Model kind")
      ->check(CLI::IsMember({"resnet", "transformer", "hybrid"}));
  train->add_option("--lr", tcfg.lr, "Learning rate");
  train->add_option("--batch", tcfg.batch_size, "Batch size");
  train->add_option("--weight-decay", tcfg.weight_decay, "Decoupled weight decay");
  train->add_option("--epochs", tcfg.max_epochs, "Maximum epochs");
  train->add_option("--patience", tcfg.patience, "Early-stopping patience");
  train->add_option("--seed", tcfg.seed, "Training seed")->envname("TSXPLAIN_SEED");
  train->add_option("--split-seed", t_split_seed, "Split seed for untagged bundles");
  train->add_flag("--no-augment", [&tcfg](std::int64_t) { tcfg.augment = false; },
                  "Disable train-split jitter and noise augmentation");
  train->add_option("--jitter", tcfg.jitter_frac, "Augmentation shift fraction");
  train->add_option("--noise-sigma", tcfg.noise_sigma, "Augmentation noise sigma");
  train->add_option("--out", t_out, "Output directory")->envname("TSXPLAIN_OUT");

  // explain
  auto* explain = app.add_subcommand("explain", "Heatmaps and report for one sample");
  std::string e_ckpt, e_data, e_fusion = "multiplicative", e_domain = "generic";
  std::string e_templates, e_out = "out/explain";
  int e_sample = 0;
  double e_alpha = 1.0, e_quantile = 0.2;
  bool e_stub = false;
  std::uint64_t e_split_seed = 0;
  explain->add_option("--checkpoint", e_ckpt, "Checkpoint JSON")->required();
  explain->add_option("--data", e_data, "Dataset bundle JSON")->required()
      ->envname("TSXPLAIN_DATA");
  explain->add_option("--sample-id", e_sample, "Sample index");
  explain->add_option("--fusion", e_fusion, "Fusion strategy")
      ->check(CLI::IsMember({"multiplicative", "weighted", "learned", "concat_project"}));
  explain->add_option("--alpha", e_alpha, "Fusion weight");
  explain->add_option("--quantile", e_quantile, "Salient-region quantile");
  explain->add_option("--domain", e_domain, "Template domain")
      ->check(CLI::IsMember({"generic", "clinical", "industrial"}));
  explain->add_option("--templates", e_templates, "Template JSON (overrides --domain)");
  explain->add_flag("--stub-client", e_stub, "Use the deterministic stub text client");
  explain->add_option("--split-seed", e_split_seed, "Split seed for untagged bundles");
  explain->add_option("--out", e_out, "Output directory")->envname("TSXPLAIN_OUT");

  // eval
  auto* eval = app.add_subcommand("eval", "Metrics, deletion and sensitivity tests");
  std::vector<std::string> v_ckpts;
  std::string v_data, v_heatmaps, v_fusion = "multiplicative", v_out = "out/eval";
  int v_max = 50;
  double v_alpha = 1.0;
  std::uint64_t v_seed = 0, v_split_seed = 0;
  eval->add_option("--checkpoint", v_ckpts,
                   "Checkpoint JSON (repeat for a paired Wilcoxon comparison)")
      ->required();
  eval->add_option("--data", v_data, "Dataset bundle JSON")->required()
      ->envname("TSXPLAIN_DATA");
  eval->add_option("--heatmaps", v_heatmaps,
                   "JSON array of precomputed heatmaps (else fused maps are computed)");
  eval->add_option("--max-samples", v_max, "Samples used for faithfulness tests");
  eval->add_option("--fusion", v_fusion, "Fusion strategy for computed heatmaps")
      ->check(CLI::IsMember({"multiplicative", "weighted", "learned", "concat_project"}));
  eval->add_option("--alpha", v_alpha, "Fusion weight");
  eval->add_option("--seed", v_seed, "Masking/noise seed")->envname("TSXPLAIN_SEED");
  eval->add_option("--split-seed", v_split_seed, "Split seed for untagged bundles");
  eval->add_option("--out", v_out, "Output directory")->envname("TSXPLAIN_OUT");

  // ablate
  auto* ablate = app.add_subcommand(
      "ablate",
      "Fusion-strategy comparison on the disjoint-noise family. CSV columns: "
      "strategy, mean_error, ci_lo, ci_hi (mean squared error against the "
      "ground-truth mask with a 95% bootstrap CI).");
  std::string a_data, a_out = "out/ablate";
  int a_n = 200;
  std::uint64_t a_seed = 0;
  ablate->add_option("--data", a_data, "Synthetic bundle JSON with masks")->required()
      ->envname("TSXPLAIN_DATA");
  ablate->add_option("--n", a_n, "Number of constructed instances");
  ablate->add_option("--seed", a_seed, "Noise seed")->envname("TSXPLAIN_SEED");
  ablate->add_option("--out", a_out, "Output directory")->envname("TSXPLAIN_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth(s_n, s_T, s_seed, s_rate, s_out);
    if (train->parsed())
      return cmd_train(t_data, t_model, tcfg, t_split_seed, t_out);
    if (explain->parsed())
      return cmd_explain(e_ckpt, e_data, e_sample, e_fusion, e_alpha, e_quantile,
                         e_domain, e_templates, e_stub, e_split_seed, e_out);
    if (eval->parsed())
      return cmd_eval(v_ckpts, v_data, v_heatmaps, v_max, v_fusion, v_alpha,
                      v_seed, v_split_seed, v_out);
    if (ablate->parsed())
      return cmd_ablate(a_data, a_n, a_seed, a_out);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
