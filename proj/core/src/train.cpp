#include "tsxplain/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tsx {

void TrainConfig::validate() const {
  if (lr < 0.0) throw std::invalid_argument("train: negative learning rate");
  if (batch_size <= 0) throw std::invalid_argument("train: batch_size must be positive");
  if (max_epochs <= 0) throw std::invalid_argument("train: max_epochs must be positive");
  if (patience < 1) throw std::invalid_argument("train: patience must be at least 1");
  if (weight_decay < 0.0) throw std::invalid_argument("train: negative weight decay");
  if (jitter_frac < 0.0 || jitter_frac > 0.5)
    throw std::invalid_argument("train: jitter_frac must be in [0, 0.5]");
  if (noise_sigma < 0.0) throw std::invalid_argument("train: negative noise sigma");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["weight_decay"] = weight_decay;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  j["huber_delta"] = huber_delta;
  j["augment"] = augment;
  j["jitter_frac"] = jitter_frac;
  j["noise_sigma"] = noise_sigma;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  if (j.contains("lr")) c.lr = j["lr"];
  if (j.contains("batch_size")) c.batch_size = j["batch_size"];
  if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"];
  if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"];
  if (j.contains("patience")) c.patience = j["patience"];
  if (j.contains("seed")) c.seed = j["seed"];
  if (j.contains("huber_delta")) c.huber_delta = j["huber_delta"];
  if (j.contains("augment")) c.augment = j["augment"];
  if (j.contains("jitter_frac")) c.jitter_frac = j["jitter_frac"];
  if (j.contains("noise_sigma")) c.noise_sigma = j["noise_sigma"];
  c.validate();
  return c;
}

nlohmann::ordered_json TrainResult::history_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : history)
    arr.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_loss", e.val_loss}});
  nlohmann::ordered_json j;
  j["epochs"] = arr;
  j["stopped_epoch"] = stopped_epoch;
  j["early_stopped"] = early_stopped;
  j["best_epoch"] = best.epoch;
  j["best_val_loss"] = best.val_metric;
  return j;
}

std::uint64_t config_hash(const nlohmann::json& model_config) {
  // FNV-1a over the canonical dump
  const std::string s = model_config.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

Tensor batch_loss(Model& model, const DatasetBundle& bundle,
                  const std::vector<size_t>& idx, bool training,
                  std::mt19937_64& rng, double huber_delta,
                  const TrainConfig* aug = nullptr) {
  std::vector<std::vector<double>> xs;
  xs.reserve(idx.size());
  for (size_t i : idx) xs.push_back(bundle.samples[i]);
  if (training && aug && aug->augment)
    for (auto& s : xs)
      s = augment(s, bundle.T, bundle.C, aug->jitter_frac, aug->noise_sigma,
                  rng());
  Tensor x = to_model_input(xs, bundle.T, bundle.C);
  Tensor out = model.forward(x, training, rng);
  if (model.task() == Task::classification) {
    std::vector<int> labels;
    for (size_t i : idx) labels.push_back(static_cast<int>(bundle.targets[i]));
    return cross_entropy(out, labels);
  }
  std::vector<double> targets;
  for (size_t i : idx) targets.push_back(bundle.targets[i]);
  return huber_loss(out, targets, huber_delta);
}

void adamw_step(std::map<std::string, Tensor>& params, OptimizerState& opt,
                double lr, double wd) {
  ++opt.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(opt.step));
  for (auto& [name, p] : params) {
    auto& m = opt.m[name];
    auto& v = opt.v[name];
    if (m.size() != p.data().size()) m.assign(p.data().size(), 0.0);
    if (v.size() != p.data().size()) v.assign(p.data().size(), 0.0);
    const bool has_g = p.has_grad();
    for (size_t i = 0; i < p.data().size(); ++i) {
      const double g = has_g ? p.grad()[i] : 0.0;
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p.data()[i] -= lr * (mh / (std::sqrt(vh) + kEps) + wd * p.data()[i]);
    }
  }
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (is.fail()) throw std::runtime_error("checkpoint: bad rng state");
}

}  // namespace

double evaluate_loss(Model& model, const DatasetBundle& bundle, Split split,
                     double huber_delta) {
  const auto idx = bundle.indices_of(split);
  if (idx.empty()) throw std::logic_error("evaluate: empty split");
  std::mt19937_64 rng(0);  // unused in eval mode
  double total = 0.0;
  size_t n = 0;
  const size_t bs = 64;
  for (size_t start = 0; start < idx.size(); start += bs) {
    const size_t end = std::min(idx.size(), start + bs);
    std::vector<size_t> batch(idx.begin() + static_cast<long>(start),
                              idx.begin() + static_cast<long>(end));
    Tensor loss = batch_loss(model, bundle, batch, false, rng, huber_delta);
    total += loss.item() * static_cast<double>(batch.size());
    n += batch.size();
  }
  return total / static_cast<double>(n);
}

Checkpoint snapshot(Model& model, const OptimizerState& opt, int epoch,
                    double val_metric, const std::string& rng_state) {
  Checkpoint c;
  c.model_config = model.config_json();
  c.config_hash = config_hash(c.model_config);
  for (auto& [name, p] : model.parameters()) c.params[name] = p.data();
  for (auto& [name, b] : model.buffers()) c.buffers[name] = b.data();
  c.opt = opt;
  c.epoch = epoch;
  c.val_metric = val_metric;
  c.rng_state = rng_state;
  return c;
}

void apply_checkpoint(Model& model, const Checkpoint& ckpt) {
  const std::uint64_t h = config_hash(model.config_json());
  if (h != ckpt.config_hash)
    throw std::runtime_error("checkpoint: config hash mismatch (model " +
                             std::to_string(h) + ", checkpoint " +
                             std::to_string(ckpt.config_hash) + ")");
  for (auto& [name, p] : model.parameters()) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end() || it->second.size() != p.data().size())
      throw std::runtime_error("checkpoint: missing or misshapen parameter " + name);
    p.data() = it->second;
  }
  for (auto& [name, b] : model.buffers()) {
    auto it = ckpt.buffers.find(name);
    if (it == ckpt.buffers.end() || it->second.size() != b.data().size())
      throw std::runtime_error("checkpoint: missing or misshapen buffer " + name);
    b.data() = it->second;
  }
}

TrainResult train(Model& model, const DatasetBundle& bundle,
                  const TrainConfig& cfg, const Checkpoint* resume) {
  cfg.validate();
  if (bundle.task != model.task())
    throw std::invalid_argument("train: model/bundle task mismatch");
  if (bundle.split_tags.empty())
    throw std::invalid_argument("train: bundle must be split first");
  const auto train_idx = bundle.indices_of(Split::train);
  if (train_idx.empty()) throw std::invalid_argument("train: empty train split");

  std::mt19937_64 rng(cfg.seed);
  OptimizerState opt;
  int start_epoch = 0;
  if (resume) {
    apply_checkpoint(model, *resume);
    opt = resume->opt;
    start_epoch = resume->epoch;
    rng_from_string(rng, resume->rng_state);
  }

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    std::vector<size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);
    double train_total = 0.0;
    size_t train_count = 0;
    const size_t bs = static_cast<size_t>(cfg.batch_size);
    for (size_t start = 0; start + bs <= order.size() || (start == 0 && order.size() < bs);
         start += bs) {
      const size_t end = std::min(order.size(), start + bs);
      if (end - start < bs && order.size() >= bs) break;  // drop short batch
      std::vector<size_t> batch(order.begin() + static_cast<long>(start),
                                order.begin() + static_cast<long>(end));
      Tensor loss = batch_loss(model, bundle, batch, true, rng, cfg.huber_delta, &cfg);
      backward(loss);
      adamw_step(model.parameters(), opt, cfg.lr, cfg.weight_decay);
      train_total += loss.item() * static_cast<double>(batch.size());
      train_count += batch.size();
      if (order.size() < bs) break;
    }
    const double train_loss =
        train_count ? train_total / static_cast<double>(train_count) : 0.0;
    const double val_loss = evaluate_loss(model, bundle, Split::val, cfg.huber_delta);
    if (!std::isfinite(val_loss))
      throw std::runtime_error("train: validation loss diverged at epoch " +
                               std::to_string(epoch));
    result.history.push_back({epoch, train_loss, val_loss});
    result.stopped_epoch = epoch + 1;

    if (val_loss < best_val) {
      best_val = val_loss;
      since_best = 0;
      result.best = snapshot(model, opt, epoch + 1, val_loss, rng_to_string(rng));
    } else if (++since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  if (result.best.params.empty())
    result.best = snapshot(model, opt, result.stopped_epoch, best_val,
                           rng_to_string(rng));
  return result;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = "tsxplain-checkpoint";
  j["version"] = ckpt.version;
  j["model_config"] = ckpt.model_config;
  j["config_hash"] = ckpt.config_hash;
  j["epoch"] = ckpt.epoch;
  j["val_metric"] = ckpt.val_metric;
  j["rng_state"] = ckpt.rng_state;
  j["params"] = ckpt.params;
  j["buffers"] = ckpt.buffers;
  j["opt"] = {{"step", ckpt.opt.step}, {"m", ckpt.opt.m}, {"v", ckpt.opt.v}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
  nlohmann::ordered_json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: corrupt file " + path + ": " + e.what());
  }
  if (j.value("format", "") != "tsxplain-checkpoint")
    throw std::runtime_error("checkpoint: unrecognized format in " + path);
  Checkpoint c;
  c.version = j.at("version");
  if (c.version != 1)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(c.version));
  c.model_config = j.at("model_config");
  c.config_hash = j.at("config_hash");
  c.epoch = j.at("epoch");
  c.val_metric = j.at("val_metric");
  c.rng_state = j.at("rng_state");
  c.params = j.at("params").get<std::map<std::string, std::vector<double>>>();
  c.buffers = j.at("buffers").get<std::map<std::string, std::vector<double>>>();
  c.opt.step = j.at("opt").at("step");
  c.opt.m = j.at("opt").at("m").get<std::map<std::string, std::vector<double>>>();
  c.opt.v = j.at("opt").at("v").get<std::map<std::string, std::vector<double>>>();
  return c;
}

double grid_search_alpha(const std::vector<double>& grid,
                         const std::function<double(double)>& objective) {
  if (grid.empty()) throw std::invalid_argument("grid search: empty grid");
  double best_alpha = grid.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (double a : grid) {
    const double s = objective(a);
    const bool better =
        s > best_score ||
        (s == best_score &&
         std::abs(a - 0.5) < std::abs(best_alpha - 0.5));
    if (better) {
      best_score = s;
      best_alpha = a;
    }
  }
  return best_alpha;
}

}  // namespace tsx
