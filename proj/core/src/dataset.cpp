#include "tsxplain/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tsx {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw std::logic_error("bad split tag");
}

static Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split tag: " + s);
}

void DatasetBundle::validate() const {
  const size_t n = samples.size();
  if (targets.size() != n) throw std::logic_error("bundle: target count mismatch");
  const size_t cells = static_cast<size_t>(T) * C;
  for (const auto& s : samples)
    if (s.size() != cells) throw std::logic_error("bundle: sample shape mismatch");
  if (!masks.empty()) {
    if (masks.size() != n) throw std::logic_error("bundle: mask count mismatch");
    for (const auto& m : masks)
      if (m.size() != cells) throw std::logic_error("bundle: mask shape mismatch");
  }
  if (!channel_names.empty() && static_cast<int>(channel_names.size()) != C)
    throw std::logic_error("bundle: channel name count mismatch");
  if (!timestamps.empty()) {
    if (timestamps.size() != n) throw std::logic_error("bundle: timestamp count mismatch");
    for (const auto& ts : timestamps)
      if (static_cast<int>(ts.size()) != T)
        throw std::logic_error("bundle: timestamp length mismatch");
  }
  if (!split_tags.empty() && split_tags.size() != n)
    throw std::logic_error("bundle: split tag count mismatch");
  if (task == Task::classification)
    for (double t : targets)
      if (t != std::floor(t) || t < 0)
        throw std::logic_error("bundle: non-integer class label");
}

std::vector<size_t> DatasetBundle::indices_of(Split s) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < split_tags.size(); ++i)
    if (split_tags[i] == s) out.push_back(i);
  return out;
}

void SyntheticSpec::validate() const {
  if (n_samples <= 0) throw std::invalid_argument("synthetic: n_samples must be positive");
  if (T < 20) throw std::invalid_argument("synthetic: T must be at least 20");
  if (anomaly_rate < 0.0 || anomaly_rate > 1.0)
    throw std::invalid_argument("synthetic: anomaly_rate outside [0,1]");
  const double wsum = w_spike + w_drift + w_oscillation;
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("synthetic: pattern weights must sum to 1");
  if (w_spike < 0 || w_drift < 0 || w_oscillation < 0)
    throw std::invalid_argument("synthetic: negative pattern weight");
}

nlohmann::ordered_json SyntheticSpec::to_json() const {
  nlohmann::ordered_json j;
  j["n_samples"] = n_samples;
  j["T"] = T;
  j["seed"] = seed;
  j["anomaly_rate"] = anomaly_rate;
  j["pattern_mix"] = {{"spike", w_spike}, {"drift", w_drift}, {"oscillation", w_oscillation}};
  return j;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::ordered_json& j) {
  SyntheticSpec s;
  s.n_samples = j.at("n_samples");
  s.T = j.at("T");
  s.seed = j.at("seed");
  s.anomaly_rate = j.at("anomaly_rate");
  if (j.contains("pattern_mix")) {
    s.w_spike = j["pattern_mix"].at("spike");
    s.w_drift = j["pattern_mix"].at("drift");
    s.w_oscillation = j["pattern_mix"].at("oscillation");
  }
  s.validate();
  return s;
}

DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int T = spec.T, C = 5;
  DatasetBundle b;
  b.T = T;
  b.C = C;
  b.task = Task::classification;
  b.channel_names = {"sine_low_freq", "step_function", "gaussian_noise",
                     "sine_high_freq", "quadratic_trend"};
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double tau = 2.0 * std::numbers::pi;

  for (int i = 0; i < spec.n_samples; ++i) {
    std::vector<double> x(static_cast<size_t>(T) * C, 0.0);
    const double f_low = 1.0 + 2.0 * unit(rng);
    const double p_low = tau * unit(rng);
    const int step_at = static_cast<int>(T * (0.2 + 0.6 * unit(rng)));
    const double step_level = 0.5 + unit(rng);
    const double f_high = 8.0 + 7.0 * unit(rng);
    const double p_high = tau * unit(rng);
    for (int t = 0; t < T; ++t) {
      x[static_cast<size_t>(t) * C + 0] = std::sin(tau * f_low * t / T + p_low);
      x[static_cast<size_t>(t) * C + 1] = t >= step_at ? step_level : 0.0;
      x[static_cast<size_t>(t) * C + 2] = gauss(rng);
      x[static_cast<size_t>(t) * C + 3] = std::sin(tau * f_high * t / T + p_high);
      x[static_cast<size_t>(t) * C + 4] = static_cast<double>(t) * t / 100.0;
    }

    std::vector<double> mask(static_cast<size_t>(T) * C, 0.0);
    const bool anomalous = unit(rng) < spec.anomaly_rate;
    double label = 0.0;
    if (anomalous) {
      label = 1.0;
      static const int injectable[4] = {0, 1, 3, 4};
      const int ch = injectable[std::min(3, static_cast<int>(4 * unit(rng)))];
      const double pick = unit(rng);
      // amplitudes are relative to the channel's own spread so that an
      // injected pattern stays visible after per-channel standardization
      double mu = 0.0, sq = 0.0;
      for (int t = 0; t < T; ++t) {
        const double v = x[static_cast<size_t>(t) * C + ch];
        mu += v;
        sq += v * v;
      }
      mu /= T;
      const double sd = std::sqrt(std::max(0.0, sq / T - mu * mu));
      const double scale = std::max(1.0, sd);
      auto bump = [&](int t, double delta) {
        if (delta == 0.0) return;
        x[static_cast<size_t>(t) * C + ch] += delta * scale;
        mask[static_cast<size_t>(t) * C + ch] = 1.0;
      };
      if (pick < spec.w_spike) {
        const int dur = 1 + static_cast<int>(2 * unit(rng));
        const int start = static_cast<int>((T - dur + 1) * unit(rng));
        for (int k = 0; k < dur; ++k) bump(start + k, 3.0);
      } else if (pick < spec.w_spike + spec.w_drift) {
        const int dur = std::min(20, T);
        const int start = static_cast<int>((T - dur + 1) * unit(rng));
        for (int k = 0; k < dur; ++k) bump(start + k, 1.5 * (k + 1) / dur);
      } else {
        const int dur = std::min(30, T);
        const int start = static_cast<int>((T - dur + 1) * unit(rng));
        for (int k = 0; k < dur; ++k) bump(start + k, std::sin(tau * k / 10.0));
      }
    }

    b.samples.push_back(std::move(x));
    b.masks.push_back(std::move(mask));
    b.targets.push_back(label);
    std::vector<double> ts(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) ts[static_cast<size_t>(t)] = t;
    b.timestamps.push_back(std::move(ts));
  }
  b.validate();
  return b;
}

std::vector<double> impute_linear(const std::vector<double>& series) {
  std::vector<double> out = series;
  const int n = static_cast<int>(out.size());
  int first = -1, last = -1;
  for (int i = 0; i < n; ++i)
    if (!std::isnan(out[static_cast<size_t>(i)])) {
      if (first < 0) first = i;
      last = i;
    }
  if (first < 0) throw std::invalid_argument("impute: series has no observed values");
  for (int i = 0; i < first; ++i) out[static_cast<size_t>(i)] = out[static_cast<size_t>(first)];
  for (int i = last + 1; i < n; ++i) out[static_cast<size_t>(i)] = out[static_cast<size_t>(last)];
  int i = first;
  while (i <= last) {
    if (!std::isnan(out[static_cast<size_t>(i)])) { ++i; continue; }
    int j = i;
    while (std::isnan(out[static_cast<size_t>(j)])) ++j;
    const double lo = out[static_cast<size_t>(i - 1)];
    const double hi = out[static_cast<size_t>(j)];
    for (int k = i; k < j; ++k)
      out[static_cast<size_t>(k)] = lo + (hi - lo) * (k - i + 1) / (j - i + 1);
    i = j + 1;
  }
  return out;
}

namespace {

std::vector<std::string> parse_csv_record(std::istream& in, bool& ok) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false, any = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    any = true;
    const char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') { field += '"'; in.get(); }
        else in_quotes = false;
      } else field += c;
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  ok = any;
  if (any) fields.push_back(std::move(field));
  return fields;
}

double parse_cell(const std::string& s) {
  if (s.empty() || s == "NA" || s == "nan" || s == "NaN")
    return std::numeric_limits<double>::quiet_NaN();
  size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("csv: non-numeric cell '" + s + "'");
  return v;
}

double parse_timestamp(const std::string& s, size_t row) {
  std::tm tm{};
  std::istringstream is(s);
  is >> std::get_time(&tm, "%Y-%m-%d %H:%M:%S");
  if (is.fail())
    throw std::invalid_argument("csv: unparseable date in row " + std::to_string(row));
  return static_cast<double>(timegm(&tm));
}

}  // namespace

size_t csv_row_count(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("csv: cannot read " + path);
  bool ok = false;
  size_t n = 0;
  parse_csv_record(f, ok);
  if (!ok) throw std::runtime_error("csv: missing header in " + path);
  while (true) {
    auto rec = parse_csv_record(f, ok);
    if (!ok) break;
    if (rec.size() == 1 && rec[0].empty()) continue;
    ++n;
  }
  return n;
}

DatasetBundle load_energy_csv(const std::string& path, const EnergyCsvOptions& opts) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("csv: cannot read " + path);
  bool ok = false;
  auto header = parse_csv_record(f, ok);
  if (!ok || header.size() < 2)
    throw std::runtime_error("csv: missing or truncated header in " + path);

  int target_col = -1;
  for (size_t i = 1; i < header.size(); ++i)
    if (header[i] == opts.target_column) target_col = static_cast<int>(i);
  if (target_col < 0)
    throw std::runtime_error("csv: target column '" + opts.target_column + "' not found");

  std::vector<int> feature_cols;
  std::vector<std::string> feature_names;
  std::vector<int> synthetic_flags;
  for (size_t i = 1; i < header.size(); ++i) {
    if (static_cast<int>(i) == target_col) continue;
    feature_cols.push_back(static_cast<int>(i));
    feature_names.push_back(header[i]);
    if (header[i] == "rv1" || header[i] == "rv2")
      synthetic_flags.push_back(static_cast<int>(feature_cols.size()) - 1);
  }
  const int C = static_cast<int>(feature_cols.size());

  std::vector<double> times;
  std::vector<std::vector<double>> cols(header.size());
  size_t row = 0;
  while (true) {
    auto rec = parse_csv_record(f, ok);
    if (!ok) break;
    if (rec.size() == 1 && rec[0].empty()) continue;
    ++row;
    if (rec.size() != header.size())
      throw std::runtime_error("csv: row " + std::to_string(row) + " has " +
                               std::to_string(rec.size()) + " fields, expected " +
                               std::to_string(header.size()));
    const double ts = parse_timestamp(rec[0], row);
    if (!times.empty() && ts <= times.back())
      throw std::runtime_error("csv: non-monotone timestamps at row " + std::to_string(row));
    times.push_back(ts);
    for (size_t i = 1; i < rec.size(); ++i) {
      const double v = parse_cell(rec[i]);
      if (std::isnan(v) && !opts.allow_impute)
        throw std::runtime_error("csv: missing cell at row " + std::to_string(row) +
                                 " with imputation disabled");
      cols[i].push_back(v);
    }
  }
  const size_t n_rows = times.size();
  if (static_cast<int>(n_rows) < opts.T)
    throw std::runtime_error("csv: fewer rows than one window");

  for (size_t i = 1; i < cols.size(); ++i) {
    bool has_gap = false;
    for (double v : cols[i]) has_gap |= std::isnan(v);
    if (has_gap) cols[i] = impute_linear(cols[i]);
  }

  DatasetBundle b;
  b.T = opts.T;
  b.C = C;
  b.task = Task::regression;
  b.channel_names = feature_names;
  b.synthetic_channels = synthetic_flags;
  const int stride = opts.stride > 0 ? opts.stride : 1;
  for (size_t start = 0; start + opts.T <= n_rows; start += static_cast<size_t>(stride)) {
    std::vector<double> x(static_cast<size_t>(opts.T) * C);
    std::vector<double> ts(static_cast<size_t>(opts.T));
    for (int t = 0; t < opts.T; ++t) {
      ts[static_cast<size_t>(t)] = times[start + t];
      for (int c = 0; c < C; ++c)
        x[static_cast<size_t>(t) * C + c] =
            cols[static_cast<size_t>(feature_cols[static_cast<size_t>(c)])][start + t];
    }
    b.samples.push_back(std::move(x));
    b.timestamps.push_back(std::move(ts));
    b.targets.push_back(
        cols[static_cast<size_t>(target_col)][start + opts.T - 1]);
  }
  b.validate();
  return b;
}

void normalize_channels(DatasetBundle& bundle, NormMode mode) {
  if (bundle.split_tags.empty())
    throw std::logic_error("normalize: bundle must be split first");
  const auto train_idx = bundle.indices_of(Split::train);
  if (train_idx.empty()) throw std::logic_error("normalize: empty train split");
  const int T = bundle.T, C = bundle.C;
  bundle.norm_center.assign(static_cast<size_t>(C), 0.0);
  bundle.norm_scale.assign(static_cast<size_t>(C), 1.0);
  bundle.zero_variance_channels.clear();

  for (int c = 0; c < C; ++c) {
    double center, scale;
    if (mode == NormMode::zscore) {
      double sum = 0.0, sq = 0.0;
      size_t n = 0;
      for (size_t i : train_idx)
        for (int t = 0; t < T; ++t) {
          const double v = bundle.at(i, t, c);
          sum += v;
          sq += v * v;
          ++n;
        }
      const double mean = sum / n;
      const double var = std::max(0.0, sq / n - mean * mean);
      center = mean;
      scale = std::sqrt(var);
    } else {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (size_t i : train_idx)
        for (int t = 0; t < T; ++t) {
          const double v = bundle.at(i, t, c);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      center = lo;
      scale = hi - lo;
    }
    if (scale < 1e-12) {
      bundle.zero_variance_channels.push_back(c);
      scale = 1.0;
    }
    bundle.norm_center[static_cast<size_t>(c)] = center;
    bundle.norm_scale[static_cast<size_t>(c)] = scale;
    for (auto& s : bundle.samples)
      for (int t = 0; t < T; ++t)
        s[static_cast<size_t>(t) * C + c] =
            (s[static_cast<size_t>(t) * C + c] - center) / scale;
  }
  bundle.norm_mode = mode == NormMode::zscore ? "zscore" : "unit";

  // regression targets get the same train-statistics treatment; leaving them
  // on their raw scale makes Huber-loss training scale-dependent
  bundle.target_center = 0.0;
  bundle.target_scale = 1.0;
  if (bundle.task == Task::regression) {
    double center, scale;
    if (mode == NormMode::zscore) {
      double sum = 0.0, sq = 0.0;
      for (size_t i : train_idx) {
        sum += bundle.targets[i];
        sq += bundle.targets[i] * bundle.targets[i];
      }
      const double mean = sum / train_idx.size();
      center = mean;
      scale = std::sqrt(std::max(0.0, sq / train_idx.size() - mean * mean));
    } else {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (size_t i : train_idx) {
        lo = std::min(lo, bundle.targets[i]);
        hi = std::max(hi, bundle.targets[i]);
      }
      center = lo;
      scale = hi - lo;
    }
    if (scale < 1e-12) scale = 1.0;
    bundle.target_center = center;
    bundle.target_scale = scale;
    for (auto& y : bundle.targets) y = (y - center) / scale;
  }
}

std::vector<double> augment(const std::vector<double>& sample, int T, int C,
                            double jitter_frac, double noise_sigma,
                            std::uint64_t seed) {
  if (sample.size() != static_cast<size_t>(T) * C)
    throw std::invalid_argument("augment: sample shape mismatch");
  std::mt19937_64 rng(seed);
  const int max_shift = static_cast<int>(std::floor(jitter_frac * T));
  int shift = 0;
  if (max_shift > 0)
    shift = std::uniform_int_distribution<int>(-max_shift, max_shift)(rng);
  std::vector<double> out(sample.size());
  for (int t = 0; t < T; ++t) {
    const int src = ((t - shift) % T + T) % T;
    for (int c = 0; c < C; ++c)
      out[static_cast<size_t>(t) * C + c] = sample[static_cast<size_t>(src) * C + c];
  }
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& v : out) v += noise(rng);
  }
  return out;
}

void split(DatasetBundle& bundle, double train_frac, double val_frac,
           double test_frac, std::uint64_t seed) {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must sum to 1");
  const size_t n = bundle.samples.size();
  bundle.split_tags.assign(n, Split::train);
  std::mt19937_64 rng(seed);

  // group by class (regression = one group)
  std::map<long, std::vector<size_t>> groups;
  for (size_t i = 0; i < n; ++i) {
    const long key = bundle.task == Task::classification
                         ? static_cast<long>(bundle.targets[i])
                         : 0L;
    groups[key].push_back(i);
  }
  const double fracs[3] = {train_frac, val_frac, test_frac};
  // fractional quotas carry across classes so global counts stay exact
  double carry[3] = {0.0, 0.0, 0.0};
  for (auto& [key, idx] : groups) {
    if (idx.size() < 3 && bundle.task == Task::classification &&
        val_frac > 0 && test_frac > 0)
      throw std::runtime_error("split: class " + std::to_string(key) +
                               " has fewer samples than splits");
    std::shuffle(idx.begin(), idx.end(), rng);
    const size_t m = idx.size();
    long counts[3];
    long assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double q = fracs[s] * static_cast<double>(m) + carry[s];
      counts[s] = std::max(0L, static_cast<long>(std::floor(q)));
      carry[s] = q - static_cast<double>(counts[s]);
      assigned += counts[s];
    }
    while (assigned < static_cast<long>(m)) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (carry[s] > carry[best]) best = s;
      ++counts[best];
      carry[best] -= 1.0;
      ++assigned;
    }
    while (assigned > static_cast<long>(m)) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if ((carry[s] < carry[best] && counts[s] > 0) || counts[best] == 0)
          best = s;
      --counts[best];
      carry[best] += 1.0;
      --assigned;
    }
    size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (long k = 0; k < counts[s]; ++k)
        bundle.split_tags[idx[pos++]] = static_cast<Split>(s);
  }
}

nlohmann::ordered_json bundle_manifest(const DatasetBundle& bundle,
                                       const nlohmann::ordered_json& spec) {
  nlohmann::ordered_json j;
  j["spec"] = spec;
  j["task"] = task_name(bundle.task);
  j["n_samples"] = bundle.samples.size();
  j["T"] = bundle.T;
  j["C"] = bundle.C;
  j["channel_names"] = bundle.channel_names;
  size_t counts[3] = {0, 0, 0};
  std::vector<std::string> tags;
  for (Split s : bundle.split_tags) {
    ++counts[static_cast<int>(s)];
    tags.push_back(split_name(s));
  }
  j["split_counts"] = {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}};
  j["split_tags"] = tags;
  if (!bundle.synthetic_channels.empty())
    j["synthetic_channels"] = bundle.synthetic_channels;
  return j;
}

void save_bundle(const DatasetBundle& bundle, const std::string& path) {
  nlohmann::ordered_json j;
  j["T"] = bundle.T;
  j["C"] = bundle.C;
  j["task"] = task_name(bundle.task);
  j["channel_names"] = bundle.channel_names;
  j["samples"] = bundle.samples;
  j["targets"] = bundle.targets;
  j["timestamps"] = bundle.timestamps;
  std::vector<std::string> tags;
  for (Split s : bundle.split_tags) tags.push_back(split_name(s));
  j["split_tags"] = tags;
  if (!bundle.masks.empty()) j["masks"] = bundle.masks;
  if (!bundle.synthetic_channels.empty())
    j["synthetic_channels"] = bundle.synthetic_channels;
  if (!bundle.norm_mode.empty()) {
    j["norm_mode"] = bundle.norm_mode;
    j["norm_center"] = bundle.norm_center;
    j["norm_scale"] = bundle.norm_scale;
    j["zero_variance_channels"] = bundle.zero_variance_channels;
    j["target_center"] = bundle.target_center;
    j["target_scale"] = bundle.target_scale;
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("bundle: cannot write " + path);
  f << j.dump() << "\n";
}

DatasetBundle load_bundle(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("bundle: cannot read " + path);
  nlohmann::ordered_json j;
  f >> j;
  DatasetBundle b;
  b.T = j.at("T");
  b.C = j.at("C");
  b.task = task_from_name(j.at("task"));
  b.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  b.samples = j.at("samples").get<std::vector<std::vector<double>>>();
  b.targets = j.at("targets").get<std::vector<double>>();
  b.timestamps = j.at("timestamps").get<std::vector<std::vector<double>>>();
  for (const auto& t : j.at("split_tags"))
    b.split_tags.push_back(split_from_name(t));
  if (j.contains("masks"))
    b.masks = j.at("masks").get<std::vector<std::vector<double>>>();
  if (j.contains("synthetic_channels"))
    b.synthetic_channels = j.at("synthetic_channels").get<std::vector<int>>();
  if (j.contains("norm_mode")) {
    b.norm_mode = j.at("norm_mode");
    b.norm_center = j.at("norm_center").get<std::vector<double>>();
    b.norm_scale = j.at("norm_scale").get<std::vector<double>>();
    b.zero_variance_channels = j.at("zero_variance_channels").get<std::vector<int>>();
    if (j.contains("target_center")) {
      b.target_center = j.at("target_center");
      b.target_scale = j.at("target_scale");
    }
  }
  b.validate();
  return b;
}

}  // namespace tsx
