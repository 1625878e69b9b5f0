#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "tsxplain/dataset.hpp"

using namespace tsx;

namespace {

DatasetBundle toy_bundle(int n, int T, int C) {
  DatasetBundle b;
  b.T = T;
  b.C = C;
  b.task = Task::classification;
  for (int i = 0; i < n; ++i) {
    std::vector<double> s(static_cast<size_t>(T) * C);
    for (size_t j = 0; j < s.size(); ++j)
      s[j] = static_cast<double>(i) + 0.1 * static_cast<double>(j);
    b.samples.push_back(std::move(s));
    b.targets.push_back(i % 2);
  }
  return b;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic under the seed") {
  SyntheticSpec spec;
  spec.n_samples = 40;
  spec.T = 50;
  spec.seed = 9;
  DatasetBundle a = generate_synthetic(spec);
  DatasetBundle b = generate_synthetic(spec);
  CHECK(a.samples == b.samples);
  CHECK(a.targets == b.targets);
  CHECK(a.masks == b.masks);
  spec.seed = 10;
  DatasetBundle c = generate_synthetic(spec);
  CHECK(a.samples != c.samples);
}

TEST_CASE("anomaly rate zero yields only negatives with empty masks") {
  SyntheticSpec spec;
  spec.n_samples = 30;
  spec.T = 40;
  spec.anomaly_rate = 0.0;
  DatasetBundle b = generate_synthetic(spec);
  for (double t : b.targets) CHECK(t == 0.0);
  for (const auto& m : b.masks)
    for (double v : m) CHECK(v == 0.0);
}

TEST_CASE("quadratic trend channel is exactly t^2/100 on clean samples") {
  SyntheticSpec spec;
  spec.n_samples = 5;
  spec.T = 60;
  spec.anomaly_rate = 0.0;
  DatasetBundle b = generate_synthetic(spec);
  for (size_t i = 0; i < b.samples.size(); ++i)
    for (int t = 0; t < b.T; ++t)
      CHECK(b.at(i, t, 4) == static_cast<double>(t) * t / 100.0);
}

TEST_CASE("masks mark cells in exactly one channel, only on positives") {
  SyntheticSpec spec;
  spec.n_samples = 200;
  spec.T = 50;
  spec.seed = 3;
  DatasetBundle b = generate_synthetic(spec);
  int positives = 0;
  for (size_t i = 0; i < b.samples.size(); ++i) {
    std::set<int> channels;
    int cells = 0;
    for (int t = 0; t < b.T; ++t)
      for (int c = 0; c < b.C; ++c)
        if (b.masks[i][static_cast<size_t>(t) * b.C + c] != 0.0) {
          channels.insert(c);
          ++cells;
        }
    if (b.targets[i] == 0.0) {
      CHECK(cells == 0);
    } else {
      ++positives;
      CHECK(channels.size() == 1);
      CHECK(*channels.begin() != 2);  // noise channel never injected
      CHECK(cells >= 1);
      CHECK(cells <= 30);
    }
  }
  CHECK(positives > 60);  // roughly half at rate 0.5
  CHECK(positives < 140);
}

TEST_CASE("linear imputation hand cases") {
  const double gap = std::numeric_limits<double>::quiet_NaN();
  auto a = impute_linear({1.0, gap, 3.0});
  CHECK(a[1] == doctest::Approx(2.0));
  auto b = impute_linear({gap, 5.0});
  CHECK(b[0] == 5.0);
  auto c = impute_linear({1.0, 2.0});
  CHECK(c == std::vector<double>{1.0, 2.0});
  auto d = impute_linear({0.0, gap, gap, 3.0});
  CHECK(d[1] == doctest::Approx(1.0));
  CHECK(d[2] == doctest::Approx(2.0));
  CHECK_THROWS(impute_linear({gap, gap}));
}

TEST_CASE("z-score normalization uses train statistics only") {
  DatasetBundle b = toy_bundle(10, 4, 2);
  b.split_tags.assign(10, Split::train);
  b.split_tags[8] = Split::val;
  b.split_tags[9] = Split::test;
  // plant a huge outlier in the test sample; train stats must ignore it
  b.samples[9][0] = 1e6;
  DatasetBundle copy = b;
  normalize_channels(b, NormMode::zscore);
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < 8; ++i)
      for (int t = 0; t < 4; ++t) {
        sum += b.at(i, t, c);
        sq += b.at(i, t, c) * b.at(i, t, c);
        ++n;
      }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-9));
  }
  // the outlier cell transforms with train stats, so it stays extreme
  CHECK(b.samples[9][0] > 100.0);
  // every cell is an affine transform of the original
  for (int c = 0; c < 2; ++c)
    CHECK(b.at(0, 0, c) ==
          doctest::Approx((copy.at(0, 0, c) - b.norm_center[c]) / b.norm_scale[c]));
}

TEST_CASE("regression targets standardize with train statistics") {
  DatasetBundle b;
  b.T = 2;
  b.C = 1;
  b.task = Task::regression;
  b.samples = {{0.0, 1.0}, {2.0, 3.0}, {1.0, 2.0}};
  b.targets = {10.0, 30.0, 100.0};  // train mean 20, std 10
  b.timestamps = {{0, 1}, {0, 1}, {0, 1}};
  b.split_tags = {Split::train, Split::train, Split::test};
  normalize_channels(b, NormMode::zscore);
  CHECK(b.target_center == doctest::Approx(20.0));
  CHECK(b.target_scale == doctest::Approx(10.0));
  CHECK(b.targets[0] == doctest::Approx(-1.0));
  CHECK(b.targets[1] == doctest::Approx(1.0));
  CHECK(b.targets[2] == doctest::Approx(8.0));  // test target uses train stats

  const std::string path = "/tmp/tsx_target_norm_test.json";
  save_bundle(b, path);
  DatasetBundle back = load_bundle(path);
  CHECK(back.target_center == doctest::Approx(20.0));
  CHECK(back.target_scale == doctest::Approx(10.0));
  std::remove(path.c_str());
}

TEST_CASE("unit normalization maps train range to [0,1] and extrapolates") {
  DatasetBundle b;
  b.T = 2;
  b.C = 1;
  b.task = Task::classification;
  b.samples = {{0.0, 10.0}, {5.0, 10.0}, {0.0, 20.0}};
  b.targets = {0, 1, 0};
  b.split_tags = {Split::train, Split::train, Split::test};
  normalize_channels(b, NormMode::unit);
  CHECK(b.samples[0][0] == doctest::Approx(0.0));
  CHECK(b.samples[0][1] == doctest::Approx(1.0));
  CHECK(b.samples[2][1] == doctest::Approx(2.0));  // train max 10 -> value 20 maps to 2
}

TEST_CASE("constant channels are flagged and left unscaled") {
  DatasetBundle b;
  b.T = 2;
  b.C = 2;
  b.task = Task::classification;
  b.samples = {{7.0, 1.0, 7.0, 2.0}, {7.0, 3.0, 7.0, 4.0}};
  b.targets = {0, 1};
  b.split_tags = {Split::train, Split::train};
  normalize_channels(b, NormMode::zscore);
  REQUIRE(b.zero_variance_channels == std::vector<int>{0});
  CHECK(b.norm_scale[0] == 1.0);
  CHECK(b.samples[0][0] == doctest::Approx(0.0));  // centered but not divided
}

TEST_CASE("augment: identity, pure shift, and noise scale") {
  const int T = 10, C = 2;
  std::vector<double> s(static_cast<size_t>(T) * C);
  for (size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i);

  CHECK(augment(s, T, C, 0.0, 0.0, 5) == s);

  // jitter only: a circular shift preserves each channel's multiset
  auto shifted = augment(s, T, C, 0.3, 0.0, 7);
  for (int c = 0; c < C; ++c) {
    std::multiset<double> orig, got;
    for (int t = 0; t < T; ++t) {
      orig.insert(s[static_cast<size_t>(t) * C + c]);
      got.insert(shifted[static_cast<size_t>(t) * C + c]);
    }
    CHECK(orig == got);
  }
  // and consecutive cells stay consecutive modulo wrap
  int breaks = 0;
  for (int t = 1; t < T; ++t)
    if (shifted[static_cast<size_t>(t) * C] !=
        shifted[static_cast<size_t>(t - 1) * C] + C)
      ++breaks;
  CHECK(breaks <= 1);

  // noise only: empirical sigma close to 0.1
  const int big_T = 5000;
  std::vector<double> zeros(static_cast<size_t>(big_T) * 2, 0.0);
  auto noisy = augment(zeros, big_T, 2, 0.0, 0.1, 11);
  double sq = 0.0;
  for (double v : noisy) sq += v * v;
  const double sigma = std::sqrt(sq / static_cast<double>(noisy.size()));
  CHECK(sigma == doctest::Approx(0.1).epsilon(0.2));

  CHECK(augment(s, T, C, 0.3, 0.1, 13) == augment(s, T, C, 0.3, 0.1, 13));
  CHECK_THROWS(augment(s, T, C + 1, 0.0, 0.0, 0));
}

TEST_CASE("split: exact counts, stratification, determinism") {
  DatasetBundle b = toy_bundle(100, 2, 1);
  split(b, 0.7, 0.15, 0.15, 4);
  CHECK(b.indices_of(Split::train).size() == 70);
  CHECK(b.indices_of(Split::val).size() == 15);
  CHECK(b.indices_of(Split::test).size() == 15);
  // classes are balanced 50/50, so each split stays near 50% class 1
  DatasetBundle big = toy_bundle(1000, 2, 1);
  split(big, 0.7, 0.15, 0.15, 4);
  for (Split s : {Split::train, Split::val, Split::test}) {
    const auto idx = big.indices_of(s);
    size_t ones = 0;
    for (size_t i : idx) ones += big.targets[i] == 1.0;
    const double frac = static_cast<double>(ones) / static_cast<double>(idx.size());
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
  }
  DatasetBundle b2 = toy_bundle(100, 2, 1);
  split(b2, 0.7, 0.15, 0.15, 4);
  CHECK(b.split_tags == b2.split_tags);

  DatasetBundle tiny = toy_bundle(3, 2, 1);  // class 1 has a single sample
  CHECK_THROWS(split(tiny, 0.4, 0.3, 0.3, 0));
}

TEST_CASE("bundle json round trip") {
  SyntheticSpec spec;
  spec.n_samples = 20;
  spec.T = 30;
  DatasetBundle b = generate_synthetic(spec);
  split(b, 0.5, 0.25, 0.25, 1);
  normalize_channels(b, NormMode::zscore);
  const std::string path = "/tmp/tsx_bundle_test.json";
  save_bundle(b, path);
  DatasetBundle back = load_bundle(path);
  CHECK(back.samples == b.samples);
  CHECK(back.targets == b.targets);
  CHECK(back.masks == b.masks);
  CHECK(back.split_tags == b.split_tags);
  CHECK(back.norm_mode == b.norm_mode);
  CHECK(back.norm_center == b.norm_center);
  std::remove(path.c_str());
}

TEST_CASE("energy csv ingestion: windows, target, imputation, errors") {
  const std::string path = "/tmp/tsx_csv_test.csv";
  {
    std::ofstream f(path);
    f << "date,Appliances,T_kitchen,rv1\n";
    for (int i = 0; i < 6; ++i) {
      f << "2016-01-11 " << (17 + i) << ":00:00,";
      f << (50 + 10 * i) << ",";
      if (i == 2) f << "NA,";            // imputed
      else f << (20.0 + i) << ",";
      f << (0.5 * i) << "\n";
    }
  }
  CHECK(csv_row_count(path) == 6);
  EnergyCsvOptions opts;
  opts.T = 3;
  opts.stride = 1;
  DatasetBundle b = load_energy_csv(path, opts);
  CHECK(b.task == Task::regression);
  CHECK(b.C == 2);  // T_kitchen and rv1; Appliances is the target
  CHECK(b.samples.size() == 4);
  CHECK(b.targets[0] == 70.0);   // Appliances at the end of window [0,2]
  CHECK(b.targets[3] == 100.0);
  CHECK(b.synthetic_channels == std::vector<int>{1});  // rv1 flagged
  // imputed cell: linear between 21 and 23
  CHECK(b.at(0, 2, 0) == doctest::Approx(22.0));

  opts.stride = 3;
  DatasetBundle strided = load_energy_csv(path, opts);
  CHECK(strided.samples.size() == 2);

  {
    std::ofstream f(path);
    f << "date,Appliances,x\n"
      << "2016-01-11 18:00:00,1,2\n"
      << "2016-01-11 17:00:00,3,4\n";
  }
  EnergyCsvOptions small;
  small.T = 2;
  CHECK_THROWS(load_energy_csv(path, small));  // non-monotone timestamps

  {
    std::ofstream f(path);
    f << "date,x\n2016-01-11 17:00:00,1\n";
  }
  CHECK_THROWS(load_energy_csv(path, small));  // missing target column
  std::remove(path.c_str());
  CHECK_THROWS(load_energy_csv("/tmp/nope_tsx.csv", small));
}
