#include <doctest.h>

#include <random>

#include "tsxplain/model.hpp"
#include "tsxplain/saliency.hpp"

using namespace tsx;

namespace {

ForwardCache hybrid_cache(std::uint64_t seed, int T = 20, int C = 3,
                          Model** out_model = nullptr) {
  static std::vector<std::unique_ptr<Model>> keep_alive;
  std::mt19937_64 rng(seed);
  auto model = make_model("hybrid", Task::classification, 2, C, T, rng);
  Tensor x = Tensor::zeros({1, C, T}, true);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : x.data()) v = d(rng);
  ForwardCache cache;
  model->forward(x, false, rng, &cache);
  if (out_model) *out_model = model.get();
  keep_alive.push_back(std::move(model));
  return cache;
}

ForwardCache attention_only_cache(const std::vector<std::vector<double>>& layer_maps,
                                  int T) {
  ForwardCache cache;
  cache.T = T;
  cache.C = 1;
  for (const auto& m : layer_maps) {
    std::vector<Tensor> heads = {Tensor({T, T}, m)};
    cache.attention.push_back(heads);
  }
  return cache;
}

}  // namespace

TEST_CASE("grad-cam emits a nonnegative temporal map at feature resolution") {
  ForwardCache cache = hybrid_cache(1);
  Heatmap h = grad_cam(cache, 0);
  CHECK(h.C == 1);
  CHECK(h.T == cache.resnet_features.dim(2));
  for (double v : h.values) CHECK(v >= 0.0);
  CHECK_THROWS(grad_cam(cache, 7));   // target out of range
  CHECK_THROWS(grad_cam(cache, -1));
}

TEST_CASE("grad-cam matches the alpha-weighted relu formula") {
  ForwardCache cache = hybrid_cache(2);
  Heatmap h = grad_cam(cache, 1);
  // recompute from the cache after an equivalent backward pass
  backward(pick(cache.resnet_output, 1));
  const Tensor& f = cache.resnet_features;
  const int Ck = f.dim(1), Tf = f.dim(2);
  for (int t = 0; t < Tf; ++t) {
    double v = 0.0;
    for (int k = 0; k < Ck; ++k) {
      double alpha = 0.0;
      for (int tt = 0; tt < Tf; ++tt)
        alpha += f.grad()[static_cast<size_t>(k) * Tf + tt];
      v += alpha / Tf * f.data()[static_cast<size_t>(k) * Tf + t];
    }
    CHECK(h.at(t, 0) == doctest::Approx(std::max(0.0, v)).epsilon(1e-9));
  }
}

TEST_CASE("rollout of identity layers is the identity") {
  const int T = 4;
  std::vector<double> eye(T * T, 0.0);
  for (int i = 0; i < T; ++i) eye[static_cast<size_t>(i) * T + i] = 1.0;
  ForwardCache cache = attention_only_cache({eye, eye, eye}, T);
  RolloutResult r = attention_rollout(cache);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j)
      CHECK(r.matrix[static_cast<size_t>(i) * T + j] ==
            doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
  for (double v : r.relevance) CHECK(v == doctest::Approx(1.0 / T));
}

TEST_CASE("rollout hand case: one 2x2 layer") {
  // A = [[0.6,0.4],[0.2,0.8]] -> (A+I)/2 rows already sum to 1
  ForwardCache cache = attention_only_cache({{0.6, 0.4, 0.2, 0.8}}, 2);
  RolloutResult r = attention_rollout(cache);
  CHECK(r.matrix[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r.matrix[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(r.matrix[2] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r.matrix[3] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(r.relevance[0] == doctest::Approx(0.45).epsilon(1e-12));
  CHECK(r.relevance[1] == doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("rollout rejects non-stochastic attention rows") {
  ForwardCache cache = attention_only_cache({{0.9, 0.4, 0.2, 0.8}}, 2);
  CHECK_THROWS(attention_rollout(cache));
}

TEST_CASE("global attention averages every layer and head") {
  ForwardCache cache =
      attention_only_cache({{1.0, 0.0, 0.0, 1.0}, {0.5, 0.5, 0.5, 0.5}}, 2);
  const auto m = global_attention(cache);
  CHECK(m[0] == doctest::Approx(0.75));
  CHECK(m[1] == doctest::Approx(0.25));
  ForwardCache empty;
  CHECK_THROWS(global_attention(empty));
}

TEST_CASE("channel saliency isolates the only contributing channel") {
  const int C = 3, T = 8;
  Tensor x = Tensor::zeros({1, C, T}, true);
  for (auto& v : x.data()) v = 0.7;
  // output depends on channel 0 only
  Tensor flat = reshape(x, {C, T});
  Tensor row0 = slice_rows(flat, 0, 1);
  Tensor out = reshape(mean_axis(row0, 1), {1, 1});
  ForwardCache cache;
  cache.input = x;
  cache.resnet_output = out;
  cache.output = out;
  cache.T = T;
  cache.C = C;
  const auto s = channel_saliency(cache, 0, "resnet");
  CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.0));
  CHECK(s[2] == doctest::Approx(0.0));
  CHECK_THROWS(channel_saliency(cache, 0, "nonsense"));
}

TEST_CASE("branch heatmaps are T x C, nonnegative, deterministic") {
  ForwardCache c1 = hybrid_cache(9);
  ForwardCache c2 = hybrid_cache(9);
  Heatmap r1 = resnet_heatmap(c1, 0);
  Heatmap t1 = transformer_heatmap(c1, 0);
  Heatmap r2 = resnet_heatmap(c2, 0);
  CHECK(r1.T == c1.T);
  CHECK(r1.C == c1.C);
  CHECK(t1.T == c1.T);
  CHECK(t1.C == c1.C);
  for (double v : r1.values) CHECK(v >= 0.0);
  for (double v : t1.values) CHECK(v >= 0.0);
  REQUIRE(r1.values.size() == r2.values.size());
  for (size_t i = 0; i < r1.values.size(); ++i)
    CHECK(r1.values[i] == doctest::Approx(r2.values[i]).epsilon(1e-12));
}

TEST_CASE("first-layer filter export has one entry per stem filter") {
  std::mt19937_64 rng(4);
  ResNetConfig cfg;
  ResNet1D model(cfg, 5, rng);
  const auto j = first_layer_filters(model);
  REQUIRE(j.size() == static_cast<size_t>(cfg.stem_filters));
  CHECK(j[0].at("kernel").size() == 5);
  CHECK(j[0].at("kernel")[0].size() == static_cast<size_t>(cfg.stem_kernel));
}
