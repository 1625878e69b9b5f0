#include "tsxplain/saliency.hpp"

#include <cmath>
#include <stdexcept>

#include "tsxplain/fusion.hpp"

namespace tsx {

namespace {

void check_target(const Tensor& out, int target) {
  if (!out.defined()) throw std::logic_error("saliency: cache missing output");
  if (target < 0 || target >= out.dim(1))
    throw std::out_of_range("saliency: target index " + std::to_string(target) +
                            " out of range for " + std::to_string(out.dim(1)) +
                            " outputs");
}

}  // namespace

Heatmap grad_cam(const ForwardCache& cache, int target) {
  if (!cache.has_resnet())
    throw std::logic_error("grad_cam: cache has no ResNet feature maps");
  check_target(cache.resnet_output, target);
  backward(pick(cache.resnet_output, target));
  const Tensor& feat = cache.resnet_features;  // [1,Ck,Tf]
  if (!feat.has_grad())
    throw std::logic_error("grad_cam: feature maps are missing the tape");
  const int Ck = feat.dim(1), Tf = feat.dim(2);
  std::vector<double> alpha(static_cast<size_t>(Ck), 0.0);
  for (int k = 0; k < Ck; ++k) {
    double s = 0.0;
    for (int t = 0; t < Tf; ++t)
      s += feat.grad()[static_cast<size_t>(k) * Tf + t];
    alpha[static_cast<size_t>(k)] = s / Tf;
  }
  Heatmap h(Tf, 1, "resnet");
  for (int t = 0; t < Tf; ++t) {
    double v = 0.0;
    for (int k = 0; k < Ck; ++k)
      v += alpha[static_cast<size_t>(k)] *
           feat.data()[static_cast<size_t>(k) * Tf + t];
    h.at(t, 0) = std::max(0.0, v);
  }
  return h;
}

namespace {

// row-stochasticity check with head-mean computation
std::vector<double> head_mean(const std::vector<Tensor>& heads, int T) {
  std::vector<double> m(static_cast<size_t>(T) * T, 0.0);
  for (const auto& a : heads) {
    if (a.rank() != 2 || a.dim(0) != T || a.dim(1) != T)
      throw std::logic_error("attention map has wrong shape");
    for (size_t i = 0; i < m.size(); ++i) m[i] += a.data()[i];
  }
  for (auto& v : m) v /= static_cast<double>(heads.size());
  for (int i = 0; i < T; ++i) {
    double s = 0.0;
    for (int j = 0; j < T; ++j) s += m[static_cast<size_t>(i) * T + j];
    if (std::abs(s - 1.0) > 1e-6)
      throw std::logic_error("attention map row is not stochastic");
  }
  return m;
}

}  // namespace

RolloutResult attention_rollout(const ForwardCache& cache) {
  if (!cache.has_transformer())
    throw std::logic_error("attention_rollout: cache has no attention maps");
  const int T = cache.T;
  RolloutResult r;
  r.T = T;
  // R starts as identity, multiply A_bar_l from the left per layer
  r.matrix.assign(static_cast<size_t>(T) * T, 0.0);
  for (int i = 0; i < T; ++i) r.matrix[static_cast<size_t>(i) * T + i] = 1.0;
  for (const auto& layer_heads : cache.attention) {
    if (layer_heads.empty())
      throw std::logic_error("attention_rollout: empty layer");
    std::vector<double> a = head_mean(layer_heads, T);
    for (int i = 0; i < T; ++i) {
      a[static_cast<size_t>(i) * T + i] += 1.0;
      double s = 0.0;
      for (int j = 0; j < T; ++j) s += 0.5 * a[static_cast<size_t>(i) * T + j];
      for (int j = 0; j < T; ++j)
        a[static_cast<size_t>(i) * T + j] = 0.5 * a[static_cast<size_t>(i) * T + j] / s;
    }
    // R <- a * R
    std::vector<double> next(static_cast<size_t>(T) * T, 0.0);
    for (int i = 0; i < T; ++i)
      for (int k = 0; k < T; ++k) {
        const double av = a[static_cast<size_t>(i) * T + k];
        if (av == 0.0) continue;
        for (int j = 0; j < T; ++j)
          next[static_cast<size_t>(i) * T + j] +=
              av * r.matrix[static_cast<size_t>(k) * T + j];
      }
    r.matrix = std::move(next);
  }
  r.relevance.assign(static_cast<size_t>(T), 0.0);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j)
      r.relevance[static_cast<size_t>(j)] += r.matrix[static_cast<size_t>(i) * T + j];
  for (auto& v : r.relevance) v /= T;
  return r;
}

std::vector<double> global_attention(const ForwardCache& cache) {
  if (!cache.has_transformer())
    throw std::logic_error("global_attention: cache has no attention maps");
  const int T = cache.T;
  std::vector<double> m(static_cast<size_t>(T) * T, 0.0);
  int count = 0;
  for (const auto& layer_heads : cache.attention)
    for (const auto& a : layer_heads) {
      for (size_t i = 0; i < m.size(); ++i) m[i] += a.data()[i];
      ++count;
    }
  if (count == 0) throw std::logic_error("global_attention: empty cache");
  for (auto& v : m) v /= count;
  return m;
}

std::vector<double> channel_saliency(const ForwardCache& cache, int target,
                                     const std::string& branch) {
  const Tensor* out = nullptr;
  if (branch == "resnet") out = &cache.resnet_output;
  else if (branch == "transformer") out = &cache.transformer_output;
  else if (branch == "combined") out = &cache.output;
  else throw std::invalid_argument("channel_saliency: unknown branch " + branch);
  if (!out->defined())
    throw std::logic_error("channel_saliency: branch output missing");
  check_target(*out, target);
  if (!cache.input.requires_grad())
    throw std::logic_error("channel_saliency: input gradients not requested");
  backward(pick(*out, target));
  const int C = cache.C, T = cache.T;
  std::vector<double> s(static_cast<size_t>(C), 0.0);
  // input layout [1,C,T]
  for (int c = 0; c < C; ++c) {
    double acc = 0.0;
    for (int t = 0; t < T; ++t)
      acc += std::abs(cache.input.grad()[static_cast<size_t>(c) * T + t]);
    s[static_cast<size_t>(c)] = acc / T;
  }
  double total = 0.0;
  for (double v : s) total += v;
  if (total > 0.0)
    for (auto& v : s) v /= total;
  else
    for (auto& v : s) v = 1.0 / C;
  return s;
}

Heatmap transformer_heatmap(const ForwardCache& cache, int target) {
  RolloutResult roll = attention_rollout(cache);
  std::vector<double> r = roll.relevance;
  double rsum = 0.0;
  for (double v : r) rsum += v;
  if (rsum > 0.0)
    for (auto& v : r) v /= rsum;
  else
    for (auto& v : r) v = 1.0 / roll.T;
  std::vector<double> s = channel_saliency(cache, target, "transformer");
  Heatmap h(cache.T, cache.C, "transformer");
  for (int t = 0; t < cache.T; ++t)
    for (int c = 0; c < cache.C; ++c)
      h.at(t, c) = r[static_cast<size_t>(t)] * s[static_cast<size_t>(c)];
  return h;
}

Heatmap resnet_heatmap(const ForwardCache& cache, int target) {
  Heatmap cam = grad_cam(cache, target);
  Heatmap cam_t = upsample_linear(cam, cache.T);
  std::vector<double> s = channel_saliency(cache, target, "resnet");
  double csum = 0.0;
  for (double v : cam_t.values) csum += v;
  Heatmap h(cache.T, cache.C, "resnet");
  for (int t = 0; t < cache.T; ++t) {
    const double r = csum > 0.0 ? cam_t.at(t, 0) / csum : 1.0 / cache.T;
    for (int c = 0; c < cache.C; ++c)
      h.at(t, c) = r * s[static_cast<size_t>(c)];
  }
  return h;
}

std::vector<ErfEntry> effective_receptive_field(const ResNetConfig& cfg) {
  std::vector<ErfEntry> out;
  double erf = 1.0;
  double stride_prod = 1.0;
  auto push = [&](const std::string& name, int k, int s) {
    erf = erf + (k - 1) * stride_prod;
    stride_prod *= s;
    out.push_back({name, k, s, erf});
  };
  push("stem.conv", cfg.stem_kernel, cfg.stem_stride);
  push("stem.pool", 3, 2);
  for (size_t st = 0; st < cfg.stage_filters.size(); ++st)
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const int stride = (st > 0 && b == 0) ? 2 : 1;
      const std::string p =
          "stage" + std::to_string(st) + ".block" + std::to_string(b);
      push(p + ".conv1", 3, stride);
      push(p + ".conv2", 3, 1);
    }
  return out;
}

nlohmann::json first_layer_filters(const ResNet1D& model) {
  const Tensor& w = const_cast<ResNet1D&>(model).parameters().at("stem.w");
  const int Co = w.dim(0), Ci = w.dim(1), K = w.dim(2);
  nlohmann::json arr = nlohmann::json::array();
  for (int f = 0; f < Co; ++f) {
    nlohmann::json kernel = nlohmann::json::array();
    for (int c = 0; c < Ci; ++c) {
      std::vector<double> wave(static_cast<size_t>(K));
      for (int k = 0; k < K; ++k)
        wave[static_cast<size_t>(k)] =
            w.data()[(static_cast<size_t>(f) * Ci + c) * K + k];
      kernel.push_back(wave);
    }
    arr.push_back({{"index", f}, {"kernel", kernel}});
  }
  return arr;
}

}  // namespace tsx
