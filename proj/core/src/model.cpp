#include "tsxplain/model.hpp"

#include <cmath>
#include <stdexcept>

namespace tsx {

using nlohmann::json;

std::string task_name(Task t) {
  return t == Task::classification ? "classification" : "regression";
}

Task task_from_name(const std::string& s) {
  if (s == "classification") return Task::classification;
  if (s == "regression") return Task::regression;
  throw std::invalid_argument("unknown task: " + s);
}

// ---- configs ----

void ResNetConfig::validate() const {
  if (stem_kernel % 2 == 0)
    throw std::invalid_argument("resnet config: stem kernel must be odd");
  if (stage_filters.empty())
    throw std::invalid_argument("resnet config: no stages");
  for (size_t i = 1; i < stage_filters.size(); ++i)
    if (stage_filters[i] < stage_filters[i - 1])
      throw std::invalid_argument(
          "resnet config: stage filters must be nondecreasing");
  if (blocks_per_stage < 1 || num_outputs < 1)
    throw std::invalid_argument("resnet config: bad block/output count");
}

json ResNetConfig::to_json() const {
  return json{{"stem_filters", stem_filters},   {"stem_kernel", stem_kernel},
              {"stem_stride", stem_stride},     {"stage_filters", stage_filters},
              {"blocks_per_stage", blocks_per_stage},
              {"num_outputs", num_outputs},     {"task", task_name(task)}};
}

ResNetConfig ResNetConfig::from_json(const json& j) {
  ResNetConfig c;
  c.stem_filters = j.at("stem_filters");
  c.stem_kernel = j.at("stem_kernel");
  c.stem_stride = j.at("stem_stride");
  c.stage_filters = j.at("stage_filters").get<std::vector<int>>();
  c.blocks_per_stage = j.at("blocks_per_stage");
  c.num_outputs = j.at("num_outputs");
  c.task = task_from_name(j.at("task"));
  return c;
}

void TransformerConfig::validate() const {
  if (embed_dim != heads * head_dim)
    throw std::invalid_argument(
        "transformer config: embed_dim must equal heads*head_dim");
  if (layers < 1) throw std::invalid_argument("transformer config: layers < 1");
  if (attention_mode == AttentionMode::windowed && window % 2 == 0)
    throw std::invalid_argument("transformer config: window must be odd");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("transformer config: dropout out of range");
}

json TransformerConfig::to_json() const {
  return json{{"embed_dim", embed_dim},
              {"layers", layers},
              {"heads", heads},
              {"head_dim", head_dim},
              {"attention_mode",
               attention_mode == AttentionMode::dense ? "dense" : "windowed"},
              {"window", window},
              {"dropout", dropout},
              {"num_outputs", num_outputs},
              {"max_positions", max_positions},
              {"task", task_name(task)}};
}

TransformerConfig TransformerConfig::from_json(const json& j) {
  TransformerConfig c;
  c.embed_dim = j.at("embed_dim");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.head_dim = j.at("head_dim");
  c.attention_mode = j.at("attention_mode") == "dense" ? AttentionMode::dense
                                                       : AttentionMode::windowed;
  c.window = j.at("window");
  c.dropout = j.at("dropout");
  c.num_outputs = j.at("num_outputs");
  c.max_positions = j.at("max_positions");
  c.task = task_from_name(j.at("task"));
  return c;
}

// ---- shared helpers ----

namespace {

void add_bn(std::map<std::string, Tensor>& params,
            std::map<std::string, Tensor>& buffers, const std::string& prefix,
            int channels) {
  params[prefix + ".gamma"] = Tensor::full({channels}, 1.0, true);
  params[prefix + ".beta"] = Tensor::zeros({channels}, true);
  buffers[prefix + ".mean"] = Tensor::zeros({channels});
  buffers[prefix + ".var"] = Tensor::full({channels}, 1.0);
}

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kLnEps = 1e-5;

}  // namespace

// ---- ResNet1D ----

ResNet1D::ResNet1D(ResNetConfig cfg, int in_channels, std::mt19937_64& rng)
    : cfg_(std::move(cfg)), in_channels_(in_channels) {
  cfg_.validate();
  params_["stem.w"] = Tensor::kaiming_uniform(
      {cfg_.stem_filters, in_channels, cfg_.stem_kernel},
      in_channels * cfg_.stem_kernel, rng);
  add_bn(params_, buffers_, "stem.bn", cfg_.stem_filters);
  int in_ch = cfg_.stem_filters;
  for (size_t s = 0; s < cfg_.stage_filters.size(); ++s) {
    const int out_ch = cfg_.stage_filters[s];
    for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
      const std::string p =
          "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const int block_in = (b == 0) ? in_ch : out_ch;
      params_[p + ".conv1.w"] =
          Tensor::kaiming_uniform({out_ch, block_in, 3}, block_in * 3, rng);
      add_bn(params_, buffers_, p + ".bn1", out_ch);
      params_[p + ".conv2.w"] =
          Tensor::kaiming_uniform({out_ch, out_ch, 3}, out_ch * 3, rng);
      add_bn(params_, buffers_, p + ".bn2", out_ch);
      if (stride != 1 || block_in != out_ch) {
        params_[p + ".proj.w"] =
            Tensor::kaiming_uniform({out_ch, block_in, 1}, block_in, rng);
        add_bn(params_, buffers_, p + ".proj.bn", out_ch);
      }
    }
    in_ch = out_ch;
  }
  const int head_in = cfg_.stage_filters.back();
  params_["head.w"] =
      Tensor::kaiming_uniform({head_in, cfg_.num_outputs}, head_in, rng);
  params_["head.b"] = Tensor::zeros({cfg_.num_outputs}, true);
}

Tensor ResNet1D::block_forward(const Tensor& x, const std::string& p,
                               int stride, bool project, bool training) {
  Tensor y = conv1d(x, params_[p + ".conv1.w"], Tensor{}, stride, 1);
  y = batch_norm1d(y, params_[p + ".bn1.gamma"], params_[p + ".bn1.beta"],
                   buffers_[p + ".bn1.mean"].data(),
                   buffers_[p + ".bn1.var"].data(), training, kBnMomentum,
                   kBnEps);
  y = relu(y);
  y = conv1d(y, params_[p + ".conv2.w"], Tensor{}, 1, 1);
  y = batch_norm1d(y, params_[p + ".bn2.gamma"], params_[p + ".bn2.beta"],
                   buffers_[p + ".bn2.mean"].data(),
                   buffers_[p + ".bn2.var"].data(), training, kBnMomentum,
                   kBnEps);
  Tensor skip = x;
  if (project) {
    skip = conv1d(x, params_[p + ".proj.w"], Tensor{}, stride, 0);
    skip = batch_norm1d(skip, params_[p + ".proj.bn.gamma"],
                        params_[p + ".proj.bn.beta"],
                        buffers_[p + ".proj.bn.mean"].data(),
                        buffers_[p + ".proj.bn.var"].data(), training,
                        kBnMomentum, kBnEps);
  }
  return relu(add(y, skip));
}

Tensor ResNet1D::forward(const Tensor& x, bool training, std::mt19937_64& rng,
                         ForwardCache* cache) {
  (void)rng;
  if (x.rank() != 3 || x.dim(1) != in_channels_)
    throw std::invalid_argument("resnet forward: expected [N," +
                                std::to_string(in_channels_) + ",T] input");
  if (x.dim(2) < cfg_.stem_kernel)
    throw std::invalid_argument("resnet forward: T shorter than stem kernel");
  Tensor h = conv1d(x, params_["stem.w"], Tensor{}, cfg_.stem_stride,
                    cfg_.stem_kernel / 2);
  h = batch_norm1d(h, params_["stem.bn.gamma"], params_["stem.bn.beta"],
                   buffers_["stem.bn.mean"].data(),
                   buffers_["stem.bn.var"].data(), training, kBnMomentum,
                   kBnEps);
  h = relu(h);
  h = max_pool1d(h, 3, 2, 1);
  int in_ch = cfg_.stem_filters;
  for (size_t s = 0; s < cfg_.stage_filters.size(); ++s) {
    const int out_ch = cfg_.stage_filters[s];
    for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
      const std::string p =
          "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const int block_in = (b == 0) ? in_ch : out_ch;
      const bool project = (stride != 1 || block_in != out_ch);
      h = block_forward(h, p, stride, project, training);
    }
    in_ch = out_ch;
  }
  if (cache) cache->resnet_features = h;
  Tensor pooled = global_avg_pool(h);  // [N,Cf]
  Tensor out = linear(pooled, params_["head.w"], params_["head.b"]);
  check_finite(out, "resnet output");
  if (cache) {
    cache->resnet_output = out;
    cache->output = out;
    cache->input = x;
    cache->C = x.dim(1);
    cache->T = x.dim(2);
  }
  return out;
}

json ResNet1D::config_json() const {
  return json{{"kind", "resnet"},
              {"in_channels", in_channels_},
              {"resnet", cfg_.to_json()}};
}

// ---- Transformer2D ----

Transformer2D::Transformer2D(TransformerConfig cfg, int in_channels,
                             std::mt19937_64& rng)
    : cfg_(std::move(cfg)), in_channels_(in_channels) {
  cfg_.validate();
  const int D = cfg_.embed_dim;
  params_["embed.w"] = Tensor::kaiming_uniform({in_channels, D}, in_channels, rng);
  params_["embed.b"] = Tensor::zeros({D}, true);
  params_["embed.ln.gamma"] = Tensor::full({D}, 1.0, true);
  params_["embed.ln.beta"] = Tensor::zeros({D}, true);
  params_["posemb"] = Tensor::randn({cfg_.max_positions, D}, rng, 0.02, true);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    for (const char* nm : {"wq", "wk", "wv", "wo"})
      params_[p + "." + nm] = Tensor::kaiming_uniform({D, D}, D, rng);
    for (const char* nm : {"bq", "bk", "bv", "bo"})
      params_[p + "." + nm] = Tensor::zeros({D}, true);
    params_[p + ".ffn.w1"] = Tensor::kaiming_uniform({D, 4 * D}, D, rng);
    params_[p + ".ffn.b1"] = Tensor::zeros({4 * D}, true);
    params_[p + ".ffn.w2"] = Tensor::kaiming_uniform({4 * D, D}, 4 * D, rng);
    params_[p + ".ffn.b2"] = Tensor::zeros({D}, true);
  }
  params_["head.w"] = Tensor::kaiming_uniform({D, cfg_.num_outputs}, D, rng);
  params_["head.b"] = Tensor::zeros({cfg_.num_outputs}, true);
}

Tensor Transformer2D::embed(const Tensor& x_tc) const {
  const int T = x_tc.dim(0);
  if (x_tc.rank() != 2 || x_tc.dim(1) != in_channels_)
    throw std::invalid_argument("embed: expected [T,C] sample");
  if (T > cfg_.max_positions)
    throw std::invalid_argument("embed: T=" + std::to_string(T) +
                                " exceeds max positions " +
                                std::to_string(cfg_.max_positions));
  Tensor z = patch_embed(x_tc, params_.at("embed.w"), params_.at("embed.b"));
  z = scale_shift_lastdim(z, params_.at("embed.ln.gamma"),
                          params_.at("embed.ln.beta"));
  return add(z, slice_rows(params_.at("posemb"), 0, T));
}

Tensor Transformer2D::layer_forward(const Tensor& z, int layer, bool training,
                                    std::mt19937_64& rng,
                                    std::vector<Tensor>* heads_out) {
  const std::string p = "layer" + std::to_string(layer);
  const int T = z.dim(0);
  const int D = cfg_.embed_dim, h = cfg_.heads, dk = cfg_.head_dim;
  Tensor q = linear(z, params_[p + ".wq"], params_[p + ".bq"]);
  Tensor k = linear(z, params_[p + ".wk"], params_[p + ".bk"]);
  Tensor v = linear(z, params_[p + ".wv"], params_[p + ".bv"]);
  // windowed mode zeroes attention outside |i-j| <= w before the softmax
  std::vector<uint8_t> mask(static_cast<size_t>(T) * T, 1);
  if (cfg_.attention_mode == AttentionMode::windowed) {
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < T; ++j)
        if (std::abs(i - j) > cfg_.window)
          mask[static_cast<size_t>(i) * T + j] = 0;
  }
  std::vector<Tensor> heads;
  heads.reserve(h);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int i = 0; i < h; ++i) {
    Tensor qi = slice_cols(q, i * dk, dk);
    Tensor ki = slice_cols(k, i * dk, dk);
    Tensor vi = slice_cols(v, i * dk, dk);
    Tensor scores = scale(matmul(qi, transpose2d(ki)), inv_sqrt_dk);
    Tensor attn = masked_softmax_rows(scores, mask);
    if (heads_out) heads_out->push_back(attn);
    heads.push_back(matmul(attn, vi));
  }
  Tensor concat = concat_cols(heads);
  Tensor attn_out = linear(concat, params_[p + ".wo"], params_[p + ".bo"]);
  attn_out = dropout(attn_out, cfg_.dropout, rng, training);
  Tensor z1 = add(z, attn_out);
  Tensor f = linear(gelu(linear(z1, params_[p + ".ffn.w1"], params_[p + ".ffn.b1"])),
                    params_[p + ".ffn.w2"], params_[p + ".ffn.b2"]);
  f = dropout(f, cfg_.dropout, rng, training);
  (void)D;
  return add(z1, f);
}

Tensor Transformer2D::forward(const Tensor& x, bool training,
                              std::mt19937_64& rng, ForwardCache* cache) {
  if (x.rank() != 3 || x.dim(1) != in_channels_)
    throw std::invalid_argument("transformer forward: expected [N,C,T] input");
  const int N = x.dim(0);
  if (cache && N != 1)
    throw std::invalid_argument("transformer forward: cache requires N==1");
  if (cache) cache->attention.assign(cfg_.layers, {});
  std::vector<Tensor> pooled;
  pooled.reserve(N);
  for (int n = 0; n < N; ++n) {
    Tensor z = embed(transpose2d(select_outer(x, n)));
    for (int l = 0; l < cfg_.layers; ++l) {
      std::vector<Tensor>* heads = cache ? &cache->attention[l] : nullptr;
      z = layer_forward(z, l, training, rng, heads);
    }
    pooled.push_back(reshape(mean_axis(z, 0), {1, cfg_.embed_dim}));
  }
  Tensor rep = concat_rows(pooled);
  Tensor out = linear(rep, params_["head.w"], params_["head.b"]);
  check_finite(out, "transformer output");
  if (cache) {
    cache->transformer_output = out;
    cache->output = out;
    cache->input = x;
    cache->C = x.dim(1);
    cache->T = x.dim(2);
  }
  return out;
}

json Transformer2D::config_json() const {
  return json{{"kind", "transformer"},
              {"in_channels", in_channels_},
              {"transformer", cfg_.to_json()}};
}

// ---- hybrid ----

HybridModel::HybridModel(ResNetConfig rcfg, TransformerConfig tcfg,
                         int in_channels, std::mt19937_64& rng) {
  if (rcfg.task != tcfg.task || rcfg.num_outputs != tcfg.num_outputs)
    throw std::invalid_argument("hybrid: branch task/output mismatch");
  resnet_ = std::make_unique<ResNet1D>(std::move(rcfg), in_channels, rng);
  transformer_ = std::make_unique<Transformer2D>(std::move(tcfg), in_channels, rng);
  for (auto& [k, v] : resnet_->parameters()) params_["resnet." + k] = v;
  for (auto& [k, v] : transformer_->parameters())
    params_["transformer." + k] = v;
  for (auto& [k, v] : resnet_->buffers()) buffers_["resnet." + k] = v;
  for (auto& [k, v] : transformer_->buffers())
    buffers_["transformer." + k] = v;
  params_["gate"] = Tensor::zeros({1}, true);
}

Tensor HybridModel::forward(const Tensor& x, bool training,
                            std::mt19937_64& rng, ForwardCache* cache) {
  Tensor ro = resnet_->forward(x, training, rng, cache);
  Tensor to = transformer_->forward(x, training, rng, cache);
  Tensor s = sigmoid(params_["gate"]);
  Tensor out = add(mul_bcast_scalar(ro, s),
                   mul_bcast_scalar(to, add_scalar(neg(s), 1.0)));
  if (cache) {
    cache->resnet_output = ro;
    cache->transformer_output = to;
    cache->output = out;
    cache->input = x;
    cache->C = x.dim(1);
    cache->T = x.dim(2);
  }
  return out;
}

double HybridModel::gate_value() const {
  return 1.0 / (1.0 + std::exp(-params_.at("gate").data()[0]));
}

void HybridModel::set_gate_logit(double v) { params_["gate"].data()[0] = v; }

json HybridModel::config_json() const {
  return json{{"kind", "hybrid"},
              {"in_channels", resnet_->in_channels()},
              {"resnet", resnet_->config().to_json()},
              {"transformer", transformer_->config().to_json()}};
}

// ---- free functions ----

Tensor patch_embed(const Tensor& x_tc, const Tensor& w_p, const Tensor& b_p) {
  return layer_norm(linear(x_tc, w_p, b_p), 1, kLnEps);
}

Tensor to_model_input(const std::vector<std::vector<double>>& samples, int T,
                      int C, bool requires_grad) {
  const int N = static_cast<int>(samples.size());
  std::vector<double> data(static_cast<size_t>(N) * C * T);
  for (int n = 0; n < N; ++n) {
    if (static_cast<int>(samples[static_cast<size_t>(n)].size()) != T * C)
      throw std::invalid_argument("to_model_input: sample size mismatch");
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < C; ++c)
        data[(static_cast<size_t>(n) * C + c) * T + t] =
            samples[static_cast<size_t>(n)][static_cast<size_t>(t) * C + c];
  }
  return Tensor({N, C, T}, std::move(data), requires_grad);
}

std::unique_ptr<Model> make_model(const std::string& kind, Task task,
                                  int num_outputs, int in_channels, int T,
                                  std::mt19937_64& rng) {
  ResNetConfig rc;
  rc.task = task;
  rc.num_outputs = num_outputs;
  TransformerConfig tc;
  tc.task = task;
  tc.num_outputs = num_outputs;
  tc.max_positions = std::max(tc.max_positions, T);
  if (kind == "resnet") return std::make_unique<ResNet1D>(rc, in_channels, rng);
  if (kind == "transformer")
    return std::make_unique<Transformer2D>(tc, in_channels, rng);
  if (kind == "hybrid")
    return std::make_unique<HybridModel>(rc, tc, in_channels, rng);
  throw std::invalid_argument("unknown model kind: " + kind +
                              " (choices: resnet, transformer, hybrid)");
}

std::unique_ptr<Model> model_from_config(const json& cfg,
                                         std::mt19937_64& rng) {
  const std::string kind = cfg.at("kind");
  const int in_channels = cfg.at("in_channels");
  if (kind == "resnet")
    return std::make_unique<ResNet1D>(ResNetConfig::from_json(cfg.at("resnet")),
                                      in_channels, rng);
  if (kind == "transformer")
    return std::make_unique<Transformer2D>(
        TransformerConfig::from_json(cfg.at("transformer")), in_channels, rng);
  if (kind == "hybrid")
    return std::make_unique<HybridModel>(
        ResNetConfig::from_json(cfg.at("resnet")),
        TransformerConfig::from_json(cfg.at("transformer")), in_channels, rng);
  throw std::invalid_argument("unknown model kind in config: " + kind);
}

}  // namespace tsx
