#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsxplain/tensor.hpp"

namespace tsx {

enum class Task { classification, regression };

std::string task_name(Task t);
Task task_from_name(const std::string& s);

struct ResNetConfig {
  int stem_filters = 16;
  int stem_kernel = 7;
  int stem_stride = 2;
  std::vector<int> stage_filters = {16, 32, 64};
  int blocks_per_stage = 2;
  int num_outputs = 2;
  Task task = Task::classification;
  void validate() const;
  nlohmann::json to_json() const;
  static ResNetConfig from_json(const nlohmann::json& j);
};

enum class AttentionMode { dense, windowed };

struct TransformerConfig {
  int embed_dim = 32;   // D = heads * head_dim
  int layers = 3;
  int heads = 4;
  int head_dim = 8;
  AttentionMode attention_mode = AttentionMode::dense;
  int window = 9;       // odd, used when windowed
  double dropout = 0.1;
  int num_outputs = 2;
  int max_positions = 256;
  Task task = Task::classification;
  void validate() const;
  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
};

/// Everything the saliency pass needs from a single-sample forward.
/// All tensors stay attached to the tape so gradients can be pulled.
struct ForwardCache {
  Tensor input;              // [1,C,T], requires_grad
  Tensor output;             // [1,K] model output
  Tensor resnet_output;      // branch outputs when present
  Tensor transformer_output;
  Tensor resnet_features;    // [1,Cf,Tf] last-stage feature maps
  std::vector<std::vector<Tensor>> attention;  // [L][h], each [T,T] row-stochastic
  int T = 0, C = 0;
  bool has_resnet() const { return resnet_features.defined(); }
  bool has_transformer() const { return !attention.empty(); }
};

class Model {
 public:
  virtual ~Model() = default;
  /// x: [N,C,T]. Returns [N,num_outputs]. `cache`, when non-null, requires N==1.
  virtual Tensor forward(const Tensor& x, bool training, std::mt19937_64& rng,
                         ForwardCache* cache = nullptr) = 0;
  virtual std::map<std::string, Tensor>& parameters() = 0;
  /// Non-trainable state (running statistics); Tensors with requires_grad=false.
  virtual std::map<std::string, Tensor>& buffers() = 0;
  virtual Task task() const = 0;
  virtual int num_outputs() const = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json config_json() const = 0;
};

class ResNet1D : public Model {
 public:
  ResNet1D(ResNetConfig cfg, int in_channels, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training, std::mt19937_64& rng,
                 ForwardCache* cache = nullptr) override;
  std::map<std::string, Tensor>& parameters() override { return params_; }
  std::map<std::string, Tensor>& buffers() override { return buffers_; }
  Task task() const override { return cfg_.task; }
  int num_outputs() const override { return cfg_.num_outputs; }
  std::string kind() const override { return "resnet"; }
  nlohmann::json config_json() const override;
  const ResNetConfig& config() const { return cfg_; }
  int in_channels() const { return in_channels_; }

 private:
  Tensor block_forward(const Tensor& x, const std::string& prefix, int stride,
                       bool project, bool training);
  ResNetConfig cfg_;
  int in_channels_;
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> buffers_;
};

class Transformer2D : public Model {
 public:
  Transformer2D(TransformerConfig cfg, int in_channels, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training, std::mt19937_64& rng,
                 ForwardCache* cache = nullptr) override;
  std::map<std::string, Tensor>& parameters() override { return params_; }
  std::map<std::string, Tensor>& buffers() override { return buffers_; }
  Task task() const override { return cfg_.task; }
  int num_outputs() const override { return cfg_.num_outputs; }
  std::string kind() const override { return "transformer"; }
  nlohmann::json config_json() const override;
  const TransformerConfig& config() const { return cfg_; }
  int in_channels() const { return in_channels_; }

  /// Projects one sample [T,C] into the token sequence [T,D]:
  /// LayerNorm(x W_p + b_p) with learned affine, plus positional embedding.
  Tensor embed(const Tensor& x_tc) const;
  /// One attention+feed-forward block: z' = z + MHSA(z); out = z' + FFN(z').
  /// Per-head [T,T] attention maps are appended to `heads` when non-null.
  Tensor layer_forward(const Tensor& z, int layer, bool training,
                       std::mt19937_64& rng, std::vector<Tensor>* heads);

 private:
  TransformerConfig cfg_;
  int in_channels_;
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> buffers_;
};

class HybridModel : public Model {
 public:
  HybridModel(ResNetConfig rcfg, TransformerConfig tcfg, int in_channels,
              std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training, std::mt19937_64& rng,
                 ForwardCache* cache = nullptr) override;
  std::map<std::string, Tensor>& parameters() override { return params_; }
  std::map<std::string, Tensor>& buffers() override { return buffers_; }
  Task task() const override { return resnet_->task(); }
  int num_outputs() const override { return resnet_->num_outputs(); }
  std::string kind() const override { return "hybrid"; }
  nlohmann::json config_json() const override;
  ResNet1D& resnet() { return *resnet_; }
  Transformer2D& transformer() { return *transformer_; }
  /// Convex-combination weight for the ResNet branch, sigmoid(gate) in (0,1).
  double gate_value() const;
  void set_gate_logit(double v);

 private:
  std::unique_ptr<ResNet1D> resnet_;
  std::unique_ptr<Transformer2D> transformer_;
  std::map<std::string, Tensor> params_;  // merged view incl. gate
  std::map<std::string, Tensor> buffers_;
};

/// Free-standing patch embedding (no positional term): LayerNorm(x W_p + b_p).
Tensor patch_embed(const Tensor& x_tc, const Tensor& w_p, const Tensor& b_p);

/// Stack samples laid out [T,C] (row-major) into a model input [N,C,T].
Tensor to_model_input(const std::vector<std::vector<double>>& samples, int T,
                      int C, bool requires_grad = false);

std::unique_ptr<Model> make_model(const std::string& kind, Task task,
                                  int num_outputs, int in_channels, int T,
                                  std::mt19937_64& rng);
std::unique_ptr<Model> model_from_config(const nlohmann::json& cfg,
                                         std::mt19937_64& rng);

}  // namespace tsx
