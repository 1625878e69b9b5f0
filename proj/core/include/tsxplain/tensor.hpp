#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsx {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

/// One node of the computation graph. `backward_fn` reads this node's grad
/// and accumulates into the parents' grads.
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;
  std::vector<TensorImplPtr> parents;
  std::function<void(TensorImpl&)> backward_fn;

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

/// Dense float64 tensor with optional participation in the gradient tape.
/// Value-semantic handle; copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                      bool requires_grad = false);
  static Tensor kaiming_uniform(Shape shape, int fan_in, std::mt19937_64& rng);

  bool defined() const { return impl != nullptr; }
  const Shape& shape() const { return impl->shape; }
  int rank() const { return static_cast<int>(impl->shape.size()); }
  int dim(int i) const { return impl->shape.at(static_cast<size_t>(i)); }
  int64_t size() const { return impl->size(); }
  std::vector<double>& data() { return impl->data; }
  const std::vector<double>& data() const { return impl->data; }
  bool requires_grad() const { return impl->requires_grad; }
  void set_requires_grad(bool rg) { impl->requires_grad = rg; }
  const std::vector<double>& grad() const { return impl->grad; }
  bool has_grad() const { return impl->grad.size() == impl->data.size(); }

  double item() const;
  double& at(int i) { return impl->data[static_cast<size_t>(i)]; }
  double at(int i) const { return impl->data[static_cast<size_t>(i)]; }
  double& at(int i, int j);
  double at(int i, int j) const;
  double& at(int i, int j, int k);
  double at(int i, int j, int k) const;

  /// Deep copy, detached from the graph.
  Tensor clone_detached() const;

  TensorImplPtr impl;
};

/// Topologically ordered record of the graph reachable from a root.
/// Inputs always precede the nodes that consume them.
struct Tape {
  std::vector<TensorImpl*> order;
  static Tape record(const Tensor& root);
};

/// Reverse-mode sweep from a scalar loss. Grads of every node reachable from
/// `loss` are zeroed first, then accumulated; each node is visited once.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);
void check_finite(const Tensor& t, const char* what);

// ---- differentiable ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K]x[K,N] -> [M,N]
/// Rows of x (flattened to [R,K]) times W [K,N] plus bias [N]; keeps leading
/// dims of x with the last dim replaced by N.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// x: [C_in,T] or [N,C_in,T]; w: [C_out,C_in,K]; b: [C_out] or undefined.
/// Output length T' = floor((T + 2*padding - K)/stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor softmax(const Tensor& a, int axis);
/// Row-wise softmax of x [R,C] restricted to mask==1 entries; masked cells
/// are exactly zero in the output.
Tensor masked_softmax_rows(const Tensor& x, const std::vector<uint8_t>& mask);

/// Normalize along `axis` to mean 0, variance 1 (population), no affine.
Tensor layer_norm(const Tensor& a, int axis, double eps);
/// Multiply/add along the last axis: y[...,j] = x[...,j]*gamma[j] + beta[j].
Tensor scale_shift_lastdim(const Tensor& x, const Tensor& gamma,
                           const Tensor& beta);

/// Canonical batch norm over (N,T) per channel for x [N,C,T]. In training
/// mode batch statistics are used and running stats updated in place.
Tensor batch_norm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    std::vector<double>& running_mean,
                    std::vector<double>& running_var, bool training,
                    double momentum, double eps);

Tensor max_pool1d(const Tensor& x, int kernel, int stride, int padding);
Tensor global_avg_pool(const Tensor& x);  // [N,C,T] -> [N,C]
Tensor mean_axis(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor pick(const Tensor& x, int64_t flat_index);  // scalar view

Tensor slice_rows(const Tensor& x, int start, int len);  // 2-D
Tensor slice_cols(const Tensor& x, int start, int len);  // 2-D
Tensor concat_cols(const std::vector<Tensor>& parts);    // 2-D
Tensor concat_rows(const std::vector<Tensor>& parts);    // 2-D, same col count
Tensor select_outer(const Tensor& x, int n);  // [N,...] -> [...] at index n
Tensor mul_bcast_scalar(const Tensor& x, const Tensor& s);  // s is [1]
Tensor transpose2d(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training);

/// Mean Huber loss between pred (flattened) and targets.
Tensor huber_loss(const Tensor& pred, const std::vector<double>& targets,
                  double delta);
/// Mean cross-entropy from logits [N,K] and integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace tsx
