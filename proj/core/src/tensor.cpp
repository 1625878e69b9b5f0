#include "tsxplain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace tsx {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor({1}, {v}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  int64_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  int64_t n = shape_numel(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> d(n);
  for (auto& v : d) v = dist(rng);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::kaiming_uniform(Shape shape, int fan_in, std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / std::max(1, fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  int64_t n = shape_numel(shape);
  std::vector<double> d(n);
  for (auto& v : d) v = dist(rng);
  return Tensor(std::move(shape), std::move(d), true);
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item(): tensor is not scalar");
  return impl->data[0];
}

double& Tensor::at(int i, int j) {
  return impl->data[static_cast<size_t>(i) * dim(rank() - 1) + j];
}
double Tensor::at(int i, int j) const {
  return impl->data[static_cast<size_t>(i) * dim(rank() - 1) + j];
}
double& Tensor::at(int i, int j, int k) {
  return impl->data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
}
double Tensor::at(int i, int j, int k) const {
  return impl->data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
}

Tensor Tensor::clone_detached() const {
  return Tensor(impl->shape, impl->data, false);
}

namespace {

Tensor make_node(Shape shape, std::vector<double> data,
                 std::vector<TensorImplPtr> parents,
                 std::function<void(TensorImpl&)> backward_fn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  Tensor out(std::move(shape), std::move(data), rg);
  if (rg) {
    out.impl->parents = std::move(parents);
    out.impl->backward_fn = std::move(backward_fn);
  }
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

}  // namespace

Tape Tape::record(const Tensor& root) {
  Tape tape;
  // Iterative DFS post-order; marks: 0 unseen, 1 in progress, 2 done.
  std::unordered_map<TensorImpl*, int> mark;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(root.impl.get(), 0);
  mark[root.impl.get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      int& m = mark[p];
      if (m == 1) throw std::logic_error("tape: cycle detected");
      if (m == 0) {
        m = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      mark[node] = 2;
      tape.order.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  if (!loss.requires_grad())
    throw std::logic_error("backward: loss is detached from the tape");
  Tape tape = Tape::record(loss);
  for (TensorImpl* n : tape.order) {
    n->grad.assign(n->data.size(), 0.0);
  }
  loss.impl->grad[0] = 1.0;
  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    TensorImpl* n = *it;
    if (n->backward_fn) {
      for (auto& p : n->parents) p->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

void check_finite(const Tensor& t, const char* what) {
  if (!all_finite(t))
    throw std::runtime_error(std::string("non-finite values in ") + what);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto pa = a.impl, pb = b.impl;
  return make_node(a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i) {
      if (pa->requires_grad) pa->grad[i] += o.grad[i];
      if (pb->requires_grad) pb->grad[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto pa = a.impl, pb = b.impl;
  return make_node(a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i) {
      if (pa->requires_grad) pa->grad[i] += o.grad[i];
      if (pb->requires_grad) pb->grad[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto pa = a.impl, pb = b.impl;
  return make_node(a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i) {
      if (pa->requires_grad) pa->grad[i] += o.grad[i] * pb->data[i];
      if (pb->requires_grad) pb->grad[i] += o.grad[i] * pa->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * s;
  auto pa = a.impl;
  return make_node(a.shape(), std::move(out), {pa}, [pa, s](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + s;
  auto pa = a.impl;
  return make_node(a.shape(), std::move(out), {pa}, [pa](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<double> out(static_cast<size_t>(M) * N, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k) {
      const double av = ad[static_cast<size_t>(i) * K + k];
      const double* brow = bd + static_cast<size_t>(k) * N;
      double* orow = out.data() + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) orow[j] += av * brow[j];
    }
  auto pa = a.impl, pb = b.impl;
  return make_node({M, N}, std::move(out), {pa, pb},
                   [pa, pb, M, K, N](TensorImpl& o) {
                     // dA = dO * B^T ; dB = A^T * dO
                     if (pa->requires_grad) {
                       for (int i = 0; i < M; ++i)
                         for (int j = 0; j < N; ++j) {
                           double g = o.grad[static_cast<size_t>(i) * N + j];
                           if (g == 0.0) continue;
                           for (int k = 0; k < K; ++k)
                             pa->grad[static_cast<size_t>(i) * K + k] +=
                                 g * pb->data[static_cast<size_t>(k) * N + j];
                         }
                     }
                     if (pb->requires_grad) {
                       for (int i = 0; i < M; ++i)
                         for (int k = 0; k < K; ++k) {
                           double av = pa->data[static_cast<size_t>(i) * K + k];
                           if (av == 0.0) continue;
                           for (int j = 0; j < N; ++j)
                             pb->grad[static_cast<size_t>(k) * N + j] +=
                                 av * o.grad[static_cast<size_t>(i) * N + j];
                         }
                     }
                   });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2)
    throw std::invalid_argument("linear: weight must be 2-D");
  const int K = w.dim(0), N = w.dim(1);
  if (x.dim(x.rank() - 1) != K)
    throw std::invalid_argument("linear: input last dim != weight rows");
  if (b.defined() && (b.rank() != 1 || b.dim(0) != N))
    throw std::invalid_argument("linear: bias shape mismatch");
  const int64_t R = x.size() / K;
  std::vector<double> out(static_cast<size_t>(R) * N, 0.0);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  for (int64_t i = 0; i < R; ++i)
    for (int k = 0; k < K; ++k) {
      const double xv = xd[i * K + k];
      const double* wrow = wd + static_cast<size_t>(k) * N;
      double* orow = out.data() + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) orow[j] += xv * wrow[j];
    }
  if (b.defined()) {
    const double* bd = b.data().data();
    for (int64_t i = 0; i < R; ++i)
      for (int j = 0; j < N; ++j) out[static_cast<size_t>(i) * N + j] += bd[j];
  }
  Shape oshape = x.shape();
  oshape.back() = N;
  std::vector<TensorImplPtr> parents{x.impl, w.impl};
  if (b.defined()) parents.push_back(b.impl);
  auto px = x.impl, pw = w.impl;
  auto pb = b.defined() ? b.impl : nullptr;
  return make_node(std::move(oshape), std::move(out), std::move(parents),
                   [px, pw, pb, R, K, N](TensorImpl& o) {
                     if (px->requires_grad) {
                       for (int64_t i = 0; i < R; ++i)
                         for (int j = 0; j < N; ++j) {
                           double g = o.grad[static_cast<size_t>(i) * N + j];
                           if (g == 0.0) continue;
                           for (int k = 0; k < K; ++k)
                             px->grad[i * K + k] +=
                                 g * pw->data[static_cast<size_t>(k) * N + j];
                         }
                     }
                     if (pw->requires_grad) {
                       for (int64_t i = 0; i < R; ++i)
                         for (int k = 0; k < K; ++k) {
                           double xv = px->data[i * K + k];
                           if (xv == 0.0) continue;
                           for (int j = 0; j < N; ++j)
                             pw->grad[static_cast<size_t>(k) * N + j] +=
                                 xv * o.grad[static_cast<size_t>(i) * N + j];
                         }
                     }
                     if (pb && pb->requires_grad) {
                       for (int64_t i = 0; i < R; ++i)
                         for (int j = 0; j < N; ++j)
                           pb->grad[j] += o.grad[static_cast<size_t>(i) * N + j];
                     }
                   });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding) {
  if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv1d: negative padding");
  Tensor xin = x;
  bool squeeze = false;
  if (x.rank() == 2) {
    xin = reshape(x, {1, x.dim(0), x.dim(1)});
    squeeze = true;
  }
  if (xin.rank() != 3 || w.rank() != 3)
    throw std::invalid_argument("conv1d: expected x [N,C,T], w [Co,Ci,K]");
  const int N = xin.dim(0), Ci = xin.dim(1), T = xin.dim(2);
  const int Co = w.dim(0), K = w.dim(2);
  if (w.dim(1) != Ci)
    throw std::invalid_argument("conv1d: channel mismatch, x has " +
                                std::to_string(Ci) + " channels, kernel wants " +
                                std::to_string(w.dim(1)));
  if (K > T + 2 * padding)
    throw std::invalid_argument("conv1d: kernel longer than padded input");
  if (b.defined() && (b.rank() != 1 || b.dim(0) != Co))
    throw std::invalid_argument("conv1d: bias shape mismatch");
  const int To = (T + 2 * padding - K) / stride + 1;
  std::vector<double> out(static_cast<size_t>(N) * Co * To, 0.0);
  const double* xd = xin.data().data();
  const double* wd = w.data().data();
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co) {
      double* orow = out.data() + (static_cast<size_t>(n) * Co + co) * To;
      for (int ci = 0; ci < Ci; ++ci) {
        const double* xrow = xd + (static_cast<size_t>(n) * Ci + ci) * T;
        const double* wrow = wd + (static_cast<size_t>(co) * Ci + ci) * K;
        for (int to = 0; to < To; ++to) {
          const int t0 = to * stride - padding;
          double acc = 0.0;
          for (int k = 0; k < K; ++k) {
            const int t = t0 + k;
            if (t >= 0 && t < T) acc += xrow[t] * wrow[k];
          }
          orow[to] += acc;
        }
      }
      if (b.defined()) {
        const double bv = b.data()[co];
        for (int to = 0; to < To; ++to) orow[to] += bv;
      }
    }
  std::vector<TensorImplPtr> parents{xin.impl, w.impl};
  if (b.defined()) parents.push_back(b.impl);
  auto px = xin.impl, pw = w.impl;
  auto pb = b.defined() ? b.impl : nullptr;
  Tensor out3 = make_node(
      {N, Co, To}, std::move(out), std::move(parents),
      [px, pw, pb, N, Ci, T, Co, K, To, stride, padding](TensorImpl& o) {
        for (int n = 0; n < N; ++n)
          for (int co = 0; co < Co; ++co) {
            const double* grow =
                o.grad.data() + (static_cast<size_t>(n) * Co + co) * To;
            for (int ci = 0; ci < Ci; ++ci) {
              const size_t xoff = (static_cast<size_t>(n) * Ci + ci) * T;
              const size_t woff = (static_cast<size_t>(co) * Ci + ci) * K;
              for (int to = 0; to < To; ++to) {
                const double g = grow[to];
                if (g == 0.0) continue;
                const int t0 = to * stride - padding;
                for (int k = 0; k < K; ++k) {
                  const int t = t0 + k;
                  if (t < 0 || t >= T) continue;
                  if (px->requires_grad)
                    px->grad[xoff + t] += g * pw->data[woff + k];
                  if (pw->requires_grad)
                    pw->grad[woff + k] += g * px->data[xoff + t];
                }
              }
            }
            if (pb && pb->requires_grad) {
              for (int to = 0; to < To; ++to) pb->grad[co] += grow[to];
            }
          }
      });
  if (squeeze) return reshape(out3, {Co, To});
  return out3;
}

// ---- activations ----

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i)
    out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  auto pa = a.impl;
  return make_node(a.shape(), std::move(out), {pa}, [pa](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i)
      if (pa->data[i] > 0.0) pa->grad[i] += o.grad[i];
  });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) {
    double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  auto pa = a.impl;
  return make_node(a.shape(), std::move(out), {pa}, [pa](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i) {
      double x = pa->data[i];
      double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      pa->grad[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
  auto pa = a.impl;
  auto vals = out;
  return make_node(a.shape(), std::move(out), {pa}, [pa, vals](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i)
      pa->grad[i] += o.grad[i] * vals[i] * (1.0 - vals[i]);
  });
}

// ---- normalizations / softmax ----

namespace {

// Iterate over slices along `axis`: for each (outer, inner) pair, elements
// are at offset outer*len*inner_n + j*inner_n + inner for j in [0, len).
struct AxisView {
  int64_t outer_n, inner_n;
  int len;
  AxisView(const Shape& s, int axis) {
    len = s[static_cast<size_t>(axis)];
    outer_n = 1;
    for (int i = 0; i < axis; ++i) outer_n *= s[static_cast<size_t>(i)];
    inner_n = 1;
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i)
      inner_n *= s[i];
  }
};

void check_axis(const Tensor& a, int axis, const char* op) {
  if (axis < 0 || axis >= a.rank())
    throw std::invalid_argument(std::string(op) + ": axis out of range");
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  check_axis(a, axis, "softmax");
  check_finite(a, "softmax input");
  AxisView v(a.shape(), axis);
  std::vector<double> out(a.size());
  for (int64_t ou = 0; ou < v.outer_n; ++ou)
    for (int64_t in = 0; in < v.inner_n; ++in) {
      const int64_t base = ou * v.len * v.inner_n + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < v.len; ++j)
        mx = std::max(mx, a.data()[base + j * v.inner_n]);
      double sum = 0.0;
      for (int j = 0; j < v.len; ++j) {
        double e = std::exp(a.data()[base + j * v.inner_n] - mx);
        out[base + j * v.inner_n] = e;
        sum += e;
      }
      for (int j = 0; j < v.len; ++j) out[base + j * v.inner_n] /= sum;
    }
  auto pa = a.impl;
  auto vals = out;
  return make_node(a.shape(), std::move(out), {pa}, [pa, vals, v](TensorImpl& o) {
    for (int64_t ou = 0; ou < v.outer_n; ++ou)
      for (int64_t in = 0; in < v.inner_n; ++in) {
        const int64_t base = ou * v.len * v.inner_n + in;
        double dot = 0.0;
        for (int j = 0; j < v.len; ++j)
          dot += o.grad[base + j * v.inner_n] * vals[base + j * v.inner_n];
        for (int j = 0; j < v.len; ++j) {
          const int64_t idx = base + j * v.inner_n;
          pa->grad[idx] += vals[idx] * (o.grad[idx] - dot);
        }
      }
  });
}

Tensor masked_softmax_rows(const Tensor& x, const std::vector<uint8_t>& mask) {
  if (x.rank() != 2) throw std::invalid_argument("masked_softmax_rows: 2-D only");
  if (mask.size() != static_cast<size_t>(x.size()))
    throw std::invalid_argument("masked_softmax_rows: mask size mismatch");
  check_finite(x, "masked softmax input");
  const int R = x.dim(0), C = x.dim(1);
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < R; ++i) {
    const size_t base = static_cast<size_t>(i) * C;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int j = 0; j < C; ++j)
      if (mask[base + j]) {
        mx = std::max(mx, x.data()[base + j]);
        any = true;
      }
    if (!any)
      throw std::invalid_argument("masked_softmax_rows: fully masked row");
    double sum = 0.0;
    for (int j = 0; j < C; ++j)
      if (mask[base + j]) {
        double e = std::exp(x.data()[base + j] - mx);
        out[base + j] = e;
        sum += e;
      }
    for (int j = 0; j < C; ++j)
      if (mask[base + j]) out[base + j] /= sum;
  }
  auto px = x.impl;
  auto vals = out;
  return make_node(x.shape(), std::move(out), {px},
                   [px, vals, mask, R, C](TensorImpl& o) {
                     for (int i = 0; i < R; ++i) {
                       const size_t base = static_cast<size_t>(i) * C;
                       double dot = 0.0;
                       for (int j = 0; j < C; ++j)
                         dot += o.grad[base + j] * vals[base + j];
                       for (int j = 0; j < C; ++j)
                         if (mask[base + j])
                           px->grad[base + j] +=
                               vals[base + j] * (o.grad[base + j] - dot);
                     }
                   });
}

Tensor layer_norm(const Tensor& a, int axis, double eps) {
  check_axis(a, axis, "layer_norm");
  AxisView v(a.shape(), axis);
  if (v.len < 1) throw std::invalid_argument("layer_norm: empty axis");
  std::vector<double> out(a.size());
  std::vector<double> means(v.outer_n * v.inner_n);
  std::vector<double> istds(v.outer_n * v.inner_n);
  for (int64_t ou = 0; ou < v.outer_n; ++ou)
    for (int64_t in = 0; in < v.inner_n; ++in) {
      const int64_t base = ou * v.len * v.inner_n + in;
      const int64_t s = ou * v.inner_n + in;
      double mean = 0.0;
      for (int j = 0; j < v.len; ++j) mean += a.data()[base + j * v.inner_n];
      mean /= v.len;
      double var = 0.0;
      for (int j = 0; j < v.len; ++j) {
        double d = a.data()[base + j * v.inner_n] - mean;
        var += d * d;
      }
      var /= v.len;
      double istd = 1.0 / std::sqrt(var + eps);
      means[s] = mean;
      istds[s] = istd;
      for (int j = 0; j < v.len; ++j)
        out[base + j * v.inner_n] =
            (a.data()[base + j * v.inner_n] - mean) * istd;
    }
  auto pa = a.impl;
  auto vals = out;
  return make_node(
      a.shape(), std::move(out), {pa}, [pa, vals, istds, v](TensorImpl& o) {
        const int L = v.len;
        // dx_j = istd * (g_j - mean(g) - y_j * mean(g*y))
        for (int64_t ou = 0; ou < v.outer_n; ++ou)
          for (int64_t in = 0; in < v.inner_n; ++in) {
            const int64_t base = ou * L * v.inner_n + in;
            const double istd = istds[ou * v.inner_n + in];
            double gmean = 0.0, gymean = 0.0;
            for (int j = 0; j < L; ++j) {
              const int64_t idx = base + j * v.inner_n;
              gmean += o.grad[idx];
              gymean += o.grad[idx] * vals[idx];
            }
            gmean /= L;
            gymean /= L;
            for (int j = 0; j < L; ++j) {
              const int64_t idx = base + j * v.inner_n;
              pa->grad[idx] +=
                  istd * (o.grad[idx] - gmean - vals[idx] * gymean);
            }
          }
      });
}

Tensor scale_shift_lastdim(const Tensor& x, const Tensor& gamma,
                           const Tensor& beta) {
  const int N = x.dim(x.rank() - 1);
  if (gamma.size() != N || beta.size() != N)
    throw std::invalid_argument("scale_shift_lastdim: param size mismatch");
  const int64_t R = x.size() / N;
  std::vector<double> out(x.size());
  for (int64_t i = 0; i < R; ++i)
    for (int j = 0; j < N; ++j)
      out[i * N + j] = x.data()[i * N + j] * gamma.data()[j] + beta.data()[j];
  auto px = x.impl, pg = gamma.impl, pb = beta.impl;
  return make_node(x.shape(), std::move(out), {px, pg, pb},
                   [px, pg, pb, R, N](TensorImpl& o) {
                     for (int64_t i = 0; i < R; ++i)
                       for (int j = 0; j < N; ++j) {
                         const int64_t idx = i * N + j;
                         if (px->requires_grad)
                           px->grad[idx] += o.grad[idx] * pg->data[j];
                         if (pg->requires_grad)
                           pg->grad[j] += o.grad[idx] * px->data[idx];
                         if (pb->requires_grad) pb->grad[j] += o.grad[idx];
                       }
                   });
}

Tensor batch_norm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    std::vector<double>& running_mean,
                    std::vector<double>& running_var, bool training,
                    double momentum, double eps) {
  if (x.rank() != 3) throw std::invalid_argument("batch_norm1d: x must be 3-D");
  const int N = x.dim(0), C = x.dim(1), T = x.dim(2);
  if (gamma.size() != C || beta.size() != C ||
      running_mean.size() != static_cast<size_t>(C) ||
      running_var.size() != static_cast<size_t>(C))
    throw std::invalid_argument("batch_norm1d: per-channel size mismatch");
  std::vector<double> mean(C), var(C);
  if (training) {
    const double cnt = static_cast<double>(N) * T;
    for (int c = 0; c < C; ++c) {
      double m = 0.0;
      for (int n = 0; n < N; ++n) {
        const size_t base = (static_cast<size_t>(n) * C + c) * T;
        for (int t = 0; t < T; ++t) m += x.data()[base + t];
      }
      m /= cnt;
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const size_t base = (static_cast<size_t>(n) * C + c) * T;
        for (int t = 0; t < T; ++t) {
          double d = x.data()[base + t] - m;
          v += d * d;
        }
      }
      v /= cnt;
      mean[c] = m;
      var[c] = v;
      running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * m;
      running_var[c] = momentum * running_var[c] + (1.0 - momentum) * v;
    }
  } else {
    mean = running_mean;
    var = running_var;
  }
  std::vector<double> istd(C);
  for (int c = 0; c < C; ++c) istd[c] = 1.0 / std::sqrt(var[c] + eps);
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const size_t base = (static_cast<size_t>(n) * C + c) * T;
      for (int t = 0; t < T; ++t) {
        double h = (x.data()[base + t] - mean[c]) * istd[c];
        xhat[base + t] = h;
        out[base + t] = h * gamma.data()[c] + beta.data()[c];
      }
    }
  auto px = x.impl, pg = gamma.impl, pb = beta.impl;
  return make_node(
      x.shape(), std::move(out), {px, pg, pb},
      [px, pg, pb, xhat, istd, training, N, C, T](TensorImpl& o) {
        const double cnt = static_cast<double>(N) * T;
        for (int c = 0; c < C; ++c) {
          double gsum = 0.0, gxsum = 0.0;
          for (int n = 0; n < N; ++n) {
            const size_t base = (static_cast<size_t>(n) * C + c) * T;
            for (int t = 0; t < T; ++t) {
              gsum += o.grad[base + t];
              gxsum += o.grad[base + t] * xhat[base + t];
            }
          }
          if (pg->requires_grad) pg->grad[c] += gxsum;
          if (pb->requires_grad) pb->grad[c] += gsum;
          if (px->requires_grad) {
            const double g = pg->data[c];
            for (int n = 0; n < N; ++n) {
              const size_t base = (static_cast<size_t>(n) * C + c) * T;
              for (int t = 0; t < T; ++t) {
                if (training) {
                  px->grad[base + t] +=
                      g * istd[c] *
                      (o.grad[base + t] - gsum / cnt -
                       xhat[base + t] * gxsum / cnt);
                } else {
                  px->grad[base + t] += g * istd[c] * o.grad[base + t];
                }
              }
            }
          }
        }
      });
}

// ---- pooling / reductions ----

Tensor max_pool1d(const Tensor& x, int kernel, int stride, int padding) {
  if (x.rank() != 3) throw std::invalid_argument("max_pool1d: x must be 3-D");
  if (kernel < 1 || stride < 1)
    throw std::invalid_argument("max_pool1d: bad kernel/stride");
  const int N = x.dim(0), C = x.dim(1), T = x.dim(2);
  const int To = (T + 2 * padding - kernel) / stride + 1;
  if (To < 1) throw std::invalid_argument("max_pool1d: input too short");
  std::vector<double> out(static_cast<size_t>(N) * C * To);
  std::vector<int> argmax(out.size());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const size_t xbase = (static_cast<size_t>(n) * C + c) * T;
      const size_t obase = (static_cast<size_t>(n) * C + c) * To;
      for (int to = 0; to < To; ++to) {
        const int t0 = to * stride - padding;
        double best = -std::numeric_limits<double>::infinity();
        int besti = -1;
        for (int k = 0; k < kernel; ++k) {
          const int t = t0 + k;
          if (t < 0 || t >= T) continue;
          if (x.data()[xbase + t] > best) {
            best = x.data()[xbase + t];
            besti = t;
          }
        }
        if (besti < 0) {  // window fully in padding
          best = 0.0;
        }
        out[obase + to] = best;
        argmax[obase + to] = besti;
      }
    }
  auto px = x.impl;
  return make_node({N, C, To}, std::move(out), {px},
                   [px, argmax, N, C, T, To](TensorImpl& o) {
                     for (int n = 0; n < N; ++n)
                       for (int c = 0; c < C; ++c) {
                         const size_t xbase = (static_cast<size_t>(n) * C + c) * T;
                         const size_t obase =
                             (static_cast<size_t>(n) * C + c) * To;
                         for (int to = 0; to < To; ++to) {
                           int t = argmax[obase + to];
                           if (t >= 0) px->grad[xbase + t] += o.grad[obase + to];
                         }
                       }
                   });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 3)
    throw std::invalid_argument("global_avg_pool: x must be 3-D");
  const int N = x.dim(0), C = x.dim(1), T = x.dim(2);
  std::vector<double> out(static_cast<size_t>(N) * C, 0.0);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const size_t base = (static_cast<size_t>(n) * C + c) * T;
      double s = 0.0;
      for (int t = 0; t < T; ++t) s += x.data()[base + t];
      out[static_cast<size_t>(n) * C + c] = s / T;
    }
  auto px = x.impl;
  return make_node({N, C}, std::move(out), {px}, [px, N, C, T](TensorImpl& o) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const double g = o.grad[static_cast<size_t>(n) * C + c] / T;
        const size_t base = (static_cast<size_t>(n) * C + c) * T;
        for (int t = 0; t < T; ++t) px->grad[base + t] += g;
      }
  });
}

Tensor mean_axis(const Tensor& x, int axis) {
  check_axis(x, axis, "mean_axis");
  AxisView v(x.shape(), axis);
  Shape oshape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) oshape.push_back(x.dim(i));
  if (oshape.empty()) oshape.push_back(1);
  std::vector<double> out(v.outer_n * v.inner_n, 0.0);
  for (int64_t ou = 0; ou < v.outer_n; ++ou)
    for (int64_t in = 0; in < v.inner_n; ++in) {
      const int64_t base = ou * v.len * v.inner_n + in;
      double s = 0.0;
      for (int j = 0; j < v.len; ++j) s += x.data()[base + j * v.inner_n];
      out[ou * v.inner_n + in] = s / v.len;
    }
  auto px = x.impl;
  return make_node(std::move(oshape), std::move(out), {px},
                   [px, v](TensorImpl& o) {
                     for (int64_t ou = 0; ou < v.outer_n; ++ou)
                       for (int64_t in = 0; in < v.inner_n; ++in) {
                         const double g = o.grad[ou * v.inner_n + in] / v.len;
                         const int64_t base = ou * v.len * v.inner_n + in;
                         for (int j = 0; j < v.len; ++j)
                           px->grad[base + j * v.inner_n] += g;
                       }
                   });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto px = x.impl;
  return make_node({1}, {s}, {px}, [px](TensorImpl& o) {
    for (size_t i = 0; i < px->grad.size(); ++i) px->grad[i] += o.grad[0];
  });
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / x.size()); }

Tensor pick(const Tensor& x, int64_t flat_index) {
  if (flat_index < 0 || flat_index >= x.size())
    throw std::out_of_range("pick: index " + std::to_string(flat_index) +
                            " out of range for size " + std::to_string(x.size()));
  auto px = x.impl;
  return make_node({1}, {x.data()[flat_index]}, {px},
                   [px, flat_index](TensorImpl& o) {
                     px->grad[flat_index] += o.grad[0];
                   });
}

// ---- shape ops ----

Tensor slice_rows(const Tensor& x, int start, int len) {
  if (x.rank() != 2) throw std::invalid_argument("slice_rows: 2-D only");
  const int R = x.dim(0), C = x.dim(1);
  if (start < 0 || len < 1 || start + len > R)
    throw std::out_of_range("slice_rows: bad row range");
  std::vector<double> out(x.data().begin() + static_cast<size_t>(start) * C,
                          x.data().begin() + static_cast<size_t>(start + len) * C);
  auto px = x.impl;
  return make_node({len, C}, std::move(out), {px},
                   [px, C, start, len](TensorImpl& o) {
                     for (size_t i = 0; i < static_cast<size_t>(len) * C; ++i)
                       px->grad[static_cast<size_t>(start) * C + i] += o.grad[i];
                   });
}

Tensor slice_cols(const Tensor& x, int start, int len) {
  if (x.rank() != 2) throw std::invalid_argument("slice_cols: 2-D only");
  const int R = x.dim(0), C = x.dim(1);
  if (start < 0 || len < 1 || start + len > C)
    throw std::out_of_range("slice_cols: bad column range");
  std::vector<double> out(static_cast<size_t>(R) * len);
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<size_t>(i) * len + j] =
          x.data()[static_cast<size_t>(i) * C + start + j];
  auto px = x.impl;
  return make_node({R, len}, std::move(out), {px},
                   [px, R, C, start, len](TensorImpl& o) {
                     for (int i = 0; i < R; ++i)
                       for (int j = 0; j < len; ++j)
                         px->grad[static_cast<size_t>(i) * C + start + j] +=
                             o.grad[static_cast<size_t>(i) * len + j];
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
  const int R = parts[0].dim(0);
  int C = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != R)
      throw std::invalid_argument("concat_cols: row mismatch");
    C += p.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(R) * C);
  std::vector<int> offs;
  int off = 0;
  for (const auto& p : parts) {
    offs.push_back(off);
    const int pc = p.dim(1);
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < pc; ++j)
        out[static_cast<size_t>(i) * C + off + j] =
            p.data()[static_cast<size_t>(i) * pc + j];
    off += pc;
  }
  std::vector<TensorImplPtr> parents;
  for (const auto& p : parts) parents.push_back(p.impl);
  auto caps = parents;
  return make_node({R, C}, std::move(out), std::move(parents),
                   [caps, offs, R, C](TensorImpl& o) {
                     for (size_t pi = 0; pi < caps.size(); ++pi) {
                       auto& p = caps[pi];
                       if (!p->requires_grad) continue;
                       const int pc = p->shape[1];
                       for (int i = 0; i < R; ++i)
                         for (int j = 0; j < pc; ++j)
                           p->grad[static_cast<size_t>(i) * pc + j] +=
                               o.grad[static_cast<size_t>(i) * C + offs[pi] + j];
                     }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
  const int C = parts[0].dim(parts[0].rank() - 1);
  int R = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != C)
      throw std::invalid_argument("concat_rows: column mismatch");
    R += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(R) * C);
  std::vector<int64_t> offs;
  for (const auto& p : parts) {
    offs.push_back(static_cast<int64_t>(out.size()));
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<TensorImplPtr> parents;
  for (const auto& p : parts) parents.push_back(p.impl);
  auto caps = parents;
  return make_node({R, C}, std::move(out), std::move(parents),
                   [caps, offs](TensorImpl& o) {
                     for (size_t pi = 0; pi < caps.size(); ++pi) {
                       auto& p = caps[pi];
                       if (!p->requires_grad) continue;
                       for (size_t i = 0; i < p->data.size(); ++i)
                         p->grad[i] += o.grad[static_cast<size_t>(offs[pi]) + i];
                     }
                   });
}

Tensor select_outer(const Tensor& x, int n) {
  if (x.rank() < 2) throw std::invalid_argument("select_outer: rank < 2");
  const int N = x.dim(0);
  if (n < 0 || n >= N) throw std::out_of_range("select_outer: index");
  Shape oshape(x.shape().begin() + 1, x.shape().end());
  const int64_t stride = x.size() / N;
  std::vector<double> out(x.data().begin() + n * stride,
                          x.data().begin() + (n + 1) * stride);
  auto px = x.impl;
  return make_node(std::move(oshape), std::move(out), {px},
                   [px, n, stride](TensorImpl& o) {
                     for (int64_t i = 0; i < stride; ++i)
                       px->grad[n * stride + i] += o.grad[i];
                   });
}

Tensor mul_bcast_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    throw std::invalid_argument("mul_bcast_scalar: s must be scalar");
  const double sv = s.data()[0];
  std::vector<double> out(x.size());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] * sv;
  auto px = x.impl, ps = s.impl;
  return make_node(x.shape(), std::move(out), {px, ps},
                   [px, ps](TensorImpl& o) {
                     const double sv = ps->data[0];
                     for (size_t i = 0; i < o.grad.size(); ++i) {
                       if (px->requires_grad) px->grad[i] += o.grad[i] * sv;
                       if (ps->requires_grad)
                         ps->grad[0] += o.grad[i] * px->data[i];
                     }
                   });
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose2d: 2-D only");
  const int R = x.dim(0), C = x.dim(1);
  std::vector<double> out(x.size());
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j)
      out[static_cast<size_t>(j) * R + i] = x.data()[static_cast<size_t>(i) * C + j];
  auto px = x.impl;
  return make_node({C, R}, std::move(out), {px}, [px, R, C](TensorImpl& o) {
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < C; ++j)
        px->grad[static_cast<size_t>(i) * C + j] +=
            o.grad[static_cast<size_t>(j) * R + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw std::invalid_argument("reshape: element count mismatch");
  auto px = x.impl;
  return make_node(std::move(shape), x.data(), {px}, [px](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i];
  });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(x.size());
  const double keep = 1.0 - p;
  for (auto& m : mask) m = (u(rng) < keep) ? 1.0 / keep : 0.0;
  std::vector<double> out(x.size());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] * mask[i];
  auto px = x.impl;
  return make_node(x.shape(), std::move(out), {px}, [px, mask](TensorImpl& o) {
    for (size_t i = 0; i < o.grad.size(); ++i)
      px->grad[i] += o.grad[i] * mask[i];
  });
}

// ---- losses ----

Tensor huber_loss(const Tensor& pred, const std::vector<double>& targets,
                  double delta) {
  if (pred.size() != static_cast<int64_t>(targets.size()))
    throw std::invalid_argument("huber_loss: length mismatch");
  const int64_t n = pred.size();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double r = pred.data()[i] - targets[i];
    double a = std::abs(r);
    loss += (a <= delta) ? 0.5 * r * r : delta * (a - 0.5 * delta);
  }
  loss /= n;
  auto pp = pred.impl;
  return make_node({1}, {loss}, {pp}, [pp, targets, delta, n](TensorImpl& o) {
    const double g = o.grad[0] / n;
    for (int64_t i = 0; i < n; ++i) {
      double r = pp->data[i] - targets[i];
      double d = (std::abs(r) <= delta) ? r : (r > 0 ? delta : -delta);
      pp->grad[i] += g * d;
    }
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy: logits must be [N,K]");
  const int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  for (int lab : labels)
    if (lab < 0 || lab >= K)
      throw std::out_of_range("cross_entropy: label out of range");
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (int i = 0; i < N; ++i) {
    const size_t base = static_cast<size_t>(i) * K;
    double mx = logits.data()[base];
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.data()[base + k]);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      double e = std::exp(logits.data()[base + k] - mx);
      probs[base + k] = e;
      sum += e;
    }
    for (int k = 0; k < K; ++k) probs[base + k] /= sum;
    loss -= std::log(std::max(probs[base + labels[static_cast<size_t>(i)]],
                              1e-300));
  }
  loss /= N;
  auto pl = logits.impl;
  return make_node({1}, {loss}, {pl}, [pl, probs, labels, N, K](TensorImpl& o) {
    const double g = o.grad[0] / N;
    for (int i = 0; i < N; ++i) {
      const size_t base = static_cast<size_t>(i) * K;
      for (int k = 0; k < K; ++k) {
        double ind = (k == labels[static_cast<size_t>(i)]) ? 1.0 : 0.0;
        pl->grad[base + k] += g * (probs[base + k] - ind);
      }
    }
  });
}

}  // namespace tsx
