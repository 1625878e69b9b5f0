#pragma once

// Finite-difference gradient checking against the reverse-mode sweep.
// Step size follows h = 1e-5 * max(1, |x|); pass tolerance is
// max(1e-4 absolute, 1e-3 relative).

#include <cmath>
#include <functional>
#include <string>

#include "tsxplain/tensor.hpp"

namespace fdcheck {

struct Result {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  int checked = 0;
  bool ok = true;
  std::string worst;
};

/// `loss_fn` must rebuild the graph from the current contents of `inputs`
/// on every call and return a scalar.
inline Result check(const std::function<tsx::Tensor()>& loss_fn,
                    const std::vector<tsx::Tensor>& inputs,
                    int max_elems_per_input = 64) {
  Result r;
  tsx::Tensor loss = loss_fn();
  tsx::backward(loss);
  std::vector<std::vector<double>> grads;
  for (const auto& in : inputs)
    grads.push_back(in.has_grad() ? in.grad()
                                  : std::vector<double>(in.data().size(), 0.0));

  for (size_t i = 0; i < inputs.size(); ++i) {
    tsx::Tensor in = inputs[i];
    const size_t n = in.data().size();
    const size_t step = n <= static_cast<size_t>(max_elems_per_input)
                            ? 1
                            : n / static_cast<size_t>(max_elems_per_input);
    for (size_t j = 0; j < n; j += step) {
      const double x0 = in.data()[j];
      const double h = 1e-5 * std::max(1.0, std::abs(x0));
      in.data()[j] = x0 + h;
      const double up = loss_fn().item();
      in.data()[j] = x0 - h;
      const double down = loss_fn().item();
      in.data()[j] = x0;
      const double fd = (up - down) / (2.0 * h);
      const double ad = grads[i][j];
      const double abs_err = std::abs(ad - fd);
      const double rel_err =
          abs_err / std::max(1e-12, std::max(std::abs(ad), std::abs(fd)));
      r.max_abs_err = std::max(r.max_abs_err, abs_err);
      r.max_rel_err = std::max(r.max_rel_err, rel_err);
      ++r.checked;
      if (abs_err > 1e-4 && rel_err > 1e-3) {
        r.ok = false;
        r.worst = "input " + std::to_string(i) + " elem " + std::to_string(j) +
                  ": ad=" + std::to_string(ad) + " fd=" + std::to_string(fd);
      }
    }
  }
  return r;
}

/// Scalar loss from an arbitrary tensor: fixed pseudo-random projection so
/// every output element influences the loss asymmetrically.
inline tsx::Tensor project(const tsx::Tensor& y, std::uint64_t salt = 1) {
  tsx::Tensor w = tsx::Tensor::zeros(y.shape());
  std::uint64_t state = salt * 0x9e3779b97f4a7c15ull + 12345;
  for (auto& v : w.data()) {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    v = static_cast<double>(state >> 40) / static_cast<double>(1ull << 24) - 0.5;
  }
  return tsx::sum_all(tsx::mul(y, w));
}

}  // namespace fdcheck
