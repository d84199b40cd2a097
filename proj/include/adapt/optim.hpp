#pragma once

#include <cstdint>

#include "adapt/model.hpp"

namespace adapt {

// Linear warmup 0 -> base_lr over warmup_steps, then half-cosine decay to 0 at total_steps.
double lr_at(std::uint64_t step, std::uint64_t total_steps, std::uint64_t warmup_steps, double base_lr);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  ModelParams<T> m;
  ModelParams<T> v;
};

// Moments are allocated for exactly the tensors that `grads` allocates.
template <typename T>
AdamState<T> make_adam_state(const ModelParams<T>& grads);

// One bias-corrected Adam update per tensor with decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
// Tensors with no gradient allocated are skipped.
template <typename T>
void adamw_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
                const AdamWConfig& cfg);

// Single-tensor form of the same update; `step` is the 1-based step count.
template <typename T>
void adamw_update(Matrix<T>& param, const Matrix<T>& grad, Matrix<T>& m, Matrix<T>& v, std::uint64_t step, double lr,
                  const AdamWConfig& cfg);

template <typename T>
double global_grad_norm(const ModelParams<T>& grads);

// Scales every gradient by max_norm / norm when the global L2 norm exceeds max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_gradients(ModelParams<T>& grads, double max_norm);

}  // namespace adapt
