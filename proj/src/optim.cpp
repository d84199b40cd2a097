#include "adapt/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

namespace adapt {

double lr_at(std::uint64_t step, std::uint64_t total_steps, std::uint64_t warmup_steps, double base_lr) {
  if (total_steps == 0) return 0.0;
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return base_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

template <typename T>
AdamState<T> make_adam_state(const ModelParams<T>& grads) {
  AdamState<T> s;
  s.m = grads;
  s.v = grads;
  s.m.for_each([](const std::string&, Matrix<T>& m) { m.fill(T{0}); });
  s.v.for_each([](const std::string&, Matrix<T>& m) { m.fill(T{0}); });
  return s;
}

template <typename T>
void adamw_update(Matrix<T>& param, const Matrix<T>& grad, Matrix<T>& m, Matrix<T>& v, std::uint64_t step, double lr,
                  const AdamWConfig& cfg) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v)) {
    throw ContractViolation("adamw_update: shape mismatch");
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad.data()[i]);
    const double mi = cfg.beta1 * static_cast<double>(m.data()[i]) + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * static_cast<double>(v.data()[i]) + (1.0 - cfg.beta2) * g * g;
    m.data()[i] = static_cast<T>(mi);
    v.data()[i] = static_cast<T>(vi);
    const double p = static_cast<double>(param.data()[i]);
    const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps) + cfg.weight_decay * p;
    param.data()[i] = static_cast<T>(p - lr * update);
  }
}

template <typename T>
void adamw_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
                const AdamWConfig& cfg) {
  ++state.step;
  // grads, m and v share one structure, which may omit frozen parts of params.
  std::unordered_map<std::string, const Matrix<T>*> g_by_name;
  std::unordered_map<std::string, Matrix<T>*> m_by_name, v_by_name;
  grads.for_each([&](const std::string& n, const Matrix<T>& m) {
    if (!m.empty()) g_by_name.emplace(n, &m);
  });
  state.m.for_each([&](const std::string& n, Matrix<T>& m) { m_by_name.emplace(n, &m); });
  state.v.for_each([&](const std::string& n, Matrix<T>& m) { v_by_name.emplace(n, &m); });
  std::size_t updated = 0;
  params.for_each([&](const std::string& n, Matrix<T>& p) {
    const auto g = g_by_name.find(n);
    if (g == g_by_name.end()) return;
    const auto m = m_by_name.find(n);
    const auto v = v_by_name.find(n);
    if (m == m_by_name.end() || v == v_by_name.end()) {
      throw ContractViolation("adamw_step: no optimizer moments for '" + n + "'");
    }
    adamw_update(p, *g->second, *m->second, *v->second, state.step, lr, cfg);
    ++updated;
  });
  if (updated != g_by_name.size()) throw ContractViolation("adamw_step: gradient without a matching parameter");
}

template <typename T>
double global_grad_norm(const ModelParams<T>& grads) {
  double sq = 0.0;
  grads.for_each([&](const std::string&, const Matrix<T>& m) {
    for (T v : m.flat()) sq += static_cast<double>(v) * static_cast<double>(v);
  });
  return std::sqrt(sq);
}

template <typename T>
double clip_gradients(ModelParams<T>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ValidationError("clip max_norm must be > 0");
  const double norm = global_grad_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each([&](const std::string&, Matrix<T>& m) {
      for (T& v : m.flat()) v = static_cast<T>(static_cast<double>(v) * scale);
    });
  }
  return norm;
}

#define ADAPT_INSTANTIATE(T)                                                                                     \
  template AdamState<T> make_adam_state<T>(const ModelParams<T>&);                                              \
  template void adamw_step<T>(ModelParams<T>&, const ModelParams<T>&, AdamState<T>&, double, const AdamWConfig&); \
  template void adamw_update<T>(Matrix<T>&, const Matrix<T>&, Matrix<T>&, Matrix<T>&, std::uint64_t, double,     \
                                const AdamWConfig&);                                                            \
  template double global_grad_norm<T>(const ModelParams<T>&);                                                   \
  template double clip_gradients<T>(ModelParams<T>&, double);

ADAPT_INSTANTIATE(float)
ADAPT_INSTANTIATE(double)

#undef ADAPT_INSTANTIATE

}  // namespace adapt
