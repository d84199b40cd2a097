#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "adapt/augment.hpp"
#include "adapt/rng.hpp"
#include "adapt/tensor.hpp"

namespace adapt {

// Which input domains feed the embedding and the reconstruction loss.
enum class Encoding : std::uint32_t { kJoint = 0, kTime = 1, kFreq = 2 };

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_layers = 6;
  std::size_t n_heads = 8;
  std::size_t ffn_dim = 512;
  std::size_t c_in = 32;      // C_out of the aligned representation
  std::size_t seq_len = 256;  // L_out
  std::size_t n_classes = 0;  // 0: no classifier head
  double dropout = 0.0;
  Encoding encoding = Encoding::kJoint;

  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Biases and layer-norm parameters are stored as 1 x n matrices. Weights are (in x out).
template <typename T>
struct EncoderLayerParams {
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<T> ln1_gamma, ln1_beta;
  Matrix<T> w1, b1, w2, b2;
  Matrix<T> ln2_gamma, ln2_beta;
};

template <typename T>
struct ModelParams {
  Matrix<T> time_w, time_b, freq_w, freq_b;  // input projections
  std::vector<EncoderLayerParams<T>> layers;
  Matrix<T> head_time_w, head_time_b, head_freq_w, head_freq_b;
  Matrix<T> cls_w, cls_b;  // empty when the model has no classifier

  // Visits every tensor as (name, matrix) in checkpoint declaration order.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit(Self& p, F& f) {
    f("embed.time.weight", p.time_w);
    f("embed.time.bias", p.time_b);
    f("embed.freq.weight", p.freq_w);
    f("embed.freq.bias", p.freq_b);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      auto& l = p.layers[i];
      const std::string pre = "layers." + std::to_string(i) + ".";
      f(pre + "attn.q.weight", l.wq);
      f(pre + "attn.q.bias", l.bq);
      f(pre + "attn.k.weight", l.wk);
      f(pre + "attn.k.bias", l.bk);
      f(pre + "attn.v.weight", l.wv);
      f(pre + "attn.v.bias", l.bv);
      f(pre + "attn.out.weight", l.wo);
      f(pre + "attn.out.bias", l.bo);
      f(pre + "ln1.gamma", l.ln1_gamma);
      f(pre + "ln1.beta", l.ln1_beta);
      f(pre + "ffn.fc1.weight", l.w1);
      f(pre + "ffn.fc1.bias", l.b1);
      f(pre + "ffn.fc2.weight", l.w2);
      f(pre + "ffn.fc2.bias", l.b2);
      f(pre + "ln2.gamma", l.ln2_gamma);
      f(pre + "ln2.beta", l.ln2_beta);
    }
    f("head.time.weight", p.head_time_w);
    f("head.time.bias", p.head_time_b);
    f("head.freq.weight", p.head_freq_w);
    f("head.freq.bias", p.head_freq_b);
    f("classifier.weight", p.cls_w);
    f("classifier.bias", p.cls_b);
  }
};

// Xavier-uniform weights, zero biases, unit layer-norm scales. The classifier draws from its own
// stream so attaching one later does not disturb the encoder initialization.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
void init_classifier(ModelParams<T>& params, const ModelConfig& cfg, std::uint64_t seed);

// Zero tensors shaped like `like`. Frozen parts are left empty (never allocated).
template <typename T>
ModelParams<T> zero_grads(const ModelParams<T>& like, bool encoder = true, bool classifier = true);

template <typename T>
Matrix<T> sinusoidal_positions(std::size_t seq_len, std::size_t d_model);

template <typename T>
struct LayerCache {
  Matrix<T> x;               // layer input
  Matrix<T> q, k, v;         // projections, (B*L) x d
  std::vector<Matrix<T>> probs;  // attention weights per (item, head), L x L
  Matrix<T> ctx;             // concatenated head outputs
  Matrix<T> drop1, drop2;    // dropout multipliers (empty when dropout is off)
  Matrix<T> ln1_xhat, ln1_rstd;
  Matrix<T> y1;              // first layer-norm output
  Matrix<T> f1;              // fc1 pre-activation
  Matrix<T> g;               // GELU(f1)
  Matrix<T> ln2_xhat, ln2_rstd;
};

template <typename T>
struct ForwardState {
  std::size_t batch = 0;
  Matrix<T> input_time, input_freq;
  std::vector<LayerCache<T>> layers;  // empty when run without cache
  Matrix<T> encoded;                  // E_o, (B*L) x d
};

// Transformer encoder with time/frequency projections, reconstruction heads and an optional
// mean-pool classifier. All tensors are stacked as (B*L) x features.
template <typename T>
class Network {
 public:
  Network(ModelConfig cfg, ModelParams<T> params);

  const ModelConfig& config() const { return cfg_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }

  // E_i = X_t W_t + b_t + X_f W_f + b_f + PE
  Matrix<T> embed(const Matrix<T>& input_time, const Matrix<T>& input_freq, std::size_t batch) const;

  // Post-norm encoder stack. `cache` receives per-layer activations for backward.
  Matrix<T> encode(const Matrix<T>& embedded, std::size_t batch, std::vector<LayerCache<T>>* cache = nullptr,
                   Rng* dropout_rng = nullptr) const;

  std::pair<Matrix<T>, Matrix<T>> reconstruct(const Matrix<T>& encoded) const;

  Matrix<T> mean_pool(const Matrix<T>& encoded, std::size_t batch) const;
  Matrix<T> classify(const Matrix<T>& encoded, std::size_t batch) const;

  ForwardState<T> forward(const Matrix<T>& input_time, const Matrix<T>& input_freq, std::size_t batch,
                          bool keep_cache, Rng* dropout_rng = nullptr) const;

  // Accumulates gradients into `grads`. Either upstream gradient may be null. When `grads` has no
  // encoder tensors allocated, only the classifier receives gradient.
  void backward(const ForwardState<T>& state, const Matrix<T>* d_pred_time, const Matrix<T>* d_pred_freq,
                const Matrix<T>* d_logits, ModelParams<T>& grads) const;

  // Attention weights of one layer for inspection, per (item, head).
  std::vector<Matrix<T>> attention_weights(const Matrix<T>& embedded, std::size_t batch, std::size_t layer) const;

 private:
  void check_input(const Matrix<T>& m, std::size_t batch, const char* what) const;

  ModelConfig cfg_;
  ModelParams<T> params_;
  Matrix<T> positions_;
};

struct ReconLoss {
  double loss = 0.0;
  double time_term = 0.0;
  double freq_term = 0.0;
};

// Masked MSE: per item, the mean of squared error over masked rows (all features) of each domain,
// summed over domains, then averaged over the batch. With shared_n the frequency term is divided
// by the time mask count. Writes dL/dpred into d_time / d_freq (zero outside masked rows).
template <typename T>
ReconLoss masked_recon_loss(const Matrix<T>& pred_time, const Matrix<T>& pred_freq, const Matrix<T>& target_time,
                            const Matrix<T>& target_freq, const std::vector<MaskPlan>& q_time,
                            const std::vector<MaskPlan>& q_freq, std::size_t seq_len, Encoding encoding,
                            bool shared_n, std::type_identity_t<Matrix<T>>* d_time,
                            std::type_identity_t<Matrix<T>>* d_freq);

// Mean cross-entropy over the batch; writes dL/dlogits.
template <typename T>
double cross_entropy(const Matrix<T>& logits, const std::vector<std::uint32_t>& labels,
                     std::type_identity_t<Matrix<T>>* d_logits);

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits);

}  // namespace adapt
