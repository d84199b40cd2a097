#include "adapt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "adapt/kernels.hpp"

namespace adapt {

void ModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || ffn_dim == 0 || c_in == 0 || seq_len == 0) {
    throw ValidationError("model dimensions must all be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ValidationError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
  }
  if (n_classes == 1) throw ValidationError("n_classes must be 0 (no classifier) or >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix<T>& m) { n += m.size(); });
  return n;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
Matrix<T> xavier(std::size_t in, std::size_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix<T> m(in, out);
  for (auto& v : m.flat()) v = static_cast<T>(dist(rng));
  return m;
}

template <typename T>
Matrix<T> zero_like(const Matrix<T>& m) {
  return Matrix<T>(m.rows(), m.cols());
}

// Y = X W + b
template <typename T>
Matrix<T> linear(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> y(x.rows(), w.cols());
  kernels::parallel::gemm_nn(x, w, y);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b.data()[c];
  }
  return y;
}

// dW += X^T dY, db += colsum(dY), dX (+)= dY W^T
template <typename T>
void linear_backward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& dy, Matrix<T>& dw, Matrix<T>& db,
                     Matrix<T>* dx, bool accumulate_dx) {
  kernels::parallel::gemm_tn(x, dy, dw, true);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto row = dy.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) db.data()[c] += row[c];
  }
  if (dx) {
    if (!accumulate_dx) *dx = Matrix<T>(dy.rows(), w.rows());
    kernels::parallel::gemm_nt(dy, w, *dx, accumulate_dx);
  }
}

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta, Matrix<T>* xhat_out,
                     Matrix<T>* rstd_out) {
  const std::size_t n = x.cols();
  Matrix<T> y(x.rows(), n);
  Matrix<T> xhat(x.rows(), n);
  Matrix<T> rstd(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (T v : row) mean += static_cast<double>(v);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (T v : row) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd(r, 0) = static_cast<T>(rs);
    for (std::size_t c = 0; c < n; ++c) {
      const T h = static_cast<T>((static_cast<double>(row[c]) - mean) * rs);
      xhat(r, c) = h;
      y(r, c) = gamma.data()[c] * h + beta.data()[c];
    }
  }
  if (xhat_out) *xhat_out = std::move(xhat);
  if (rstd_out) *rstd_out = std::move(rstd);
  return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& xhat, const Matrix<T>& rstd,
                              const Matrix<T>& gamma, Matrix<T>& dgamma, Matrix<T>& dbeta) {
  const std::size_t n = dy.cols();
  Matrix<T> dx(dy.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double g = static_cast<double>(dy(r, c));
      dgamma.data()[c] += static_cast<T>(g * static_cast<double>(xhat(r, c)));
      dbeta.data()[c] += static_cast<T>(g);
      dxhat[c] = g * static_cast<double>(gamma.data()[c]);
      mean_d += dxhat[c];
      mean_dx += dxhat[c] * static_cast<double>(xhat(r, c));
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    const double rs = static_cast<double>(rstd(r, 0));
    for (std::size_t c = 0; c < n; ++c) {
      dx(r, c) = static_cast<T>(rs * (dxhat[c] - mean_d - static_cast<double>(xhat(r, c)) * mean_dx));
    }
  }
  return dx;
}

template <typename T>
T gelu(T x) {
  const double v = static_cast<double>(x);
  return static_cast<T>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
}

template <typename T>
T gelu_grad(T x) {
  const double v = static_cast<double>(x);
  const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
  return static_cast<T>(cdf + v * pdf);
}

template <typename T>
Matrix<T> dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
  Matrix<T> m(rows, cols);
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& v : m.flat()) v = keep(rng) ? scale : T{0};
  return m;
}

template <typename T>
void hadamard_inplace(Matrix<T>& a, const Matrix<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= b.data()[i];
}

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

// Softmax self-attention for every (item, head). Fills ctx and, if requested, the weights.
template <typename T>
void attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, std::size_t batch, std::size_t seq_len,
               std::size_t heads, Matrix<T>& ctx, std::vector<Matrix<T>>* probs_out) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  ctx = Matrix<T>(q.rows(), d);
  if (probs_out) probs_out->assign(batch * heads, Matrix<T>());
  std::vector<double> scores(seq_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      Matrix<T> probs(seq_len, seq_len);
      for (std::size_t i = 0; i < seq_len; ++i) {
        const T* qi = q.data() + (base + i) * d + off;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < seq_len; ++j) {
          const T* kj = k.data() + (base + j) * d + off;
          T s{0};
          for (std::size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
          scores[j] = static_cast<double>(s) * scale;
          mx = std::max(mx, scores[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < seq_len; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          sum += scores[j];
        }
        T* ci = ctx.data() + (base + i) * d + off;
        for (std::size_t j = 0; j < seq_len; ++j) {
          const T p = static_cast<T>(scores[j] / sum);
          probs(i, j) = p;
          const T* vj = v.data() + (base + j) * d + off;
          for (std::size_t e = 0; e < dh; ++e) ci[e] += p * vj[e];
        }
      }
      if (probs_out) (*probs_out)[b * heads + h] = std::move(probs);
    }
  }
}

}  // namespace

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(stream_seed(seed, Stream::kInit));
  const auto d = cfg.d_model;
  ModelParams<T> p;
  p.time_w = xavier<T>(cfg.c_in, d, rng);
  p.time_b = Matrix<T>(1, d);
  p.freq_w = xavier<T>(cfg.c_in, d, rng);
  p.freq_b = Matrix<T>(1, d);
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    EncoderLayerParams<T> l;
    l.wq = xavier<T>(d, d, rng);
    l.bq = Matrix<T>(1, d);
    l.wk = xavier<T>(d, d, rng);
    l.bk = Matrix<T>(1, d);
    l.wv = xavier<T>(d, d, rng);
    l.bv = Matrix<T>(1, d);
    l.wo = xavier<T>(d, d, rng);
    l.bo = Matrix<T>(1, d);
    l.ln1_gamma = Matrix<T>(1, d, T{1});
    l.ln1_beta = Matrix<T>(1, d);
    l.w1 = xavier<T>(d, cfg.ffn_dim, rng);
    l.b1 = Matrix<T>(1, cfg.ffn_dim);
    l.w2 = xavier<T>(cfg.ffn_dim, d, rng);
    l.b2 = Matrix<T>(1, d);
    l.ln2_gamma = Matrix<T>(1, d, T{1});
    l.ln2_beta = Matrix<T>(1, d);
    p.layers.push_back(std::move(l));
  }
  p.head_time_w = xavier<T>(d, cfg.c_in, rng);
  p.head_time_b = Matrix<T>(1, cfg.c_in);
  p.head_freq_w = xavier<T>(d, cfg.c_in, rng);
  p.head_freq_b = Matrix<T>(1, cfg.c_in);
  if (cfg.n_classes > 0) init_classifier(p, cfg, seed);
  return p;
}

template <typename T>
void init_classifier(ModelParams<T>& params, const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.n_classes < 2) throw ValidationError("classifier needs n_classes >= 2");
  Rng rng(stream_seed(seed, Stream::kClassifierInit));
  params.cls_w = xavier<T>(cfg.d_model, cfg.n_classes, rng);
  params.cls_b = Matrix<T>(1, cfg.n_classes);
}

template <typename T>
ModelParams<T> zero_grads(const ModelParams<T>& like, bool encoder, bool classifier) {
  ModelParams<T> g;
  if (encoder) {
    g.time_w = zero_like(like.time_w);
    g.time_b = zero_like(like.time_b);
    g.freq_w = zero_like(like.freq_w);
    g.freq_b = zero_like(like.freq_b);
    for (const auto& l : like.layers) {
      EncoderLayerParams<T> z;
      z.wq = zero_like(l.wq);
      z.bq = zero_like(l.bq);
      z.wk = zero_like(l.wk);
      z.bk = zero_like(l.bk);
      z.wv = zero_like(l.wv);
      z.bv = zero_like(l.bv);
      z.wo = zero_like(l.wo);
      z.bo = zero_like(l.bo);
      z.ln1_gamma = zero_like(l.ln1_gamma);
      z.ln1_beta = zero_like(l.ln1_beta);
      z.w1 = zero_like(l.w1);
      z.b1 = zero_like(l.b1);
      z.w2 = zero_like(l.w2);
      z.b2 = zero_like(l.b2);
      z.ln2_gamma = zero_like(l.ln2_gamma);
      z.ln2_beta = zero_like(l.ln2_beta);
      g.layers.push_back(std::move(z));
    }
    g.head_time_w = zero_like(like.head_time_w);
    g.head_time_b = zero_like(like.head_time_b);
    g.head_freq_w = zero_like(like.head_freq_w);
    g.head_freq_b = zero_like(like.head_freq_b);
  }
  if (classifier) {
    g.cls_w = zero_like(like.cls_w);
    g.cls_b = zero_like(like.cls_b);
  }
  return g;
}

template <typename T>
Matrix<T> sinusoidal_positions(std::size_t seq_len, std::size_t d_model) {
  Matrix<T> pe(seq_len, d_model);
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      const double a = static_cast<double>(pos) * freq;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

template <typename T>
Network<T>::Network(ModelConfig cfg, ModelParams<T> params)
    : cfg_(std::move(cfg)), params_(std::move(params)), positions_(sinusoidal_positions<T>(cfg_.seq_len, cfg_.d_model)) {
  cfg_.validate();
  if (params_.layers.size() != cfg_.n_layers) throw ValidationError("parameter layer count does not match config");
  require_shape(params_.time_w, cfg_.c_in, cfg_.d_model, "embed.time.weight");
  require_shape(params_.freq_w, cfg_.c_in, cfg_.d_model, "embed.freq.weight");
  require_shape(params_.head_time_w, cfg_.d_model, cfg_.c_in, "head.time.weight");
  if (cfg_.n_classes > 0) require_shape(params_.cls_w, cfg_.d_model, cfg_.n_classes, "classifier.weight");
  for (const auto& l : params_.layers) {
    require_shape(l.wq, cfg_.d_model, cfg_.d_model, "attn.q.weight");
    require_shape(l.w1, cfg_.d_model, cfg_.ffn_dim, "ffn.fc1.weight");
  }
}

template <typename T>
void Network<T>::check_input(const Matrix<T>& m, std::size_t batch, const char* what) const {
  require_shape(m, batch * cfg_.seq_len, cfg_.c_in, what);
}

template <typename T>
Matrix<T> Network<T>::embed(const Matrix<T>& input_time, const Matrix<T>& input_freq, std::size_t batch) const {
  check_input(input_time, batch, "embed(input_time)");
  check_input(input_freq, batch, "embed(input_freq)");
  const bool use_time = cfg_.encoding != Encoding::kFreq;
  const bool use_freq = cfg_.encoding != Encoding::kTime;
  Matrix<T> e(input_time.rows(), cfg_.d_model);
  if (use_time) kernels::parallel::gemm_nn(input_time, params_.time_w, e, true);
  if (use_freq) kernels::parallel::gemm_nn(input_freq, params_.freq_w, e, true);
  for (std::size_t r = 0; r < e.rows(); ++r) {
    const auto pos = positions_.row(r % cfg_.seq_len);
    auto row = e.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      T bias{0};
      if (use_time) bias += params_.time_b.data()[c];
      if (use_freq) bias += params_.freq_b.data()[c];
      row[c] += bias + pos[c];
    }
  }
  return e;
}

template <typename T>
Matrix<T> Network<T>::encode(const Matrix<T>& embedded, std::size_t batch, std::vector<LayerCache<T>>* cache,
                             Rng* dropout_rng) const {
  require_shape(embedded, batch * cfg_.seq_len, cfg_.d_model, "encode");
  const bool dropout = cfg_.dropout > 0.0 && dropout_rng != nullptr;
  if (cache) cache->clear();
  Matrix<T> x = embedded;
  for (const auto& l : params_.layers) {
    LayerCache<T> c;
    c.q = linear(x, l.wq, l.bq);
    c.k = linear(x, l.wk, l.bk);
    c.v = linear(x, l.wv, l.bv);
    attention(c.q, c.k, c.v, batch, cfg_.seq_len, cfg_.n_heads, c.ctx, cache ? &c.probs : nullptr);
    Matrix<T> h1 = linear(c.ctx, l.wo, l.bo);
    if (dropout) {
      c.drop1 = dropout_mask<T>(h1.rows(), h1.cols(), cfg_.dropout, *dropout_rng);
      hadamard_inplace(h1, c.drop1);
    }
    add_inplace(h1, x);
    c.y1 = layer_norm(h1, l.ln1_gamma, l.ln1_beta, &c.ln1_xhat, &c.ln1_rstd);
    c.f1 = linear(c.y1, l.w1, l.b1);
    c.g = c.f1;
    for (auto& v : c.g.flat()) v = gelu(v);
    Matrix<T> h2 = linear(c.g, l.w2, l.b2);
    if (dropout) {
      c.drop2 = dropout_mask<T>(h2.rows(), h2.cols(), cfg_.dropout, *dropout_rng);
      hadamard_inplace(h2, c.drop2);
    }
    add_inplace(h2, c.y1);
    Matrix<T> out = layer_norm(h2, l.ln2_gamma, l.ln2_beta, &c.ln2_xhat, &c.ln2_rstd);
    if (cache) {
      c.x = std::move(x);
      cache->push_back(std::move(c));
    }
    x = std::move(out);
  }
  return x;
}

template <typename T>
std::vector<Matrix<T>> Network<T>::attention_weights(const Matrix<T>& embedded, std::size_t batch,
                                                     std::size_t layer) const {
  std::vector<LayerCache<T>> cache;
  encode(embedded, batch, &cache);
  return cache.at(layer).probs;
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> Network<T>::reconstruct(const Matrix<T>& encoded) const {
  if (encoded.cols() != cfg_.d_model) throw ContractViolation("reconstruct: encoded width != d_model");
  return {linear(encoded, params_.head_time_w, params_.head_time_b),
          linear(encoded, params_.head_freq_w, params_.head_freq_b)};
}

template <typename T>
Matrix<T> Network<T>::mean_pool(const Matrix<T>& encoded, std::size_t batch) const {
  require_shape(encoded, batch * cfg_.seq_len, cfg_.d_model, "mean_pool");
  Matrix<T> pooled(batch, cfg_.d_model);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < cfg_.d_model; ++c) {
      double s = 0.0;
      for (std::size_t l = 0; l < cfg_.seq_len; ++l) s += static_cast<double>(encoded(b * cfg_.seq_len + l, c));
      pooled(b, c) = static_cast<T>(s / static_cast<double>(cfg_.seq_len));
    }
  }
  return pooled;
}

template <typename T>
Matrix<T> Network<T>::classify(const Matrix<T>& encoded, std::size_t batch) const {
  if (cfg_.n_classes == 0 || params_.cls_w.empty()) throw ValidationError("classify: model has no classifier head");
  return linear(mean_pool(encoded, batch), params_.cls_w, params_.cls_b);
}

template <typename T>
ForwardState<T> Network<T>::forward(const Matrix<T>& input_time, const Matrix<T>& input_freq, std::size_t batch,
                                    bool keep_cache, Rng* dropout_rng) const {
  ForwardState<T> st;
  st.batch = batch;
  const auto embedded = embed(input_time, input_freq, batch);
  st.encoded = encode(embedded, batch, keep_cache ? &st.layers : nullptr, dropout_rng);
  if (keep_cache) {
    st.input_time = input_time;
    st.input_freq = input_freq;
  }
  return st;
}

template <typename T>
void Network<T>::backward(const ForwardState<T>& st, const Matrix<T>* d_pred_time, const Matrix<T>* d_pred_freq,
                          const Matrix<T>* d_logits, ModelParams<T>& grads) const {
  const bool encoder = !grads.layers.empty();
  const auto rows = st.batch * cfg_.seq_len;
  Matrix<T> d_enc(rows, cfg_.d_model);

  if (d_logits) {
    if (grads.cls_w.empty()) throw ContractViolation("backward: classifier gradient not allocated");
    require_shape(*d_logits, st.batch, cfg_.n_classes, "backward(d_logits)");
    const auto pooled = mean_pool(st.encoded, st.batch);
    Matrix<T> d_pooled;
    linear_backward(pooled, params_.cls_w, *d_logits, grads.cls_w, grads.cls_b, encoder ? &d_pooled : nullptr, false);
    if (encoder) {
      const T inv = static_cast<T>(1.0 / static_cast<double>(cfg_.seq_len));
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = d_pooled.row(r / cfg_.seq_len);
        auto dst = d_enc.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c] * inv;
      }
    }
  }
  if (!encoder) {
    if (d_pred_time || d_pred_freq) throw ContractViolation("backward: reconstruction gradient needs encoder grads");
    return;
  }
  if (st.layers.size() != cfg_.n_layers) throw ContractViolation("backward: forward ran without cache");
  if (d_pred_time) {
    require_shape(*d_pred_time, rows, cfg_.c_in, "backward(d_pred_time)");
    linear_backward(st.encoded, params_.head_time_w, *d_pred_time, grads.head_time_w, grads.head_time_b, &d_enc, true);
  }
  if (d_pred_freq) {
    require_shape(*d_pred_freq, rows, cfg_.c_in, "backward(d_pred_freq)");
    linear_backward(st.encoded, params_.head_freq_w, *d_pred_freq, grads.head_freq_w, grads.head_freq_b, &d_enc, true);
  }

  const std::size_t d = cfg_.d_model;
  const std::size_t heads = cfg_.n_heads;
  const std::size_t dh = cfg_.head_dim();
  const std::size_t L = cfg_.seq_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix<T> dx = std::move(d_enc);
  for (std::size_t li = cfg_.n_layers; li-- > 0;) {
    const auto& l = params_.layers[li];
    auto& g = grads.layers[li];
    const auto& c = st.layers[li];

    Matrix<T> dh2 = layer_norm_backward(dx, c.ln2_xhat, c.ln2_rstd, l.ln2_gamma, g.ln2_gamma, g.ln2_beta);
    Matrix<T> dy1 = dh2;
    Matrix<T> df2 = std::move(dh2);
    if (!c.drop2.empty()) hadamard_inplace(df2, c.drop2);
    Matrix<T> dg;
    linear_backward(c.g, l.w2, df2, g.w2, g.b2, &dg, false);
    for (std::size_t i = 0; i < dg.size(); ++i) dg.data()[i] *= gelu_grad(c.f1.data()[i]);
    linear_backward(c.y1, l.w1, dg, g.w1, g.b1, &dy1, true);

    Matrix<T> dh1 = layer_norm_backward(dy1, c.ln1_xhat, c.ln1_rstd, l.ln1_gamma, g.ln1_gamma, g.ln1_beta);
    Matrix<T> dlayer_in = dh1;
    Matrix<T> da = std::move(dh1);
    if (!c.drop1.empty()) hadamard_inplace(da, c.drop1);
    Matrix<T> dctx;
    linear_backward(c.ctx, l.wo, da, g.wo, g.bo, &dctx, false);

    Matrix<T> dq(rows, d), dk(rows, d), dv(rows, d);
    std::vector<double> dp(L);
    for (std::size_t b = 0; b < st.batch; ++b) {
      const std::size_t base = b * L;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        const auto& probs = c.probs[b * heads + h];
        for (std::size_t i = 0; i < L; ++i) {
          const T* dci = dctx.data() + (base + i) * d + off;
          double dot = 0.0;
          for (std::size_t j = 0; j < L; ++j) {
            const T* vj = c.v.data() + (base + j) * d + off;
            T* dvj = dv.data() + (base + j) * d + off;
            const T pij = probs(i, j);
            T s{0};
            for (std::size_t e = 0; e < dh; ++e) {
              s += dci[e] * vj[e];
              dvj[e] += pij * dci[e];
            }
            dp[j] = static_cast<double>(s);
            dot += static_cast<double>(pij) * dp[j];
          }
          const T* qi = c.q.data() + (base + i) * d + off;
          T* dqi = dq.data() + (base + i) * d + off;
          for (std::size_t j = 0; j < L; ++j) {
            const T ds = static_cast<T>(static_cast<double>(probs(i, j)) * (dp[j] - dot) * scale);
            const T* kj = c.k.data() + (base + j) * d + off;
            T* dkj = dk.data() + (base + j) * d + off;
            for (std::size_t e = 0; e < dh; ++e) {
              dqi[e] += ds * kj[e];
              dkj[e] += ds * qi[e];
            }
          }
        }
      }
    }
    linear_backward(c.x, l.wq, dq, g.wq, g.bq, &dlayer_in, true);
    linear_backward(c.x, l.wk, dk, g.wk, g.bk, &dlayer_in, true);
    linear_backward(c.x, l.wv, dv, g.wv, g.bv, &dlayer_in, true);
    dx = std::move(dlayer_in);
  }

  if (cfg_.encoding != Encoding::kFreq) {
    linear_backward(st.input_time, params_.time_w, dx, grads.time_w, grads.time_b, static_cast<Matrix<T>*>(nullptr), false);
  }
  if (cfg_.encoding != Encoding::kTime) {
    linear_backward(st.input_freq, params_.freq_w, dx, grads.freq_w, grads.freq_b, static_cast<Matrix<T>*>(nullptr), false);
  }
}

template <typename T>
ReconLoss masked_recon_loss(const Matrix<T>& pred_time, const Matrix<T>& pred_freq, const Matrix<T>& target_time,
                            const Matrix<T>& target_freq, const std::vector<MaskPlan>& q_time,
                            const std::vector<MaskPlan>& q_freq, std::size_t seq_len, Encoding encoding,
                            bool shared_n, std::type_identity_t<Matrix<T>>* d_time,
                            std::type_identity_t<Matrix<T>>* d_freq) {
  const std::size_t batch = q_time.size();
  if (batch == 0 || q_freq.size() != batch) throw ContractViolation("masked_recon_loss: mask count != batch");
  const std::size_t channels = pred_time.cols();
  require_shape(pred_time, batch * seq_len, channels, "masked_recon_loss(pred_time)");
  require_shape(pred_freq, batch * seq_len, channels, "masked_recon_loss(pred_freq)");
  require_shape(target_time, batch * seq_len, channels, "masked_recon_loss(target_time)");
  require_shape(target_freq, batch * seq_len, channels, "masked_recon_loss(target_freq)");
  const bool use_time = encoding != Encoding::kFreq;
  const bool use_freq = encoding != Encoding::kTime;
  if (d_time) *d_time = Matrix<T>(pred_time.rows(), channels);
  if (d_freq) *d_freq = Matrix<T>(pred_freq.rows(), channels);

  ReconLoss out;
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& qt = q_time[b].masked;
    const auto& qf = q_freq[b].masked;
    if ((use_time || shared_n) && qt.empty()) throw ContractViolation("masked_recon_loss: empty time mask set");
    if (use_freq && qf.empty()) throw ContractViolation("masked_recon_loss: empty frequency mask set");
    auto term = [&](const Matrix<T>& pred, const Matrix<T>& target, const std::vector<std::size_t>& q, double n,
                    Matrix<T>* grad) {
      const double denom = n * static_cast<double>(channels);
      double sum = 0.0;
      for (auto pos : q) {
        if (pos >= seq_len) throw ContractViolation("masked_recon_loss: mask index out of range");
        const auto r = b * seq_len + pos;
        for (std::size_t c = 0; c < channels; ++c) {
          const double diff = static_cast<double>(pred(r, c)) - static_cast<double>(target(r, c));
          sum += diff * diff;
          if (grad) (*grad)(r, c) = static_cast<T>(2.0 * diff / denom * inv_b);
        }
      }
      return sum / denom;
    };
    if (use_time) out.time_term += term(pred_time, target_time, qt, static_cast<double>(qt.size()), d_time) * inv_b;
    if (use_freq) {
      const double n = static_cast<double>(shared_n ? qt.size() : qf.size());
      out.freq_term += term(pred_freq, target_freq, qf, n, d_freq) * inv_b;
    }
  }
  out.loss = out.time_term + out.freq_term;
  return out;
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (T v : row) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (T v : row) sum += std::exp(static_cast<double>(v) - mx);
    for (std::size_t c = 0; c < row.size(); ++c) {
      out(r, c) = static_cast<T>(std::exp(static_cast<double>(row[c]) - mx) / sum);
    }
  }
  return out;
}

template <typename T>
double cross_entropy(const Matrix<T>& logits, const std::vector<std::uint32_t>& labels,
                     std::type_identity_t<Matrix<T>>* d_logits) {
  if (logits.rows() != labels.size() || labels.empty()) throw ContractViolation("cross_entropy: label count mismatch");
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  if (d_logits) *d_logits = Matrix<T>(logits.rows(), logits.cols());
  double loss = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (labels[r] >= logits.cols()) throw ContractViolation("cross_entropy: label out of range");
    const auto row = logits.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (T v : row) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (T v : row) sum += std::exp(static_cast<double>(v) - mx);
    const double log_z = mx + std::log(sum);
    loss += (log_z - static_cast<double>(row[labels[r]])) * inv_b;
    if (d_logits) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        const double p = std::exp(static_cast<double>(row[c]) - log_z);
        (*d_logits)(r, c) = static_cast<T>((p - (c == labels[r] ? 1.0 : 0.0)) * inv_b);
      }
    }
  }
  return loss;
}

#define ADAPT_INSTANTIATE(T)                                                                                       \
  template struct ModelParams<T>;                                                                                  \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                       \
  template void init_classifier<T>(ModelParams<T>&, const ModelConfig&, std::uint64_t);                            \
  template ModelParams<T> zero_grads<T>(const ModelParams<T>&, bool, bool);                                        \
  template Matrix<T> sinusoidal_positions<T>(std::size_t, std::size_t);                                            \
  template class Network<T>;                                                                                       \
  template ReconLoss masked_recon_loss<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,  \
                                          const std::vector<MaskPlan>&, const std::vector<MaskPlan>&, std::size_t, \
                                          Encoding, bool, Matrix<T>*, Matrix<T>*);                                 \
  template double cross_entropy<T>(const Matrix<T>&, const std::vector<std::uint32_t>&, Matrix<T>*);               \
  template Matrix<T> softmax_rows<T>(const Matrix<T>&);

ADAPT_INSTANTIATE(float)
ADAPT_INSTANTIATE(double)

#undef ADAPT_INSTANTIATE

}  // namespace adapt
