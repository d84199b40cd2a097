#include "adapt/config.hpp"

#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "adapt/binary_io.hpp"

namespace adapt {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kPretrain: return "pretrain";
    case TrainMode::kFinetune: return "finetune";
    case TrainMode::kFinetuneLC: return "finetune_lc";
  }
  return "pretrain";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "pretrain") return TrainMode::kPretrain;
  if (s == "finetune") return TrainMode::kFinetune;
  if (s == "finetune_lc" || s == "lc") return TrainMode::kFinetuneLC;
  throw ValidationError("unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(base_lr >= 0.0)) throw ValidationError("learning rate must be >= 0");
  if (epochs > 0 && warmup_epochs >= epochs) {
    throw ValidationError("warmup_epochs (" + std::to_string(warmup_epochs) + ") must be < epochs (" +
                          std::to_string(epochs) + ")");
  }
  if (!(clip_max_norm > 0.0)) throw ValidationError("clip_max_norm must be > 0");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (seeds == 0) throw ValidationError("seeds must be >= 1");
}

PipelineConfig PipelineConfig::full() {
  PipelineConfig c;
  c.finetune.mode = TrainMode::kFinetune;
  c.finetune.base_lr = 4e-4;
  c.finetune.epochs = 50;
  c.finetune.warmup_epochs = 0;
  c.finetune.batch_size = 32;
  c.finalize();
  return c;
}

PipelineConfig PipelineConfig::desk() {
  PipelineConfig c = full();
  c.align.seq_len = 64;
  c.align.channels = 8;
  c.model.seq_len = 64;
  c.model.c_in = 8;
  c.model.d_model = 32;
  c.model.n_layers = 2;
  c.model.n_heads = 4;
  c.model.ffn_dim = 128;
  c.pretrain.base_lr = 1e-3;
  c.pretrain.epochs = 50;
  c.pretrain.warmup_epochs = 5;
  c.pretrain.batch_size = 32;
  c.finetune.base_lr = 1e-3;
  c.finetune.epochs = 50;
  c.finetune.warmup_epochs = 0;
  c.finetune.batch_size = 32;
  c.finalize();
  return c;
}

void PipelineConfig::finalize() {
  pretrain.seed = seed;
  finetune.seed = seed;
  pretrain.mode = TrainMode::kPretrain;
  if (finetune.mode == TrainMode::kPretrain) finetune.mode = TrainMode::kFinetune;
}

void PipelineConfig::validate() const {
  noise.validate();
  mask.validate();
  model.validate();
  pretrain.validate();
  finetune.validate();
  if (align.seq_len == 0 || align.channels == 0) throw ValidationError("align shape must be >= 1");
  if (model.seq_len != align.seq_len || model.c_in != align.channels) {
    throw ValidationError("model input shape (" + std::to_string(model.seq_len) + ", " + std::to_string(model.c_in) +
                          ") must equal the aligned shape (" + std::to_string(align.seq_len) + ", " +
                          std::to_string(align.channels) + ")");
  }
}

namespace {

namespace pt = boost::property_tree;

template <typename V>
void read(const pt::ptree& tree, const std::string& key, V& target) {
  if (tree.get_child_optional(key)) target = tree.get<V>(key);
}

void read_bool(const pt::ptree& tree, const std::string& key, bool& target) {
  if (auto v = tree.get_optional<std::string>(key)) {
    if (*v == "true" || *v == "1" || *v == "on" || *v == "yes") {
      target = true;
    } else if (*v == "false" || *v == "0" || *v == "off" || *v == "no") {
      target = false;
    } else {
      throw ValidationError("config key '" + key + "' expects a boolean, got '" + *v + "'");
    }
  }
}

void read_train(const pt::ptree& tree, const std::string& section, TrainConfig& t) {
  const auto s = section + ".";
  read(tree, s + "lr", t.base_lr);
  read(tree, s + "beta1", t.beta1);
  read(tree, s + "beta2", t.beta2);
  read(tree, s + "eps", t.eps);
  read(tree, s + "weight_decay", t.weight_decay);
  read(tree, s + "epochs", t.epochs);
  read(tree, s + "warmup_epochs", t.warmup_epochs);
  read(tree, s + "clip_max_norm", t.clip_max_norm);
  read(tree, s + "batch_size", t.batch_size);
  read_bool(tree, s + "balance_datasets", t.balance_datasets);
  read_bool(tree, s + "shared_n", t.shared_n);
  read_bool(tree, s + "noised_targets", t.noised_targets);
  read(tree, s + "seeds", t.seeds);
  if (auto m = tree.get_optional<std::string>(s + "mode")) t.mode = parse_train_mode(*m);
}

}  // namespace

PipelineConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError(std::string("config parse error: ") + e.what());
  }
  try {
    const auto preset = tree.get<std::string>("run.preset", "full");
    PipelineConfig c;
    if (preset == "full") {
      c = PipelineConfig::full();
    } else if (preset == "desk") {
      c = PipelineConfig::desk();
    } else {
      throw ValidationError("unknown preset '" + preset + "' (expected full or desk)");
    }
    read(tree, "run.seed", c.seed);
    read(tree, "run.threads", c.threads);
    read_bool(tree, "run.prefetch", c.prefetch);
    if (auto s = tree.get_optional<std::string>("ingest.scope")) {
      if (*s == "per_sample") {
        c.scope = NormScope::kPerSample;
      } else if (*s == "per_dataset") {
        c.scope = NormScope::kPerDataset;
      } else {
        throw ValidationError("ingest.scope must be per_sample or per_dataset");
      }
    }
    read(tree, "align.seq_len", c.align.seq_len);
    read(tree, "align.channels", c.align.channels);
    read_bool(tree, "align.spectrum_zscore", c.align.spectrum_zscore);
    if (auto m = tree.get_optional<std::string>("align.method")) {
      if (*m == "adaptive_pool") {
        c.align.method = AlignMethod::kAdaptivePool;
      } else if (*m == "truncate") {
        c.align.method = AlignMethod::kTruncate;
      } else {
        throw ValidationError("align.method must be adaptive_pool or truncate");
      }
    }
    read(tree, "noise.mu", c.noise.mu);
    read(tree, "noise.sigma", c.noise.sigma);
    read_bool(tree, "noise.enabled_pretrain", c.noise.enabled_pretrain);
    read_bool(tree, "noise.enabled_finetune", c.noise.enabled_finetune);
    read(tree, "mask.p", c.mask.p);
    read(tree, "mask.l_max", c.mask.l_max);
    read(tree, "mask.p_m", c.mask.p_m);
    read(tree, "mask.p_r", c.mask.p_r);
    read(tree, "mask.mask_ratio", c.mask.mask_ratio);
    c.model.seq_len = c.align.seq_len;
    c.model.c_in = c.align.channels;
    read(tree, "model.d_model", c.model.d_model);
    read(tree, "model.n_layers", c.model.n_layers);
    read(tree, "model.n_heads", c.model.n_heads);
    read(tree, "model.ffn_dim", c.model.ffn_dim);
    read(tree, "model.dropout", c.model.dropout);
    if (auto e = tree.get_optional<std::string>("model.encoding")) {
      if (*e == "joint") {
        c.model.encoding = Encoding::kJoint;
      } else if (*e == "time") {
        c.model.encoding = Encoding::kTime;
      } else if (*e == "freq") {
        c.model.encoding = Encoding::kFreq;
      } else {
        throw ValidationError("model.encoding must be joint, time or freq");
      }
    }
    read_train(tree, "pretrain", c.pretrain);
    read_train(tree, "finetune", c.finetune);
    c.finalize();
    return c;
  } catch (const pt::ptree_bad_data& e) {
    throw ValidationError(std::string("config value has the wrong type: ") + e.what());
  }
}

PipelineConfig load_config(const std::string& path) { return parse_config(io::read_file(path)); }

std::string describe(const PipelineConfig& c) {
  std::ostringstream o;
  auto line = [&](const std::string& key, const auto& value, const char* note = nullptr) {
    o << key << " = " << value;
    if (note) o << "    # " << note;
    o << "\n";
  };
  auto b = [](bool v) { return v ? "true" : "false"; };
  line("run.seed", c.seed);
  line("run.threads", c.threads);
  line("run.prefetch", b(c.prefetch), "bounded queue, 2 batches ahead");
  line("ingest.scope", c.scope == NormScope::kPerSample ? "per_sample" : "per_dataset",
       "chosen default: statistics per sample (source does not say)");
  line("ingest.constant_channel", "zeros", "sd <= 1e-8 maps to 0; population sd");
  line("align.seq_len", c.align.seq_len);
  line("align.channels", c.align.channels);
  line("align.method", c.align.method == AlignMethod::kAdaptivePool ? "adaptive_pool" : "truncate");
  line("align.spectrum", "one-sided |DFT|/length", "chosen meaning of 'normalized FFT'");
  line("align.spectrum_zscore", b(c.align.spectrum_zscore), "spectrum not re-normalized by default");
  line("noise.mu", c.noise.mu);
  line("noise.sigma", c.noise.sigma, "chosen default; value not given in source");
  line("noise.enabled_pretrain", b(c.noise.enabled_pretrain));
  line("noise.enabled_finetune", b(c.noise.enabled_finetune));
  line("mask.p", c.mask.p);
  line("mask.l_max", c.mask.l_max);
  line("mask.p_m", c.mask.p_m);
  line("mask.p_r", c.mask.p_r);
  line("mask.mask_ratio", c.mask.mask_ratio, "chosen default (MLM convention); not given in source");
  line("mask.granularity", "whole time positions", "random spans replaced with N(0,1)");
  line("mask.independent_time_freq", "true", "separate span draws per domain");
  line("model.d_model", c.model.d_model);
  line("model.n_layers", c.model.n_layers);
  line("model.n_heads", c.model.n_heads, "chosen default");
  line("model.ffn_dim", c.model.ffn_dim, "chosen default: 4 x d_model");
  line("model.dropout", c.model.dropout, "chosen default");
  line("model.norm", "post-norm, GELU, sinusoidal positions", "chosen defaults");
  line("model.encoding",
       c.model.encoding == Encoding::kJoint ? "joint" : (c.model.encoding == Encoding::kTime ? "time" : "freq"));
  line("model.init", "xavier_uniform", "chosen default");
  for (const auto& [name, t] : {std::pair<const char*, const TrainConfig&>{"pretrain", c.pretrain},
                                std::pair<const char*, const TrainConfig&>{"finetune", c.finetune}}) {
    const std::string s = std::string(name) + ".";
    line(s + "mode", to_string(t.mode));
    line(s + "lr", t.base_lr);
    line(s + "betas", std::to_string(t.beta1) + ", " + std::to_string(t.beta2));
    line(s + "eps", t.eps, "chosen default");
    line(s + "weight_decay", t.weight_decay, "chosen default (AdamW convention)");
    line(s + "epochs", t.epochs);
    line(s + "warmup_epochs", t.warmup_epochs, "linear warmup, then cosine, per step");
    line(s + "clip_max_norm", t.clip_max_norm);
    line(s + "batch_size", t.batch_size);
    if (t.mode == TrainMode::kPretrain) {
      line(s + "balance_datasets", b(t.balance_datasets), "default: sample-proportional");
      line(s + "shared_n", b(t.shared_n), "default: each loss term divided by its own mask count");
      line(s + "noised_targets", b(t.noised_targets), "default: clean pooled targets");
    } else {
      line(s + "seeds", t.seeds);
      line(s + "head", "mean-pool + linear", "chosen default");
    }
  }
  return o.str();
}

}  // namespace adapt
