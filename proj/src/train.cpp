#include "adapt/train.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

#include "json.hpp"

#include "adapt/binary_io.hpp"
#include "adapt/kernels.hpp"
#include "adapt/optim.hpp"

namespace adapt {

namespace {

AdamWConfig adamw_of(const TrainConfig& t) { return {t.beta1, t.beta2, t.eps, t.weight_decay}; }

void log_record(std::ostream* log, const nlohmann::json& j) {
  if (log) *log << j.dump() << "\n";
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

AugmentOptions pretrain_augment(const PipelineConfig& cfg) {
  AugmentOptions a;
  a.noise = cfg.noise;
  a.mask = cfg.mask;
  a.noise_on = cfg.noise.enabled_pretrain;
  a.noised_targets = cfg.pretrain.noised_targets;
  a.mask_on = true;
  return a;
}

AugmentOptions finetune_augment(const PipelineConfig& cfg) {
  AugmentOptions a;
  a.noise = cfg.noise;
  a.mask = cfg.mask;
  a.noise_on = cfg.noise.enabled_finetune;
  a.mask_on = false;
  return a;
}

Rng dropout_rng(std::uint64_t epoch_seed, std::size_t batch_index) {
  return Rng(mix_seed(stream_seed(epoch_seed, Stream::kDropout), batch_index));
}

// Runs one epoch's batches through `step`, in order, optionally prefetched.
template <typename F>
void for_each_batch(const SampleStore& store, std::uint64_t seed, const EpochOptions& eopts, const AugmentOptions& aug,
                    bool prefetch, F&& step) {
  if (prefetch) {
    BatchPrefetcher pf(store, seed, eopts, aug, 2);
    std::size_t i = 0;
    while (auto b = pf.next()) step(*b, i++);
  } else {
    const auto plan = plan_epoch(store, seed, eopts);
    for (std::size_t i = 0; i < plan.size(); ++i) step(make_batch(store, plan[i], seed, aug, eopts.parallel), i);
  }
}

double recon_step_loss(const Network<float>& net, const PipelineConfig& cfg, const Batch& b,
                       ForwardState<float>* state_out, Matrix<float>* d_time, Matrix<float>* d_freq, Rng* drop) {
  auto st = net.forward(cast<float>(b.input_time), cast<float>(b.input_freq), b.size, state_out != nullptr, drop);
  auto [pt, pf] = net.reconstruct(st.encoded);
  const auto loss = masked_recon_loss(pt, pf, cast<float>(b.target_time), cast<float>(b.target_freq), b.q_time,
                                      b.q_freq, cfg.model.seq_len, cfg.model.encoding, cfg.pretrain.shared_n, d_time,
                                      d_freq);
  if (state_out) *state_out = std::move(st);
  return loss.loss;
}

}  // namespace

PretrainResult pretrain(const PipelineConfig& cfg, const SampleStore& store, const PretrainOptions& opts) {
  cfg.validate();
  if (store.empty()) throw ValidationError("pretrain: empty training set");
  const auto& t = cfg.pretrain;
  ModelConfig mcfg = cfg.model;
  mcfg.n_classes = 0;

  Checkpoint ckpt{mcfg, init_params<float>(mcfg, t.seed)};
  auto grads_template = zero_grads(ckpt.params, true, false);
  TrainState state;
  state.adam = make_adam_state(grads_template);
  state.best_metric = std::numeric_limits<double>::infinity();
  if (!opts.resume_from.empty()) {
    ckpt = load_checkpoint(opts.resume_from);
    if (!(ckpt.config == mcfg)) throw ValidationError("resume checkpoint config does not match the run config");
    auto state_path = std::filesystem::path(opts.resume_from).replace_extension(".adop").string();
    state = decode_train_state(io::read_file(state_path), grads_template);
  }
  Network<float> net(mcfg, std::move(ckpt.params));

  EpochOptions eopts{t.batch_size, t.balance_datasets, true};
  const auto aug = pretrain_augment(cfg);
  const std::uint64_t spe = steps_per_epoch(store.size(), t.batch_size);
  const std::uint64_t total = spe * t.epochs;
  const std::uint64_t warmup = spe * t.warmup_epochs;
  const auto adamw = adamw_of(t);

  PretrainResult result;
  result.first_epoch = state.epochs_done;
  result.best_loss = state.best_metric;
  std::size_t end_epoch = t.epochs;
  if (opts.stop_after_epochs > 0) end_epoch = std::min(end_epoch, state.epochs_done + opts.stop_after_epochs);
  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  Checkpoint best{mcfg, net.params()};
  if (!opts.resume_from.empty()) {
    auto best_path = std::filesystem::path(opts.resume_from).parent_path() / "best.adck";
    if (std::filesystem::exists(best_path)) best = load_checkpoint(best_path.string());
  }

  for (std::size_t epoch = state.epochs_done; epoch < end_epoch; ++epoch) {
    const auto seed = epoch_seed(t.seed, epoch);
    double loss_sum = 0.0;
    std::size_t items = 0;
    for_each_batch(store, seed, eopts, aug, cfg.prefetch, [&](const Batch& b, std::size_t bi) {
      ForwardState<float> st;
      Matrix<float> d_time, d_freq;
      Rng drop = dropout_rng(seed, bi);
      const double loss = recon_step_loss(net, cfg, b, &st, &d_time, &d_freq, &drop);
      auto grads = grads_template;
      net.backward(st, &d_time, &d_freq, nullptr, grads);
      const double norm = clip_gradients(grads, t.clip_max_norm);
      const double lr = lr_at(state.adam.step, total, warmup, t.base_lr);
      adamw_step(net.params(), grads, state.adam, lr, adamw);
      loss_sum += loss * static_cast<double>(b.size);
      items += b.size;
      log_record(opts.log, {{"phase", "pretrain"},
                            {"epoch", epoch},
                            {"step", state.adam.step},
                            {"lr", lr},
                            {"loss", loss},
                            {"grad_norm", norm}});
    });
    const double mean_loss = loss_sum / static_cast<double>(items);
    result.epoch_loss.push_back(mean_loss);
    state.epochs_done = epoch + 1;
    Checkpoint current{mcfg, net.params()};
    if (mean_loss < state.best_metric) {
      state.best_metric = mean_loss;
      best = current;
      if (!opts.out_dir.empty()) save_checkpoint((std::filesystem::path(opts.out_dir) / "best.adck").string(), best);
    }
    if (!opts.out_dir.empty()) {
      const auto dir = std::filesystem::path(opts.out_dir);
      save_checkpoint((dir / "last.adck").string(), current);
      io::write_file((dir / "last.adop").string(), encode_train_state(state));
    }
    log_record(opts.log, {{"phase", "pretrain"}, {"epoch", epoch}, {"mean_loss", mean_loss}});
  }
  result.best_loss = state.best_metric;
  result.last = Checkpoint{mcfg, net.params()};
  result.best = std::move(best);
  return result;
}

double reconstruction_loss(const Network<float>& network, const PipelineConfig& cfg, const SampleStore& store,
                           std::uint64_t seed) {
  EpochOptions eopts{cfg.pretrain.batch_size, false, true};
  const auto aug = pretrain_augment(cfg);
  double sum = 0.0;
  std::size_t items = 0;
  for_each_batch(store, seed, eopts, aug, false, [&](const Batch& b, std::size_t) {
    sum += recon_step_loss(network, cfg, b, nullptr, nullptr, nullptr, nullptr) * static_cast<double>(b.size);
    items += b.size;
  });
  return sum / static_cast<double>(items);
}

namespace {

std::vector<std::uint32_t> labels_of(const Batch& b) {
  std::vector<std::uint32_t> out;
  for (const auto& l : b.labels) {
    if (!l) throw ValidationError("fine-tuning needs labels; sample in dataset '" + b.dataset_ids[out.size()] +
                                  "' is unlabeled");
    out.push_back(*l);
  }
  return out;
}

std::uint32_t argmax(std::span<const float> row) {
  return static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::vector<std::uint32_t> predict(const Network<float>& network, const SampleStore& store, std::size_t batch_size) {
  std::vector<std::uint32_t> out;
  const auto& mc = network.config();
  for (std::size_t start = 0; start < store.size(); start += batch_size) {
    const auto n = std::min(batch_size, store.size() - start);
    Matrix<float> xt(n * mc.seq_len, mc.c_in), xf(n * mc.seq_len, mc.c_in);
    const auto block = mc.seq_len * mc.c_in;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = store.samples[start + i];
      require_shape(s.time_repr, mc.seq_len, mc.c_in, "predict");
      std::transform(s.time_repr.data(), s.time_repr.data() + block, xt.data() + i * block,
                     [](double v) { return static_cast<float>(v); });
      std::transform(s.freq_repr.data(), s.freq_repr.data() + block, xf.data() + i * block,
                     [](double v) { return static_cast<float>(v); });
    }
    const auto st = network.forward(xt, xf, n, false);
    const auto logits = network.classify(st.encoded, n);
    for (std::size_t r = 0; r < n; ++r) out.push_back(argmax(logits.row(r)));
  }
  return out;
}

MetricsReport evaluate(const Network<float>& network, const SampleStore& store, std::size_t batch_size) {
  if (store.empty()) throw ValidationError("evaluate: empty dataset");
  std::vector<std::uint32_t> labels;
  for (const auto& s : store.samples) {
    if (!s.label) throw ValidationError("evaluate: unlabeled sample in dataset '" + s.dataset_id + "'");
    labels.push_back(*s.label);
  }
  return compute_metrics(predict(network, store, batch_size), labels, network.config().n_classes);
}

FinetuneResult finetune(const PipelineConfig& cfg, const Checkpoint& pretrained, const SampleStore& train,
                        const SampleStore* val, const SampleStore& test, std::size_t n_classes, std::uint64_t seed,
                        std::ostream* log) {
  const auto& t = cfg.finetune;
  t.validate();
  if (n_classes < 2) throw ValidationError("fine-tuning needs n_classes >= 2");
  if (pretrained.config.n_classes != 0 && pretrained.config.n_classes != n_classes) {
    throw ValidationError("checkpoint classifier has " + std::to_string(pretrained.config.n_classes) +
                          " classes but the dataset declares " + std::to_string(n_classes));
  }
  for (const auto* s : {&train, val, &test}) {
    if (!s) continue;
    for (const auto& smp : s->samples) {
      if (smp.label && *smp.label >= n_classes) {
        throw ValidationError("label " + std::to_string(*smp.label) + " >= class count " + std::to_string(n_classes));
      }
    }
  }
  ModelConfig mcfg = pretrained.config;
  mcfg.n_classes = n_classes;
  mcfg.dropout = cfg.model.dropout;
  ModelParams<float> params = pretrained.params;
  if (pretrained.config.n_classes == 0) init_classifier(params, mcfg, seed);
  Network<float> net(mcfg, std::move(params));

  const bool lc = t.mode == TrainMode::kFinetuneLC;
  auto grads_template = zero_grads(net.params(), !lc, true);
  auto adam = make_adam_state(grads_template);
  const auto adamw = adamw_of(t);
  const auto aug = finetune_augment(cfg);
  EpochOptions eopts{t.batch_size, false, true};
  const std::uint64_t spe = train.empty() ? 0 : steps_per_epoch(train.size(), t.batch_size);
  const std::uint64_t total = spe * t.epochs;
  const std::uint64_t warmup = spe * t.warmup_epochs;
  const std::uint64_t run_seed = mix_seed(seed, 0xF17E);

  FinetuneResult result;
  std::optional<ModelParams<float>> best_params;
  double best_f1 = -1.0;
  for (std::size_t epoch = 0; epoch < t.epochs; ++epoch) {
    if (train.empty()) throw ValidationError("fine-tuning needs a non-empty training split");
    const auto eseed = epoch_seed(run_seed, epoch);
    double loss_sum = 0.0;
    std::size_t items = 0;
    for_each_batch(train, eseed, eopts, aug, cfg.prefetch, [&](const Batch& b, std::size_t bi) {
      const auto labels = labels_of(b);
      Rng drop = dropout_rng(eseed, bi);
      auto st = net.forward(cast<float>(b.input_time), cast<float>(b.input_freq), b.size, !lc, lc ? nullptr : &drop);
      const auto logits = net.classify(st.encoded, b.size);
      Matrix<float> d_logits;
      const double loss = cross_entropy(logits, labels, &d_logits);
      auto grads = grads_template;
      net.backward(st, nullptr, nullptr, &d_logits, grads);
      clip_gradients(grads, t.clip_max_norm);
      const double lr = lr_at(adam.step, total, warmup, t.base_lr);
      adamw_step(net.params(), grads, adam, lr, adamw);
      loss_sum += loss * static_cast<double>(b.size);
      items += b.size;
      log_record(log, {{"phase", to_string(t.mode)}, {"epoch", epoch}, {"step", adam.step}, {"lr", lr}, {"loss", loss}});
    });
    result.epoch_loss.push_back(loss_sum / static_cast<double>(items));
    if (val && !val->empty()) {
      auto report = evaluate(net, *val);
      log_record(log, {{"phase", to_string(t.mode)}, {"epoch", epoch}, {"val_f1", report.f1}});
      if (report.f1 > best_f1) {
        best_f1 = report.f1;
        best_params = net.params();
        result.best_val = report;
      }
    }
  }
  if (best_params) net.params() = std::move(*best_params);
  result.test = evaluate(net, test);
  result.model = Checkpoint{mcfg, net.params()};
  log_record(log, {{"phase", to_string(t.mode)}, {"seed", seed}, {"test_accuracy", result.test.accuracy},
                   {"test_f1", result.test.f1}});
  return result;
}

FinetuneSummary finetune_seeds(const PipelineConfig& cfg, const Checkpoint& pretrained, const SampleStore& train,
                               const SampleStore* val, const SampleStore& test, std::size_t n_classes,
                               std::ostream* log) {
  FinetuneSummary out;
  std::vector<MetricsReport> reports;
  for (std::size_t i = 0; i < cfg.finetune.seeds; ++i) {
    out.runs.push_back(finetune(cfg, pretrained, train, val, test, n_classes, cfg.finetune.seed + i, log));
    reports.push_back(out.runs.back().test);
  }
  out.aggregate = aggregate_seeds(reports);
  return out;
}

}  // namespace adapt
