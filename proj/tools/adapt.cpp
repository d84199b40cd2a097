#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adapt/align.hpp"
#include "adapt/batch.hpp"
#include "adapt/binary_io.hpp"
#include "adapt/checkpoint.hpp"
#include "adapt/config.hpp"
#include "adapt/errors.hpp"
#include "adapt/eval.hpp"
#include "adapt/ingest.hpp"
#include "adapt/train.hpp"

namespace {

using namespace adapt;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kIo = 2;

// Defaults the method description leaves open, shown under --help of every verb that uses them.
constexpr const char* kDefaultsFooter = R"(
Defaults not fixed by the method description (details in README, "Defaults"):
  normalization scope      per_sample z-score, population sd; sd <= 1e-8 gives zeros
  spectrum                 one-sided |DFT|/n, n/2+1 bins, pooled like the time view
  masks                    drawn independently for time and frequency
  targets                  clean aligned views (--noised-targets to switch)
  loss normalization       per-domain masked-row count (--shared-n to share |q_time|)
  sampling                 uniform over the pooled store (--balance-datasets to switch)
  classifier               mean-pool over time + one linear layer
  metrics                  macro averages, 0 on zero division
  fine-tune warmup         0 epochs
Config precedence: preset < --config file < ADAPT_SEED < command-line flags.)";

struct Common {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> mask_ratio, span_p, p_m, noise_sigma;
  std::optional<std::size_t> l_max, batch_size, epochs;
  bool balance = false, shared_n = false, noised_targets = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "INI config file; its [run] preset key picks the base");
  app->add_option("--preset", c.preset, "base values when no config file is given")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  app->add_option("--seed", c.seed, "global seed (overrides ADAPT_SEED and the config)");
  app->add_option("--threads", c.threads, "OpenMP threads for alignment and batching (0: runtime default)");
  app->add_option("--mask-ratio", c.mask_ratio, "fraction of rows masked per view (default 0.15)");
  app->add_option("--span-p", c.span_p, "geometric span-length parameter p (default 0.2)");
  app->add_option("--l-max", c.l_max, "longest span (default 10)");
  app->add_option("--p-m", c.p_m, "probability a span is zeroed; the rest get N(0,1) values (default 0.8)");
  app->add_option("--noise-sigma", c.noise_sigma, "additive Gaussian noise sd (default 0.1)");
  app->add_option("--batch-size", c.batch_size, "batch size of this verb's loop (full 1024, desk 32)");
  app->add_option("--epochs", c.epochs, "epochs of this verb's loop");
  app->add_flag("--balance-datasets", c.balance, "draw a dataset uniformly, then a sample within it");
  app->add_flag("--shared-n", c.shared_n, "normalize the frequency loss by the time mask count");
  app->add_flag("--noised-targets", c.noised_targets, "reconstruct the noised views instead of the clean ones");
  app->footer(kDefaultsFooter);
}

PipelineConfig resolve(const Common& c, bool finetune_loop) {
  PipelineConfig cfg;
  if (!c.config_path.empty()) {
    cfg = load_config(c.config_path);
  } else {
    cfg = c.preset == "full" ? PipelineConfig::full() : PipelineConfig::desk();
  }
  if (const char* env = std::getenv("ADAPT_SEED"); env && *env) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ValidationError(std::string("ADAPT_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (c.mask_ratio) cfg.mask.mask_ratio = *c.mask_ratio;
  if (c.span_p) cfg.mask.p = *c.span_p;
  if (c.l_max) cfg.mask.l_max = *c.l_max;
  if (c.p_m) {
    cfg.mask.p_m = *c.p_m;
    cfg.mask.p_r = 1.0 - *c.p_m;
  }
  if (c.noise_sigma) cfg.noise.sigma = *c.noise_sigma;
  TrainConfig& loop = finetune_loop ? cfg.finetune : cfg.pretrain;
  if (c.batch_size) loop.batch_size = *c.batch_size;
  if (c.epochs) {
    loop.epochs = *c.epochs;
    loop.warmup_epochs = std::min(loop.warmup_epochs, loop.epochs == 0 ? 0 : loop.epochs - 1);
  }
  if (c.balance) cfg.pretrain.balance_datasets = cfg.finetune.balance_datasets = true;
  if (c.shared_n) cfg.pretrain.shared_n = cfg.finetune.shared_n = true;
  if (c.noised_targets) cfg.pretrain.noised_targets = cfg.finetune.noised_targets = true;
  cfg.finalize();
  cfg.validate();
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  std::cout << "# resolved config\n" << describe(cfg) << std::flush;
  return cfg;
}

std::vector<ManifestEntry> entries_for(const DatasetManifest& m, Split split, const std::string& manifest_path) {
  auto entries = m.split(split);
  if (entries.empty()) {
    throw ValidationError("manifest '" + manifest_path + "' has no " + std::string(to_string(split)) + " entries");
  }
  return entries;
}

std::size_t class_count(const std::vector<ManifestEntry>& entries) {
  std::size_t n = 0;
  for (const auto& e : entries) n = std::max<std::size_t>(n, e.classes);
  if (n < 2) throw ValidationError("manifest declares fewer than 2 classes for fine-tuning");
  return n;
}

void write_text(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  io::write_file(path, text);
}

std::ofstream open_log(const std::string& path) {
  std::ofstream log;
  if (path.empty()) return log;
  log.open(path);
  if (!log) throw IoError("cannot open log file '" + path + "'");
  return log;
}

Network<float> network_from(const Checkpoint& ckpt) { return Network<float>(ckpt.config, ckpt.params); }

void check_checkpoint_shape(const Checkpoint& ckpt, const PipelineConfig& cfg, const std::string& path) {
  if (ckpt.config.seq_len != cfg.align.seq_len || ckpt.config.c_in != cfg.align.channels) {
    throw ValidationError("checkpoint '" + path + "' expects " + std::to_string(ckpt.config.seq_len) + "x" +
                          std::to_string(ckpt.config.c_in) + " inputs but the config aligns to " +
                          std::to_string(cfg.align.seq_len) + "x" + std::to_string(cfg.align.channels));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adapt: alignment, masked pretraining and fine-tuning for mixed-shape time series"};
  app.require_subcommand(1);
  app.footer(kDefaultsFooter);

  // convert
  std::vector<std::string> csv_in;
  std::string convert_out, convert_id;
  auto* convert = app.add_subcommand("convert", "pack CSV samples (one file per sample) into an ADTS file");
  convert->add_option("--in", csv_in, "CSV files, one column per channel, '# label=K' comment optional")
      ->required()
      ->check(CLI::ExistingFile);
  convert->add_option("--out", convert_out, "output .adts file")->required();
  convert->add_option("--dataset-id", convert_id, "dataset id attached to every sample");

  // inspect-pool
  std::size_t pool_n = 0, pool_m = 0;
  auto* inspect = app.add_subcommand("inspect-pool", "print the adaptive-pooling kernel table for N inputs, M outputs");
  inspect->add_option("--n", pool_n, "input length N")->required()->check(CLI::PositiveNumber);
  inspect->add_option("--m", pool_m, "output length M")->required()->check(CLI::PositiveNumber);

  // align
  Common align_c;
  std::string align_in, align_out, align_id;
  auto* align = app.add_subcommand("align", "normalize and align an ADTS file to the configured fixed shape");
  align->add_option("--in", align_in, "input .adts file")->required();
  align->add_option("--out", align_out, "output .adas file")->required();
  align->add_option("--dataset-id", align_id, "dataset id recorded in the output");
  add_common(align, align_c);

  // pretrain
  Common pre_c;
  std::string pre_manifest, pre_out, pre_resume, pre_log;
  auto* pre = app.add_subcommand("pretrain", "masked time/frequency reconstruction over every train split");
  pre->add_option("--manifest", pre_manifest, "dataset manifest (JSON)")->required();
  pre->add_option("--out-dir", pre_out, "writes last.adck, last.adop and best.adck");
  pre->add_option("--resume", pre_resume, "checkpoint to resume from (its .adop must sit next to it)");
  pre->add_option("--log", pre_log, "line-delimited JSON training log");
  add_common(pre, pre_c);

  // finetune
  Common ft_c;
  std::string ft_manifest, ft_ckpt, ft_report, ft_save, ft_log, ft_mode = "finetune";
  auto* ft = app.add_subcommand("finetune", "cross-entropy fine-tuning repeated over seeds");
  ft->add_option("--manifest", ft_manifest, "dataset manifest (JSON)")->required();
  ft->add_option("--checkpoint", ft_ckpt, "pretrained checkpoint")->required();
  ft->add_option("--mode", ft_mode, "finetune trains everything, finetune_lc only the classifier")
      ->check(CLI::IsMember({"finetune", "finetune_lc"}))
      ->capture_default_str();
  ft->add_option("--out", ft_report, "aggregated report (JSON)");
  ft->add_option("--save", ft_save, "checkpoint of the first seed's fine-tuned model");
  ft->add_option("--log", ft_log, "line-delimited JSON training log");
  add_common(ft, ft_c);

  // eval
  Common ev_c;
  std::string ev_manifest, ev_ckpt, ev_report, ev_split = "test";
  auto* ev = app.add_subcommand("eval", "classification metrics of a fine-tuned checkpoint");
  ev->add_option("--manifest", ev_manifest, "dataset manifest (JSON)")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint with a classifier head")->required();
  ev->add_option("--split", ev_split, "split to evaluate")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  ev->add_option("--out", ev_report, "report (JSON)");
  add_common(ev, ev_c);

  // export-embeddings
  Common ex_c;
  std::string ex_manifest, ex_ckpt, ex_out, ex_split = "test", ex_stage = "pooled";
  auto* ex = app.add_subcommand("export-embeddings", "CSV of raw, pooled or encoded representations plus labels");
  ex->add_option("--manifest", ex_manifest, "dataset manifest (JSON)")->required();
  ex->add_option("--stage", ex_stage, "raw, pooled or encoded")
      ->check(CLI::IsMember({"raw", "pooled", "encoded"}))
      ->capture_default_str();
  ex->add_option("--split", ex_split, "split to export")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  ex->add_option("--checkpoint", ex_ckpt, "encoder checkpoint (encoded stage only)");
  ex->add_option("--out", ex_out, "output CSV")->required();
  add_common(ex, ex_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*convert) {
      std::vector<RawSample> samples;
      for (const auto& path : csv_in) samples.push_back(parse_csv_sample(io::read_file(path), convert_id));
      write_samples(convert_out, samples);
      std::cout << "wrote " << samples.size() << " samples to " << convert_out << "\n";
    } else if (*inspect) {
      std::cout << "i,start,end,size\n";
      const auto table = kernel_table(pool_n, pool_m);
      for (std::size_t i = 0; i < table.size(); ++i) {
        std::cout << i << "," << table[i].start << "," << table[i].end << "," << table[i].size() << "\n";
      }
    } else if (*align) {
      const auto cfg = resolve(align_c, false);
      auto raw = read_samples(align_in);
      for (auto& s : raw) s.dataset_id = align_id;
      if (cfg.scope == NormScope::kPerDataset) {
        normalize_dataset(raw);
      } else {
        for (auto& s : raw) s = normalize_per_channel(s);
      }
      std::vector<AlignedSample> out;
      out.reserve(raw.size());
      for (const auto& s : raw) out.push_back(align_sample(s, cfg.align));
      write_text(align_out, encode_aligned(out));
      std::cout << "aligned " << out.size() << " samples to " << cfg.align.seq_len << "x" << cfg.align.channels
                << " in " << align_out << "\n";
    } else if (*pre) {
      const auto cfg = resolve(pre_c, false);
      const auto m = load_manifest(pre_manifest);
      const auto store = build_training_set(entries_for(m, Split::kTrain, pre_manifest), m.scope, cfg.align);
      auto log = open_log(pre_log);
      PretrainOptions opts;
      opts.out_dir = pre_out;
      opts.resume_from = pre_resume;
      if (log.is_open()) opts.log = &log;
      const auto result = pretrain(cfg, store, opts);
      for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        std::cout << "epoch " << result.first_epoch + e + 1 << " loss " << std::setprecision(9)
                  << result.epoch_loss[e] << "\n";
      }
      if (!result.epoch_loss.empty()) {
        std::cout << "final loss " << std::setprecision(9) << result.epoch_loss.back() << "\n";
      }
    } else if (*ft) {
      auto cfg = resolve(ft_c, true);
      cfg.finetune.mode = parse_train_mode(ft_mode);
      const auto m = load_manifest(ft_manifest);
      const auto train_entries = entries_for(m, Split::kTrain, ft_manifest);
      const auto train = build_training_set(train_entries, m.scope, cfg.align);
      const auto test = build_training_set(entries_for(m, Split::kTest, ft_manifest), m.scope, cfg.align);
      std::optional<SampleStore> val;
      if (!m.split(Split::kVal).empty()) val = build_training_set(m.split(Split::kVal), m.scope, cfg.align);
      const auto pretrained = load_checkpoint(ft_ckpt);
      check_checkpoint_shape(pretrained, cfg, ft_ckpt);
      auto log = open_log(ft_log);
      const auto summary = finetune_seeds(cfg, pretrained, train, val ? &*val : nullptr, test,
                                          class_count(train_entries), log.is_open() ? &log : nullptr);
      const auto& agg = summary.aggregate;
      std::cout << "accuracy " << format_mean_sd(agg.accuracy_stat) << "\nprecision "
                << format_mean_sd(agg.precision_stat) << "\nrecall " << format_mean_sd(agg.recall_stat) << "\nf1 "
                << format_mean_sd(agg.f1_stat) << "\n";
      if (!ft_report.empty()) write_text(ft_report, report_to_json(agg));
      if (!ft_save.empty()) save_checkpoint(ft_save, summary.runs.front().model);
    } else if (*ev) {
      const auto cfg = resolve(ev_c, true);
      const auto m = load_manifest(ev_manifest);
      const auto split = parse_split(ev_split);
      const auto store = build_training_set(entries_for(m, split, ev_manifest), m.scope, cfg.align);
      const auto ckpt = load_checkpoint(ev_ckpt);
      check_checkpoint_shape(ckpt, cfg, ev_ckpt);
      if (ckpt.config.n_classes == 0) throw ValidationError("checkpoint '" + ev_ckpt + "' has no classifier head");
      const auto report = evaluate(network_from(ckpt), store, cfg.finetune.batch_size);
      const auto json = report_to_json(report);
      std::cout << json << "\n";
      if (!ev_report.empty()) write_text(ev_report, json);
    } else if (*ex) {
      const auto cfg = resolve(ex_c, false);
      const auto stage = parse_stage(ex_stage);
      const auto m = load_manifest(ex_manifest);
      std::vector<RawSample> samples;
      for (const auto& e : entries_for(m, parse_split(ex_split), ex_manifest)) {
        auto part = load_normalized(e, m.scope);
        samples.insert(samples.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      }
      std::optional<Network<float>> net;
      if (stage == EmbeddingStage::kEncoded) {
        if (ex_ckpt.empty()) throw ValidationError("--checkpoint is required for the encoded stage");
        const auto ckpt = load_checkpoint(ex_ckpt);
        check_checkpoint_shape(ckpt, cfg, ex_ckpt);
        net.emplace(network_from(ckpt));
      }
      write_text(ex_out, export_embeddings(samples, stage, cfg.align, net ? &*net : nullptr));
      std::cout << "wrote " << samples.size() << " rows to " << ex_out << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const CorruptionError& e) {
    std::cerr << "corrupt input: " << e.what() << "\n";
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
