#include "doctest.h"

#include "adapt/config.hpp"

using namespace adapt;

TEST_CASE("presets") {
  const auto p = PipelineConfig::full();
  CHECK(p.align.seq_len == 256);
  CHECK(p.align.channels == 32);
  CHECK(p.model.d_model == 128);
  CHECK(p.model.n_layers == 6);
  CHECK(p.model.n_heads == 8);
  CHECK(p.model.ffn_dim == 512);
  CHECK(p.pretrain.batch_size == 1024);
  CHECK(p.pretrain.epochs == 1000);
  CHECK(p.pretrain.warmup_epochs == 40);
  CHECK(p.pretrain.base_lr == 5e-4);
  CHECK(p.finetune.base_lr == 4e-4);
  CHECK(p.mask.p == 0.2);
  CHECK(p.mask.l_max == 10);
  CHECK(p.noise.sigma == 0.1);
  CHECK_NOTHROW(p.validate());
  const auto d = PipelineConfig::desk();
  CHECK(d.model.seq_len == d.align.seq_len);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("INI parsing") {
  const auto c = parse_config(R"(
[run]
preset = desk
seed = 17
[align]
seq_len = 32
channels = 4
method = truncate
[mask]
mask_ratio = 0.3
[model]
encoding = time
d_model = 16
[pretrain]
shared_n = true
epochs = 3
warmup_epochs = 1
[finetune]
mode = finetune_lc
)");
  CHECK(c.seed == 17);
  CHECK(c.pretrain.seed == 17);
  CHECK(c.finetune.seed == 17);
  CHECK(c.align.method == AlignMethod::kTruncate);
  CHECK(c.model.seq_len == 32);
  CHECK(c.model.c_in == 4);
  CHECK(c.model.d_model == 16);
  CHECK(c.model.encoding == Encoding::kTime);
  CHECK(c.mask.mask_ratio == 0.3);
  CHECK(c.pretrain.shared_n);
  CHECK(c.pretrain.epochs == 3);
  CHECK(c.finetune.mode == TrainMode::kFinetuneLC);
  CHECK(c.model.n_layers == PipelineConfig::desk().model.n_layers);
  CHECK_NOTHROW(c.validate());
  const auto text = describe(c);
  CHECK(text.find("mask.mask_ratio = 0.3") != std::string::npos);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("[run]\npreset = huge\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("[model]\nencoding = both\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("[pretrain]\nepochs = many\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("[pretrain]\nshared_n = maybe\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("[broken\n"), FormatError);
  CHECK_THROWS_AS(parse_train_mode("sideways"), ValidationError);
  auto c = parse_config("[mask]\nmask_ratio = 1.5\n");
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = parse_config("[model]\nn_heads = 5\n");
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = parse_config("[pretrain]\nepochs = 10\nwarmup_epochs = 10\n");
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = PipelineConfig::desk();
  c.model.seq_len = 7;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent.ini"), IoError);
}
