#pragma once

#include <string>
#include <string_view>

#include "adapt/model.hpp"
#include "adapt/optim.hpp"

namespace adapt {

struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
};

// "ADCK" layout (little-endian):
//   magic, version u32 = 1,
//   ModelConfig: d_model, n_layers, n_heads, ffn_dim, c_in, seq_len, n_classes, encoding (u32 each),
//                dropout (f64),
//   tensor count u32, then per tensor in declaration order:
//     name length u32, name bytes, rank u32, dims u32[rank], float32 values (row-major).
// Biases and layer-norm vectors are rank 1. Absent classifier tensors are omitted.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Resume state saved next to a checkpoint ("ADOP"): epochs completed, optimizer step, best loss and
// the Adam moments in the same tensor encoding (prefixed "m." / "v.").
struct TrainState {
  std::uint64_t epochs_done = 0;
  double best_metric = 0.0;
  AdamState<float> adam;
};

std::string encode_train_state(const TrainState& state);
// `like` provides the tensor structure the moments are restored into.
TrainState decode_train_state(std::string_view bytes, const ModelParams<float>& like);

}  // namespace adapt
