#include "adapt/checkpoint.hpp"

#include <map>

#include "adapt/binary_io.hpp"

namespace adapt {

namespace {

constexpr std::string_view kCheckpointMagic = "ADCK";
constexpr std::string_view kStateMagic = "ADOP";
constexpr std::uint32_t kVersion = 1;

bool is_vector_param(const std::string& name) {
  return name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta");
}

void write_tensor(io::ByteWriter& w, const std::string& name, const Matrix<float>& m) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  if (is_vector_param(name)) {
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(m.cols()));
  } else {
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
  }
  for (float v : m.flat()) w.f32(v);
}

std::map<std::string, Matrix<float>> read_tensors(io::ByteReader& r, std::uint32_t count) {
  std::map<std::string, Matrix<float>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u32();
    std::string name(r.bytes(name_len));
    const auto rank = r.u32();
    if (rank != 1 && rank != 2) throw FormatError("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    std::size_t rows = 1, cols = 0;
    if (rank == 1) {
      cols = r.u32();
    } else {
      rows = r.u32();
      cols = r.u32();
    }
    if (r.remaining() / 4 < rows * cols) throw CorruptionError("tensor '" + name + "' payload truncated");
    Matrix<float> m(rows, cols);
    for (auto& v : m.flat()) v = r.f32();
    if (!out.emplace(name, std::move(m)).second) throw FormatError("duplicate tensor '" + name + "'");
  }
  return out;
}

template <typename Params>
void restore(Params& like, std::map<std::string, Matrix<float>>& tensors, const std::string& prefix) {
  like.for_each([&](const std::string& name, Matrix<float>& m) {
    if (m.empty()) return;
    auto it = tensors.find(prefix + name);
    if (it == tensors.end()) throw FormatError("missing tensor '" + prefix + name + "'");
    if (!it->second.same_shape(m)) throw FormatError("tensor '" + prefix + name + "' has the wrong shape");
    m = std::move(it->second);
    tensors.erase(it);
  });
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kVersion);
  const auto& c = ckpt.config;
  for (auto v : {c.d_model, c.n_layers, c.n_heads, c.ffn_dim, c.c_in, c.seq_len, c.n_classes}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(c.encoding));
  w.f64(c.dropout);
  std::uint32_t count = 0;
  ckpt.params.for_each([&](const std::string&, const Matrix<float>& m) { count += m.empty() ? 0 : 1; });
  w.u32(count);
  ckpt.params.for_each([&](const std::string& name, const Matrix<float>& m) {
    if (!m.empty()) write_tensor(w, name, m);
  });
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kCheckpointMagic) throw FormatError("bad magic: not an ADCK checkpoint");
  const auto version = r.u32();
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  auto& c = ckpt.config;
  for (auto* f : {&c.d_model, &c.n_layers, &c.n_heads, &c.ffn_dim, &c.c_in, &c.seq_len, &c.n_classes}) *f = r.u32();
  const auto enc = r.u32();
  if (enc > 2) throw FormatError("unknown encoding " + std::to_string(enc));
  c.encoding = static_cast<Encoding>(enc);
  c.dropout = r.f64();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
  auto tensors = read_tensors(r, r.u32());
  if (!r.at_end()) throw FormatError("trailing bytes in checkpoint");
  // Shapes come from a zero-initialized template of the declared config.
  ckpt.params = zero_grads(init_params<float>(c, 0));
  restore(ckpt.params, tensors, "");
  if (!tensors.empty()) throw FormatError("unexpected tensor '" + tensors.begin()->first + "'");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) { io::write_file(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

std::string encode_train_state(const TrainState& state) {
  io::ByteWriter w;
  w.bytes(kStateMagic);
  w.u32(kVersion);
  w.u64(state.epochs_done);
  w.u64(state.adam.step);
  w.f64(state.best_metric);
  std::uint32_t count = 0;
  state.adam.m.for_each([&](const std::string&, const Matrix<float>& m) { count += m.empty() ? 0 : 2; });
  w.u32(count);
  state.adam.m.for_each([&](const std::string& name, const Matrix<float>& m) {
    if (!m.empty()) write_tensor(w, "m." + name, m);
  });
  state.adam.v.for_each([&](const std::string& name, const Matrix<float>& m) {
    if (!m.empty()) write_tensor(w, "v." + name, m);
  });
  return w.take();
}

TrainState decode_train_state(std::string_view bytes, const ModelParams<float>& like) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kStateMagic) throw FormatError("bad magic: not an ADOP train state");
  if (r.u32() != kVersion) throw FormatError("unsupported train state version");
  TrainState s;
  s.epochs_done = r.u64();
  s.adam.step = r.u64();
  s.best_metric = r.f64();
  auto tensors = read_tensors(r, r.u32());
  if (!r.at_end()) throw FormatError("trailing bytes in train state");
  s.adam.m = like;
  s.adam.v = like;
  restore(s.adam.m, tensors, "m.");
  restore(s.adam.v, tensors, "v.");
  if (!tensors.empty()) throw FormatError("unexpected tensor '" + tensors.begin()->first + "'");
  return s;
}

}  // namespace adapt
