#pragma once

// Checkpoint container, version 1. All integers and IEEE-754 doubles are
// little-endian.
//
//   magic "FCTZCKPT", u32 version
//   config      u32 codebook_size latent_dim hidden_dim context_width
//                   encoder_embedding_dim decoder_embedding_dim encoder_positions
//                   max_word_length batch_size beam_width optimizer
//               u64 steps
//               f64 beta codebook_decay dead_code_threshold weight_ema_decay
//                   learning_rate final_learning_rate
//   u64 step
//   tensors     live parameters, then EMA parameters; each set is u32 count
//               followed by (u32 rows, u32 cols, rows*cols f64 row-major)
//   u8 has_optimizer_state, then two tensor sets (Adam moments) if set
//   codebooks   3 x (u32 K, u32 D, f64 decay, f64 threshold,
//                    K*D f64 vectors, K f64 usage counts)
//   usage       u64 n, n x (u16 r, u16 g, u16 b, u64 count), sorted
//   rng         varint length + mt19937_64 textual state
//   pending     u32 n, n x (u8 flags, varint length + bytes, f64 weight)

#include <fstream>
#include <sstream>
#include <string>

#include "factorizer/binary_io.hpp"
#include "factorizer/error.hpp"
#include "factorizer/training.hpp"

namespace factorizer {

inline constexpr std::string_view kCheckpointMagic = "FCTZCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_tensors(io::Writer& w, const Parameters& p) {
  w.u32(kTensorCount);
  for (const auto& t : p.tensors) {
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
  }
}

inline Parameters read_tensors(io::Reader& r, const ModelConfig& config) {
  if (r.u32() != kTensorCount) throw FormatError("checkpoint: unexpected tensor count");
  const auto shapes = Parameters::shapes(config);
  Parameters p;
  for (int i = 0; i < kTensorCount; ++i) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    const auto [want_rows, want_cols] = shapes[static_cast<std::size_t>(i)];
    if (rows != static_cast<std::uint32_t>(want_rows) || cols != static_cast<std::uint32_t>(want_cols)) {
      throw FormatError(std::string("checkpoint: tensor ") + tensor_name(i) +
                        " does not match the configured shape");
    }
    p[i].resize(rows, cols);
    for (Eigen::Index k = 0; k < p[i].size(); ++k) p[i].data()[k] = r.f64();
  }
  return p;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  io::Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);

  const ModelConfig& c = ckpt.config;
  for (int v : {c.codebook_size, c.latent_dim, c.hidden_dim, c.context_width, c.encoder_embedding_dim,
                c.decoder_embedding_dim, c.encoder_positions, c.max_word_length, c.batch_size,
                c.beam_width}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(c.optimizer));
  w.u64(static_cast<std::uint64_t>(c.steps));
  for (double v : {c.beta, c.codebook_decay, c.dead_code_threshold, c.weight_ema_decay,
                   c.learning_rate, c.final_learning_rate}) {
    w.f64(v);
  }

  w.u64(static_cast<std::uint64_t>(ckpt.step));
  detail::write_tensors(w, ckpt.params);
  detail::write_tensors(w, ckpt.ema_params);
  const bool has_adam = ckpt.adam_first.tensors[0].size() > 0;
  w.u8(has_adam ? 1 : 0);
  if (has_adam) {
    detail::write_tensors(w, ckpt.adam_first);
    detail::write_tensors(w, ckpt.adam_second);
  }

  for (const auto& book : ckpt.codebooks) {
    w.u32(static_cast<std::uint32_t>(book.size()));
    w.u32(static_cast<std::uint32_t>(book.dim()));
    w.f64(book.decay);
    w.f64(book.reset_threshold);
    for (Eigen::Index i = 0; i < book.vectors.size(); ++i) w.f64(book.vectors.data()[i]);
    for (Eigen::Index i = 0; i < book.usage.size(); ++i) w.f64(book.usage[i]);
  }

  w.u64(ckpt.triplet_usage.size());
  for (const auto& [t, n] : ckpt.triplet_usage) {
    w.u16(t.r);
    w.u16(t.g);
    w.u16(t.b);
    w.u64(n);
  }

  std::ostringstream rng_state;
  rng_state << ckpt.rng;
  w.string(rng_state.str());

  w.u32(static_cast<std::uint32_t>(ckpt.pending.size()));
  for (const auto& p : ckpt.pending) {
    w.u8(static_cast<std::uint8_t>((p.word.bow ? 1 : 0) | (p.word.eow ? 2 : 0)));
    w.string(p.word.bytes);
    w.f64(p.weight);
  }
  return w.buffer();
}

inline Checkpoint deserialize_checkpoint(std::string_view data) {
  io::Reader r(data);
  io::expect_header(r, kCheckpointMagic, kCheckpointVersion, "checkpoint");

  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  for (int* field : {&c.codebook_size, &c.latent_dim, &c.hidden_dim, &c.context_width,
                     &c.encoder_embedding_dim, &c.decoder_embedding_dim, &c.encoder_positions,
                     &c.max_word_length, &c.batch_size, &c.beam_width}) {
    *field = static_cast<int>(r.u32());
  }
  const auto optimizer = r.u32();
  if (optimizer > 1) throw FormatError("checkpoint: unknown optimizer id");
  c.optimizer = static_cast<OptimizerKind>(optimizer);
  c.steps = static_cast<long>(r.u64());
  for (double* field : {&c.beta, &c.codebook_decay, &c.dead_code_threshold, &c.weight_ema_decay,
                        &c.learning_rate, &c.final_learning_rate}) {
    *field = r.f64();
  }
  try {
    c.validate();
  } catch (const PreconditionError& e) {
    throw FormatError(std::string("checkpoint: invalid config: ") + e.what());
  }

  ckpt.step = static_cast<long>(r.u64());
  ckpt.params = detail::read_tensors(r, c);
  ckpt.ema_params = detail::read_tensors(r, c);
  if (r.u8() != 0) {
    ckpt.adam_first = detail::read_tensors(r, c);
    ckpt.adam_second = detail::read_tensors(r, c);
  }

  for (auto& book : ckpt.codebooks) {
    const auto size = static_cast<int>(r.u32());
    const auto dim = static_cast<int>(r.u32());
    if (size != c.codebook_size || dim != c.latent_dim) {
      throw FormatError("checkpoint: codebook shape does not match the config");
    }
    const double decay = r.f64();
    const double threshold = r.f64();
    book = vq::Codebook(size, dim, decay, threshold);
    for (Eigen::Index i = 0; i < book.vectors.size(); ++i) book.vectors.data()[i] = r.f64();
    for (Eigen::Index i = 0; i < book.usage.size(); ++i) book.usage[i] = r.f64();
  }

  const auto usage_entries = r.u64();
  for (std::uint64_t i = 0; i < usage_entries; ++i) {
    Triplet t;
    t.r = r.u16();
    t.g = r.u16();
    t.b = r.u16();
    if (t.r >= c.codebook_size || t.g >= c.codebook_size || t.b >= c.codebook_size) {
      throw FormatError("checkpoint: usage triplet out of codebook range");
    }
    ckpt.triplet_usage[t] = r.u64();
  }

  std::istringstream rng_state(r.string());
  rng_state >> ckpt.rng;
  if (rng_state.fail()) throw FormatError("checkpoint: unreadable generator state");

  const auto pending = r.u32();
  for (std::uint32_t i = 0; i < pending; ++i) {
    PendingExample p;
    const auto flags = r.u8();
    p.word.bow = (flags & 1) != 0;
    p.word.eow = (flags & 2) != 0;
    p.word.bytes = r.string();
    p.weight = r.f64();
    ckpt.pending.push_back(std::move(p));
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after the last section");
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string data = serialize_checkpoint(ckpt);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return deserialize_checkpoint(io::read_all(in));
}

}  // namespace factorizer
