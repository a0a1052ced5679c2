#pragma once

// Binary checkpoint: model, vocabulary, optimizer velocity and trainer state.
//
//   "A2SCKPT\0"              magic
//   u32 format version
//   u64 n, n bytes           JSON header {config, vocabulary, state}
//   u64 vocabulary hash
//   u64 tensor count
//   per tensor: u64 size, size x f32   parameters in declared order
//   per tensor: u64 size, size x f32   velocity in the same order
//   u64 FNV-1a of everything above
//
// Integers and floats are little-endian; tensors are column-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2s/codec.hpp"
#include "a2s/error.hpp"
#include "a2s/net/config.hpp"
#include "a2s/net/params.hpp"

namespace a2s::net {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'A', '2', 'S', 'C', 'K', 'P', 'T', '\0'};

struct Checkpoint {
  ModelConfig config;
  std::shared_ptr<const Vocabulary> vocab;
  ModelParams<float> params;
  ModelParams<float> velocity;
  nlohmann::json state = nlohmann::json::object();  // epoch, best WER, ...
};

namespace detail {

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <class U>
  void le(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> out;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(Errc::BadCheckpoint, "checkpoint is truncated");
    const auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class U>
  U le() {
    const auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(s[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void write_tensors(ByteWriter& w, const ModelParams<float>& p) {
  for (const auto& t : tensors(p)) {
    w.le<std::uint64_t>(static_cast<std::uint64_t>(t.tensor->size()));
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) w.f32(t.tensor->data()[i]);
  }
}

inline void read_tensors(ByteReader& r, ModelParams<float>& p) {
  for (auto& t : tensors(p)) {
    const auto n = r.le<std::uint64_t>();
    if (n != static_cast<std::uint64_t>(t.tensor->size())) {
      throw Error(Errc::BadCheckpoint, "tensor " + t.name + " has the wrong size");
    }
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) t.tensor->data()[i] = r.f32();
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  if (!c.vocab) throw Error(Errc::InvalidConfig, "checkpoint without vocabulary");
  nlohmann::json header;
  header["config"] = c.config;
  auto& symbols = header["vocabulary"] = nlohmann::json::array();
  for (const auto& s : c.vocab->symbols()) symbols.push_back(escape_symbol(symbol_text(s)));
  header["state"] = c.state;
  const std::string text = header.dump();

  const auto shapes = init_params<float>(c.config, 0);
  const auto want = tensors(shapes);
  const auto have = tensors(c.params);
  const auto vel = tensors(c.velocity);
  if (want.size() != have.size() || want.size() != vel.size()) {
    throw Error(Errc::ShapeMismatch, "checkpoint tensors do not match the config");
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].tensor->size() != have[i].tensor->size() || want[i].tensor->size() != vel[i].tensor->size()) {
      throw Error(Errc::ShapeMismatch, "checkpoint tensor " + want[i].name + " has the wrong shape");
    }
  }

  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint64_t>(text.size());
  w.raw(text.data(), text.size());
  w.le<std::uint64_t>(c.vocab->hash());
  w.le<std::uint64_t>(want.size());
  detail::write_tensors(w, c.params);
  detail::write_tensors(w, c.velocity);
  w.le<std::uint64_t>(detail::fnv1a(w.out));
  return std::move(w.out);
}

/// Rejects corruption with BadCheckpoint and, when `expected_vocab_hash` is
/// given, a different vocabulary with VocabularyMismatch.
inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes,
                                    std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
  if (bytes.size() < sizeof kCheckpointMagic + 8 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw Error(Errc::BadCheckpoint, "not a checkpoint file");
  }
  const auto body = bytes.first(bytes.size() - 8);
  detail::ByteReader tail(bytes.last(8));
  if (tail.le<std::uint64_t>() != detail::fnv1a(body)) throw Error(Errc::BadCheckpoint, "checkpoint checksum mismatch");

  detail::ByteReader r(body);
  r.take(sizeof kCheckpointMagic);
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(Errc::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_size = r.le<std::uint64_t>();
  if (header_size > r.remaining()) throw Error(Errc::BadCheckpoint, "checkpoint is truncated");
  const auto header_bytes = r.take(header_size);
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    c.config = header.at("config").get<ModelConfig>();
    c.config.validate();
    std::vector<Symbol> symbols;
    for (const auto& s : header.at("vocabulary")) {
      auto sym = parse_symbol(unescape_symbol(s.get<std::string>()));
      if (!sym) throw Error(Errc::BadCheckpoint, "unknown vocabulary symbol in checkpoint");
      symbols.push_back(*sym);
    }
    c.vocab = std::make_shared<const Vocabulary>(std::move(symbols));
    c.state = header.value("state", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadCheckpoint, std::string("checkpoint header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::BadCheckpoint) throw;
    throw Error(Errc::BadCheckpoint, std::string("checkpoint header: ") + e.what());
  }

  const auto hash = r.le<std::uint64_t>();
  if (hash != c.vocab->hash()) throw Error(Errc::BadCheckpoint, "vocabulary hash does not match its symbols");
  if (expected_vocab_hash && *expected_vocab_hash != hash) {
    throw Error(Errc::VocabularyMismatch, "checkpoint was trained with a different vocabulary");
  }
  if (static_cast<std::size_t>(c.config.vocab_size) != c.vocab->size()) {
    throw Error(Errc::BadCheckpoint, "config vocabulary size disagrees with the vocabulary");
  }

  c.params = init_params<float>(c.config, 0);
  c.velocity = zeros_like(c.params);
  const auto count = r.le<std::uint64_t>();
  if (count != tensors(c.params).size()) throw Error(Errc::BadCheckpoint, "checkpoint tensor count mismatch");
  detail::read_tensors(r, c.params);
  detail::read_tensors(r, c.velocity);
  if (r.remaining() != 0) throw Error(Errc::BadCheckpoint, "trailing bytes in checkpoint");
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto bytes = encode_checkpoint(c);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected_vocab_hash);
}

}  // namespace a2s::net
