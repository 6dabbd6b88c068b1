// Copyright 2026 The P2Bot Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Single-file checkpoint container.
//
// Byte layout (all integers little-endian):
//
//   magic        8 bytes   "P2BOTCKP"
//   version      u32       kCheckpointVersion
//   header       u32 length + UTF-8 JSON {kind, config, vocab_hash}
//   vocab        u32 count, then per token: u32 length + bytes
//   tensors      u32 count, then per tensor:
//                  u32 name length + name, u32 rows, u32 cols,
//                  rows*cols IEEE-754 binary64 values in row-major order
//   checksum     u64 FNV-1a over every preceding byte
//
// Values are always stored as binary64, so float and double models both
// round-trip exactly.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "p2bot/corpus/text.hpp"
#include "p2bot/corpus/vocab.hpp"
#include "p2bot/error.hpp"
#include "p2bot/nn/autograd.hpp"
#include "p2bot/nn/sequence_model.hpp"

namespace p2bot::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'P', '2', 'B', 'O', 'T', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Tensor {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> data;
};

struct CheckpointData {
  std::string kind;
  nlohmann::json config;
  std::vector<std::string> vocab;  // non-reserved tokens in id order
  std::uint64_t vocab_hash = 0;
  std::map<std::string, Tensor> tensors;
};

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  void bytes(void* out, std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (pos_ + n > buf_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointData& ck) {
  detail::Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  nlohmann::json header = {{"kind", ck.kind}, {"config", ck.config}, {"vocab_hash", std::to_string(ck.vocab_hash)}};
  w.str(header.dump());
  w.u32(static_cast<std::uint32_t>(ck.vocab.size()));
  for (const auto& t : ck.vocab) w.str(t);
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.str(name);
    w.u32(t.rows);
    w.u32(t.cols);
    w.bytes(t.data.data(), t.data.size() * sizeof(double));
  }
  const std::uint64_t sum = corpus::fnv1a(w.buffer());
  w.u64(sum);
  return std::move(w.buffer());
}

inline CheckpointData decode_checkpoint(const std::string& buf) {
  detail::Reader r(buf);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError("not a p2bot checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected version " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  if (buf.size() < 8) throw FormatError("checkpoint truncated");
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (corpus::fnv1a(std::string_view(buf.data(), buf.size() - 8)) != stored) {
    throw FormatError("checkpoint corrupt or truncated: checksum mismatch (format version " +
                      std::to_string(version) + ")");
  }
  CheckpointData ck;
  try {
    auto header = nlohmann::json::parse(r.str());
    ck.kind = header.at("kind").get<std::string>();
    ck.config = header.at("config");
    ck.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header invalid: ") + e.what());
  }
  const std::uint32_t nvocab = r.u32();
  for (std::uint32_t i = 0; i < nvocab; ++i) ck.vocab.push_back(r.str());
  const std::uint32_t ntensors = r.u32();
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    std::string name = r.str();
    Tensor t;
    t.rows = r.u32();
    t.cols = r.u32();
    t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
    r.bytes(t.data.data(), t.data.size() * sizeof(double));
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  if (r.pos() + 8 != buf.size()) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

inline void write_checkpoint_file(const std::string& path, const CheckpointData& ck) {
  const std::string bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint: " + path);
}

inline CheckpointData read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

inline nlohmann::json config_to_json(const SequenceModelConfig& c) {
  return {{"num_layers", c.num_layers}, {"model_dim", c.model_dim},     {"num_heads", c.num_heads},
          {"max_positions", c.max_positions}, {"vocab_size", c.vocab_size}, {"num_segments", c.num_segments},
          {"causal", c.causal}};
}

inline SequenceModelConfig config_from_json(const nlohmann::json& j) {
  SequenceModelConfig c;
  c.num_layers = j.value("num_layers", c.num_layers);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.num_segments = j.value("num_segments", c.num_segments);
  c.causal = j.value("causal", c.causal);
  return c;
}

template <typename T>
void store_parameters(CheckpointData& ck, const std::vector<const Parameter<T>*>& params, const std::string& prefix) {
  for (const Parameter<T>* p : params) {
    Tensor t;
    t.rows = static_cast<std::uint32_t>(p->value.rows());
    t.cols = static_cast<std::uint32_t>(p->value.cols());
    t.data.reserve(static_cast<std::size_t>(p->value.size()));
    for (Index i = 0; i < p->value.size(); ++i) t.data.push_back(static_cast<double>(p->value.data()[i]));
    ck.tensors[prefix + p->name] = std::move(t);
  }
}

// Fills every parameter from the container; all names and shapes must match.
template <typename T>
void restore_parameters(const CheckpointData& ck, const std::vector<Parameter<T>*>& params, const std::string& prefix) {
  for (Parameter<T>* p : params) {
    auto it = ck.tensors.find(prefix + p->name);
    if (it == ck.tensors.end()) throw FormatError("checkpoint is missing tensor " + prefix + p->name);
    const Tensor& t = it->second;
    if (t.rows != p->value.rows() || t.cols != p->value.cols()) {
      throw FormatError("checkpoint tensor " + prefix + p->name + " has shape " + std::to_string(t.rows) + "x" +
                        std::to_string(t.cols));
    }
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<T>(t.data[static_cast<std::size_t>(i)]);
  }
}

inline corpus::Vocab vocab_from_checkpoint(const CheckpointData& ck, const corpus::Vocab* expected) {
  if (expected != nullptr && expected->hash() != ck.vocab_hash) {
    throw FormatError("checkpoint vocab hash " + std::to_string(ck.vocab_hash) + " does not match the supplied vocab (" +
                      std::to_string(expected->hash()) + ")");
  }
  if (ck.vocab.size() < static_cast<std::size_t>(corpus::Vocab::kNumReserved)) {
    throw FormatError("checkpoint vocab lacks the reserved tokens");
  }
  corpus::Vocab v(std::vector<std::string>(ck.vocab.begin() + corpus::Vocab::kNumReserved, ck.vocab.end()), 1);
  if (v.hash() != ck.vocab_hash) throw FormatError("checkpoint vocab does not match its recorded hash");
  return v;
}

inline std::vector<std::string> vocab_entries(const corpus::Vocab& v) { return v.tokens(); }

// Copies externally exported weights into a model. The file is a JSON object
// mapping parameter names to {"rows", "cols", "data": [row-major values]};
// entries whose name or shape does not match are skipped. Returns the number
// of tensors imported.
template <typename T>
std::size_t import_weights(const nlohmann::json& weights, const std::vector<Parameter<T>*>& params) {
  std::size_t imported = 0;
  for (Parameter<T>* p : params) {
    if (!weights.contains(p->name)) continue;
    const auto& w = weights.at(p->name);
    if (w.at("rows").template get<Index>() != p->value.rows() || w.at("cols").template get<Index>() != p->value.cols()) continue;
    const auto& data = w.at("data");
    if (static_cast<Index>(data.size()) != p->value.size()) continue;
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = data[static_cast<std::size_t>(i)].template get<T>();
    ++imported;
  }
  return imported;
}

}  // namespace p2bot::nn
