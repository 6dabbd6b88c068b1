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

// Impression / persona relevance: dual sentence encoders, the scaled
// relevance grid, temperature-weighted aggregation, and the margin loss.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "p2bot/corpus/vocab.hpp"
#include "p2bot/error.hpp"
#include "p2bot/nn/autograd.hpp"
#include "p2bot/nn/checkpoint.hpp"
#include "p2bot/nn/sequence_model.hpp"

namespace p2bot::receiver {

using corpus::Vocab;
using nn::Index;
using MatrixD = nn::Matrix<double>;

struct ReceiverLossParams {
  double margin = 0.4;
  double l1_weight = 1e-4;
  double tau_start = 10.0;
  double tau_end = 0.5;
  // Aggregation temperature at inference time.
  double inference_tau = 0.5;

  void validate() const {
    if (!(margin > 0)) throw InvalidArgument("margin must be > 0");
    if (l1_weight < 0) throw InvalidArgument("l1_weight must be >= 0");
    if (!(tau_end > 0) || tau_start < tau_end) throw InvalidArgument("tau schedule needs start >= end > 0");
    if (!(inference_tau > 0)) throw InvalidArgument("inference_tau must be > 0");
  }
};

// U = H W^T / sqrt(d).
inline MatrixD relevance_matrix(const MatrixD& h, const MatrixD& w) {
  if (h.cols() != w.cols()) throw InvalidArgument("relevance_matrix: encodings disagree on d");
  return h * w.transpose() / std::sqrt(static_cast<double>(h.cols()));
}

// sum_k exp(u_k / tau) u_k / sum_k exp(u_k / tau). The weights are computed
// from max-shifted exponents; the pooled values are not shifted.
inline double agg(std::span<const double> row, double tau) {
  if (!(tau > 0)) throw InvalidArgument("agg: tau must be > 0");
  if (row.empty()) throw InvalidArgument("agg: empty row");
  const double mx = *std::max_element(row.begin(), row.end());
  double num = 0;
  double den = 0;
  for (double u : row) {
    const double w = std::exp((u - mx) / tau);
    num += w * u;
    den += w;
  }
  return num / den;
}

inline double agg_row(const MatrixD& u, Index row, double tau) {
  std::vector<double> r(u.row(row).data(), u.row(row).data() + u.cols());
  return agg(r, tau);
}

// c = mean over rows of agg(U[n, :]).
inline double cumulative_score(const MatrixD& u, double tau) {
  if (u.rows() == 0) throw InvalidArgument("cumulative_score: empty matrix");
  double total = 0;
  for (Index n = 0; n < u.rows(); ++n) total += agg_row(u, n, tau);
  return total / static_cast<double>(u.rows());
}

// Linear anneal from tau_start at step 0 to tau_end at step == total_steps.
inline double tau_schedule(std::int64_t step, std::int64_t total_steps, double tau_start = 10.0,
                           double tau_end = 0.5) {
  if (total_steps <= 0) return tau_end;
  if (step < 0 || step > total_steps) throw InvalidArgument("tau_schedule: step outside [0, total_steps]");
  if (step == total_steps) return tau_end;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return tau_start + (tau_end - tau_start) * frac;
}

inline double tau_schedule(std::int64_t step, std::int64_t total_steps, const ReceiverLossParams& p) {
  return tau_schedule(step, total_steps, p.tau_start, p.tau_end);
}

// max(0, m + c_z - c_a) + beta * l1_total
inline double receiver_loss_value(double c_real, double c_distractor, double l1_total, const ReceiverLossParams& p) {
  return std::max(0.0, p.margin + c_distractor - c_real) + p.l1_weight * l1_total;
}

inline double hinge_term(double c_real, double c_distractor, const ReceiverLossParams& p) {
  return std::max(0.0, p.margin + c_distractor - c_real);
}

// Graph form of the loss; both relevance grids enter the L1 penalty.
template <typename T>
typename nn::Graph<T>::Var receiver_loss(nn::Graph<T>& g, typename nn::Graph<T>::Var u_real,
                                         typename nn::Graph<T>::Var u_distractor, const ReceiverLossParams& p,
                                         double tau) {
  auto c_real = g.mean(g.agg_rows(u_real, static_cast<T>(tau)));
  auto c_dist = g.mean(g.agg_rows(u_distractor, static_cast<T>(tau)));
  auto hinge = g.relu(g.add_scalar(g.sub(c_dist, c_real), static_cast<T>(p.margin)));
  auto l1 = g.add(g.abs_sum(u_real), g.abs_sum(u_distractor));
  return g.add(hinge, g.scale(l1, static_cast<T>(p.l1_weight)));
}

using Sentences = std::vector<std::vector<int>>;

inline Sentences encode_sentences(const Vocab& vocab, const std::vector<std::string>& texts) {
  Sentences out;
  for (const auto& t : texts) out.push_back(vocab.encode(t));
  return out;
}

enum class Side { kImpression, kPersona };

template <typename T>
class Receiver {
 public:
  using G = nn::Graph<T>;
  using Var = typename G::Var;

  static constexpr const char* kKind = "receiver";

  Receiver() = default;

  // Both encoders share the geometry but not their weights.
  Receiver(nn::SequenceModelConfig config, std::uint64_t seed)
      : impression_(bidirectional(config), seed), persona_(bidirectional(config), seed + 1) {}

  const nn::SequenceModelConfig& config() const { return impression_.config(); }
  int model_dim() const { return config().model_dim; }

  nn::SequenceModel<T>& encoder(Side s) { return s == Side::kImpression ? impression_ : persona_; }

  std::vector<nn::Parameter<T>*> parameters() {
    auto out = impression_.parameters();
    for (auto* p : persona_.parameters()) out.push_back(p);
    return out;
  }
  std::vector<const nn::Parameter<T>*> parameters() const {
    auto out = impression_.parameters();
    for (auto* p : persona_.parameters()) out.push_back(p);
    return out;
  }

  // One mean-pooled d-vector per sentence: (num sentences x d).
  Var encode(G& g, Side side, const Sentences& sentences) {
    if (sentences.empty()) throw InvalidArgument("encode: no sentences");
    std::vector<Var> rows;
    rows.reserve(sentences.size());
    for (const auto& s : sentences) {
      if (s.empty()) throw InvalidArgument("encode: empty sentence");
      rows.push_back(g.mean_rows(encoder(side).hidden(g, s)));
    }
    return rows.size() == 1 ? rows.front() : g.concat_rows(rows);
  }

  Var relevance(G& g, Var h, Var w) {
    if (h->cols() != w->cols()) throw InvalidArgument("relevance: encodings disagree on d");
    return g.scale(g.matmul_bt(h, w), T(1) / std::sqrt(static_cast<T>(h->cols())));
  }

  Var loss(G& g, const Sentences& impression, const Sentences& persona_real, const Sentences& persona_distractor,
           const ReceiverLossParams& params, double tau) {
    auto h = encode(g, Side::kImpression, impression);
    auto u_real = relevance(g, h, encode(g, Side::kPersona, persona_real));
    auto u_dist = relevance(g, h, encode(g, Side::kPersona, persona_distractor));
    return receiver_loss(g, u_real, u_dist, params, tau);
  }

  // ---- inference (no tape) ----

  MatrixD encode_matrix(Side side, const Sentences& sentences) const {
    G g(false);
    return mut().encode(g, side, sentences)->value().template cast<double>();
  }

  // Cumulative score c of an impression against a persona.
  double cumulative(const Sentences& impression, const Sentences& persona, double tau) const {
    return cumulative_score(relevance_matrix(encode_matrix(Side::kImpression, impression),
                                             encode_matrix(Side::kPersona, persona)),
                            tau);
  }

  // Perception score of one utterance: agg(h W^T, tau) / sqrt(d), i.e. the
  // aggregation runs on the unscaled products.
  static double perception_score(const MatrixD& utterance_encoding, const MatrixD& persona_encoding, double tau) {
    if (utterance_encoding.rows() != 1) throw InvalidArgument("perception_score: expects a single utterance");
    if (utterance_encoding.cols() != persona_encoding.cols()) throw InvalidArgument("perception_score: d mismatch");
    MatrixD raw = utterance_encoding * persona_encoding.transpose();
    return agg_row(raw, 0, tau) / std::sqrt(static_cast<double>(utterance_encoding.cols()));
  }

  double perception_score(const std::vector<int>& utterance, const Sentences& persona, double tau) const {
    return perception_score(encode_matrix(Side::kImpression, {utterance}), encode_matrix(Side::kPersona, persona), tau);
  }

  nn::CheckpointData to_checkpoint(const Vocab& vocab) const {
    nn::CheckpointData ck;
    ck.kind = kKind;
    ck.config = nn::config_to_json(config());
    ck.vocab = vocab.tokens();
    ck.vocab_hash = vocab.hash();
    nn::store_parameters<T>(ck, impression_.parameters(), "impression.");
    nn::store_parameters<T>(ck, persona_.parameters(), "persona.");
    return ck;
  }

  static Receiver from_checkpoint(const nn::CheckpointData& ck) {
    if (ck.kind != kKind) throw FormatError("checkpoint holds a '" + ck.kind + "', expected a receiver");
    Receiver r(nn::config_from_json(ck.config), 0);
    nn::restore_parameters<T>(ck, r.impression_.parameters(), "impression.");
    nn::restore_parameters<T>(ck, r.persona_.parameters(), "persona.");
    return r;
  }

 private:
  static nn::SequenceModelConfig bidirectional(nn::SequenceModelConfig c) {
    c.causal = false;
    c.num_segments = 0;
    return c;
  }

  Receiver& mut() const { return const_cast<Receiver&>(*this); }

  nn::SequenceModel<T> impression_;
  nn::SequenceModel<T> persona_;
};

template <typename T>
void save_receiver(const Receiver<T>& model, const Vocab& vocab, const std::string& path) {
  nn::write_checkpoint_file(path, model.to_checkpoint(vocab));
}

template <typename T>
std::pair<Receiver<T>, Vocab> load_receiver(const std::string& path, const Vocab* expected = nullptr) {
  auto ck = nn::read_checkpoint_file(path);
  Vocab vocab = nn::vocab_from_checkpoint(ck, expected);
  auto model = Receiver<T>::from_checkpoint(ck);
  if (model.config().vocab_size != vocab.size()) throw FormatError("checkpoint vocab size disagrees with model config");
  return {std::move(model), std::move(vocab)};
}

}  // namespace p2bot::receiver
