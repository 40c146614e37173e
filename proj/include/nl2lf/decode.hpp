#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nl2lf/model.hpp"
#include "nl2lf/tokenizer.hpp"

namespace nl2lf::decode {

using tokenizer::TokenId;

struct Hypothesis {
  std::vector<TokenId> ids;
  double log_prob = 0.0;  // sum of per-step log-probabilities of ids
  bool finished = false;  // ended with EOS or hit max_len

  // log_prob / len^alpha; alpha = 0 gives the raw log-probability.
  double normalized_score(double length_alpha) const;
};

// Next-token distribution for a batch of (source, prefix) pairs. The prefix
// excludes the decoder start symbol.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<std::vector<double>> next_log_probs(std::span<const std::size_t> sources,
                                                          std::span<const std::vector<TokenId>> prefixes) = 0;
};

// Encodes the sources once and re-runs the decoder over each full prefix.
class TransformerScorer final : public StepScorer {
 public:
  TransformerScorer(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                    std::span<const tokenizer::TokenSequence> sources);

  std::size_t vocab_size() const override { return static_cast<std::size_t>(cfg_.vocab_size); }
  std::vector<std::vector<double>> next_log_probs(std::span<const std::size_t> sources,
                                                  std::span<const std::vector<TokenId>> prefixes) override;

 private:
  const model::Parameters<float>& params_;
  const model::ModelConfig& cfg_;
  model::EncoderOutput<float> encoded_;
};

// Source ids padded into one matrix.
model::IdMatrix pad_sources(std::span<const tokenizer::TokenSequence> sources);

// Argmax per step (lowest id wins ties) until EOS or max_len tokens.
Hypothesis greedy(StepScorer& scorer, std::size_t source, std::size_t max_len);
// Lockstep greedy over sources 0..n-1; each result equals greedy() on that source.
std::vector<Hypothesis> greedy_batch(StepScorer& scorer, std::size_t n_sources, std::size_t max_len);

// Beam search. Each step keeps the beam_size best extensions by raw
// log-probability; extensions ending in EOS (or reaching max_len) retire.
// Search stops when nothing is live or no live prefix can still beat the
// beam_size-th retired hypothesis. Results are sorted by normalized score,
// best first.
std::vector<Hypothesis> beam(StepScorer& scorer, std::size_t source, std::size_t beam_size, std::size_t max_len,
                             double length_alpha);

Hypothesis greedy(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                  const tokenizer::TokenSequence& src, std::size_t max_len);
std::vector<Hypothesis> beam(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                             const tokenizer::TokenSequence& src, std::size_t beam_size, std::size_t max_len,
                             double length_alpha);
// Greedy over many sources, batch_size at a time.
std::vector<Hypothesis> greedy_many(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                                    std::span<const tokenizer::TokenSequence> sources, std::size_t max_len,
                                    std::size_t batch_size = 32);

// Teacher-forced sum of log p(ids[t] | src, ids[<t]).
double score_sequence(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                      const tokenizer::TokenSequence& src, std::span<const TokenId> ids);

}  // namespace nl2lf::decode
