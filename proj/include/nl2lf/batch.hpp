#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nl2lf/corpus.hpp"
#include "nl2lf/model.hpp"
#include "nl2lf/tokenizer.hpp"

namespace nl2lf::training {

// Padded model inputs for one optimizer step.
struct Batch {
  model::IdMatrix source;         // intent + EOS, PAD-aligned
  model::IdMatrix decoder_input;  // target shifted right behind START (= PAD)
  model::IdMatrix target;         // snippet + EOS, PAD-aligned
  std::vector<std::uint8_t> loss_mask;  // 1 where target != PAD
  std::vector<float> token_weights;     // per target position; empty = unweighted
  std::size_t token_count = 0;          // sum of loss_mask
};

Batch make_batch(std::span<const tokenizer::TokenSequence> sources, std::span<const tokenizer::TokenSequence> targets,
                 std::span<const double> weights = {});

Batch make_batch(std::span<const corpus::Example> examples, const tokenizer::Vocabulary& vocab,
                 std::size_t max_src_len, std::size_t max_tgt_len, bool weighted = false);

}  // namespace nl2lf::training
