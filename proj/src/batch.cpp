#include "nl2lf/batch.hpp"

#include <algorithm>

#include "nl2lf/errors.hpp"

namespace nl2lf::training {

using tokenizer::kPad;

Batch make_batch(std::span<const tokenizer::TokenSequence> sources, std::span<const tokenizer::TokenSequence> targets,
                 std::span<const double> weights) {
  if (sources.empty()) throw ParameterError("make_batch: empty batch");
  if (sources.size() != targets.size()) throw ParameterError("make_batch: sources and targets differ in count");
  if (!weights.empty() && weights.size() != sources.size()) {
    throw ParameterError("make_batch: one weight per example is required");
  }
  const auto rows = static_cast<std::int64_t>(sources.size());
  std::int64_t src_len = 0, tgt_len = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    src_len = std::max<std::int64_t>(src_len, static_cast<std::int64_t>(sources[i].ids.size()));
    tgt_len = std::max<std::int64_t>(tgt_len, static_cast<std::int64_t>(targets[i].ids.size()));
  }

  Batch b;
  b.source = {rows, src_len, std::vector<std::int32_t>(static_cast<std::size_t>(rows * src_len), kPad)};
  b.target = {rows, tgt_len, std::vector<std::int32_t>(static_cast<std::size_t>(rows * tgt_len), kPad)};
  b.decoder_input = b.target;
  b.loss_mask.assign(b.target.ids.size(), 0);
  if (!weights.empty()) b.token_weights.assign(b.target.ids.size(), 0.0f);
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto& src = sources[static_cast<std::size_t>(r)].ids;
    const auto& tgt = targets[static_cast<std::size_t>(r)].ids;
    std::copy(src.begin(), src.end(), b.source.ids.begin() + r * src_len);
    std::copy(tgt.begin(), tgt.end(), b.target.ids.begin() + r * tgt_len);
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      const auto pos = static_cast<std::size_t>(r * tgt_len) + t;
      if (t + 1 < static_cast<std::size_t>(tgt_len)) b.decoder_input.ids[pos + 1] = tgt[t];
      b.loss_mask[pos] = tgt[t] != kPad;
      b.token_count += b.loss_mask[pos];
      if (!weights.empty()) b.token_weights[pos] = static_cast<float>(weights[static_cast<std::size_t>(r)]);
    }
    b.decoder_input.ids[static_cast<std::size_t>(r * tgt_len)] = kPad;
  }
  return b;
}

Batch make_batch(std::span<const corpus::Example> examples, const tokenizer::Vocabulary& vocab,
                 std::size_t max_src_len, std::size_t max_tgt_len, bool weighted) {
  std::vector<tokenizer::TokenSequence> src, tgt;
  std::vector<double> weights;
  for (const auto& ex : examples) {
    src.push_back(vocab.encode(ex.intent, max_src_len, true));
    tgt.push_back(vocab.encode(ex.snippet, max_tgt_len, true));
    if (weighted) weights.push_back(ex.weight);
  }
  return make_batch(src, tgt, weights);
}

}  // namespace nl2lf::training
