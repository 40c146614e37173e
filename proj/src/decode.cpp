#include "nl2lf/decode.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "nl2lf/errors.hpp"

namespace nl2lf::decode {

using model::IdMatrix;
using tensor::Shape;
using tensor::Tape;

double Hypothesis::normalized_score(double length_alpha) const {
  if (length_alpha == 0.0 || ids.empty()) return log_prob;
  return log_prob / std::pow(static_cast<double>(ids.size()), length_alpha);
}

IdMatrix pad_sources(std::span<const tokenizer::TokenSequence> sources) {
  IdMatrix m;
  m.rows = static_cast<std::int64_t>(sources.size());
  for (const auto& s : sources) m.cols = std::max<std::int64_t>(m.cols, static_cast<std::int64_t>(s.ids.size()));
  m.ids.assign(static_cast<std::size_t>(m.rows * m.cols), tokenizer::kPad);
  for (std::size_t r = 0; r < sources.size(); ++r) {
    std::copy(sources[r].ids.begin(), sources[r].ids.end(), m.ids.begin() + static_cast<std::int64_t>(r) * m.cols);
  }
  return m;
}

TransformerScorer::TransformerScorer(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                                     std::span<const tokenizer::TokenSequence> sources)
    : params_(params), cfg_(cfg) {
  Tape<float> tape(false);
  model::Forward<float> f{tape, params_, cfg_};
  encoded_ = model::encode(f, pad_sources(sources));
}

std::vector<std::vector<double>> TransformerScorer::next_log_probs(std::span<const std::size_t> sources,
                                                                   std::span<const std::vector<TokenId>> prefixes) {
  if (sources.size() != prefixes.size()) throw ParameterError("next_log_probs: sources and prefixes differ in count");
  const auto n = static_cast<std::int64_t>(prefixes.size());
  std::size_t longest = 0;
  for (const auto& p : prefixes) longest = std::max(longest, p.size());

  // Decoder input = START (= PAD) + prefix, right-padded; causality keeps the
  // padding from reaching the positions we read.
  IdMatrix tgt;
  tgt.rows = n;
  tgt.cols = static_cast<std::int64_t>(longest) + 1;
  tgt.ids.assign(static_cast<std::size_t>(tgt.rows * tgt.cols), tokenizer::kPad);
  for (std::int64_t r = 0; r < n; ++r) {
    const auto& p = prefixes[static_cast<std::size_t>(r)];
    std::copy(p.begin(), p.end(), tgt.ids.begin() + r * tgt.cols + 1);
  }

  bool identity = static_cast<std::int64_t>(sources.size()) == encoded_.batch;
  for (std::size_t i = 0; identity && i < sources.size(); ++i) identity = sources[i] == i;
  const model::EncoderOutput<float> enc = identity ? encoded_ : model::select_rows(encoded_, sources);

  Tape<float> tape(false);
  model::Forward<float> f{tape, params_, cfg_};
  auto hidden = model::decode_hidden(f, enc, tgt);
  const std::int64_t d = cfg_.d_model;
  std::vector<float> last(static_cast<std::size_t>(n * d));
  auto h = hidden->data();
  for (std::int64_t r = 0; r < n; ++r) {
    const auto pos = static_cast<std::int64_t>(prefixes[static_cast<std::size_t>(r)].size());
    std::copy_n(h.begin() + (r * tgt.cols + pos) * d, d, last.begin() + r * d);
  }
  auto logits = model::project_logits(f, tensor::make_tensor<float>(Shape{n, d}, std::move(last)));
  const auto v = static_cast<std::size_t>(cfg_.vocab_size);
  const auto lp = tensor::log_softmax_rows<float>(logits->data(), v);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < out.size(); ++r) out[r].assign(lp.begin() + r * v, lp.begin() + (r + 1) * v);
  return out;
}

namespace {

TokenId argmax(const std::vector<double>& row) {
  return static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::vector<Hypothesis> greedy_batch(StepScorer& scorer, std::size_t n_sources, std::size_t max_len) {
  if (max_len < 1) throw ParameterError("greedy: max_len must be >= 1");
  std::vector<Hypothesis> hyps(n_sources);
  std::vector<std::size_t> active(n_sources);
  std::iota(active.begin(), active.end(), std::size_t{0});
  while (!active.empty()) {
    std::vector<std::vector<TokenId>> prefixes;
    prefixes.reserve(active.size());
    for (auto s : active) prefixes.push_back(hyps[s].ids);
    const auto lp = scorer.next_log_probs(active, prefixes);
    std::vector<std::size_t> still;
    for (std::size_t i = 0; i < active.size(); ++i) {
      auto& h = hyps[active[i]];
      const TokenId tok = argmax(lp[i]);
      h.ids.push_back(tok);
      h.log_prob += lp[i][static_cast<std::size_t>(tok)];
      if (tok == tokenizer::kEos || h.ids.size() >= max_len) {
        h.finished = true;
      } else {
        still.push_back(active[i]);
      }
    }
    active = std::move(still);
  }
  return hyps;
}

Hypothesis greedy(StepScorer& scorer, std::size_t source, std::size_t max_len) {
  if (max_len < 1) throw ParameterError("greedy: max_len must be >= 1");
  Hypothesis h;
  const std::size_t src[] = {source};
  while (true) {
    const std::vector<TokenId> prefix[] = {h.ids};
    const auto lp = scorer.next_log_probs(src, prefix);
    const TokenId tok = argmax(lp[0]);
    h.ids.push_back(tok);
    h.log_prob += lp[0][static_cast<std::size_t>(tok)];
    if (tok == tokenizer::kEos || h.ids.size() >= max_len) break;
  }
  h.finished = true;
  return h;
}

std::vector<Hypothesis> beam(StepScorer& scorer, std::size_t source, std::size_t beam_size, std::size_t max_len,
                             double length_alpha) {
  if (beam_size < 1) throw ParameterError("beam: beam_size must be >= 1");
  if (max_len < 1) throw ParameterError("beam: max_len must be >= 1");
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> done;

  struct Candidate {
    double log_prob;
    std::size_t parent;
    TokenId token;
  };
  const std::size_t vocab = scorer.vocab_size();
  // A live hypothesis can only lose log-probability, so its best possible
  // normalized score is log_prob / max_len^alpha when alpha >= 0.
  auto cannot_improve = [&] {
    if (done.size() < beam_size || length_alpha < 0) return false;
    std::vector<double> scores;
    for (const auto& h : done) scores.push_back(h.normalized_score(length_alpha));
    std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(beam_size - 1), scores.end(),
                     std::greater<>());
    const double kth = scores[beam_size - 1];
    const double cap = std::pow(static_cast<double>(max_len), length_alpha);
    return std::all_of(live.begin(), live.end(), [&](const Hypothesis& h) { return h.log_prob / cap <= kth; });
  };
  while (!live.empty() && !cannot_improve()) {
    std::vector<std::size_t> sources(live.size(), source);
    std::vector<std::vector<TokenId>> prefixes;
    prefixes.reserve(live.size());
    for (const auto& h : live) prefixes.push_back(h.ids);
    const auto lp = scorer.next_log_probs(sources, prefixes);

    std::vector<Candidate> cands;
    cands.reserve(live.size() * vocab);
    for (std::size_t p = 0; p < live.size(); ++p) {
      for (std::size_t t = 0; t < vocab; ++t) {
        cands.push_back({live[p].log_prob + lp[p][t], p, static_cast<TokenId>(t)});
      }
    }
    const std::size_t keep = std::min(beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      Hypothesis h = live[cands[c].parent];
      h.ids.push_back(cands[c].token);
      h.log_prob = cands[c].log_prob;
      if (cands[c].token == tokenizer::kEos || h.ids.size() >= max_len) {
        h.finished = true;
        done.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  std::stable_sort(done.begin(), done.end(), [length_alpha](const Hypothesis& a, const Hypothesis& b) {
    return a.normalized_score(length_alpha) > b.normalized_score(length_alpha);
  });
  if (done.size() > beam_size) done.resize(beam_size);
  return done;
}

Hypothesis greedy(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                  const tokenizer::TokenSequence& src, std::size_t max_len) {
  TransformerScorer scorer(params, cfg, std::span(&src, 1));
  return greedy(scorer, 0, max_len);
}

std::vector<Hypothesis> beam(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                             const tokenizer::TokenSequence& src, std::size_t beam_size, std::size_t max_len,
                             double length_alpha) {
  TransformerScorer scorer(params, cfg, std::span(&src, 1));
  return beam(scorer, 0, beam_size, max_len, length_alpha);
}

std::vector<Hypothesis> greedy_many(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                                    std::span<const tokenizer::TokenSequence> sources, std::size_t max_len,
                                    std::size_t batch_size) {
  if (batch_size < 1) throw ParameterError("greedy_many: batch_size must be >= 1");
  std::vector<Hypothesis> out;
  out.reserve(sources.size());
  for (std::size_t start = 0; start < sources.size(); start += batch_size) {
    const auto chunk = sources.subspan(start, std::min(batch_size, sources.size() - start));
    TransformerScorer scorer(params, cfg, chunk);
    auto hyps = greedy_batch(scorer, chunk.size(), max_len);
    std::move(hyps.begin(), hyps.end(), std::back_inserter(out));
  }
  return out;
}

double score_sequence(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                      const tokenizer::TokenSequence& src, std::span<const TokenId> ids) {
  if (ids.empty()) return 0.0;
  Tape<float> tape(false);
  model::Forward<float> f{tape, params, cfg};
  auto enc = model::encode(f, pad_sources(std::span(&src, 1)));
  IdMatrix tgt;
  tgt.rows = 1;
  tgt.cols = static_cast<std::int64_t>(ids.size());
  tgt.ids.push_back(tokenizer::kPad);
  tgt.ids.insert(tgt.ids.end(), ids.begin(), ids.end() - 1);
  auto logits = model::decode_logits(f, enc, tgt);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  const auto lp = tensor::log_softmax_rows<float>(logits->data(), v);
  double total = 0.0;
  for (std::size_t t = 0; t < ids.size(); ++t) total += lp[t * v + static_cast<std::size_t>(ids[t])];
  return total;
}

}  // namespace nl2lf::decode
