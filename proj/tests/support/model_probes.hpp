#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nl2lf/model.hpp"
#include "nl2lf/random.hpp"

// Perturb-and-compare probes for the masking invariants of the model. Each
// returns the largest absolute logit difference that should be exactly zero.
namespace nl2lf::testing {

// Random non-PAD ids in [1, V) for `len` positions followed by PAD up to `width`.
inline std::vector<std::int32_t> random_row(Rng& rng, int vocab, int len, int width) {
  std::vector<std::int32_t> row(static_cast<std::size_t>(width), 0);
  for (int i = 0; i < len; ++i) row[i] = 1 + static_cast<std::int32_t>(rng.uniform_index(vocab - 1));
  return row;
}

template <typename T>
std::vector<T> logits_of(const model::Parameters<T>& params, const model::ModelConfig& cfg,
                         const model::IdMatrix& src, const model::IdMatrix& tgt_in) {
  tensor::Tape<T> tape(false);
  model::Forward<T> f{tape, params, cfg};
  auto enc = model::encode(f, src);
  auto logits = model::decode_logits(f, enc, tgt_in);
  return {logits->data().begin(), logits->data().end()};
}

// Changes decoder input token t and compares logits at positions < t.
template <typename T>
double causality_gap(const model::Parameters<T>& params, const model::ModelConfig& cfg, Rng& rng, int src_len,
                     int tgt_len) {
  const int V = cfg.vocab_size;
  model::IdMatrix src{1, src_len, random_row(rng, V, src_len, src_len)};
  model::IdMatrix tgt{1, tgt_len, random_row(rng, V, tgt_len, tgt_len)};
  tgt.ids[0] = 0;  // decoder start
  const int t = 1 + static_cast<int>(rng.uniform_index(tgt_len - 1));
  const auto base = logits_of(params, cfg, src, tgt);
  auto changed = tgt;
  changed.ids[t] = 1 + (changed.ids[t] + static_cast<std::int32_t>(rng.uniform_index(V - 2))) % (V - 1);
  const auto other = logits_of(params, cfg, src, changed);
  double gap = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(t) * V; ++i)
    gap = std::max(gap, std::abs(double(base[i]) - double(other[i])));
  return gap;
}

// Appends `extra` PAD columns to source and target and compares the logits of
// the original positions.
template <typename T>
double padding_gap(const model::Parameters<T>& params, const model::ModelConfig& cfg, Rng& rng, int src_len,
                   int tgt_len, int extra) {
  const int V = cfg.vocab_size;
  model::IdMatrix src{1, src_len, random_row(rng, V, src_len, src_len)};
  model::IdMatrix tgt{1, tgt_len, random_row(rng, V, tgt_len, tgt_len)};
  tgt.ids[0] = 0;
  const auto base = logits_of(params, cfg, src, tgt);
  auto src_padded = src;
  src_padded.cols += extra;
  src_padded.ids.resize(src_padded.ids.size() + extra, 0);
  auto tgt_padded = tgt;
  tgt_padded.cols += extra;
  tgt_padded.ids.resize(tgt_padded.ids.size() + extra, 0);
  const auto padded = logits_of(params, cfg, src_padded, tgt_padded);
  double gap = 0;
  for (std::size_t i = 0; i < base.size(); ++i) gap = std::max(gap, std::abs(double(base[i]) - double(padded[i])));
  return gap;
}

// Runs a batch of ragged rows and compares each row with a batch holding it alone.
template <typename T>
double batch_leak_gap(const model::Parameters<T>& params, const model::ModelConfig& cfg, Rng& rng, int batch,
                      int src_width, int tgt_width) {
  const int V = cfg.vocab_size;
  model::IdMatrix src{batch, src_width, {}};
  model::IdMatrix tgt{batch, tgt_width, {}};
  for (int b = 0; b < batch; ++b) {
    const int sl = 1 + static_cast<int>(rng.uniform_index(src_width));
    const int tl = 1 + static_cast<int>(rng.uniform_index(tgt_width));
    auto s = random_row(rng, V, sl, src_width);
    auto t = random_row(rng, V, tl, tgt_width);
    t[0] = 0;
    src.ids.insert(src.ids.end(), s.begin(), s.end());
    tgt.ids.insert(tgt.ids.end(), t.begin(), t.end());
  }
  const auto all = logits_of(params, cfg, src, tgt);
  const std::size_t per_row = static_cast<std::size_t>(tgt_width) * V;
  double gap = 0;
  for (int b = 0; b < batch; ++b) {
    model::IdMatrix s1{1, src_width, {src.ids.begin() + b * src_width, src.ids.begin() + (b + 1) * src_width}};
    model::IdMatrix t1{1, tgt_width, {tgt.ids.begin() + b * tgt_width, tgt.ids.begin() + (b + 1) * tgt_width}};
    const auto alone = logits_of(params, cfg, s1, t1);
    for (std::size_t i = 0; i < per_row; ++i)
      gap = std::max(gap, std::abs(double(all[b * per_row + i]) - double(alone[i])));
  }
  return gap;
}

}  // namespace nl2lf::testing
