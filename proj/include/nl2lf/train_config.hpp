#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace nl2lf::training {

// Batches per scheduler cycle. In the CoNaLa+NL2LF regime the "gold" slot is
// the target dataset and the "noisy" slot the auxiliary one.
struct InterleaveRatio {
  int gold = 1;
  int noisy = 1;

  int cycle() const { return gold + noisy; }
  std::string to_string() const { return std::to_string(gold) + ":" + std::to_string(noisy); }
  static InterleaveRatio parse(const std::string& text);  // "g:n"
  friend bool operator==(const InterleaveRatio&, const InterleaveRatio&) = default;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_src_len = 32;
  std::size_t max_tgt_len = 32;
  double learning_rate = 1e-3;
  int max_epochs = 30;
  InterleaveRatio interleave{1, 1};
  std::uint64_t seed = 0;
  std::int64_t eval_every = 0;        // steps; 0 = after every gold epoch
  int patience = -1;                  // evaluations without improvement; < 0 disables
  bool weighted_loss = false;         // scale noisy tokens by their confidence
  double clip_norm = 1.0;             // global gradient norm; <= 0 disables
  std::int64_t max_steps = 0;         // 0 = unlimited
  std::int64_t checkpoint_every = 0;  // steps; 0 = at every evaluation
  std::size_t decode_max_len = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

}  // namespace nl2lf::training
