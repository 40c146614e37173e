#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "nl2lf/train_config.hpp"

namespace nl2lf::training {

enum class BatchSource { gold, noisy };

const char* to_string(BatchSource source);

struct BatchDescriptor {
  BatchSource source = BatchSource::gold;
  std::vector<std::int64_t> ids;
};

// Walks a fixed id set in batches, reshuffling at the start of every epoch
// with derive_seed(seed, epoch). The last batch of an epoch may be short, so
// every id is drawn exactly once per epoch.
class EpochSampler {
 public:
  EpochSampler() = default;
  EpochSampler(std::vector<std::int64_t> ids, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::int64_t> next();
  std::int64_t completed_epochs() const { return epoch_; }
  std::size_t size() const { return ids_.size(); }
  std::size_t batches_per_epoch() const;

  nlohmann::json state() const;
  void restore(const nlohmann::json& state);

 private:
  void reshuffle();

  std::vector<std::int64_t> ids_;
  std::vector<std::int64_t> order_;
  std::size_t batch_size_ = 1;
  std::uint64_t seed_ = 0;
  std::int64_t epoch_ = 0;
  std::size_t pos_ = 0;
};

// Infinite cyclic schedule: ratio.gold gold batches, then ratio.noisy noisy
// batches, repeating. Epochs are counted on the gold sampler (on the noisy one
// when the gold share is 0).
class BatchPlan {
 public:
  BatchPlan(EpochSampler gold, std::optional<EpochSampler> noisy, InterleaveRatio ratio);

  BatchDescriptor next();
  std::int64_t completed_epochs() const;
  InterleaveRatio ratio() const { return ratio_; }

  nlohmann::json state() const;
  void restore(const nlohmann::json& state);

 private:
  EpochSampler gold_;
  std::optional<EpochSampler> noisy_;
  InterleaveRatio ratio_;
  int cycle_pos_ = 0;
};

BatchPlan interleave(EpochSampler gold, std::optional<EpochSampler> noisy, InterleaveRatio ratio);

}  // namespace nl2lf::training
