#include "nl2lf/schedule.hpp"

#include <numeric>

#include "nl2lf/errors.hpp"
#include "nl2lf/random.hpp"

namespace nl2lf::training {

const char* to_string(BatchSource source) { return source == BatchSource::gold ? "gold" : "noisy"; }

EpochSampler::EpochSampler(std::vector<std::int64_t> ids, std::size_t batch_size, std::uint64_t seed)
    : ids_(std::move(ids)), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ < 1) throw ParameterError("EpochSampler: batch_size must be >= 1");
  reshuffle();
}

void EpochSampler::reshuffle() {
  order_ = ids_;
  Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch_)));
  rng.shuffle(std::span<std::int64_t>(order_));
  pos_ = 0;
}

std::size_t EpochSampler::batches_per_epoch() const { return (ids_.size() + batch_size_ - 1) / batch_size_; }

std::vector<std::int64_t> EpochSampler::next() {
  if (ids_.empty()) throw ParameterError("EpochSampler: no examples to sample");
  const std::size_t end = std::min(pos_ + batch_size_, order_.size());
  std::vector<std::int64_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  if (pos_ == order_.size()) {
    ++epoch_;
    reshuffle();
  }
  return batch;
}

nlohmann::json EpochSampler::state() const { return {{"epoch", epoch_}, {"pos", pos_}}; }

void EpochSampler::restore(const nlohmann::json& state) {
  epoch_ = state.at("epoch").get<std::int64_t>();
  reshuffle();
  pos_ = state.at("pos").get<std::size_t>();
  if (pos_ > order_.size()) throw ParameterError("EpochSampler: restored position past the epoch end");
}

BatchPlan::BatchPlan(EpochSampler gold, std::optional<EpochSampler> noisy, InterleaveRatio ratio)
    : gold_(std::move(gold)), noisy_(std::move(noisy)), ratio_(ratio) {
  if (ratio_.gold < 0 || ratio_.noisy < 0) throw ParameterError("interleave: ratio components must be >= 0");
  if (ratio_.cycle() == 0) throw ParameterError("interleave: ratio 0:0 schedules nothing");
  if (ratio_.gold > 0 && gold_.size() == 0) throw ParameterError("interleave: gold share > 0 but gold set is empty");
  if (ratio_.noisy > 0 && (!noisy_ || noisy_->size() == 0)) {
    throw ParameterError("interleave: noisy share > 0 but noisy set is empty");
  }
}

BatchDescriptor BatchPlan::next() {
  BatchDescriptor d;
  if (cycle_pos_ < ratio_.gold) {
    d.source = BatchSource::gold;
    d.ids = gold_.next();
  } else {
    d.source = BatchSource::noisy;
    d.ids = noisy_->next();
  }
  cycle_pos_ = (cycle_pos_ + 1) % ratio_.cycle();
  return d;
}

std::int64_t BatchPlan::completed_epochs() const {
  return ratio_.gold > 0 ? gold_.completed_epochs() : noisy_->completed_epochs();
}

nlohmann::json BatchPlan::state() const {
  nlohmann::json s = {{"cycle_pos", cycle_pos_}, {"gold", gold_.state()}};
  s["noisy"] = noisy_ ? noisy_->state() : nlohmann::json(nullptr);
  return s;
}

void BatchPlan::restore(const nlohmann::json& state) {
  cycle_pos_ = state.at("cycle_pos").get<int>();
  gold_.restore(state.at("gold"));
  if (noisy_) noisy_->restore(state.at("noisy"));
}

BatchPlan interleave(EpochSampler gold, std::optional<EpochSampler> noisy, InterleaveRatio ratio) {
  return BatchPlan(std::move(gold), std::move(noisy), ratio);
}

}  // namespace nl2lf::training
