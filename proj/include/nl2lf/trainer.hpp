#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nl2lf/batch.hpp"
#include "nl2lf/checkpoint.hpp"
#include "nl2lf/corpus.hpp"
#include "nl2lf/model.hpp"
#include "nl2lf/optimizer.hpp"
#include "nl2lf/schedule.hpp"
#include "nl2lf/tokenizer.hpp"
#include "nl2lf/train_config.hpp"

namespace nl2lf::training {

// Forward, masked cross-entropy, backward, clip, Adam. Returns the loss
// before the update. A non-finite loss throws NumericalError naming the step
// and the batch ids; parameters are untouched in that case.
double train_step(model::Parameters<float>& params, const model::ModelConfig& cfg, Adam& opt, const Batch& batch,
                  const TrainConfig& tc, Rng* dropout_rng = nullptr, std::int64_t step = 0,
                  std::span<const std::int64_t> batch_ids = {});

// Teacher-forced token accuracy on non-PAD targets, in [0, 1].
double token_accuracy(const model::Parameters<float>& params, const model::ModelConfig& cfg, const Batch& batch);

struct TrainingData {
  std::span<const corpus::Example> train;      // scheduler's gold slot
  std::span<const corpus::Example> auxiliary;  // noisy slot; empty in the gold-only regime
  std::span<const corpus::Example> dev;
};

struct HistoryRow {
  std::int64_t step = 0;
  double train_loss = 0.0;
  std::optional<double> dev_bleu;
  BatchSource tag = BatchSource::gold;
  std::int64_t epoch = 0;  // completed gold epochs after this step

  nlohmann::json to_json() const;
  static HistoryRow from_json(const nlohmann::json& doc);
};

enum class StopReason { max_epochs, patience, max_steps };

const char* to_string(StopReason reason);

struct FitOptions {
  // When set, last.ckpt, best.ckpt, history.csv and metrics.json are written here.
  std::optional<std::filesystem::path> out_dir;
  // Continue from this checkpoint; trajectory settings must match.
  std::optional<std::filesystem::path> resume_from;
  std::ostream* log = nullptr;
  std::function<void(const HistoryRow&)> on_step;
};

struct FitResult {
  Checkpoint best;  // params are the retained best-dev parameters
  std::vector<HistoryRow> history;
  StopReason stop_reason = StopReason::max_epochs;
  std::optional<double> best_dev_bleu;
  std::int64_t best_step = 0;
  std::int64_t steps = 0;
};

FitResult fit(const model::ModelConfig& cfg, const tokenizer::Vocabulary& vocab, const TrainingData& data,
              const TrainConfig& tc, const FitOptions& options = {});

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path);

// Budget fields (max_epochs, max_steps, patience) may change across a resume;
// everything that shapes the trajectory may not. Throws CheckpointError.
void check_resume_compatible(const TrainConfig& saved, const TrainConfig& requested);

}  // namespace nl2lf::training
