#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nl2lf/corpus.hpp"
#include "nl2lf/model.hpp"
#include "nl2lf/tokenizer.hpp"

namespace nl2lf::eval {

inline constexpr int kMaxOrder = 4;

using Tokens = std::vector<std::string>;

// Maximal runs of [A-Za-z0-9_] are tokens; every other non-whitespace byte is
// a token of its own; whitespace only separates.
Tokens tokenize_code(std::string_view snippet);

// Clipped n-gram counts of one hypothesis against one reference.
struct NgramStats {
  std::array<std::int64_t, kMaxOrder> matches{};
  std::array<std::int64_t, kMaxOrder> totals{};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  NgramStats& operator+=(const NgramStats& other);
  nlohmann::json to_json() const;
  static NgramStats from_json(const nlohmann::json& doc);
  friend bool operator==(const NgramStats&, const NgramStats&) = default;
};

NgramStats sentence_stats(std::span<const std::string> hyp, std::span<const std::string> ref);

// Corpus BLEU in [0, 100] from aggregated statistics.
//  p_n = matches_n / totals_n, and when matches_n = 0, p_n = 1 / (2 * totals_n).
//  Orders with totals_n = 0 (every hypothesis shorter than n) are left out of
//  the mean, so short exact matches still score 100.
//  BP  = min(1, exp(1 - ref_len / hyp_len)); an empty hypothesis corpus scores 0.
//  BLEU = 100 * BP * exp(mean over those orders of log p_n).
double bleu_from_stats(const NgramStats& stats, int max_n = kMaxOrder);

using TokenPair = std::pair<Tokens, Tokens>;  // (hypothesis, reference)

double corpus_bleu(std::span<const TokenPair> pairs, int max_n = kMaxOrder);

// Token-level equality under tokenize_code.
bool exact_match(std::string_view hyp, std::string_view ref);

struct ExampleRecord {
  std::int64_t id = 0;
  std::string hypothesis;
  std::string reference;
  bool exact_match = false;
  NgramStats stats;
};

struct EvalReport {
  double bleu = 0.0;
  double accuracy = 0.0;  // percentage of exact matches
  std::size_t n_examples = 0;
  NgramStats totals;
  std::vector<ExampleRecord> per_example;
  std::optional<int> fold_id;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
  void write_csv(const std::filesystem::path& path) const;
};

// Scores hypothesis texts against the dataset snippets, pairwise in order.
EvalReport evaluate_hypotheses(std::span<const corpus::Example> dataset, std::span<const std::string> hypotheses);

// Greedy-decodes every intent and scores the result.
EvalReport evaluate(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                    const tokenizer::Vocabulary& vocab, std::span<const corpus::Example> dataset,
                    std::size_t max_src_len = 32, std::size_t max_len = 32);

std::vector<std::string> generate_greedy(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                                         const tokenizer::Vocabulary& vocab, std::span<const std::string> intents,
                                         std::size_t max_src_len = 32, std::size_t max_len = 32);

struct FoldSummary {
  double mean_bleu = 0.0;
  double mean_accuracy = 0.0;
  std::vector<std::pair<double, double>> per_fold;  // (bleu, accuracy)

  nlohmann::json to_json() const;
};

// Unweighted mean over folds.
FoldSummary aggregate_folds(std::span<const EvalReport> reports);

}  // namespace nl2lf::eval
