#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace nl2lf::corpus {

enum class Source { gold, noisy, nl2lf };

std::string_view to_string(Source source);
Source source_from_string(std::string_view name);

// One (NL intent, code snippet) pair.
struct Example {
  std::int64_t id = 0;
  std::string intent;
  std::string snippet;
  Source source = Source::gold;
  double weight = 1.0;

  friend bool operator==(const Example&, const Example&) = default;
};

// Throws ValidationError when the Example invariants do not hold.
void validate(const Example& example);

struct LoadSummary {
  std::size_t loaded = 0;
  // Records that did not become Examples: malformed plus filtered.
  std::size_t skipped = 0;
  std::size_t malformed = 0;
  Source source = Source::gold;
  std::string path;

  nlohmann::json to_json() const;
};

// CoNaLa gold: a JSON array of {intent, rewritten_intent, snippet}. The
// curated rewritten_intent wins when it is present and non-null. Ids are the
// record indices.
std::vector<Example> load_gold(const std::filesystem::path& path, LoadSummary* summary = nullptr);

// NL2LF: JSON lines of {intent, snippet}. Ids are record indices (blank lines
// do not count as records).
std::vector<Example> load_nl2lf(const std::filesystem::path& path, LoadSummary* summary = nullptr);

// Streaming reader for the mined CoNaLa set (JSON lines of {intent, snippet, prob}).
// Only one line is held in memory at a time. Malformed lines are skipped and
// counted; lines with prob < min_weight are filtered. Ids are line numbers
// (0-based, counting every line).
class NoisyReader {
 public:
  NoisyReader(const std::filesystem::path& path, double min_weight);

  std::optional<Example> next();
  const LoadSummary& summary() const { return summary_; }

 private:
  std::ifstream in_;
  double min_weight_;
  std::int64_t line_no_ = -1;
  LoadSummary summary_;
};

// Drains a NoisyReader.
std::vector<Example> load_noisy(const std::filesystem::path& path, double min_weight,
                                LoadSummary* summary = nullptr);

using IdList = std::vector<std::int64_t>;

struct DatasetSplit {
  IdList train;
  IdList dev;
  IdList test;
};

struct Fold {
  IdList train;
  IdList test;
};

struct FoldPlan {
  std::vector<Fold> folds;
  int fold_count = 0;
  double train_fraction = 0.0;
  std::uint64_t seed = 0;
};

// Shuffles the ids with `seed` and moves the last dev_size of them into dev.
DatasetSplit carve_dev(std::span<const Example> train, std::size_t dev_size, std::uint64_t seed);

// Repeated random sub-sampling: fold i shuffles with seed + i and keeps the
// first round(train_fraction * N) ids for training.
FoldPlan plan_folds(std::span<const Example> data, int fold_count, double train_fraction,
                    std::uint64_t seed);

// Looks up examples by id, preserving the order of `ids`.
std::vector<Example> select(std::span<const Example> data, std::span<const std::int64_t> ids);

}  // namespace nl2lf::corpus
