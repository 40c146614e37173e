#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nl2lf/corpus.hpp"

// Offline stand-ins for the benchmark files, in the same on-disk formats.
// Pairs come from templates over small variable pools, so a model can learn
// them at desk scale.
namespace nl2lf::synthetic {

// CoNaLa-style intent/snippet pairs; about a third carry a null rewritten_intent.
struct GoldRecord {
  std::string intent;
  std::optional<std::string> rewritten_intent;
  std::string snippet;
};

std::vector<GoldRecord> make_gold(std::size_t count, std::uint64_t seed);

// Mined-style pairs with a confidence in [0, 1]. A corrupt_fraction of them get
// a mismatched or damaged snippet and a lower confidence.
std::vector<corpus::Example> make_noisy(std::size_t count, std::uint64_t seed, double corrupt_fraction = 0.2);

// Snorkel-style labeling functions, each described 2-4 times; `count` pairs total.
std::vector<corpus::Example> make_nl2lf(std::size_t count, std::uint64_t seed);

// Same conversion load_gold applies.
std::vector<corpus::Example> to_examples(std::span<const GoldRecord> records);

void write_gold(std::span<const GoldRecord> records, const std::filesystem::path& path);
void write_noisy(std::span<const corpus::Example> examples, const std::filesystem::path& path);
void write_nl2lf(std::span<const corpus::Example> examples, const std::filesystem::path& path);

}  // namespace nl2lf::synthetic
