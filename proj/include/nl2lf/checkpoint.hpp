#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nl2lf/model.hpp"
#include "nl2lf/tokenizer.hpp"
#include "nl2lf/train_config.hpp"

namespace nl2lf::training {

// Everything needed to resume a run or to decode with its model.
//
// File layout (.ckpt):
//   "NL2LFCKPT\n"                      magic
//   uint64 little-endian              header byte length
//   canonical JSON header             configs, vocabulary, tensor names/shapes/FNV-1a hashes
//   little-endian float32 arrays      concatenated in header order
// Tensor order: parameters, "adam.m/<name>", "adam.v/<name>", then "best/<name>"
// when best parameters are carried.
struct Checkpoint {
  model::ModelConfig model;
  TrainConfig train;
  tokenizer::Vocabulary vocab;
  model::Parameters<float> params;
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  std::int64_t adam_step = 0;
  std::int64_t step = 0;
  std::optional<double> best_dev_bleu;
  std::string rng_state;
  nlohmann::json trainer_state = nlohmann::json::object();
  std::optional<model::Parameters<float>> best_params;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError naming the failing section ("magic", "header",
// "tensor:<name>", "vocabulary").
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// When expected_vocab is given its hash must equal the checkpoint's.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const tokenizer::Vocabulary* expected_vocab = nullptr);

}  // namespace nl2lf::training
