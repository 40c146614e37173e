#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "nl2lf/model.hpp"
#include "nl2lf/train_config.hpp"

namespace nl2lf::cli {

// Everything one command needs. Sources, in order of precedence: built-in
// defaults, the INI file given by --config, then command-line flags.
//
//   [data]      gold noisy nl2lf min_prob dev_size
//   [tokenizer] vocab vocab_size
//   [model]     d_model n_heads d_ff encoder_layers decoder_layers buckets max_distance dropout
//   [train]     lr batch_size max_src_len max_tgt_len epochs interleave seed eval_every patience
//               weighted_loss clip_norm max_steps checkpoint_every
//   [decode]    beam_size length_alpha max_len
//   [cv]        folds train_fraction
//   [run]       out resume checkpoint
struct RunConfig {
  std::optional<std::filesystem::path> gold;
  std::optional<std::filesystem::path> noisy;
  std::optional<std::filesystem::path> nl2lf;
  double min_prob = 0.0;
  std::size_t dev_size = 200;

  std::optional<std::filesystem::path> vocab;
  int vocab_size = 4000;

  model::ModelConfig model;
  training::TrainConfig train;
  bool interleave_given = false;  // otherwise 1:1 with an auxiliary set, 1:0 without

  // Unset: generate uses beam 4, eval and cv decode greedily.
  std::optional<std::size_t> beam_size;
  double length_alpha = 0.6;
  std::size_t decode_max_len = 32;

  int folds = 5;
  double train_fraction = 0.5;

  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> checkpoint;

  // Throws ConfigError for an unknown section/key or an unparsable value.
  void set(std::string_view section, std::string_view key, const std::string& value);
  void load_ini(const std::filesystem::path& path);
  // Every key, in a form load_ini reads back to an equal config.
  std::string to_ini() const;
};

}  // namespace nl2lf::cli
