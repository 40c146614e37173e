#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "nl2lf/corpus.hpp"
#include "nl2lf/model.hpp"
#include "nl2lf/tokenizer.hpp"

namespace nl2lf::testing {

inline std::filesystem::path data_dir() { return NL2LF_DATA_DIR; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("nl2lf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline model::ModelConfig tiny_config(int vocab_size, int d_model = 16, int heads = 2, int layers = 1) {
  model::ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_model = d_model;
  cfg.n_heads = heads;
  cfg.d_ff = 2 * d_model;
  cfg.n_encoder_layers = layers;
  cfg.n_decoder_layers = layers;
  cfg.n_relative_buckets = 8;
  cfg.max_relative_distance = 16;
  return cfg;
}

inline std::vector<std::string> texts_of(const std::vector<corpus::Example>& examples) {
  std::vector<std::string> out;
  for (const auto& ex : examples) {
    out.push_back(ex.intent);
    out.push_back(ex.snippet);
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace nl2lf::testing
