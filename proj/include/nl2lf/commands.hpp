#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nl2lf/corpus.hpp"
#include "nl2lf/eval.hpp"
#include "nl2lf/run_config.hpp"
#include "nl2lf/tokenizer.hpp"
#include "nl2lf/trainer.hpp"

namespace nl2lf::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Maps an exception thrown by a command to its process exit code.
int exit_code_for(const std::exception& e);

struct DatasetFile {
  corpus::Source source;
  std::filesystem::path path;
};

// Loads each file and prints one JSON summary line per file. Returns kOk iff
// every file loaded; a failing file prints {"path", "error"} instead.
int cmd_data_validate(std::span<const DatasetFile> files, double min_prob, std::ostream& out);

// BPE over intents and snippets of every dataset in the config; writes to `out`.
tokenizer::Vocabulary cmd_tokenizer_train(const RunConfig& cfg, const std::filesystem::path& out);

// Primary dataset: nl2lf if given, else gold. Auxiliary: noisy, or gold when
// nl2lf is primary. Dev is carved from the primary set. Writes config.ini,
// vocab.json, last.ckpt, best.ckpt, history.csv and metrics.json to cfg.out.
training::FitResult cmd_train(RunConfig cfg, std::ostream& log);

// Decodes every intent of the configured dataset with cfg.checkpoint and
// scores it. Writes report.json and examples.csv when cfg.out is set.
eval::EvalReport cmd_eval(const RunConfig& cfg, std::ostream& log);

// One snippet per intent, decoded greedily (beam_size 1) or with beam search.
std::vector<std::string> cmd_generate(const RunConfig& cfg, std::span<const std::string> intents);

// Trains and evaluates one model per fold; writes fold_<i>/ and cv_summary.json.
eval::FoldSummary cmd_cv(RunConfig cfg, std::ostream& log);

// Helpers shared by the commands.
// Decoded text may hold partial UTF-8 sequences; those become U+FFFD.
std::string json_text(const nlohmann::json& doc, int indent = -1);
std::vector<corpus::Example> load_dataset(const DatasetFile& file, double min_prob);
std::vector<std::string> decode_texts(const training::Checkpoint& ckpt, std::span<const std::string> intents,
                                      std::size_t beam_size, double length_alpha, std::size_t max_len);

}  // namespace nl2lf::cli
