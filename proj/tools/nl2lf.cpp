// nl2lf: dataset checks, tokenizer training, training, evaluation, generation
// and cross-validation from one binary.
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nl2lf/commands.hpp"
#include "nl2lf/errors.hpp"

namespace {

using nl2lf::cli::RunConfig;

struct Flag {
  const char* name;
  std::vector<std::pair<const char*, const char*>> keys;  // (section, key) it sets
  const char* help;
};

const std::vector<Flag>& all_flags() {
  static const std::vector<Flag> flags = {
      {"--seed", {{"train", "seed"}}, "seed for init, shuffles, dev carving and folds"},
      {"--gold", {{"data", "gold"}}, "CoNaLa-format gold JSON file"},
      {"--noisy", {{"data", "noisy"}}, "mined JSONL file (intent, snippet, prob)"},
      {"--nl2lf", {{"data", "nl2lf"}}, "NL2LF JSONL file (intent, snippet)"},
      {"--min-prob", {{"data", "min_prob"}}, "drop mined pairs below this confidence"},
      {"--dev-size", {{"data", "dev_size"}}, "examples carved from the primary set for model selection"},
      {"--vocab", {{"tokenizer", "vocab"}}, "vocabulary JSON; trained on the fly when absent"},
      {"--vocab-size", {{"tokenizer", "vocab_size"}}, "BPE target size"},
      {"--out", {{"run", "out"}}, "output directory (output file for tokenizer train)"},
      {"--lr", {{"train", "lr"}}, "Adam learning rate"},
      {"--batch-size", {{"train", "batch_size"}}, "examples per batch"},
      {"--max-len", {{"train", "max_src_len"}, {"train", "max_tgt_len"}, {"decode", "max_len"}},
       "max tokens for sources, targets and decoding"},
      {"--epochs", {{"train", "epochs"}}, "max epochs over the primary set"},
      {"--max-steps", {{"train", "max_steps"}}, "stop after this many optimizer steps (0 = no limit)"},
      {"--interleave", {{"train", "interleave"}}, "g:n primary to auxiliary batches per cycle"},
      {"--eval-every", {{"train", "eval_every"}}, "dev evaluation interval in steps (0 = each epoch)"},
      {"--patience", {{"train", "patience"}}, "evaluations without improvement before stopping (-1 = off)"},
      {"--beam-size", {{"decode", "beam_size"}}, "1 = greedy"},
      {"--length-alpha", {{"decode", "length_alpha"}}, "beam length normalisation exponent"},
      {"--folds", {{"cv", "folds"}}, "number of random train/test splits"},
      {"--train-fraction", {{"cv", "train_fraction"}}, "train share of each split"},
      {"--resume", {{"run", "resume"}}, "checkpoint to continue training from"},
      {"--checkpoint", {{"run", "checkpoint"}}, "trained checkpoint for eval/generate"},
  };
  return flags;
}

struct Invocation {
  std::string config;
  std::map<std::string, std::string> values;  // flag name -> value
  bool weighted_loss = false;
};

void add_flags(CLI::App* cmd, Invocation& inv, std::initializer_list<const char*> names) {
  cmd->add_option("--config", inv.config, "INI file; flags override it");
  for (const char* wanted : names) {
    for (const auto& f : all_flags()) {
      if (std::string_view(f.name) != wanted) continue;
      auto* opt = cmd->add_option_function<std::string>(
          f.name, [&inv, name = std::string(f.name)](const std::string& v) { inv.values[name] = v; }, f.help);
      (void)opt;
    }
  }
}

RunConfig resolve(const Invocation& inv) {
  RunConfig cfg;
  if (!inv.config.empty()) cfg.load_ini(inv.config);
  for (const auto& f : all_flags()) {
    auto it = inv.values.find(f.name);
    if (it == inv.values.end()) continue;
    for (const auto& [section, key] : f.keys) cfg.set(section, key, it->second);
  }
  if (inv.weighted_loss) cfg.train.weighted_loss = true;
  return cfg;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw nl2lf::LoadError("cannot open intents file '" + path + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Natural-language to labeling-function seq2seq toolkit"};
  app.require_subcommand(1);
  Invocation inv;

  auto* data = app.add_subcommand("data", "dataset utilities");
  data->require_subcommand(1);
  auto* validate = data->add_subcommand("validate", "load datasets and report counts");
  add_flags(validate, inv, {"--gold", "--noisy", "--nl2lf", "--min-prob"});

  auto* tok = app.add_subcommand("tokenizer", "tokenizer utilities");
  tok->require_subcommand(1);
  auto* tok_train = tok->add_subcommand("train", "train a byte-level BPE vocabulary");
  add_flags(tok_train, inv, {"--gold", "--noisy", "--nl2lf", "--min-prob", "--vocab-size", "--out"});

  const std::initializer_list<const char*> training_flags = {
      "--seed", "--gold", "--noisy", "--nl2lf", "--min-prob", "--dev-size", "--vocab", "--vocab-size", "--out",
      "--lr", "--batch-size", "--max-len", "--epochs", "--max-steps", "--interleave", "--eval-every",
      "--patience", "--beam-size", "--length-alpha", "--folds", "--train-fraction", "--resume"};
  auto* train = app.add_subcommand("train", "train a model (gold-only or interleaved)");
  add_flags(train, inv, training_flags);
  train->add_flag("--weighted-loss", inv.weighted_loss, "scale auxiliary tokens by their confidence");

  auto* evalc = app.add_subcommand("eval", "score a checkpoint on a dataset");
  add_flags(evalc, inv,
            {"--checkpoint", "--gold", "--noisy", "--nl2lf", "--min-prob", "--out", "--beam-size",
             "--length-alpha", "--max-len"});

  auto* gen = app.add_subcommand("generate", "decode snippets for intents");
  add_flags(gen, inv, {"--checkpoint", "--beam-size", "--length-alpha", "--max-len"});
  std::string intent, input, output;
  gen->add_option("--intent", intent, "one intent");
  gen->add_option("--input", input, "file with one intent per line");
  gen->add_option("--output", output, "write JSON lines here instead of stdout");

  auto* cv = app.add_subcommand("cv", "repeated random-split cross-validation");
  add_flags(cv, inv, training_flags);
  cv->add_flag("--weighted-loss", inv.weighted_loss, "scale auxiliary tokens by their confidence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? nl2lf::cli::kOk : nl2lf::cli::kUsage;
  }

  try {
    const RunConfig cfg = resolve(inv);
    if (validate->parsed()) {
      std::vector<nl2lf::cli::DatasetFile> files;
      if (cfg.gold) files.push_back({nl2lf::corpus::Source::gold, *cfg.gold});
      if (cfg.noisy) files.push_back({nl2lf::corpus::Source::noisy, *cfg.noisy});
      if (cfg.nl2lf) files.push_back({nl2lf::corpus::Source::nl2lf, *cfg.nl2lf});
      return nl2lf::cli::cmd_data_validate(files, cfg.min_prob, std::cout);
    }
    if (tok_train->parsed()) {
      if (!cfg.out) throw nl2lf::ConfigError("tokenizer train: --out FILE is required");
      const auto vocab = nl2lf::cli::cmd_tokenizer_train(cfg, *cfg.out);
      std::cout << nlohmann::json{{"path", cfg.out->string()}, {"size", vocab.size()}, {"hash", vocab.hash()}}.dump()
                << '\n';
      return nl2lf::cli::kOk;
    }
    if (train->parsed()) {
      const auto result = nl2lf::cli::cmd_train(cfg, std::cerr);
      nlohmann::json j = {{"steps", result.steps}, {"stop_reason", to_string(result.stop_reason)},
                          {"best_step", result.best_step}};
      j["best_dev_bleu"] = result.best_dev_bleu ? nlohmann::json(*result.best_dev_bleu) : nlohmann::json(nullptr);
      std::cout << j.dump() << '\n';
      return nl2lf::cli::kOk;
    }
    if (evalc->parsed()) {
      const auto report = nl2lf::cli::cmd_eval(cfg, std::cerr);
      std::cout << nlohmann::json{{"bleu", report.bleu}, {"accuracy", report.accuracy},
                                  {"n_examples", report.n_examples}}
                       .dump()
                << '\n';
      return nl2lf::cli::kOk;
    }
    if (gen->parsed()) {
      if (intent.empty() == input.empty()) throw nl2lf::ConfigError("generate: give exactly one of --intent, --input");
      if (!intent.empty()) {
        const std::vector<std::string> one{intent};
        std::cout << nl2lf::cli::cmd_generate(cfg, one).front() << '\n';
        return nl2lf::cli::kOk;
      }
      const auto intents = read_lines(input);
      const auto snippets = nl2lf::cli::cmd_generate(cfg, intents);
      std::ofstream file;
      if (!output.empty()) {
        file.open(output);
        if (!file) throw nl2lf::Error("cannot write '" + output + "'");
      }
      std::ostream& out = output.empty() ? std::cout : file;
      for (std::size_t i = 0; i < intents.size(); ++i) {
        out << nl2lf::cli::json_text({{"intent", intents[i]}, {"snippet", snippets[i]}}) << '\n';
      }
      return nl2lf::cli::kOk;
    }
    if (cv->parsed()) {
      const auto summary = nl2lf::cli::cmd_cv(cfg, std::cerr);
      std::cout << summary.to_json().dump() << '\n';
      return nl2lf::cli::kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nl2lf::cli::exit_code_for(e);
  }
  return nl2lf::cli::kUsage;
}
