#include "nl2lf/commands.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "nl2lf/checkpoint.hpp"
#include "nl2lf/decode.hpp"
#include "nl2lf/errors.hpp"

namespace nl2lf::cli {

namespace fs = std::filesystem;

std::string json_text(const nlohmann::json& doc, int indent) {
  return doc.dump(indent, ' ', false, nlohmann::json::error_handler_t::replace);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  if (dynamic_cast<const LoadError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const CheckpointError*>(&e)) {
    return kData;
  }
  return kUsage;
}

std::vector<corpus::Example> load_dataset(const DatasetFile& file, double min_prob) {
  switch (file.source) {
    case corpus::Source::gold: return corpus::load_gold(file.path);
    case corpus::Source::noisy: return corpus::load_noisy(file.path, min_prob);
    case corpus::Source::nl2lf: return corpus::load_nl2lf(file.path);
  }
  return {};
}

int cmd_data_validate(std::span<const DatasetFile> files, double min_prob, std::ostream& out) {
  if (files.empty()) throw ConfigError("data validate: give at least one of --gold, --noisy, --nl2lf");
  int code = kOk;
  for (const auto& f : files) {
    corpus::LoadSummary summary;
    try {
      switch (f.source) {
        case corpus::Source::gold: corpus::load_gold(f.path, &summary); break;
        case corpus::Source::noisy: {
          corpus::NoisyReader reader(f.path, min_prob);
          while (reader.next()) {
          }
          summary = reader.summary();
          break;
        }
        case corpus::Source::nl2lf: corpus::load_nl2lf(f.path, &summary); break;
      }
      out << summary.to_json().dump() << '\n';
    } catch (const Error& e) {
      out << nlohmann::json{{"path", f.path.string()}, {"source", corpus::to_string(f.source)}, {"error", e.what()}}
                 .dump()
          << '\n';
      code = kData;
    }
  }
  return code;
}

namespace {

void require_exists(const std::optional<fs::path>& p, const char* what) {
  if (p && !fs::exists(*p)) throw LoadError(std::string(what) + " file '" + p->string() + "' does not exist");
}

void validate_paths(const RunConfig& cfg) {
  require_exists(cfg.gold, "gold");
  require_exists(cfg.noisy, "noisy");
  require_exists(cfg.nl2lf, "nl2lf");
  require_exists(cfg.vocab, "vocabulary");
  require_exists(cfg.resume, "resume checkpoint");
  require_exists(cfg.checkpoint, "checkpoint");
}

struct Datasets {
  std::vector<corpus::Example> primary;
  std::vector<corpus::Example> auxiliary;
};

Datasets load_regime(const RunConfig& cfg) {
  Datasets d;
  if (cfg.nl2lf) {
    d.primary = corpus::load_nl2lf(*cfg.nl2lf);
    if (cfg.gold && cfg.noisy) throw ConfigError("with --nl2lf give at most one auxiliary set (--gold or --noisy)");
    if (cfg.gold) d.auxiliary = corpus::load_gold(*cfg.gold);
    if (cfg.noisy) d.auxiliary = corpus::load_noisy(*cfg.noisy, cfg.min_prob);
  } else if (cfg.gold) {
    d.primary = corpus::load_gold(*cfg.gold);
    if (cfg.noisy) d.auxiliary = corpus::load_noisy(*cfg.noisy, cfg.min_prob);
  } else {
    throw ConfigError("no training data: give --gold or --nl2lf");
  }
  if (d.primary.empty()) throw LoadError("the primary dataset is empty");
  return d;
}

void resolve_interleave(RunConfig& cfg, bool has_auxiliary) {
  if (!cfg.interleave_given) {
    cfg.train.interleave = has_auxiliary ? training::InterleaveRatio{1, 1} : training::InterleaveRatio{1, 0};
    cfg.interleave_given = true;
  }
  if (cfg.train.interleave.noisy > 0 && !has_auxiliary) {
    throw ConfigError("--interleave " + cfg.train.interleave.to_string() + " needs an auxiliary dataset (--noisy)");
  }
}

std::vector<std::string> texts_of(std::span<const corpus::Example> a, std::span<const corpus::Example> b) {
  std::vector<std::string> texts;
  texts.reserve(2 * (a.size() + b.size()));
  for (auto part : {a, b}) {
    for (const auto& ex : part) {
      texts.push_back(ex.intent);
      texts.push_back(ex.snippet);
    }
  }
  return texts;
}

tokenizer::Vocabulary obtain_vocab(const RunConfig& cfg, std::span<const corpus::Example> train,
                                   std::span<const corpus::Example> auxiliary) {
  if (cfg.vocab) return tokenizer::Vocabulary::load(*cfg.vocab);
  return tokenizer::train_bpe(texts_of(train, auxiliary), static_cast<std::size_t>(cfg.vocab_size));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

training::FitResult train_on(RunConfig cfg, std::span<const corpus::Example> train,
                             std::span<const corpus::Example> dev, std::span<const corpus::Example> auxiliary,
                             const fs::path& out_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  const auto vocab = obtain_vocab(cfg, train, auxiliary);
  vocab.save(out_dir / "vocab.json");
  cfg.model.vocab_size = static_cast<int>(vocab.size());
  cfg.train.decode_max_len = cfg.decode_max_len;
  write_text(out_dir / "config.ini", cfg.to_ini());
  log << "train " << train.size() << " dev " << dev.size() << " auxiliary " << auxiliary.size() << " vocab "
      << vocab.size() << " interleave " << cfg.train.interleave.to_string() << '\n';
  training::FitOptions options;
  options.out_dir = out_dir;
  options.resume_from = cfg.resume;
  options.log = &log;
  return training::fit(cfg.model, vocab, {train, auxiliary, dev}, cfg.train, options);
}

}  // namespace

tokenizer::Vocabulary cmd_tokenizer_train(const RunConfig& cfg, const fs::path& out) {
  validate_paths(cfg);
  std::vector<corpus::Example> all;
  for (const auto& [path, source] : {std::pair{cfg.gold, corpus::Source::gold},
                                     std::pair{cfg.noisy, corpus::Source::noisy},
                                     std::pair{cfg.nl2lf, corpus::Source::nl2lf}}) {
    if (!path) continue;
    auto part = load_dataset({source, *path}, cfg.min_prob);
    all.insert(all.end(), part.begin(), part.end());
  }
  if (all.empty()) throw ConfigError("tokenizer train: no examples in the listed datasets");
  auto vocab = tokenizer::train_bpe(texts_of(all, {}), static_cast<std::size_t>(cfg.vocab_size));
  vocab.save(out);
  return vocab;
}

training::FitResult cmd_train(RunConfig cfg, std::ostream& log) {
  validate_paths(cfg);
  if (!cfg.out) throw ConfigError("train: --out is required");
  cfg.train.validate();
  const auto data = load_regime(cfg);
  resolve_interleave(cfg, !data.auxiliary.empty());
  const auto split = corpus::carve_dev(data.primary, cfg.dev_size, cfg.train.seed);
  const auto train = corpus::select(data.primary, split.train);
  const auto dev = corpus::select(data.primary, split.dev);
  if (dev.empty()) throw ConfigError("train: --dev-size must be at least 1");
  return train_on(cfg, train, dev, data.auxiliary, *cfg.out, log);
}

std::vector<std::string> decode_texts(const training::Checkpoint& ckpt, std::span<const std::string> intents,
                                      std::size_t beam_size, double length_alpha, std::size_t max_len) {
  if (beam_size < 1) throw ConfigError("--beam-size must be >= 1");
  std::vector<tokenizer::TokenSequence> sources;
  sources.reserve(intents.size());
  for (const auto& intent : intents) sources.push_back(ckpt.vocab.encode(intent, ckpt.train.max_src_len, true));
  std::vector<std::string> out;
  out.reserve(intents.size());
  if (beam_size == 1) {
    for (const auto& h : decode::greedy_many(ckpt.params, ckpt.model, sources, max_len)) {
      out.push_back(ckpt.vocab.decode(h.ids));
    }
  } else {
    for (const auto& src : sources) {
      const auto hyps = decode::beam(ckpt.params, ckpt.model, src, beam_size, max_len, length_alpha);
      out.push_back(ckpt.vocab.decode(hyps.front().ids));
    }
  }
  return out;
}

eval::EvalReport cmd_eval(const RunConfig& cfg, std::ostream& log) {
  validate_paths(cfg);
  if (!cfg.checkpoint) throw ConfigError("eval: --checkpoint is required");
  std::vector<DatasetFile> files;
  if (cfg.gold) files.push_back({corpus::Source::gold, *cfg.gold});
  if (cfg.noisy) files.push_back({corpus::Source::noisy, *cfg.noisy});
  if (cfg.nl2lf) files.push_back({corpus::Source::nl2lf, *cfg.nl2lf});
  if (files.size() != 1) throw ConfigError("eval: give exactly one dataset (--gold, --noisy or --nl2lf)");
  const auto ckpt = training::load_checkpoint(*cfg.checkpoint);
  const auto dataset = load_dataset(files.front(), cfg.min_prob);
  std::vector<std::string> intents;
  for (const auto& ex : dataset) intents.push_back(ex.intent);
  const auto hyps = decode_texts(ckpt, intents, cfg.beam_size.value_or(1), cfg.length_alpha, cfg.decode_max_len);
  auto report = eval::evaluate_hypotheses(dataset, hyps);
  if (cfg.out) {
    fs::create_directories(*cfg.out);
    write_text(*cfg.out / "config.ini", cfg.to_ini());
    write_text(*cfg.out / "report.json", json_text(report.to_json(), 2) + "\n");
    report.write_csv(*cfg.out / "examples.csv");
  }
  log << "bleu " << report.bleu << " accuracy " << report.accuracy << " over " << report.n_examples << " examples\n";
  return report;
}

std::vector<std::string> cmd_generate(const RunConfig& cfg, std::span<const std::string> intents) {
  validate_paths(cfg);
  if (!cfg.checkpoint) throw ConfigError("generate: --checkpoint is required");
  const auto ckpt = training::load_checkpoint(*cfg.checkpoint);
  return decode_texts(ckpt, intents, cfg.beam_size.value_or(4), cfg.length_alpha, cfg.decode_max_len);
}

eval::FoldSummary cmd_cv(RunConfig cfg, std::ostream& log) {
  validate_paths(cfg);
  if (!cfg.out) throw ConfigError("cv: --out is required");
  if (cfg.resume) throw ConfigError("cv: --resume is not supported; resume a single fold with train");
  cfg.train.validate();
  const auto data = load_regime(cfg);
  resolve_interleave(cfg, !data.auxiliary.empty());
  const auto plan = corpus::plan_folds(data.primary, cfg.folds, cfg.train_fraction, cfg.train.seed);
  fs::create_directories(*cfg.out);
  write_text(*cfg.out / "config.ini", cfg.to_ini());

  std::vector<eval::EvalReport> reports;
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t i = 0; i < plan.folds.size(); ++i) {
    const auto& fold = plan.folds[i];
    const auto fold_train = corpus::select(data.primary, fold.train);
    const auto test = corpus::select(data.primary, fold.test);
    const auto dev_n = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.1 * fold_train.size())));
    const auto split = corpus::carve_dev(fold_train, dev_n, cfg.train.seed + i);
    const auto train = corpus::select(fold_train, split.train);
    const auto dev = corpus::select(fold_train, split.dev);
    log << "fold " << i << ": train " << train.size() << " dev " << dev.size() << " test " << test.size() << '\n';

    const auto dir = *cfg.out / ("fold_" + std::to_string(i));
    const auto result = train_on(cfg, train, dev, data.auxiliary, dir, log);
    std::vector<std::string> intents;
    for (const auto& ex : test) intents.push_back(ex.intent);
    const auto hyps =
        decode_texts(result.best, intents, cfg.beam_size.value_or(1), cfg.length_alpha, cfg.decode_max_len);
    auto report = eval::evaluate_hypotheses(test, hyps);
    report.fold_id = static_cast<int>(i);
    write_text(dir / "report.json", json_text(report.to_json(), 2) + "\n");
    report.write_csv(dir / "examples.csv");
    log << "fold " << i << ": bleu " << report.bleu << " accuracy " << report.accuracy << '\n';
    folds.push_back({{"fold", i}, {"train_ids", fold.train}, {"test_ids", fold.test}, {"bleu", report.bleu},
                     {"accuracy", report.accuracy}});
    reports.push_back(std::move(report));
  }
  auto summary = eval::aggregate_folds(reports);
  nlohmann::json doc = summary.to_json();
  doc["folds"] = std::move(folds);
  doc["fold_count"] = plan.fold_count;
  doc["train_fraction"] = plan.train_fraction;
  doc["seed"] = plan.seed;
  write_text(*cfg.out / "cv_summary.json", doc.dump(2) + "\n");
  log << "mean bleu " << summary.mean_bleu << " mean accuracy " << summary.mean_accuracy << '\n';
  return summary;
}

}  // namespace nl2lf::cli
