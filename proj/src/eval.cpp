#include "nl2lf/eval.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include "nl2lf/decode.hpp"
#include "nl2lf/errors.hpp"

namespace nl2lf::eval {

Tokens tokenize_code(std::string_view snippet) {
  Tokens out;
  auto is_word = [](unsigned char c) { return std::isalnum(c) != 0 || c == '_'; };
  std::size_t i = 0;
  while (i < snippet.size()) {
    const auto c = static_cast<unsigned char>(snippet[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word(c)) {
      std::size_t j = i;
      while (j < snippet.size() && is_word(static_cast<unsigned char>(snippet[j]))) ++j;
      out.emplace_back(snippet.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, snippet[i]);
      ++i;
    }
  }
  return out;
}

NgramStats& NgramStats::operator+=(const NgramStats& other) {
  for (int n = 0; n < kMaxOrder; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

nlohmann::json NgramStats::to_json() const {
  return {{"matches", matches}, {"totals", totals}, {"hyp_len", hyp_len}, {"ref_len", ref_len}};
}

NgramStats NgramStats::from_json(const nlohmann::json& doc) {
  NgramStats s;
  s.matches = doc.at("matches").get<std::array<std::int64_t, kMaxOrder>>();
  s.totals = doc.at("totals").get<std::array<std::int64_t, kMaxOrder>>();
  s.hyp_len = doc.at("hyp_len").get<std::int64_t>();
  s.ref_len = doc.at("ref_len").get<std::int64_t>();
  return s;
}

NgramStats sentence_stats(std::span<const std::string> hyp, std::span<const std::string> ref) {
  NgramStats s;
  s.hyp_len = static_cast<std::int64_t>(hyp.size());
  s.ref_len = static_cast<std::int64_t>(ref.size());
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    std::map<std::vector<std::string_view>, std::int64_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      ++ref_counts[std::vector<std::string_view>(ref.begin() + static_cast<std::ptrdiff_t>(i),
                                                 ref.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    std::map<std::vector<std::string_view>, std::int64_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      ++hyp_counts[std::vector<std::string_view>(hyp.begin() + static_cast<std::ptrdiff_t>(i),
                                                 hyp.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    std::int64_t matched = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    s.matches[n - 1] = matched;
    s.totals[n - 1] = hyp.size() >= n ? static_cast<std::int64_t>(hyp.size() - n + 1) : 0;
  }
  return s;
}

double bleu_from_stats(const NgramStats& stats, int max_n) {
  if (max_n < 1 || max_n > kMaxOrder) throw ParameterError("bleu: max_n must lie in [1, 4]");
  if (stats.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < max_n; ++n) {
    if (stats.totals[n] == 0) continue;
    const double total = static_cast<double>(stats.totals[n]);
    const double p = stats.matches[n] > 0 ? static_cast<double>(stats.matches[n]) / total : 1.0 / (2.0 * total);
    log_sum += std::log(p);
    ++orders;
  }
  const double ratio = static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len);
  const double bp = ratio > 1.0 ? std::exp(1.0 - ratio) : 1.0;
  return 100.0 * bp * std::exp(log_sum / orders);
}

double corpus_bleu(std::span<const TokenPair> pairs, int max_n) {
  if (pairs.empty()) throw ParameterError("corpus_bleu: no hypotheses");
  NgramStats total;
  for (const auto& [hyp, ref] : pairs) total += sentence_stats(hyp, ref);
  return bleu_from_stats(total, max_n);
}

bool exact_match(std::string_view hyp, std::string_view ref) { return tokenize_code(hyp) == tokenize_code(ref); }

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : per_example) {
    rows.push_back({{"id", r.id},
                    {"hypothesis", r.hypothesis},
                    {"reference", r.reference},
                    {"exact_match", r.exact_match},
                    {"stats", r.stats.to_json()}});
  }
  nlohmann::json doc = {{"bleu", bleu},
                        {"accuracy", accuracy},
                        {"n_examples", n_examples},
                        {"totals", totals.to_json()},
                        {"per_example", std::move(rows)}};
  doc["fold_id"] = fold_id ? nlohmann::json(*fold_id) : nlohmann::json(nullptr);
  return doc;
}

EvalReport EvalReport::from_json(const nlohmann::json& doc) {
  EvalReport r;
  r.bleu = doc.at("bleu").get<double>();
  r.accuracy = doc.at("accuracy").get<double>();
  r.n_examples = doc.at("n_examples").get<std::size_t>();
  r.totals = NgramStats::from_json(doc.at("totals"));
  for (const auto& row : doc.at("per_example")) {
    r.per_example.push_back({row.at("id").get<std::int64_t>(), row.at("hypothesis").get<std::string>(),
                             row.at("reference").get<std::string>(), row.at("exact_match").get<bool>(),
                             NgramStats::from_json(row.at("stats"))});
  }
  if (doc.contains("fold_id") && !doc.at("fold_id").is_null()) r.fold_id = doc.at("fold_id").get<int>();
  return r;
}

namespace {

std::string csv_field(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path.string() + "'");
  out << "id,exact_match,hyp_len,ref_len,hypothesis,reference\n";
  for (const auto& r : per_example) {
    out << r.id << ',' << (r.exact_match ? 1 : 0) << ',' << r.stats.hyp_len << ',' << r.stats.ref_len << ','
        << csv_field(r.hypothesis) << ',' << csv_field(r.reference) << '\n';
  }
}

EvalReport evaluate_hypotheses(std::span<const corpus::Example> dataset, std::span<const std::string> hypotheses) {
  if (dataset.empty()) throw ParameterError("evaluate: dataset is empty");
  if (dataset.size() != hypotheses.size()) throw ParameterError("evaluate: one hypothesis per example is required");
  EvalReport report;
  report.n_examples = dataset.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto hyp = tokenize_code(hypotheses[i]);
    const auto ref = tokenize_code(dataset[i].snippet);
    ExampleRecord rec{dataset[i].id, hypotheses[i], dataset[i].snippet, hyp == ref, sentence_stats(hyp, ref)};
    hits += rec.exact_match ? 1 : 0;
    report.totals += rec.stats;
    report.per_example.push_back(std::move(rec));
  }
  report.bleu = bleu_from_stats(report.totals);
  report.accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(dataset.size());
  return report;
}

std::vector<std::string> generate_greedy(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                                         const tokenizer::Vocabulary& vocab, std::span<const std::string> intents,
                                         std::size_t max_src_len, std::size_t max_len) {
  std::vector<tokenizer::TokenSequence> sources;
  sources.reserve(intents.size());
  for (const auto& intent : intents) sources.push_back(vocab.encode(intent, max_src_len, true));
  const auto hyps = decode::greedy_many(params, cfg, sources, max_len);
  std::vector<std::string> texts;
  texts.reserve(hyps.size());
  for (const auto& h : hyps) texts.push_back(vocab.decode(h.ids));
  return texts;
}

EvalReport evaluate(const model::Parameters<float>& params, const model::ModelConfig& cfg,
                    const tokenizer::Vocabulary& vocab, std::span<const corpus::Example> dataset,
                    std::size_t max_src_len, std::size_t max_len) {
  if (dataset.empty()) throw ParameterError("evaluate: dataset is empty");
  std::vector<std::string> intents;
  intents.reserve(dataset.size());
  for (const auto& ex : dataset) intents.push_back(ex.intent);
  const auto hyps = generate_greedy(params, cfg, vocab, intents, max_src_len, max_len);
  return evaluate_hypotheses(dataset, hyps);
}

nlohmann::json FoldSummary::to_json() const {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t i = 0; i < per_fold.size(); ++i) {
    folds.push_back({{"fold", i}, {"bleu", per_fold[i].first}, {"accuracy", per_fold[i].second}});
  }
  return {{"mean_bleu", mean_bleu}, {"mean_accuracy", mean_accuracy}, {"folds", std::move(folds)}};
}

FoldSummary aggregate_folds(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ParameterError("aggregate_folds: no reports");
  FoldSummary s;
  for (const auto& r : reports) {
    s.per_fold.emplace_back(r.bleu, r.accuracy);
    s.mean_bleu += r.bleu;
    s.mean_accuracy += r.accuracy;
  }
  s.mean_bleu /= static_cast<double>(reports.size());
  s.mean_accuracy /= static_cast<double>(reports.size());
  return s;
}

}  // namespace nl2lf::eval
