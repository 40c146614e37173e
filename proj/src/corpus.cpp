#include "nl2lf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "nl2lf/errors.hpp"
#include "nl2lf/random.hpp"

namespace nl2lf::corpus {

namespace {

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path.string() + "' (byte offset 0)");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string string_field(const nlohmann::json& record, const char* key, std::size_t index,
                         const std::filesystem::path& path) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw ValidationError(path.string() + ": record " + std::to_string(index) +
                          " is missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

void check_example(const Example& example, std::size_t index, const std::filesystem::path& path) {
  try {
    validate(example);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(Source source) {
  switch (source) {
    case Source::gold:
      return "gold";
    case Source::noisy:
      return "noisy";
    case Source::nl2lf:
      return "nl2lf";
  }
  return "unknown";
}

Source source_from_string(std::string_view name) {
  if (name == "gold") return Source::gold;
  if (name == "noisy") return Source::noisy;
  if (name == "nl2lf") return Source::nl2lf;
  throw ParameterError("unknown dataset source '" + std::string(name) + "'");
}

void validate(const Example& example) {
  if (is_blank(example.intent)) throw ValidationError("intent is empty");
  if (is_blank(example.snippet)) throw ValidationError("snippet is empty");
  if (!(example.weight >= 0.0 && example.weight <= 1.0)) {
    throw ValidationError("weight " + std::to_string(example.weight) + " outside [0,1]");
  }
  if (example.source != Source::noisy && example.weight != 1.0) {
    throw ValidationError("gold and nl2lf examples must have weight 1.0");
  }
}

nlohmann::json LoadSummary::to_json() const {
  return {{"loaded", loaded},
          {"skipped", skipped},
          {"malformed", malformed},
          {"source", std::string(corpus::to_string(source))},
          {"path", path}};
}

std::vector<Example> load_gold(const std::filesystem::path& path, LoadSummary* summary) {
  const std::string text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("cannot parse '" + path.string() + "' at byte offset " +
                    std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_array()) {
    throw LoadError("'" + path.string() + "' is not a JSON array (byte offset 0)");
  }

  std::vector<Example> examples;
  examples.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& record = doc[i];
    if (!record.is_object()) {
      throw ValidationError(path.string() + ": record " + std::to_string(i) + " is not an object");
    }
    Example ex;
    ex.id = static_cast<std::int64_t>(i);
    ex.snippet = string_field(record, "snippet", i, path);
    auto rewritten = record.find("rewritten_intent");
    if (rewritten != record.end() && rewritten->is_string()) {
      ex.intent = rewritten->get<std::string>();
    } else {
      ex.intent = string_field(record, "intent", i, path);
    }
    ex.source = Source::gold;
    check_example(ex, i, path);
    examples.push_back(std::move(ex));
  }
  if (summary) *summary = LoadSummary{examples.size(), 0, 0, Source::gold, path.string()};
  return examples;
}

std::vector<Example> load_nl2lf(const std::filesystem::path& path, LoadSummary* summary) {
  const std::string text = read_file(path);
  std::vector<Example> examples;
  std::size_t offset = 0;
  std::size_t index = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + offset, end - offset);
    if (!is_blank(line)) {
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw LoadError("cannot parse '" + path.string() + "' at byte offset " +
                        std::to_string(offset + (e.byte > 0 ? e.byte - 1 : 0)) + ": " + e.what());
      }
      if (!record.is_object()) {
        throw ValidationError(path.string() + ": record " + std::to_string(index) +
                              " is not an object");
      }
      Example ex;
      ex.id = static_cast<std::int64_t>(index);
      ex.intent = string_field(record, "intent", index, path);
      ex.snippet = string_field(record, "snippet", index, path);
      ex.source = Source::nl2lf;
      check_example(ex, index, path);
      examples.push_back(std::move(ex));
      ++index;
    }
    offset = end + 1;
  }
  if (summary) *summary = LoadSummary{examples.size(), 0, 0, Source::nl2lf, path.string()};
  return examples;
}

NoisyReader::NoisyReader(const std::filesystem::path& path, double min_weight)
    : in_(path), min_weight_(min_weight) {
  if (!in_) throw LoadError("cannot open '" + path.string() + "' (byte offset 0)");
  summary_.source = Source::noisy;
  summary_.path = path.string();
}

std::optional<Example> NoisyReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (is_blank(line)) continue;
    Example ex;
    bool ok = false;
    try {
      const auto record = nlohmann::json::parse(line);
      const auto intent = record.find("intent");
      const auto snippet = record.find("snippet");
      const auto prob = record.find("prob");
      if (record.is_object() && intent != record.end() && intent->is_string() &&
          snippet != record.end() && snippet->is_string() && prob != record.end() &&
          prob->is_number()) {
        ex.id = line_no_;
        ex.intent = intent->get<std::string>();
        ex.snippet = snippet->get<std::string>();
        ex.weight = prob->get<double>();
        ex.source = Source::noisy;
        validate(ex);
        ok = true;
      }
    } catch (const nlohmann::json::exception&) {
    } catch (const ValidationError&) {
    }
    if (!ok) {
      ++summary_.malformed;
      ++summary_.skipped;
      continue;
    }
    if (ex.weight < min_weight_) {
      ++summary_.skipped;
      continue;
    }
    ++summary_.loaded;
    return ex;
  }
  return std::nullopt;
}

std::vector<Example> load_noisy(const std::filesystem::path& path, double min_weight,
                                LoadSummary* summary) {
  NoisyReader reader(path, min_weight);
  std::vector<Example> examples;
  while (auto ex = reader.next()) examples.push_back(std::move(*ex));
  if (summary) *summary = reader.summary();
  return examples;
}

namespace {

IdList shuffled_ids(std::span<const Example> data, std::uint64_t seed) {
  IdList ids;
  ids.reserve(data.size());
  for (const auto& ex : data) ids.push_back(ex.id);
  Rng rng(seed);
  rng.shuffle(std::span<std::int64_t>(ids));
  return ids;
}

}  // namespace

DatasetSplit carve_dev(std::span<const Example> train, std::size_t dev_size, std::uint64_t seed) {
  if (dev_size >= train.size() && dev_size > 0) {
    throw ParameterError("carve_dev: dev_size " + std::to_string(dev_size) +
                         " must be smaller than the training set (" +
                         std::to_string(train.size()) + ")");
  }
  DatasetSplit split;
  IdList ids = shuffled_ids(train, seed);
  const auto cut = static_cast<std::ptrdiff_t>(ids.size() - dev_size);
  split.train.assign(ids.begin(), ids.begin() + cut);
  split.dev.assign(ids.begin() + cut, ids.end());
  return split;
}

FoldPlan plan_folds(std::span<const Example> data, int fold_count, double train_fraction,
                    std::uint64_t seed) {
  if (fold_count < 1) throw ParameterError("plan_folds: fold_count must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("plan_folds: train_fraction must lie strictly between 0 and 1");
  }
  FoldPlan plan;
  plan.fold_count = fold_count;
  plan.train_fraction = train_fraction;
  plan.seed = seed;
  const auto n_train =
      static_cast<std::ptrdiff_t>(std::lround(train_fraction * static_cast<double>(data.size())));
  for (int i = 0; i < fold_count; ++i) {
    IdList ids = shuffled_ids(data, seed + static_cast<std::uint64_t>(i));
    Fold fold;
    fold.train.assign(ids.begin(), ids.begin() + n_train);
    fold.test.assign(ids.begin() + n_train, ids.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

std::vector<Example> select(std::span<const Example> data, std::span<const std::int64_t> ids) {
  std::unordered_map<std::int64_t, std::size_t> index;
  index.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) index.emplace(data[i].id, i);
  std::vector<Example> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ParameterError("select: unknown example id " + std::to_string(id));
    out.push_back(data[it->second]);
  }
  return out;
}

}  // namespace nl2lf::corpus
