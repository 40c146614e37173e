#include "nl2lf/synthetic.hpp"

#include <array>
#include <fstream>
#include <set>

#include <json.hpp>

#include "nl2lf/errors.hpp"
#include "nl2lf/random.hpp"

namespace nl2lf::synthetic {

namespace {

// Placeholders: {x} {y} list names, {s} string name, {d} dict name, {k} key,
// {w} {v} word literals, {n} small integer, {f} file name, {c} delimiter.
struct Template {
  std::vector<const char*> intents;
  const char* snippet;
};

const std::vector<Template>& templates() {
  static const std::vector<Template> t = {
      {{"sort list {x} in descending order", "sort {x} from largest to smallest"}, "sorted({x}, reverse=True)"},
      {{"sort list {x}", "get a sorted copy of {x}"}, "sorted({x})"},
      {{"convert string {s} to an integer", "parse {s} as int"}, "int({s})"},
      {{"convert string {s} to a float", "parse {s} as a floating point number"}, "float({s})"},
      {{"get the length of list {x}", "count the elements in {x}"}, "len({x})"},
      {{"remove key {k} from dictionary {d}", "delete the entry {k} of {d}"}, "{d}.pop('{k}', None)"},
      {{"get value of key {k} in dictionary {d}", "look up {k} in {d}"}, "{d}.get('{k}')"},
      {{"split string {s} on {c}", "break {s} into parts separated by {c}"}, "{s}.split('{c}')"},
      {{"join the strings in {x} with {c}", "concatenate {x} using {c} as separator"}, "'{c}'.join({x})"},
      {{"read all lines of file {f}", "open {f} and get its lines"}, "open('{f}').readlines()"},
      {{"check if string {s} starts with {w}", "test whether {s} begins with {w}"}, "{s}.startswith('{w}')"},
      {{"check if string {s} ends with {w}", "test whether {s} finishes with {w}"}, "{s}.endswith('{w}')"},
      {{"sum the numbers in {x}", "get the total of list {x}"}, "sum({x})"},
      {{"get the largest value in {x}", "find the maximum of {x}"}, "max({x})"},
      {{"get the smallest value in {x}", "find the minimum of {x}"}, "min({x})"},
      {{"reverse list {x}", "get {x} in reverse order"}, "{x}[::-1]"},
      {{"append {n} to list {x}", "add the number {n} at the end of {x}"}, "{x}.append({n})"},
      {{"keep the items of {x} greater than {n}", "filter {x} for values above {n}"}, "[i for i in {x} if i > {n}]"},
      {{"square every element of {x}", "get the squares of the numbers in {x}"}, "[i ** 2 for i in {x}]"},
      {{"build a dictionary from keys {x} and values {y}", "zip {x} and {y} into a dict"}, "dict(zip({x}, {y}))"},
      {{"convert string {s} to lowercase", "lowercase {s}"}, "{s}.lower()"},
      {{"convert string {s} to uppercase", "uppercase {s}"}, "{s}.upper()"},
      {{"replace {w} with {v} in string {s}", "substitute {v} for every {w} in {s}"}, "{s}.replace('{w}', '{v}')"},
      {{"count how many times {n} occurs in {x}", "number of occurrences of {n} in list {x}"}, "{x}.count({n})"},
      {{"get the last {n} elements of {x}", "take the final {n} items of {x}"}, "{x}[-{n}:]"},
      {{"get the first {n} elements of {x}", "take the leading {n} items of {x}"}, "{x}[:{n}]"},
      {{"remove duplicates from list {x}", "get the unique items of {x}"}, "list(set({x}))"},
      {{"strip whitespace from string {s}", "trim the spaces around {s}"}, "{s}.strip()"},
      {{"get the keys of dictionary {d}", "list the keys in {d}"}, "list({d}.keys())"},
      {{"check if key {k} is in dictionary {d}", "test whether {d} has key {k}"}, "'{k}' in {d}"},
      {{"concatenate lists {x} and {y}", "merge {x} with {y}"}, "{x} + {y}"},
      {{"get the index of {n} in list {x}", "find the position of {n} in {x}"}, "{x}.index({n})"},
  };
  return t;
}

constexpr std::array kLists = {"nums", "values", "items", "data", "lst", "scores", "words", "arr", "names", "a", "b",
                               "result"};
constexpr std::array kStrings = {"s", "text", "line", "name", "word", "msg", "path", "title"};
constexpr std::array kDicts = {"d", "config", "counts", "mapping", "params", "cache"};
constexpr std::array kKeys = {"id", "name", "age", "url", "key", "user", "score", "size"};
constexpr std::array kWords = {"foo", "bar", "abc", "hello", "test", "x", "http", "tmp"};
constexpr std::array kFiles = {"data.txt", "input.csv", "log.txt", "words.txt", "config.ini"};
constexpr std::array kDelims = {",", ";", ":", "-", "|"};

template <std::size_t N>
std::string pick(Rng& rng, const std::array<const char*, N>& pool) {
  return pool[rng.uniform_index(N)];
}

struct Slots {
  std::string x, y, s, d, k, w, v, n, f, c;
};

Slots draw_slots(Rng& rng) {
  Slots s;
  s.x = pick(rng, kLists);
  do s.y = pick(rng, kLists); while (s.y == s.x);
  s.s = pick(rng, kStrings);
  s.d = pick(rng, kDicts);
  s.k = pick(rng, kKeys);
  s.w = pick(rng, kWords);
  do s.v = pick(rng, kWords); while (s.v == s.w);
  s.n = std::to_string(1 + rng.uniform_index(20));
  s.f = pick(rng, kFiles);
  s.c = pick(rng, kDelims);
  return s;
}

// quote wraps variable names the way curated intents do (`name`).
std::string fill(std::string_view pattern, const Slots& s, bool quote = false) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{' && i + 2 < pattern.size() && pattern[i + 2] == '}') {
      const std::string* value = nullptr;
      switch (pattern[i + 1]) {
        case 'x': value = &s.x; break;
        case 'y': value = &s.y; break;
        case 's': value = &s.s; break;
        case 'd': value = &s.d; break;
        case 'k': value = &s.k; break;
        case 'w': value = &s.w; break;
        case 'v': value = &s.v; break;
        case 'n': value = &s.n; break;
        case 'f': value = &s.f; break;
        case 'c': value = &s.c; break;
        default: break;
      }
      if (value) {
        out += quote ? "`" + *value + "`" : *value;
        i += 2;
        continue;
      }
    }
    out.push_back(pattern[i]);
  }
  return out;
}

std::string as_question(const std::string& intent, Rng& rng) {
  static constexpr std::array kLead = {"how to ", "how do i ", "python ", ""};
  return std::string(kLead[rng.uniform_index(kLead.size())]) + intent;
}

}  // namespace

std::vector<GoldRecord> make_gold(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  const auto& ts = templates();
  std::vector<GoldRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& t = ts[rng.uniform_index(ts.size())];
    const Slots slots = draw_slots(rng);
    const char* phrase = t.intents[rng.uniform_index(t.intents.size())];
    GoldRecord r;
    r.snippet = fill(t.snippet, slots);
    r.intent = as_question(fill(phrase, slots), rng);
    if (rng.uniform_index(3) != 0) r.rewritten_intent = fill(phrase, slots, true);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<corpus::Example> make_noisy(std::size_t count, std::uint64_t seed, double corrupt_fraction) {
  Rng rng(seed);
  const auto& ts = templates();
  std::vector<corpus::Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& t = ts[rng.uniform_index(ts.size())];
    const Slots slots = draw_slots(rng);
    corpus::Example ex;
    ex.id = static_cast<std::int64_t>(i + 1);
    ex.source = corpus::Source::noisy;
    ex.intent = as_question(fill(t.intents[rng.uniform_index(t.intents.size())], slots), rng);
    ex.snippet = fill(t.snippet, slots);
    if (rng.uniform01() < corrupt_fraction) {
      if (rng.uniform_index(2) == 0) {
        ex.snippet = fill(ts[rng.uniform_index(ts.size())].snippet, draw_slots(rng));
      } else {
        ex.snippet = "print(" + ex.snippet + ")";
      }
      ex.weight = 0.6 * rng.uniform01();
    } else {
      ex.weight = 0.5 + 0.5 * rng.uniform01();
    }
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

struct Task {
  const char* label;
  const char* label_text;
  std::vector<const char*> keywords;
};

const std::vector<Task>& lf_tasks() {
  static const std::vector<Task> t = {
      {"SPAM", "spam", {"free", "win", "prize", "offer", "click", "subscribe", "money", "cash", "deal", "visit"}},
      {"HAM", "ham", {"thanks", "song", "video", "lyrics", "beautiful", "voice", "memories", "cover"}},
      {"POSITIVE", "positive", {"good", "great", "excellent", "love", "amazing", "happy", "best", "perfect"}},
      {"NEGATIVE", "negative", {"bad", "terrible", "awful", "hate", "worst", "boring", "poor", "broken"}},
  };
  return t;
}

struct LabelingFunction {
  std::string name;
  std::string snippet;
  std::vector<std::string> descriptions;
};

LabelingFunction make_lf(Rng& rng) {
  const auto& task = lf_tasks()[rng.uniform_index(lf_tasks().size())];
  const std::string label = task.label;
  const std::string text = task.label_text;
  const std::string kw = task.keywords[rng.uniform_index(task.keywords.size())];
  const std::string n = std::to_string(2 + rng.uniform_index(9));
  auto head = [](const std::string& name) { return "def " + name + "(x):\n    return "; };
  LabelingFunction lf;
  switch (rng.uniform_index(6)) {
    case 0:
      lf.name = "lf_" + kw;
      lf.snippet = head(lf.name) + label + " if \"" + kw + "\" in x.text.lower() else ABSTAIN";
      lf.descriptions = {"label " + text + " if the text mentions " + kw,
                         "return " + label + " when the comment contains the word " + kw + ", otherwise abstain",
                         "mark any message that says " + kw + " as " + text,
                         "if " + kw + " appears in the lowercased text vote " + text};
      break;
    case 1:
      lf.name = "lf_starts_" + kw;
      lf.snippet = head(lf.name) + label + " if x.text.lower().startswith(\"" + kw + "\") else ABSTAIN";
      lf.descriptions = {"label " + text + " when the text starts with " + kw,
                         "messages beginning with " + kw + " are " + text,
                         "vote " + label + " if the first word is " + kw + " and abstain otherwise",
                         "return " + text + " for comments that open with " + kw};
      break;
    case 2:
      lf.name = "lf_short_" + n;
      lf.snippet = head(lf.name) + label + " if len(x.text.split()) < " + n + " else ABSTAIN";
      lf.descriptions = {"label " + text + " if the text has fewer than " + n + " words",
                         "short comments under " + n + " words are " + text,
                         "return " + label + " when the word count is below " + n,
                         "vote " + text + " for messages shorter than " + n + " words"};
      break;
    case 3:
      lf.name = "lf_long_" + n;
      lf.snippet = head(lf.name) + label + " if len(x.text.split()) > " + n + "0 else ABSTAIN";
      lf.descriptions = {"label " + text + " if the text has more than " + n + "0 words",
                         "long comments over " + n + "0 words are " + text,
                         "return " + label + " when the word count exceeds " + n + "0",
                         "vote " + text + " for messages longer than " + n + "0 words"};
      break;
    case 4:
      lf.name = "lf_exclaim_" + n;
      lf.snippet = head(lf.name) + label + " if x.text.count(\"!\") > " + n + " else ABSTAIN";
      lf.descriptions = {"label " + text + " if the text has more than " + n + " exclamation marks",
                         "return " + label + " when there are over " + n + " exclamation points",
                         "messages with more than " + n + " bangs are " + text,
                         "vote " + text + " if the count of ! is above " + n};
      break;
    default:
      lf.name = "lf_regex_" + kw;
      lf.snippet = head(lf.name) + label + " if re.search(r\"" + kw + "\", x.text, re.I) else ABSTAIN";
      lf.descriptions = {"label " + text + " if a case insensitive regex finds " + kw,
                         "use a regular expression for " + kw + " and return " + label,
                         "search the text for " + kw + " ignoring case and vote " + text,
                         "regex match on " + kw + " means " + text};
      break;
  }
  rng.shuffle(std::span<std::string>(lf.descriptions));
  return lf;
}

}  // namespace

std::vector<corpus::Example> make_nl2lf(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<corpus::Example> out;
  std::set<std::string> seen;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 100000) throw ParameterError("make_nl2lf: ran out of distinct labeling functions");
    LabelingFunction lf = make_lf(rng);
    if (!seen.insert(lf.name).second) continue;
    const std::size_t remaining = count - out.size();
    std::size_t take = std::min<std::size_t>(2 + rng.uniform_index(3), remaining);
    if (remaining - take == 1) take += take < 4 ? 1 : -1;
    for (std::size_t i = 0; i < take; ++i) {
      corpus::Example ex;
      ex.id = static_cast<std::int64_t>(out.size() + 1);
      ex.source = corpus::Source::nl2lf;
      ex.intent = lf.descriptions[i];
      ex.snippet = lf.snippet;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<corpus::Example> to_examples(std::span<const GoldRecord> records) {
  std::vector<corpus::Example> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    corpus::Example ex;
    ex.id = static_cast<std::int64_t>(i);
    ex.intent = records[i].rewritten_intent.value_or(records[i].intent);
    ex.snippet = records[i].snippet;
    out.push_back(std::move(ex));
  }
  return out;
}

void write_gold(std::span<const GoldRecord> records, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    nlohmann::json r = {{"question_id", 1000 + i}, {"intent", records[i].intent}, {"snippet", records[i].snippet}};
    r["rewritten_intent"] = records[i].rewritten_intent ? nlohmann::json(*records[i].rewritten_intent) : nullptr;
    doc.push_back(std::move(r));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << doc.dump(1) << '\n';
}

void write_noisy(std::span<const corpus::Example> examples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& ex : examples) {
    out << nlohmann::json{{"intent", ex.intent}, {"snippet", ex.snippet}, {"prob", ex.weight}}.dump() << '\n';
  }
}

void write_nl2lf(std::span<const corpus::Example> examples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& ex : examples) out << nlohmann::json{{"intent", ex.intent}, {"snippet", ex.snippet}}.dump() << '\n';
}

}  // namespace nl2lf::synthetic
