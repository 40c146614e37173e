#include "nl2lf/run_config.hpp"

#include <charconv>
#include <sstream>

#include <CLI11.hpp>

#include "nl2lf/errors.hpp"

namespace nl2lf::cli {

namespace {

template <typename T>
T parse_number(std::string_view key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + value + "'");
}

std::optional<std::filesystem::path> parse_path(const std::string& value) {
  if (value.empty()) return std::nullopt;
  return std::filesystem::path(value);
}

std::string path_text(const std::optional<std::filesystem::path>& p) { return p ? p->string() : ""; }

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string real_text(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void RunConfig::set(std::string_view section, std::string_view key, const std::string& value) {
  const std::string full = std::string(section) + "." + std::string(key);
  auto is = [&](std::string_view s, std::string_view k) { return section == s && key == k; };
  if (is("data", "gold")) gold = parse_path(value);
  else if (is("data", "noisy")) noisy = parse_path(value);
  else if (is("data", "nl2lf")) nl2lf = parse_path(value);
  else if (is("data", "min_prob")) min_prob = parse_number<double>(full, value);
  else if (is("data", "dev_size")) dev_size = parse_number<std::size_t>(full, value);
  else if (is("tokenizer", "vocab")) vocab = parse_path(value);
  else if (is("tokenizer", "vocab_size")) vocab_size = parse_number<int>(full, value);
  else if (is("model", "d_model")) model.d_model = parse_number<int>(full, value);
  else if (is("model", "n_heads")) model.n_heads = parse_number<int>(full, value);
  else if (is("model", "d_ff")) model.d_ff = parse_number<int>(full, value);
  else if (is("model", "encoder_layers")) model.n_encoder_layers = parse_number<int>(full, value);
  else if (is("model", "decoder_layers")) model.n_decoder_layers = parse_number<int>(full, value);
  else if (is("model", "buckets")) model.n_relative_buckets = parse_number<int>(full, value);
  else if (is("model", "max_distance")) model.max_relative_distance = parse_number<int>(full, value);
  else if (is("model", "dropout")) model.dropout_rate = parse_number<double>(full, value);
  else if (is("train", "lr")) train.learning_rate = parse_number<double>(full, value);
  else if (is("train", "batch_size")) train.batch_size = parse_number<std::size_t>(full, value);
  else if (is("train", "max_src_len")) train.max_src_len = parse_number<std::size_t>(full, value);
  else if (is("train", "max_tgt_len")) train.max_tgt_len = parse_number<std::size_t>(full, value);
  else if (is("train", "epochs")) train.max_epochs = parse_number<int>(full, value);
  else if (is("train", "interleave")) {
    train.interleave = training::InterleaveRatio::parse(value);
    interleave_given = true;
  } else if (is("train", "seed")) train.seed = parse_number<std::uint64_t>(full, value);
  else if (is("train", "eval_every")) train.eval_every = parse_number<std::int64_t>(full, value);
  else if (is("train", "patience")) train.patience = parse_number<int>(full, value);
  else if (is("train", "weighted_loss")) train.weighted_loss = parse_bool(full, value);
  else if (is("train", "clip_norm")) train.clip_norm = parse_number<double>(full, value);
  else if (is("train", "max_steps")) train.max_steps = parse_number<std::int64_t>(full, value);
  else if (is("train", "checkpoint_every")) train.checkpoint_every = parse_number<std::int64_t>(full, value);
  else if (is("decode", "beam_size")) beam_size = parse_number<std::size_t>(full, value);
  else if (is("decode", "length_alpha")) length_alpha = parse_number<double>(full, value);
  else if (is("decode", "max_len")) {
    decode_max_len = parse_number<std::size_t>(full, value);
    train.decode_max_len = decode_max_len;
  } else if (is("cv", "folds")) folds = parse_number<int>(full, value);
  else if (is("cv", "train_fraction")) train_fraction = parse_number<double>(full, value);
  else if (is("run", "out")) out = parse_path(value);
  else if (is("run", "resume")) resume = parse_path(value);
  else if (is("run", "checkpoint")) checkpoint = parse_path(value);
  else throw ConfigError("unknown config key '" + full + "'");
}

void RunConfig::load_ini(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path.string());
  } catch (const CLI::Error& e) {
    throw ConfigError("cannot read config file '" + path.string() + "': " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1) {
      throw ConfigError("config file '" + path.string() + "': key '" + item.name + "' must sit in one [section]");
    }
    if (item.inputs.size() != 1) {
      throw ConfigError("config file '" + path.string() + "': key '" + item.name + "' needs exactly one value");
    }
    set(item.parents.front(), item.name, item.inputs.front());
  }
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  os << "[data]\n"
     << "gold = " << quote(path_text(gold)) << "\n"
     << "noisy = " << quote(path_text(noisy)) << "\n"
     << "nl2lf = " << quote(path_text(nl2lf)) << "\n"
     << "min_prob = " << real_text(min_prob) << "\n"
     << "dev_size = " << dev_size << "\n\n"
     << "[tokenizer]\n"
     << "vocab = " << quote(path_text(vocab)) << "\n"
     << "vocab_size = " << vocab_size << "\n\n"
     << "[model]\n"
     << "d_model = " << model.d_model << "\n"
     << "n_heads = " << model.n_heads << "\n"
     << "d_ff = " << model.d_ff << "\n"
     << "encoder_layers = " << model.n_encoder_layers << "\n"
     << "decoder_layers = " << model.n_decoder_layers << "\n"
     << "buckets = " << model.n_relative_buckets << "\n"
     << "max_distance = " << model.max_relative_distance << "\n"
     << "dropout = " << real_text(model.dropout_rate) << "\n\n"
     << "[train]\n"
     << "lr = " << real_text(train.learning_rate) << "\n"
     << "batch_size = " << train.batch_size << "\n"
     << "max_src_len = " << train.max_src_len << "\n"
     << "max_tgt_len = " << train.max_tgt_len << "\n"
     << "epochs = " << train.max_epochs << "\n";
  if (interleave_given) os << "interleave = " << train.interleave.to_string() << "\n";
  os << "seed = " << train.seed << "\n"
     << "eval_every = " << train.eval_every << "\n"
     << "patience = " << train.patience << "\n"
     << "weighted_loss = " << (train.weighted_loss ? "true" : "false") << "\n"
     << "clip_norm = " << real_text(train.clip_norm) << "\n"
     << "max_steps = " << train.max_steps << "\n"
     << "checkpoint_every = " << train.checkpoint_every << "\n\n"
     << "[decode]\n"
     << (beam_size ? "beam_size = " + std::to_string(*beam_size) + "\n" : std::string())
     << "length_alpha = " << real_text(length_alpha) << "\n"
     << "max_len = " << decode_max_len << "\n\n"
     << "[cv]\n"
     << "folds = " << folds << "\n"
     << "train_fraction = " << real_text(train_fraction) << "\n\n"
     << "[run]\n"
     << "out = " << quote(path_text(out)) << "\n"
     << "resume = " << quote(path_text(resume)) << "\n"
     << "checkpoint = " << quote(path_text(checkpoint)) << "\n";
  return os.str();
}

}  // namespace nl2lf::cli
