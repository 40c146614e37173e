#include "nl2lf/train_config.hpp"

#include "nl2lf/errors.hpp"

namespace nl2lf::training {

InterleaveRatio InterleaveRatio::parse(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("missing ':'");
    std::size_t used = 0;
    InterleaveRatio r;
    r.gold = std::stoi(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("trailing text");
    const std::string rest = text.substr(colon + 1);
    r.noisy = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("trailing text");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("interleave ratio must look like g:n, got '" + text + "'");
  }
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ParameterError("train config: " + what);
  };
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_src_len >= 1 && max_tgt_len >= 1 && decode_max_len >= 1, "sequence lengths must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(interleave.gold >= 0 && interleave.noisy >= 0, "interleave components must be >= 0");
  require(interleave.cycle() > 0, "interleave ratio 0:0 schedules nothing");
  require(eval_every >= 0 && max_steps >= 0 && checkpoint_every >= 0, "step counts must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"max_src_len", max_src_len},
          {"max_tgt_len", max_tgt_len},
          {"learning_rate", learning_rate},
          {"max_epochs", max_epochs},
          {"interleave", interleave.to_string()},
          {"seed", seed},
          {"eval_every", eval_every},
          {"patience", patience},
          {"weighted_loss", weighted_loss},
          {"clip_norm", clip_norm},
          {"max_steps", max_steps},
          {"checkpoint_every", checkpoint_every},
          {"decode_max_len", decode_max_len}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.batch_size = doc.at("batch_size").get<std::size_t>();
  c.max_src_len = doc.at("max_src_len").get<std::size_t>();
  c.max_tgt_len = doc.at("max_tgt_len").get<std::size_t>();
  c.learning_rate = doc.at("learning_rate").get<double>();
  c.max_epochs = doc.at("max_epochs").get<int>();
  c.interleave = InterleaveRatio::parse(doc.at("interleave").get<std::string>());
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.eval_every = doc.at("eval_every").get<std::int64_t>();
  c.patience = doc.at("patience").get<int>();
  c.weighted_loss = doc.at("weighted_loss").get<bool>();
  c.clip_norm = doc.at("clip_norm").get<double>();
  c.max_steps = doc.at("max_steps").get<std::int64_t>();
  c.checkpoint_every = doc.at("checkpoint_every").get<std::int64_t>();
  c.decode_max_len = doc.at("decode_max_len").get<std::size_t>();
  return c;
}

}  // namespace nl2lf::training
