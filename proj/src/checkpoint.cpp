#include "nl2lf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nl2lf/errors.hpp"
#include "nl2lf/hash.hpp"

namespace nl2lf::training {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "NL2LFCKPT\n";
constexpr int kFormatVersion = 1;

struct TensorEntry {
  std::string name;
  tensor::Shape shape;
  const float* data;
  std::size_t count;
};

std::string hash_floats(const float* data, std::size_t count) {
  return to_hex(fnv1a({reinterpret_cast<const unsigned char*>(data), count * sizeof(float)}));
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<TensorEntry> entries;
  for (const auto& [name, t] : ckpt.params.items()) {
    entries.push_back({name, t->shape(), t->data().data(), t->size()});
  }
  const auto& items = ckpt.params.items();
  if (ckpt.adam_m.size() != items.size() || ckpt.adam_v.size() != items.size()) {
    throw CheckpointError("optimizer state does not match the parameter set");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    entries.push_back({"adam.m/" + items[i].first, items[i].second->shape(), ckpt.adam_m[i].data(), ckpt.adam_m[i].size()});
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    entries.push_back({"adam.v/" + items[i].first, items[i].second->shape(), ckpt.adam_v[i].data(), ckpt.adam_v[i].size()});
  }
  if (ckpt.best_params) {
    for (const auto& [name, t] : ckpt.best_params->items()) {
      entries.push_back({"best/" + name, t->shape(), t->data().data(), t->size()});
    }
  }

  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : entries) {
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"fnv1a", hash_floats(e.data, e.count)}});
  }
  nlohmann::json header = {{"format", "nl2lf-checkpoint"},
                           {"version", kFormatVersion},
                           {"model_config", ckpt.model.to_json()},
                           {"train_config", ckpt.train.to_json()},
                           {"vocabulary", ckpt.vocab.to_json()},
                           {"vocab_hash", ckpt.vocab.hash()},
                           {"adam_step", ckpt.adam_step},
                           {"step", ckpt.step},
                           {"rng_state", ckpt.rng_state},
                           {"trainer_state", ckpt.trainer_state},
                           {"tensors", std::move(tensors)}};
  header["best_dev_bleu"] = ckpt.best_dev_bleu ? nlohmann::json(*ckpt.best_dev_bleu) : nlohmann::json(nullptr);
  const std::string text = header.dump();

  std::string out(kMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  for (const auto& e : entries) out.append(reinterpret_cast<const char*>(e.data), e.count * sizeof(float));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.compare(0, kMagic.size(), kMagic) != 0) {
    throw CheckpointError("corrupt checkpoint: section 'magic' does not identify an nl2lf checkpoint");
  }
  std::size_t pos = kMagic.size();
  std::uint64_t len = 0;
  if (bytes.size() < pos + sizeof len) throw CheckpointError("corrupt checkpoint: section 'header' is truncated");
  std::memcpy(&len, bytes.data() + pos, sizeof len);
  pos += sizeof len;
  if (bytes.size() - pos < len) throw CheckpointError("corrupt checkpoint: section 'header' is truncated");

  Checkpoint ckpt;
  nlohmann::json header;
  std::vector<std::pair<std::string, tensor::Shape>> listed;
  std::vector<std::string> hashes;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    if (header.at("format") != "nl2lf-checkpoint" || header.at("version") != kFormatVersion) {
      throw CheckpointError("corrupt checkpoint: section 'header' has an unknown format or version");
    }
    ckpt.model = model::ModelConfig::from_json(header.at("model_config"));
    ckpt.train = TrainConfig::from_json(header.at("train_config"));
    ckpt.adam_step = header.at("adam_step").get<std::int64_t>();
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.trainer_state = header.at("trainer_state");
    if (!header.at("best_dev_bleu").is_null()) ckpt.best_dev_bleu = header.at("best_dev_bleu").get<double>();
    for (const auto& t : header.at("tensors")) {
      listed.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<tensor::Shape>());
      hashes.push_back(t.at("fnv1a").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: section 'header': ") + e.what());
  }
  pos += len;

  try {
    ckpt.vocab = tokenizer::Vocabulary::from_json(header.at("vocabulary"));
  } catch (const Error& e) {
    throw CheckpointError(std::string("corrupt checkpoint: section 'vocabulary': ") + e.what());
  }
  if (ckpt.vocab.hash() != header.at("vocab_hash").get<std::string>()) {
    throw CheckpointError("corrupt checkpoint: section 'vocabulary' does not match its recorded hash");
  }
  if (static_cast<std::size_t>(ckpt.model.vocab_size) != ckpt.vocab.size()) {
    throw CheckpointError("incompatible checkpoint: model vocab_size " + std::to_string(ckpt.model.vocab_size) +
                          " but the vocabulary has " + std::to_string(ckpt.vocab.size()) + " pieces");
  }

  std::vector<std::vector<float>> arrays;
  for (std::size_t i = 0; i < listed.size(); ++i) {
    const auto& [name, shape] = listed[i];
    const auto count = static_cast<std::size_t>(tensor::numel(shape));
    if (bytes.size() - pos < count * sizeof(float)) {
      throw CheckpointError("corrupt checkpoint: section 'tensor:" + name + "' is truncated");
    }
    std::vector<float> data(count);
    std::memcpy(data.data(), bytes.data() + pos, count * sizeof(float));
    pos += count * sizeof(float);
    if (hash_floats(data.data(), count) != hashes[i]) {
      throw CheckpointError("corrupt checkpoint: section 'tensor:" + name + "' fails its hash check");
    }
    arrays.push_back(std::move(data));
  }
  if (pos != bytes.size()) throw CheckpointError("corrupt checkpoint: trailing bytes after the last tensor");

  const auto layout = model::parameter_layout(ckpt.model);
  const std::size_t n = layout.size();
  if (listed.size() != 3 * n && listed.size() != 4 * n) {
    throw CheckpointError("incompatible checkpoint: tensor count does not match the model config");
  }
  auto expect = [&](std::size_t index, const std::string& name, const tensor::Shape& shape) {
    if (listed[index].first != name || listed[index].second != shape) {
      throw CheckpointError("incompatible checkpoint: section 'tensor:" + listed[index].first + "' expected '" +
                            name + "' with shape " + tensor::to_string(shape));
    }
  };
  model::Parameters<float> best;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [name, shape] = layout[i];
    expect(i, name, shape);
    expect(n + i, "adam.m/" + name, shape);
    expect(2 * n + i, "adam.v/" + name, shape);
    ckpt.params.add(name, tensor::make_tensor<float>(shape, std::move(arrays[i]), true));
    ckpt.adam_m.push_back(std::move(arrays[n + i]));
    ckpt.adam_v.push_back(std::move(arrays[2 * n + i]));
    if (listed.size() == 4 * n) {
      expect(3 * n + i, "best/" + name, shape);
      best.add(name, tensor::make_tensor<float>(shape, std::move(arrays[3 * n + i]), true));
    }
  }
  if (listed.size() == 4 * n) ckpt.best_params = std::move(best);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const tokenizer::Vocabulary* expected_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  Checkpoint ckpt = deserialize_checkpoint(buffer.str());
  if (expected_vocab && expected_vocab->hash() != ckpt.vocab.hash()) {
    throw CheckpointError("vocabulary hash mismatch: '" + path.string() + "' was trained with vocabulary " +
                          ckpt.vocab.hash() + " but the supplied vocabulary hashes to " + expected_vocab->hash());
  }
  return ckpt;
}

}  // namespace nl2lf::training
