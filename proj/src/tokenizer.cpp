#include "nl2lf/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "nl2lf/errors.hpp"
#include "nl2lf/hash.hpp"

namespace nl2lf::tokenizer {

namespace {

enum class ByteClass { word, space, other_space, punct };

ByteClass classify(unsigned char c) {
  if (c >= 0x80 || std::isalnum(c) || c == '_') return ByteClass::word;
  if (c == ' ') return ByteClass::space;
  if (std::isspace(c)) return ByteClass::other_space;
  return ByteClass::punct;
}

bool attaches(ByteClass cls) { return cls == ByteClass::word || cls == ByteClass::punct; }

constexpr std::uint64_t pair_key(TokenId left, TokenId right) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
         static_cast<std::uint32_t>(right);
}

const char* kSpecialNames[] = {"<pad>", "<eos>", "<unk>"};

}  // namespace

std::vector<std::string_view> pre_tokenize(std::string_view text) {
  std::vector<std::string_view> out;
  const std::size_t n = text.size();
  auto cls_at = [&](std::size_t i) { return classify(static_cast<unsigned char>(text[i])); };
  auto run_end = [&](std::size_t i) {
    const ByteClass cls = cls_at(i);
    while (i < n && cls_at(i) == cls) ++i;
    return i;
  };
  std::size_t i = 0;
  while (i < n) {
    if (cls_at(i) == ByteClass::space) {
      std::size_t j = i;
      while (j < n && text[j] == ' ') ++j;
      if (j < n && attaches(cls_at(j))) {
        if (j - 1 > i) {
          out.push_back(text.substr(i, j - 1 - i));
          i = j - 1;
        }
        const std::size_t k = run_end(j);
        out.push_back(text.substr(i, k - i));
        i = k;
      } else {
        out.push_back(text.substr(i, j - i));
        i = j;
      }
      continue;
    }
    const std::size_t k = run_end(i);
    out.push_back(text.substr(i, k - i));
    i = k;
  }
  return out;
}

std::string escape_piece(std::string_view bytes) {
  std::string out;
  for (unsigned char c : bytes) {
    if (c >= 0x21 && c <= 0x7E && c != '\\' && c != '<') {
      out.push_back(static_cast<char>(c));
    } else {
      char buf[5];
      std::snprintf(buf, sizeof buf, "\\x%02X", c);
      out += buf;
    }
  }
  return out;
}

std::string unescape_piece(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '\\') {
      if (i + 4 > text.size() || text[i + 1] != 'x') throw ParameterError("malformed escaped piece '" + std::string(text) + "'");
      const std::string hex(text.substr(i + 2, 2));
      out.push_back(static_cast<char>(std::stoi(hex, nullptr, 16)));
      i += 4;
    } else {
      out.push_back(text[i]);
      ++i;
    }
  }
  return out;
}

Vocabulary::Vocabulary() {
  pieces_.reserve(kBaseSize);
  for (const char* name : kSpecialNames) pieces_.emplace_back(name);
  for (int b = 0; b < 256; ++b) pieces_.emplace_back(1, static_cast<char>(b));
}

TokenId Vocabulary::add_merge(TokenId left, TokenId right) {
  const auto n = static_cast<TokenId>(pieces_.size());
  if (left < kFirstByte || right < kFirstByte || left >= n || right >= n) {
    throw ParameterError("add_merge: ids must be existing non-special pieces");
  }
  const auto id = n;
  merge_rank_.emplace(pair_key(left, right), static_cast<TokenId>(merges_.size()));
  merges_.emplace_back(left, right);
  pieces_.push_back(pieces_[left] + pieces_[right]);
  return id;
}

void Vocabulary::encode_segment(std::string_view segment, std::vector<TokenId>& out) const {
  std::vector<TokenId> symbols;
  symbols.reserve(segment.size());
  for (unsigned char c : segment) symbols.push_back(kFirstByte + c);

  while (symbols.size() > 1) {
    TokenId best_rank = std::numeric_limits<TokenId>::max();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<TokenId>::max()) break;
    const auto [left, right] = merges_[static_cast<std::size_t>(best_rank)];
    const TokenId merged = static_cast<TokenId>(kBaseSize) + best_rank;
    std::size_t w = 0;
    for (std::size_t r = 0; r < symbols.size(); ++r) {
      if (r + 1 < symbols.size() && symbols[r] == left && symbols[r + 1] == right) {
        symbols[w++] = merged;
        ++r;
      } else {
        symbols[w++] = symbols[r];
      }
    }
    symbols.resize(w);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

TokenSequence Vocabulary::encode(std::string_view text, std::size_t max_len,
                                 bool append_eos) const {
  if (max_len < 1) throw ParameterError("encode: max_len must be >= 1");
  TokenSequence seq;
  for (auto segment : pre_tokenize(text)) encode_segment(segment, seq.ids);
  seq.original_length = seq.ids.size() + (append_eos ? 1 : 0);
  if (append_eos && seq.ids.size() < max_len) seq.ids.push_back(kEos);
  if (seq.ids.size() > max_len) seq.ids.resize(max_len);
  return seq;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t pos = 0; pos < ids.size(); ++pos) {
    const TokenId id = ids[pos];
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
      throw ParameterError("decode: id " + std::to_string(id) + " at position " +
                           std::to_string(pos) + " is outside the vocabulary of size " +
                           std::to_string(pieces_.size()));
    }
    if (id < kFirstByte) continue;
    out += pieces_[static_cast<std::size_t>(id)];
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json pieces = nlohmann::json::array();
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    pieces.push_back(i < kFirstByte ? pieces_[i] : escape_piece(pieces_[i]));
  }
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [left, right] : merges_) {
    merges.push_back({escape_piece(pieces_[left]), escape_piece(pieces_[right])});
  }
  return {{"pieces", std::move(pieces)},
          {"merges", std::move(merges)},
          {"specials", {{"pad", kPad}, {"eos", kEos}, {"unk", kUnk}}},
          {"vocab_size", pieces_.size()}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  try {
    const auto& specials = doc.at("specials");
    if (specials.at("pad").get<int>() != kPad || specials.at("eos").get<int>() != kEos ||
        specials.at("unk").get<int>() != kUnk) {
      throw ValidationError("vocabulary specials must be pad=0, eos=1, unk=2");
    }
    Vocabulary vocab;
    std::unordered_map<std::string, TokenId> by_bytes;
    for (std::size_t i = kFirstByte; i < vocab.pieces_.size(); ++i) {
      by_bytes.emplace(vocab.pieces_[i], static_cast<TokenId>(i));
    }
    for (const auto& rule : doc.at("merges")) {
      const auto left = by_bytes.find(unescape_piece(rule.at(0).get<std::string>()));
      const auto right = by_bytes.find(unescape_piece(rule.at(1).get<std::string>()));
      if (left == by_bytes.end() || right == by_bytes.end()) {
        throw ValidationError("vocabulary merge refers to an unknown piece");
      }
      const TokenId id = vocab.add_merge(left->second, right->second);
      if (!by_bytes.emplace(vocab.pieces_[static_cast<std::size_t>(id)], id).second) {
        throw ValidationError("vocabulary contains duplicate piece '" +
                              escape_piece(vocab.pieces_[static_cast<std::size_t>(id)]) + "'");
      }
    }
    const auto& pieces = doc.at("pieces");
    if (pieces.size() != vocab.size() || doc.at("vocab_size").get<std::size_t>() != vocab.size()) {
      throw ValidationError("vocabulary size disagrees with its merge list");
    }
    for (std::size_t i = kFirstByte; i < vocab.size(); ++i) {
      if (unescape_piece(pieces[i].get<std::string>()) != vocab.pieces_[i]) {
        throw ValidationError("vocabulary piece " + std::to_string(i) +
                              " disagrees with its merge rule");
      }
    }
    return vocab;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed vocabulary: ") + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write vocabulary to '" + path.string() + "'");
  out << to_json().dump(1) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open vocabulary '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("cannot parse vocabulary '" + path.string() + "' at byte offset " +
                    std::to_string(e.byte));
  }
  return from_json(doc);
}

std::string Vocabulary::hash() const { return to_hex(fnv1a(to_json().dump())); }

Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t vocab_size) {
  if (corpus.empty()) throw ParameterError("train_bpe: corpus is empty");
  if (vocab_size < kBaseSize) {
    throw ParameterError("train_bpe: vocab_size must be at least " + std::to_string(kBaseSize));
  }

  struct Word {
    std::vector<TokenId> symbols;
    std::int64_t count = 0;
  };
  std::vector<Word> words;
  {
    std::map<std::string_view, std::int64_t> counts;
    for (const auto& text : corpus) {
      for (auto segment : pre_tokenize(text)) ++counts[segment];
    }
    words.reserve(counts.size());
    for (const auto& [segment, count] : counts) {
      Word w;
      w.count = count;
      for (unsigned char c : segment) w.symbols.push_back(kFirstByte + c);
      words.push_back(std::move(w));
    }
  }

  std::unordered_map<std::uint64_t, std::int64_t> pair_counts;
  std::unordered_map<std::uint64_t, std::unordered_set<std::size_t>> where;
  auto add_pairs = [&](std::size_t wi, std::int64_t sign) {
    const auto& sym = words[wi].symbols;
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      const auto key = pair_key(sym[i], sym[i + 1]);
      auto it = pair_counts.find(key);
      if (it == pair_counts.end()) it = pair_counts.emplace(key, 0).first;
      it->second += sign * words[wi].count;
      if (it->second == 0) pair_counts.erase(it);
      if (sign > 0) where[key].insert(wi);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_pairs(wi, +1);

  Vocabulary vocab;
  const auto& pieces = vocab.pieces();
  // Pairs whose concatenation already exists as a piece (reachable through a
  // different split); merging them would duplicate a piece.
  std::unordered_set<std::uint64_t> banned;
  std::unordered_set<std::string> known(pieces.begin() + kFirstByte, pieces.end());
  while (vocab.size() < vocab_size) {
    std::uint64_t best_key = 0;
    std::int64_t best_count = 0;
    for (const auto& [key, count] : pair_counts) {
      if (count < best_count || banned.contains(key)) continue;
      if (count > best_count) {
        best_key = key;
        best_count = count;
        continue;
      }
      const auto& l = pieces[key >> 32];
      const auto& r = pieces[key & 0xffffffffULL];
      const auto& bl = pieces[best_key >> 32];
      const auto& br = pieces[best_key & 0xffffffffULL];
      if (l < bl || (l == bl && r < br)) best_key = key;
    }
    if (best_count < 2) break;

    const auto left = static_cast<TokenId>(best_key >> 32);
    const auto right = static_cast<TokenId>(best_key & 0xffffffffULL);
    if (!known.insert(pieces[left] + pieces[right]).second) {
      banned.insert(best_key);
      continue;
    }
    const TokenId merged = vocab.add_merge(left, right);

    auto affected_it = where.find(best_key);
    std::vector<std::size_t> affected(affected_it->second.begin(), affected_it->second.end());
    std::sort(affected.begin(), affected.end());
    where.erase(affected_it);
    for (std::size_t wi : affected) {
      auto& sym = words[wi].symbols;
      bool present = false;
      for (std::size_t i = 0; i + 1 < sym.size() && !present; ++i) {
        present = sym[i] == left && sym[i + 1] == right;
      }
      if (!present) continue;
      add_pairs(wi, -1);
      std::size_t w = 0;
      for (std::size_t r = 0; r < sym.size(); ++r) {
        if (r + 1 < sym.size() && sym[r] == left && sym[r + 1] == right) {
          sym[w++] = merged;
          ++r;
        } else {
          sym[w++] = sym[r];
        }
      }
      sym.resize(w);
      add_pairs(wi, +1);
    }
  }
  return vocab;
}

}  // namespace nl2lf::tokenizer
