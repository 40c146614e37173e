#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace nl2lf::tokenizer {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;
inline constexpr TokenId kFirstByte = 3;
inline constexpr std::size_t kBaseSize = 259;  // specials + 256 bytes
inline constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();

struct TokenSequence {
  std::vector<TokenId> ids;
  // Length before truncation, counting the EOS when one was requested.
  std::size_t original_length = 0;
};

// Byte-level BPE vocabulary. Ids 0..2 are PAD/EOS/UNK, ids 3..258 the 256
// byte values, and id 259 + r the result of merge rule r.
class Vocabulary {
 public:
  Vocabulary();  // byte-level, no merges

  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }

  // Appends a merge rule; both ids must already exist.
  TokenId add_merge(TokenId left, TokenId right);

  TokenSequence encode(std::string_view text, std::size_t max_len = kNoLimit,
                       bool append_eos = false) const;
  std::string decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  // FNV-1a of the canonical JSON form, as 16 hex digits.
  std::string hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.pieces_ == b.pieces_ && a.merges_ == b.merges_;
  }

 private:
  void encode_segment(std::string_view segment, std::vector<TokenId>& out) const;

  std::vector<std::string> pieces_;  // raw bytes; specials hold their display names
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::unordered_map<std::uint64_t, TokenId> merge_rank_;
};

// Splits text into the units BPE merges never cross: runs of word bytes
// ([A-Za-z0-9_] and non-ASCII), runs of punctuation, runs of spaces, runs of
// other whitespace. A single space directly before a word or punctuation run
// is attached to it.
std::vector<std::string_view> pre_tokenize(std::string_view text);

// Greedy byte-level BPE. Merges the most frequent adjacent pair until the
// vocabulary holds vocab_size pieces or no pair occurs at least twice. Ties go
// to the lexicographically smallest (left bytes, right bytes) pair.
Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t vocab_size);

// Display form used in vocabulary files: printable ASCII as-is except '\\'
// and '<', every other byte as \xHH.
std::string escape_piece(std::string_view bytes);
std::string unescape_piece(std::string_view text);

}  // namespace nl2lf::tokenizer
