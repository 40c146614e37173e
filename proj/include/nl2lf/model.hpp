#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nl2lf/random.hpp"
#include "nl2lf/tensor.hpp"

namespace nl2lf::model {

using tensor::Shape;
using tensor::Tape;
using tensor::TensorPtr;

struct ModelConfig {
  int vocab_size = 4000;
  int d_model = 128;
  int n_heads = 4;
  int d_ff = 512;
  int n_encoder_layers = 2;
  int n_decoder_layers = 2;
  int n_relative_buckets = 32;
  int max_relative_distance = 128;
  double dropout_rate = 0.0;

  int d_head() const { return d_model / n_heads; }
  // Throws ParameterError on a violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named parameter tensors in canonical order (the order of parameter_layout).
template <typename T>
class Parameters {
 public:
  void add(std::string name, TensorPtr<T> tensor);
  const TensorPtr<T>& at(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }
  const std::vector<std::pair<std::string, TensorPtr<T>>>& items() const { return items_; }
  // Total number of scalars.
  std::size_t count() const;

  void zero_grad();
  // Deep copy of the values; gradients are not copied.
  Parameters clone() const;
  template <typename U>
  Parameters<U> cast() const;

 private:
  std::vector<std::pair<std::string, TensorPtr<T>>> items_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// (name, shape) of every parameter in canonical order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg);

// Closed form: V*d + 2*buckets*heads + 2*d (final norms)
//   + Le * (4d^2 + 2*d*ff + 2d) + Ld * (8d^2 + 2*d*ff + 3d).
std::size_t parameter_count(const ModelConfig& cfg);

// Embedding and projection weights ~ Normal(0, 1/sqrt(d_model)); norm gains 1;
// relative-bias tables 0. All parameters require gradients.
template <typename T>
Parameters<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

// T5 relative-position bucketing; distance = key position - query position.
int relative_bucket(int distance, bool bidirectional, int n_buckets, int max_distance);

// Row-major [rows, cols] token ids.
struct IdMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::int32_t> ids;

  std::int32_t at(std::int64_t r, std::int64_t c) const { return ids[static_cast<std::size_t>(r * cols + c)]; }
};

// allowed[(b * queries + q) * keys + k] != 0 when query q of batch row b may see key k.
struct AttentionMask {
  std::int64_t batch = 0;
  std::int64_t queries = 0;
  std::int64_t keys = 0;
  std::vector<std::uint8_t> allowed;
};

inline constexpr double kMaskPenalty = -1e9;

// softmax(q k^T / sqrt(d_head) + bias + penalty) v with q [B,H,Tq,dh],
// k/v [B,H,Tk,dh], bias [H,Tq,Tk] (may be null). A query row with no allowed
// key is an error.
template <typename T>
TensorPtr<T> attention(Tape<T>& tape, const TensorPtr<T>& q, const TensorPtr<T>& k, const TensorPtr<T>& v,
                       const TensorPtr<T>& bias, const AttentionMask& mask);

template <typename T>
struct Forward {
  Tape<T>& tape;
  const Parameters<T>& params;
  const ModelConfig& cfg;
  Rng* dropout_rng = nullptr;  // dropout runs only when set and dropout_rate > 0
};

template <typename T>
struct EncoderOutput {
  TensorPtr<T> memory;             // [B, S, d_model], final-normed
  std::vector<std::uint8_t> valid; // [B, S], non-PAD source positions
  std::int64_t batch = 0;
  std::int64_t length = 0;
};

template <typename T>
EncoderOutput<T> encode(Forward<T>& f, const IdMatrix& src);

// Keeps the listed batch rows (repeats allowed). Not differentiable.
template <typename T>
EncoderOutput<T> select_rows(const EncoderOutput<T>& enc, std::span<const std::size_t> rows);

// Decoder stack + final norm -> [B, T, d_model].
template <typename T>
TensorPtr<T> decode_hidden(Forward<T>& f, const EncoderOutput<T>& enc, const IdMatrix& tgt_in);

// hidden [..., d] x embedding^T -> [..., V].
template <typename T>
TensorPtr<T> project_logits(Forward<T>& f, const TensorPtr<T>& hidden);

template <typename T>
TensorPtr<T> decode_logits(Forward<T>& f, const EncoderOutput<T>& enc, const IdMatrix& tgt_in);

}  // namespace nl2lf::model
