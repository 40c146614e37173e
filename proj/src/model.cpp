#include "nl2lf/model.hpp"

#include <cmath>

#include "nl2lf/errors.hpp"
#include "nl2lf/tokenizer.hpp"

namespace nl2lf::model {

using namespace nl2lf::tensor;

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ParameterError("model config: " + what);
  };
  require(vocab_size >= 1, "vocab_size must be >= 1");
  require(d_model >= 1 && n_heads >= 1 && d_ff >= 1, "d_model, n_heads and d_ff must be >= 1");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(n_encoder_layers >= 1 && n_decoder_layers >= 1, "layer counts must be >= 1");
  require(n_relative_buckets >= 2, "n_relative_buckets must be >= 2");
  require(max_relative_distance >= 1, "max_relative_distance must be >= 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must lie in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"d_model", d_model},
          {"n_heads", n_heads},
          {"d_ff", d_ff},
          {"n_encoder_layers", n_encoder_layers},
          {"n_decoder_layers", n_decoder_layers},
          {"n_relative_buckets", n_relative_buckets},
          {"max_relative_distance", max_relative_distance},
          {"dropout_rate", dropout_rate}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig cfg;
  cfg.vocab_size = doc.at("vocab_size").get<int>();
  cfg.d_model = doc.at("d_model").get<int>();
  cfg.n_heads = doc.at("n_heads").get<int>();
  cfg.d_ff = doc.at("d_ff").get<int>();
  cfg.n_encoder_layers = doc.at("n_encoder_layers").get<int>();
  cfg.n_decoder_layers = doc.at("n_decoder_layers").get<int>();
  cfg.n_relative_buckets = doc.at("n_relative_buckets").get<int>();
  cfg.max_relative_distance = doc.at("max_relative_distance").get<int>();
  cfg.dropout_rate = doc.at("dropout_rate").get<double>();
  return cfg;
}

template <typename T>
void Parameters<T>::add(std::string name, TensorPtr<T> tensor) {
  if (!index_.emplace(name, items_.size()).second) {
    throw ParameterError("duplicate parameter name '" + name + "'");
  }
  items_.emplace_back(std::move(name), std::move(tensor));
}

template <typename T>
const TensorPtr<T>& Parameters<T>::at(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ParameterError("unknown parameter '" + std::string(name) + "'");
  return items_[it->second].second;
}

template <typename T>
std::size_t Parameters<T>::count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : items_) total += t->size();
  return total;
}

template <typename T>
void Parameters<T>::zero_grad() {
  for (auto& [name, t] : items_) t->zero_grad();
}

template <typename T>
Parameters<T> Parameters<T>::clone() const {
  return cast<T>();
}

template <typename T>
template <typename U>
Parameters<U> Parameters<T>::cast() const {
  Parameters<U> out;
  for (const auto& [name, t] : items_) {
    std::vector<U> data(t->data().begin(), t->data().end());
    out.add(name, make_tensor<U>(t->shape(), std::move(data), t->requires_grad()));
  }
  return out;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t d = cfg.d_model, ff = cfg.d_ff;
  std::vector<std::pair<std::string, Shape>> layout;
  layout.emplace_back("shared.embedding", Shape{cfg.vocab_size, d});
  auto attn = [&](const std::string& prefix) {
    layout.emplace_back(prefix + ".norm", Shape{d});
    for (const char* w : {".q", ".k", ".v", ".o"}) layout.emplace_back(prefix + w, Shape{d, d});
  };
  auto ffn = [&](const std::string& prefix) {
    layout.emplace_back(prefix + ".norm", Shape{d});
    layout.emplace_back(prefix + ".w1", Shape{d, ff});
    layout.emplace_back(prefix + ".w2", Shape{ff, d});
  };
  layout.emplace_back("encoder.relative_bias", Shape{cfg.n_relative_buckets, cfg.n_heads});
  for (int i = 0; i < cfg.n_encoder_layers; ++i) {
    const std::string p = "encoder.layer." + std::to_string(i);
    attn(p + ".self_attn");
    ffn(p + ".ffn");
  }
  layout.emplace_back("encoder.final_norm", Shape{d});
  layout.emplace_back("decoder.relative_bias", Shape{cfg.n_relative_buckets, cfg.n_heads});
  for (int i = 0; i < cfg.n_decoder_layers; ++i) {
    const std::string p = "decoder.layer." + std::to_string(i);
    attn(p + ".self_attn");
    attn(p + ".cross_attn");
    ffn(p + ".ffn");
  }
  layout.emplace_back("decoder.final_norm", Shape{d});
  return layout;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  const std::size_t v = static_cast<std::size_t>(cfg.vocab_size), d = static_cast<std::size_t>(cfg.d_model),
                    ff = static_cast<std::size_t>(cfg.d_ff), h = static_cast<std::size_t>(cfg.n_heads),
                    nb = static_cast<std::size_t>(cfg.n_relative_buckets),
                    le = static_cast<std::size_t>(cfg.n_encoder_layers),
                    ld = static_cast<std::size_t>(cfg.n_decoder_layers);
  return v * d + 2 * nb * h + 2 * d + le * (4 * d * d + 2 * d * ff + 2 * d) + ld * (8 * d * d + 2 * d * ff + 3 * d);
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

template <typename T>
Parameters<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Parameters<T> params;
  Rng rng(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  for (auto& [name, shape] : parameter_layout(cfg)) {
    auto t = std::make_shared<Tensor<T>>(shape);
    if (ends_with(name, "norm")) {
      for (auto& v : t->data()) v = T{1};
    } else if (!ends_with(name, "relative_bias")) {
      for (auto& v : t->data()) v = static_cast<T>(rng.normal() * stddev);
    }
    t->set_requires_grad(true);
    params.add(name, std::move(t));
  }
  return params;
}

int relative_bucket(int distance, bool bidirectional, int n_buckets, int max_distance) {
  if (n_buckets < 2) throw ParameterError("relative_bucket: n_buckets must be >= 2");
  int bucket = 0;
  int n = -distance;
  if (bidirectional) {
    n_buckets /= 2;
    if (n < 0) bucket += n_buckets;
    n = std::abs(n);
  } else {
    n = std::max(n, 0);
  }
  const int max_exact = std::max(n_buckets / 2, 1);
  if (n < max_exact) return bucket + n;
  // Tiny tables or a max_distance inside the exact range: everything far goes last.
  if (max_distance <= max_exact) return bucket + n_buckets - 1;
  const double ratio = std::log(static_cast<double>(n) / max_exact) /
                       std::log(static_cast<double>(max_distance) / max_exact);
  const int large = max_exact + static_cast<int>(ratio * (n_buckets - max_exact));
  return bucket + std::min(large, n_buckets - 1);
}

template <typename T>
TensorPtr<T> attention(Tape<T>& tape, const TensorPtr<T>& q, const TensorPtr<T>& k, const TensorPtr<T>& v,
                       const TensorPtr<T>& bias, const AttentionMask& mask) {
  if (q->rank() != 4 || k->rank() != 4 || v->rank() != 4) {
    throw ShapeError("attention: q, k, v must be [B,H,T,dh]; got " + to_string(q->shape()) + ", " +
                     to_string(k->shape()) + ", " + to_string(v->shape()));
  }
  const std::int64_t batch = q->dim(0), heads = q->dim(1), tq = q->dim(2), dh = q->dim(3), tk = k->dim(2);
  if (k->dim(0) != batch || k->dim(1) != heads || k->dim(3) != dh || v->dim(0) != batch ||
      v->dim(1) != heads || v->dim(2) != tk) {
    throw ShapeError("attention: q " + to_string(q->shape()) + " incompatible with k " +
                     to_string(k->shape()) + " / v " + to_string(v->shape()));
  }
  if (mask.batch != batch || mask.queries != tq || mask.keys != tk ||
      static_cast<std::int64_t>(mask.allowed.size()) != batch * tq * tk) {
    throw ShapeError("attention: mask does not match [B,Tq,Tk] = [" + std::to_string(batch) + "," +
                     std::to_string(tq) + "," + std::to_string(tk) + "]");
  }

  auto penalty = std::make_shared<Tensor<T>>(Shape{batch, heads, tq, tk});
  auto pd = penalty->data();
  bool any_masked = false;
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < tq; ++i) {
      const std::uint8_t* row = mask.allowed.data() + (b * tq + i) * tk;
      bool any = false;
      for (std::int64_t j = 0; j < tk; ++j) any = any || row[j] != 0;
      if (!any) {
        throw ParameterError("attention: query " + std::to_string(i) + " of batch row " + std::to_string(b) +
                             " has no unmasked key");
      }
      for (std::int64_t h = 0; h < heads; ++h) {
        T* out = pd.data() + ((b * heads + h) * tq + i) * tk;
        for (std::int64_t j = 0; j < tk; ++j) {
          out[j] = row[j] ? T{0} : static_cast<T>(kMaskPenalty);
          any_masked = any_masked || !row[j];
        }
      }
    }
  }

  auto scores = scale(tape, matmul(tape, q, transpose(tape, k)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  if (bias) scores = add(tape, scores, bias);
  if (any_masked) scores = add(tape, scores, penalty);
  return matmul(tape, softmax(tape, scores, -1), v);
}

namespace {

constexpr double kNormEps = 1e-6;

template <typename T>
TensorPtr<T> norm(Forward<T>& f, const TensorPtr<T>& x, const std::string& gain) {
  return rms_norm(f.tape, x, f.params.at(gain), static_cast<T>(kNormEps));
}

template <typename T>
TensorPtr<T> drop(Forward<T>& f, const TensorPtr<T>& x) {
  if (f.dropout_rng == nullptr || f.cfg.dropout_rate <= 0.0) return x;
  return dropout(f.tape, x, f.cfg.dropout_rate, *f.dropout_rng);
}

// [Tq, Tk] relative-position bias laid out as [H, Tq, Tk].
template <typename T>
TensorPtr<T> position_bias(Forward<T>& f, const std::string& table, std::int64_t tq, std::int64_t tk,
                           bool bidirectional) {
  std::vector<std::int32_t> buckets(static_cast<std::size_t>(tq * tk));
  for (std::int64_t i = 0; i < tq; ++i) {
    for (std::int64_t j = 0; j < tk; ++j) {
      buckets[static_cast<std::size_t>(i * tk + j)] = relative_bucket(
          static_cast<int>(j - i), bidirectional, f.cfg.n_relative_buckets, f.cfg.max_relative_distance);
    }
  }
  auto rows = embedding(f.tape, f.params.at(table), buckets);
  auto grid = reshape(f.tape, rows, Shape{tq, tk, f.cfg.n_heads});
  return permute(f.tape, grid, {2, 0, 1});
}

// [B, T, d] -> [B, H, T, dh]
template <typename T>
TensorPtr<T> split_heads(Forward<T>& f, const TensorPtr<T>& x) {
  const std::int64_t b = x->dim(0), t = x->dim(1);
  auto r = reshape(f.tape, x, Shape{b, t, f.cfg.n_heads, f.cfg.d_head()});
  return permute(f.tape, r, {0, 2, 1, 3});
}

template <typename T>
TensorPtr<T> merge_heads(Forward<T>& f, const TensorPtr<T>& x) {
  const std::int64_t b = x->dim(0), t = x->dim(2);
  auto p = permute(f.tape, x, {0, 2, 1, 3});
  return reshape(f.tape, p, Shape{b, t, f.cfg.d_model});
}

// Pre-norm attention sublayer with residual. kv == nullptr means self-attention.
template <typename T>
TensorPtr<T> attention_block(Forward<T>& f, const TensorPtr<T>& x, const TensorPtr<T>& kv,
                             const std::string& prefix, const TensorPtr<T>& bias, const AttentionMask& mask) {
  auto h = norm(f, x, prefix + ".norm");
  const auto& source = kv ? kv : h;
  auto q = split_heads(f, matmul(f.tape, h, f.params.at(prefix + ".q")));
  auto k = split_heads(f, matmul(f.tape, source, f.params.at(prefix + ".k")));
  auto v = split_heads(f, matmul(f.tape, source, f.params.at(prefix + ".v")));
  auto a = merge_heads(f, attention(f.tape, q, k, v, bias, mask));
  auto o = matmul(f.tape, a, f.params.at(prefix + ".o"));
  return add(f.tape, x, drop(f, o));
}

template <typename T>
TensorPtr<T> ffn_block(Forward<T>& f, const TensorPtr<T>& x, const std::string& prefix) {
  auto h = norm(f, x, prefix + ".norm");
  auto u = gelu(f.tape, matmul(f.tape, h, f.params.at(prefix + ".w1")));
  auto o = matmul(f.tape, drop(f, u), f.params.at(prefix + ".w2"));
  return add(f.tape, x, drop(f, o));
}

template <typename T>
TensorPtr<T> embed(Forward<T>& f, const IdMatrix& ids) {
  if (static_cast<std::int64_t>(ids.ids.size()) != ids.rows * ids.cols) {
    throw ShapeError("id matrix holds " + std::to_string(ids.ids.size()) + " ids for shape [" +
                     std::to_string(ids.rows) + "," + std::to_string(ids.cols) + "]");
  }
  auto rows = embedding(f.tape, f.params.at("shared.embedding"), ids.ids);
  return drop(f, reshape(f.tape, rows, Shape{ids.rows, ids.cols, f.cfg.d_model}));
}

}  // namespace

template <typename T>
EncoderOutput<T> encode(Forward<T>& f, const IdMatrix& src) {
  EncoderOutput<T> enc;
  enc.batch = src.rows;
  enc.length = src.cols;
  enc.valid.resize(src.ids.size());
  for (std::size_t i = 0; i < src.ids.size(); ++i) enc.valid[i] = src.ids[i] != tokenizer::kPad;

  AttentionMask mask{src.rows, src.cols, src.cols, {}};
  mask.allowed.resize(static_cast<std::size_t>(src.rows * src.cols * src.cols));
  for (std::int64_t b = 0; b < src.rows; ++b) {
    for (std::int64_t i = 0; i < src.cols; ++i) {
      std::copy_n(enc.valid.begin() + b * src.cols, src.cols, mask.allowed.begin() + (b * src.cols + i) * src.cols);
    }
  }

  auto x = embed(f, src);
  auto bias = position_bias(f, "encoder.relative_bias", src.cols, src.cols, true);
  for (int l = 0; l < f.cfg.n_encoder_layers; ++l) {
    const std::string p = "encoder.layer." + std::to_string(l);
    x = attention_block(f, x, TensorPtr<T>{}, p + ".self_attn", bias, mask);
    x = ffn_block(f, x, p + ".ffn");
  }
  enc.memory = drop(f, norm(f, x, "encoder.final_norm"));
  return enc;
}

template <typename T>
EncoderOutput<T> select_rows(const EncoderOutput<T>& enc, std::span<const std::size_t> rows) {
  EncoderOutput<T> out;
  out.batch = static_cast<std::int64_t>(rows.size());
  out.length = enc.length;
  const std::int64_t d = enc.memory->dim(2);
  const std::int64_t stride = enc.length * d;
  std::vector<T> data(static_cast<std::size_t>(out.batch * stride));
  out.valid.resize(static_cast<std::size_t>(out.batch * enc.length));
  auto src = enc.memory->data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<std::int64_t>(rows[i]);
    if (r >= enc.batch) throw ParameterError("select_rows: row " + std::to_string(r) + " out of range");
    std::copy_n(src.begin() + r * stride, stride, data.begin() + static_cast<std::int64_t>(i) * stride);
    std::copy_n(enc.valid.begin() + r * enc.length, enc.length,
                out.valid.begin() + static_cast<std::int64_t>(i) * enc.length);
  }
  out.memory = make_tensor<T>(Shape{out.batch, enc.length, d}, std::move(data));
  return out;
}

template <typename T>
TensorPtr<T> decode_hidden(Forward<T>& f, const EncoderOutput<T>& enc, const IdMatrix& tgt_in) {
  if (tgt_in.rows != enc.batch) {
    throw ShapeError("decoder batch " + std::to_string(tgt_in.rows) + " does not match encoder batch " +
                     std::to_string(enc.batch));
  }
  const std::int64_t b = tgt_in.rows, t = tgt_in.cols, s = enc.length;
  AttentionMask causal{b, t, t, std::vector<std::uint8_t>(static_cast<std::size_t>(b * t * t), 0)};
  for (std::int64_t r = 0; r < b; ++r) {
    for (std::int64_t i = 0; i < t; ++i) {
      for (std::int64_t j = 0; j <= i; ++j) causal.allowed[static_cast<std::size_t>((r * t + i) * t + j)] = 1;
    }
  }
  AttentionMask cross{b, t, s, std::vector<std::uint8_t>(static_cast<std::size_t>(b * t * s))};
  for (std::int64_t r = 0; r < b; ++r) {
    for (std::int64_t i = 0; i < t; ++i) {
      std::copy_n(enc.valid.begin() + r * s, s, cross.allowed.begin() + (r * t + i) * s);
    }
  }

  auto y = embed(f, tgt_in);
  auto bias = position_bias(f, "decoder.relative_bias", t, t, false);
  for (int l = 0; l < f.cfg.n_decoder_layers; ++l) {
    const std::string p = "decoder.layer." + std::to_string(l);
    y = attention_block(f, y, TensorPtr<T>{}, p + ".self_attn", bias, causal);
    y = attention_block(f, y, enc.memory, p + ".cross_attn", TensorPtr<T>{}, cross);
    y = ffn_block(f, y, p + ".ffn");
  }
  return drop(f, norm(f, y, "decoder.final_norm"));
}

template <typename T>
TensorPtr<T> project_logits(Forward<T>& f, const TensorPtr<T>& hidden) {
  return matmul(f.tape, hidden, transpose(f.tape, f.params.at("shared.embedding")));
}

template <typename T>
TensorPtr<T> decode_logits(Forward<T>& f, const EncoderOutput<T>& enc, const IdMatrix& tgt_in) {
  return project_logits(f, decode_hidden(f, enc, tgt_in));
}

#define NL2LF_INSTANTIATE(T)                                                                                   \
  template class Parameters<T>;                                                                                \
  template Parameters<float> Parameters<T>::cast<float>() const;                                               \
  template Parameters<double> Parameters<T>::cast<double>() const;                                             \
  template Parameters<T> init_params<T>(const ModelConfig&, std::uint64_t);                                    \
  template TensorPtr<T> attention(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,     \
                                  const TensorPtr<T>&, const AttentionMask&);                                  \
  template EncoderOutput<T> encode(Forward<T>&, const IdMatrix&);                                              \
  template EncoderOutput<T> select_rows(const EncoderOutput<T>&, std::span<const std::size_t>);                \
  template TensorPtr<T> decode_hidden(Forward<T>&, const EncoderOutput<T>&, const IdMatrix&);                  \
  template TensorPtr<T> project_logits(Forward<T>&, const TensorPtr<T>&);                                      \
  template TensorPtr<T> decode_logits(Forward<T>&, const EncoderOutput<T>&, const IdMatrix&);

NL2LF_INSTANTIATE(float)
NL2LF_INSTANTIATE(double)

#undef NL2LF_INSTANTIATE

}  // namespace nl2lf::model
