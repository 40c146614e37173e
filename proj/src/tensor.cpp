#include "nl2lf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "nl2lf/errors.hpp"

namespace nl2lf::tensor {

std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(numel(shape_)), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != numel(shape_)) {
    throw ShapeError("tensor data has " + std::to_string(data_.size()) +
                     " elements but shape " + to_string(shape_) + " needs " +
                     std::to_string(numel(shape_)));
  }
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape_));
  return data_[0];
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (grad_.empty()) grad_.assign(data_.size(), T{0});
  return grad_;
}

template <typename T>
void Tape<T>::record(const TensorPtr<T>& output, std::function<void()> backward) {
  if (!recording_) return;
  if (consumed_) throw Error("tape: recording after backward() without reset()");
  entries_.push_back({output, std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const TensorPtr<T>& loss) {
  if (consumed_) throw Error("tape: backward() called twice without reset()");
  if (loss->size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss->shape()));
  }
  if (!loss->requires_grad()) throw Error("backward(): loss is not connected to any parameter");
  consumed_ = true;
  loss->grad()[0] += T{1};
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->has_grad()) it->backward();
  }
  entries_.clear();
}

template <typename T>
void Tape<T>::reset() {
  entries_.clear();
  consumed_ = false;
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value in output of " + what);
  }
}

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

template <typename T>
bool any_grad(const Tape<T>& tape, std::initializer_list<const TensorPtr<T>*> inputs) {
  if (!tape.recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](auto p) { return (*p)->requires_grad(); });
}

template <typename T>
TensorPtr<T> finish(Tape<T>& tape, TensorPtr<T> out, const char* op, bool needs_grad,
                    std::function<void()> backward) {
  if (tape.check_finite()) require_finite(*out, op);
  if (needs_grad) {
    out->set_requires_grad(true);
    tape.record(out, std::move(backward));
  }
  return out;
}

// Per-element input offsets for a broadcast binary op.
struct Broadcast {
  Shape out;
  enum class Kind { same, suffix_b, general } kind = Kind::general;
  std::vector<std::int64_t> a_index, b_index;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.kind = Broadcast::Kind::same;
    return plan;
  }
  const std::size_t r = std::max(a.size(), b.size());
  plan.out.assign(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const std::int64_t db = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                       to_string(b));
    }
    plan.out[i] = std::max(da, db);
  }
  if (plan.out == a && b.size() <= a.size() &&
      std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
    plan.kind = Broadcast::Kind::suffix_b;
    return plan;
  }
  auto strides_for = [&](const Shape& s) {
    std::vector<std::int64_t> st(r, 0);
    std::int64_t acc = 1;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const std::size_t i = s.size() - 1 - k;
      const std::size_t o = r - 1 - k;
      st[o] = s[i] == 1 ? 0 : acc;
      acc *= s[i];
    }
    return st;
  };
  const auto sa = strides_for(a);
  const auto sb = strides_for(b);
  const auto n = static_cast<std::size_t>(numel(plan.out));
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t oa = 0, ob = 0;
  for (std::size_t lin = 0; lin < n; ++lin) {
    plan.a_index[lin] = oa;
    plan.b_index[lin] = ob;
    for (std::size_t k = r; k-- > 0;) {
      ++idx[k];
      oa += sa[k];
      ob += sb[k];
      if (idx[k] < plan.out[k]) break;
      oa -= sa[k] * idx[k];
      ob -= sb[k] * idx[k];
      idx[k] = 0;
    }
  }
  return plan;
}

template <typename T, typename F>
void for_each_broadcast(const Broadcast& plan, std::size_t n, std::size_t nb, F&& f) {
  switch (plan.kind) {
    case Broadcast::Kind::same:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i);
      break;
    case Broadcast::Kind::suffix_b:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i % nb);
      break;
    case Broadcast::Kind::general:
      for (std::size_t i = 0; i < n; ++i) {
        f(i, static_cast<std::size_t>(plan.a_index[i]), static_cast<std::size_t>(plan.b_index[i]));
      }
      break;
  }
}

}  // namespace

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a->shape(), b->shape(), "add"));
  auto out = std::make_shared<Tensor<T>>(plan->out);
  auto o = out->data();
  auto x = a->data();
  auto y = b->data();
  for_each_broadcast<T>(*plan, o.size(), y.size(),
                        [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = x[ia] + y[ib]; });
  const bool ng = any_grad(tape, {&a, &b});
  return finish<T>(tape, out, "add", ng, [a, b, out, plan] {
    auto g = out->grad();
    if (a->requires_grad()) {
      auto ga = a->grad();
      for_each_broadcast<T>(*plan, g.size(), b->size(),
                            [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += g[i]; });
    }
    if (b->requires_grad()) {
      auto gb = b->grad();
      for_each_broadcast<T>(*plan, g.size(), b->size(),
                            [&](std::size_t i, std::size_t, std::size_t ib) { gb[ib] += g[i]; });
    }
  });
}

template <typename T>
TensorPtr<T> mul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a->shape(), b->shape(), "mul"));
  auto out = std::make_shared<Tensor<T>>(plan->out);
  auto o = out->data();
  auto x = a->data();
  auto y = b->data();
  for_each_broadcast<T>(*plan, o.size(), y.size(),
                        [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = x[ia] * y[ib]; });
  const bool ng = any_grad(tape, {&a, &b});
  return finish<T>(tape, out, "mul", ng, [a, b, out, plan] {
    auto g = out->grad();
    auto x = a->data();
    auto y = b->data();
    if (a->requires_grad()) {
      auto ga = a->grad();
      for_each_broadcast<T>(*plan, g.size(), y.size(), [&](std::size_t i, std::size_t ia, std::size_t ib) {
        ga[ia] += g[i] * y[ib];
      });
    }
    if (b->requires_grad()) {
      auto gb = b->grad();
      for_each_broadcast<T>(*plan, g.size(), y.size(), [&](std::size_t i, std::size_t ia, std::size_t ib) {
        gb[ib] += g[i] * x[ia];
      });
    }
  });
}

template <typename T>
TensorPtr<T> scale(Tape<T>& tape, const TensorPtr<T>& a, T factor) {
  auto out = std::make_shared<Tensor<T>>(a->shape());
  auto o = out->data();
  auto x = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  return finish<T>(tape, out, "scale", any_grad(tape, {&a}), [a, out, factor] {
    auto g = out->grad();
    auto ga = a->grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& a) {
  auto out = std::make_shared<Tensor<T>>(a->shape());
  auto o = out->data();
  auto x = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > T{0} ? x[i] : T{0};
  return finish<T>(tape, out, "relu", any_grad(tape, {&a}), [a, out] {
    auto g = out->grad();
    auto ga = a->grad();
    auto x = a->data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T{0}) ga[i] += g[i];
    }
  });
}

template <typename T>
TensorPtr<T> gelu(Tape<T>& tape, const TensorPtr<T>& a) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c = T(0.044715);
  auto out = std::make_shared<Tensor<T>>(a->shape());
  auto o = out->data();
  auto x = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const T v = x[i];
    o[i] = T(0.5) * v * (T(1) + std::tanh(k * (v + c * v * v * v)));
  }
  return finish<T>(tape, out, "gelu", any_grad(tape, {&a}), [a, out] {
    auto g = out->grad();
    auto ga = a->grad();
    auto x = a->data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = x[i];
      const T t = std::tanh(k * (v + c * v * v * v));
      const T d = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
      ga[i] += g[i] * d;
    }
  });
}

template <typename T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& a) {
  T total{0};
  for (T v : a->data()) total += v;
  auto out = make_tensor<T>({}, {total});
  return finish<T>(tape, out, "sum", any_grad(tape, {&a}), [a, out] {
    const T g = out->grad()[0];
    for (auto& v : a->grad()) v += g;
  });
}

template <typename T>
TensorPtr<T> reshape(Tape<T>& tape, const TensorPtr<T>& a, Shape shape) {
  if (numel(shape) != static_cast<std::int64_t>(a->size())) {
    throw ShapeError("reshape: cannot view " + to_string(a->shape()) + " as " + to_string(shape));
  }
  auto out = make_tensor<T>(std::move(shape), std::vector<T>(a->data().begin(), a->data().end()));
  return finish<T>(tape, out, "reshape", any_grad(tape, {&a}), [a, out] {
    auto g = out->grad();
    auto ga = a->grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

namespace {

// out[lin] = in[src[lin]] for a permutation of axes.
std::vector<std::int64_t> permute_index(const Shape& in, const std::vector<int>& axes, Shape& out_shape) {
  const std::size_t r = in.size();
  if (axes.size() != r) throw ShapeError("permute: axis list does not match rank of " + to_string(in));
  std::vector<std::int64_t> in_strides(r, 1);
  for (std::size_t k = r; k-- > 1;) in_strides[k - 1] = in_strides[k] * in[k];
  std::vector<bool> seen(r, false);
  out_shape.assign(r, 0);
  std::vector<std::int64_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    const auto ax = static_cast<std::size_t>(axes[i]);
    if (axes[i] < 0 || ax >= r || seen[ax]) throw ShapeError("permute: invalid axis permutation");
    seen[ax] = true;
    out_shape[i] = in[ax];
    strides[i] = in_strides[ax];
  }
  const auto n = static_cast<std::size_t>(numel(in));
  std::vector<std::int64_t> src(n);
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t off = 0;
  for (std::size_t lin = 0; lin < n; ++lin) {
    src[lin] = off;
    for (std::size_t k = r; k-- > 0;) {
      ++idx[k];
      off += strides[k];
      if (idx[k] < out_shape[k]) break;
      off -= strides[k] * idx[k];
      idx[k] = 0;
    }
  }
  return src;
}

}  // namespace

template <typename T>
TensorPtr<T> permute(Tape<T>& tape, const TensorPtr<T>& a, const std::vector<int>& axes) {
  Shape shape;
  auto src = std::make_shared<std::vector<std::int64_t>>(permute_index(a->shape(), axes, shape));
  auto out = std::make_shared<Tensor<T>>(std::move(shape));
  auto o = out->data();
  auto x = a->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[static_cast<std::size_t>((*src)[i])];
  return finish<T>(tape, out, "permute", any_grad(tape, {&a}), [a, out, src] {
    auto g = out->grad();
    auto ga = a->grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[static_cast<std::size_t>((*src)[i])] += g[i];
  });
}

template <typename T>
TensorPtr<T> transpose(Tape<T>& tape, const TensorPtr<T>& a) {
  const int r = a->rank();
  if (r < 2) throw ShapeError("transpose: need rank >= 2, got " + to_string(a->shape()));
  std::vector<int> axes(static_cast<std::size_t>(r));
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[static_cast<std::size_t>(r - 1)], axes[static_cast<std::size_t>(r - 2)]);
  return permute(tape, a, axes);
}

template <typename T>
TensorPtr<T> matmul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  const Shape& sa = a->shape();
  const Shape& sb = b->shape();
  auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::int64_t m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
  if (sb[sb.size() - 2] != k) throw mismatch();

  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  const bool ng = any_grad(tape, {&a, &b});

  // Weight-style right operand: fold every leading axis of a into the rows.
  if (batch_b.empty()) {
    const std::int64_t rows = numel(batch_a) * m;
    Shape out_shape = batch_a;
    out_shape.push_back(m);
    out_shape.push_back(n);
    auto out = std::make_shared<Tensor<T>>(std::move(out_shape));
    MapM<T>(out->data().data(), rows, n).noalias() =
        CMapM<T>(a->data().data(), rows, k) * CMapM<T>(b->data().data(), k, n);
    return finish<T>(tape, out, "matmul", ng, [a, b, out, rows, k, n] {
      CMapM<T> g(out->grad().data(), rows, n);
      if (a->requires_grad()) {
        MapM<T>(a->grad().data(), rows, k).noalias() += g * CMapM<T>(b->data().data(), k, n).transpose();
      }
      if (b->requires_grad()) {
        MapM<T>(b->grad().data(), k, n).noalias() += CMapM<T>(a->data().data(), rows, k).transpose() * g;
      }
    });
  }

  Broadcast plan = plan_broadcast(batch_a, batch_b, "matmul");
  const Shape batch = plan.out;
  const auto nbatch = static_cast<std::size_t>(numel(batch));
  auto offsets = std::make_shared<std::vector<std::pair<std::int64_t, std::int64_t>>>(nbatch);
  for_each_broadcast<T>(plan, nbatch, static_cast<std::size_t>(numel(batch_b)),
                        [&](std::size_t i, std::size_t ia, std::size_t ib) {
                          (*offsets)[i] = {static_cast<std::int64_t>(ia) * m * k,
                                           static_cast<std::int64_t>(ib) * k * n};
                        });
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  auto out = std::make_shared<Tensor<T>>(std::move(out_shape));
  for (std::size_t i = 0; i < nbatch; ++i) {
    const auto [oa, ob] = (*offsets)[i];
    MapM<T>(out->data().data() + static_cast<std::int64_t>(i) * m * n, m, n).noalias() =
        CMapM<T>(a->data().data() + oa, m, k) * CMapM<T>(b->data().data() + ob, k, n);
  }
  return finish<T>(tape, out, "matmul", ng, [a, b, out, offsets, m, k, n] {
    auto g_all = out->grad();
    for (std::size_t i = 0; i < offsets->size(); ++i) {
      const auto [oa, ob] = (*offsets)[i];
      CMapM<T> g(g_all.data() + static_cast<std::int64_t>(i) * m * n, m, n);
      if (a->requires_grad()) {
        MapM<T>(a->grad().data() + oa, m, k).noalias() += g * CMapM<T>(b->data().data() + ob, k, n).transpose();
      }
      if (b->requires_grad()) {
        MapM<T>(b->grad().data() + ob, k, n).noalias() += CMapM<T>(a->data().data() + oa, m, k).transpose() * g;
      }
    }
  });
}

template <typename T>
TensorPtr<T> softmax(Tape<T>& tape, const TensorPtr<T>& x, int axis) {
  const int r = x->rank();
  const int ax = axis < 0 ? axis + r : axis;
  if (ax < 0 || ax >= r) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + to_string(x->shape()));
  }
  const Shape& s = x->shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = ax + 1; i < r; ++i) inner *= s[static_cast<std::size_t>(i)];
  const std::int64_t len = s[static_cast<std::size_t>(ax)];

  auto out = std::make_shared<Tensor<T>>(s);
  auto in = x->data();
  auto y = out->data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * len * inner + i;
      T mx = in[static_cast<std::size_t>(base)];
      for (std::int64_t j = 1; j < len; ++j) mx = std::max(mx, in[static_cast<std::size_t>(base + j * inner)]);
      T z{0};
      for (std::int64_t j = 0; j < len; ++j) {
        const auto p = static_cast<std::size_t>(base + j * inner);
        y[p] = std::exp(in[p] - mx);
        z += y[p];
      }
      for (std::int64_t j = 0; j < len; ++j) y[static_cast<std::size_t>(base + j * inner)] /= z;
    }
  }
  return finish<T>(tape, out, "softmax", any_grad(tape, {&x}), [x, out, outer, inner, len] {
    auto g = out->grad();
    auto y = out->data();
    auto gx = x->grad();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t i = 0; i < inner; ++i) {
        const std::int64_t base = o * len * inner + i;
        T dot{0};
        for (std::int64_t j = 0; j < len; ++j) {
          const auto p = static_cast<std::size_t>(base + j * inner);
          dot += g[p] * y[p];
        }
        for (std::int64_t j = 0; j < len; ++j) {
          const auto p = static_cast<std::size_t>(base + j * inner);
          gx[p] += y[p] * (g[p] - dot);
        }
      }
    }
  });
}

template <typename T>
TensorPtr<T> rms_norm(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& gain, T eps) {
  const std::int64_t d = x->dim(-1);
  if (gain->rank() != 1 || gain->dim(0) != d) {
    throw ShapeError("rms_norm: gain " + to_string(gain->shape()) + " does not match last axis of " +
                     to_string(x->shape()));
  }
  const auto rows = static_cast<std::int64_t>(x->size()) / d;
  auto out = std::make_shared<Tensor<T>>(x->shape());
  auto inv = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  auto in = x->data();
  auto y = out->data();
  auto gv = gain->data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = in.data() + r * d;
    T ms{0};
    for (std::int64_t j = 0; j < d; ++j) ms += row[j] * row[j];
    ms /= static_cast<T>(d);
    const T s = T(1) / std::sqrt(ms + eps);
    (*inv)[static_cast<std::size_t>(r)] = s;
    for (std::int64_t j = 0; j < d; ++j) y[static_cast<std::size_t>(r * d + j)] = gv[static_cast<std::size_t>(j)] * row[j] * s;
  }
  return finish<T>(tape, out, "rms_norm", any_grad(tape, {&x, &gain}), [x, gain, out, inv, d, rows] {
    auto g = out->grad();
    auto in = x->data();
    auto gv = gain->data();
    const bool want_x = x->requires_grad();
    const bool want_g = gain->requires_grad();
    std::span<T> gx = want_x ? x->grad() : std::span<T>{};
    std::span<T> gg = want_g ? gain->grad() : std::span<T>{};
    for (std::int64_t r = 0; r < rows; ++r) {
      const T s = (*inv)[static_cast<std::size_t>(r)];
      const T* row = in.data() + r * d;
      const T* gr = g.data() + r * d;
      if (want_g) {
        for (std::int64_t j = 0; j < d; ++j) gg[static_cast<std::size_t>(j)] += gr[j] * row[j] * s;
      }
      if (want_x) {
        T dot{0};
        for (std::int64_t j = 0; j < d; ++j) dot += gr[j] * gv[static_cast<std::size_t>(j)] * row[j];
        const T c = dot * s * s * s / static_cast<T>(d);
        T* out_row = gx.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) out_row[j] += s * gv[static_cast<std::size_t>(j)] * gr[j] - row[j] * c;
      }
    }
  });
}

template <typename T>
TensorPtr<T> embedding(Tape<T>& tape, const TensorPtr<T>& table, std::span<const std::int32_t> ids) {
  if (table->rank() != 2) throw ShapeError("embedding: table must be [V, d], got " + to_string(table->shape()));
  const std::int64_t vocab = table->dim(0), d = table->dim(1);
  auto idv = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idv->size(); ++i) {
    if ((*idv)[i] < 0 || (*idv)[i] >= vocab) {
      throw ParameterError("embedding: id " + std::to_string((*idv)[i]) + " at position " +
                           std::to_string(i) + " outside table of " + std::to_string(vocab) + " rows");
    }
  }
  auto out = std::make_shared<Tensor<T>>(Shape{static_cast<std::int64_t>(idv->size()), d});
  auto o = out->data();
  auto t = table->data();
  for (std::size_t i = 0; i < idv->size(); ++i) {
    std::copy_n(t.begin() + (*idv)[i] * d, d, o.begin() + static_cast<std::int64_t>(i) * d);
  }
  return finish<T>(tape, out, "embedding", any_grad(tape, {&table}), [table, out, idv, d] {
    auto g = out->grad();
    auto gt = table->grad();
    for (std::size_t i = 0; i < idv->size(); ++i) {
      const std::int64_t row = (*idv)[i];
      for (std::int64_t j = 0; j < d; ++j) {
        gt[static_cast<std::size_t>(row * d + j)] += g[static_cast<std::size_t>(static_cast<std::int64_t>(i) * d + j)];
      }
    }
  });
}

template <typename T>
TensorPtr<T> cross_entropy(Tape<T>& tape, const TensorPtr<T>& logits, std::span<const std::int32_t> targets,
                           std::int32_t ignore_id, std::span<const T> weights) {
  const std::int64_t vocab = logits->dim(-1);
  const auto rows = static_cast<std::int64_t>(logits->size()) / vocab;
  if (static_cast<std::int64_t>(targets.size()) != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     to_string(logits->shape()));
  }
  if (!weights.empty() && weights.size() != targets.size()) {
    throw ShapeError("cross_entropy: weights must have one entry per target");
  }
  std::int64_t kept = 0;
  for (auto t : targets) {
    if (t == ignore_id) continue;
    if (t < 0 || t >= vocab) throw ParameterError("cross_entropy: target id " + std::to_string(t) + " out of range");
    ++kept;
  }
  if (kept == 0) throw ParameterError("cross_entropy: every target is ignored; mean is undefined");

  const bool ng = any_grad(tape, {&logits});
  auto probs = std::make_shared<std::vector<T>>(ng ? logits->size() : 0);
  auto x = logits->data();
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int32_t target = targets[static_cast<std::size_t>(r)];
    if (target == ignore_id) continue;
    const T* row = x.data() + r * vocab;
    T mx = row[0];
    for (std::int64_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    T z{0};
    for (std::int64_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    const T lse = mx + std::log(z);
    const double w = weights.empty() ? 1.0 : static_cast<double>(weights[static_cast<std::size_t>(r)]);
    total += w * static_cast<double>(lse - row[target]);
    if (ng) {
      T* p = probs->data() + r * vocab;
      for (std::int64_t j = 0; j < vocab; ++j) p[j] = std::exp(row[j] - lse);
    }
  }
  auto out = make_tensor<T>({}, {static_cast<T>(total / static_cast<double>(kept))});
  auto tv = std::make_shared<std::vector<std::int32_t>>(targets.begin(), targets.end());
  auto wv = std::make_shared<std::vector<T>>(weights.begin(), weights.end());
  return finish<T>(tape, out, "cross_entropy", ng, [logits, out, probs, tv, wv, ignore_id, vocab, kept] {
    const T g = out->grad()[0] / static_cast<T>(kept);
    auto gl = logits->grad();
    for (std::size_t r = 0; r < tv->size(); ++r) {
      const std::int32_t target = (*tv)[r];
      if (target == ignore_id) continue;
      const T scale_r = wv->empty() ? g : g * (*wv)[r];
      const T* p = probs->data() + static_cast<std::int64_t>(r) * vocab;
      T* gr = gl.data() + static_cast<std::int64_t>(r) * vocab;
      for (std::int64_t j = 0; j < vocab; ++j) gr[j] += scale_r * p[j];
      gr[target] -= scale_r;
    }
  });
}

template <typename T>
TensorPtr<T> dropout(Tape<T>& tape, const TensorPtr<T>& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  auto mask = std::make_shared<std::vector<T>>(x->size());
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : *mask) m = rng.uniform01() < rate ? T{0} : keep;
  auto out = std::make_shared<Tensor<T>>(x->shape());
  auto o = out->data();
  auto in = x->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * (*mask)[i];
  return finish<T>(tape, out, "dropout", any_grad(tape, {&x}), [x, out, mask] {
    auto g = out->grad();
    auto gx = x->grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

template <typename T>
std::vector<T> log_softmax_rows(std::span<const T> logits, std::size_t cols) {
  std::vector<T> out(logits.size());
  for (std::size_t r = 0; r * cols < logits.size(); ++r) {
    const T* row = logits.data() + r * cols;
    T mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    T z{0};
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = row[j] - lse;
  }
  return out;
}

#define NL2LF_INSTANTIATE(T)                                                                        \
  template class Tensor<T>;                                                                         \
  template class Tape<T>;                                                                           \
  template TensorPtr<T> add(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&);                    \
  template TensorPtr<T> mul(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&);                    \
  template TensorPtr<T> scale(Tape<T>&, const TensorPtr<T>&, T);                                    \
  template TensorPtr<T> relu(Tape<T>&, const TensorPtr<T>&);                                        \
  template TensorPtr<T> gelu(Tape<T>&, const TensorPtr<T>&);                                        \
  template TensorPtr<T> sum(Tape<T>&, const TensorPtr<T>&);                                         \
  template TensorPtr<T> reshape(Tape<T>&, const TensorPtr<T>&, Shape);                              \
  template TensorPtr<T> permute(Tape<T>&, const TensorPtr<T>&, const std::vector<int>&);            \
  template TensorPtr<T> transpose(Tape<T>&, const TensorPtr<T>&);                                   \
  template TensorPtr<T> matmul(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&);                 \
  template TensorPtr<T> softmax(Tape<T>&, const TensorPtr<T>&, int);                                \
  template TensorPtr<T> rms_norm(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&, T);            \
  template TensorPtr<T> embedding(Tape<T>&, const TensorPtr<T>&, std::span<const std::int32_t>);    \
  template TensorPtr<T> cross_entropy(Tape<T>&, const TensorPtr<T>&, std::span<const std::int32_t>, \
                                      std::int32_t, std::span<const T>);                            \
  template TensorPtr<T> dropout(Tape<T>&, const TensorPtr<T>&, double, Rng&);                       \
  template std::vector<T> log_softmax_rows(std::span<const T>, std::size_t);                        \
  template void require_finite(const Tensor<T>&, const std::string&);

NL2LF_INSTANTIATE(float)
NL2LF_INSTANTIATE(double)

#undef NL2LF_INSTANTIATE

}  // namespace nl2lf::tensor
