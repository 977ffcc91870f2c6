#include "rffi/tensornet/layers.hpp"

#include <cmath>

#include "rffi/errors.hpp"

namespace rffi::tn {

template <class T>
std::vector<T> init_values(std::size_t count, std::size_t fan_in, InitScheme scheme, RngStream& rng) {
  std::vector<T> v(count, T(0));
  if (scheme == InitScheme::Zeros) return v;
  if (scheme == InitScheme::Ones) {
    std::fill(v.begin(), v.end(), T(1));
    return v;
  }
  const double gain = scheme == InitScheme::HeUniform ? 6.0 : 3.0;
  const double limit = (scheme == InitScheme::HeadUniform ? 0.1 : 1.0) *
                       std::sqrt(gain / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (T& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return v;
}

template <class T>
Dense<T>::Dense(std::string n, std::size_t in, std::size_t out, RngStream& rng, InitScheme scheme)
    : name(std::move(n)),
      weight(name + ".weight", {out, in}, init_values<T>(out * in, in, scheme, rng)),
      bias(name + ".bias", {out}, std::vector<T>(out, T(0))) {}

template <class T>
Tensor<T> Dense<T>::operator()(const Tensor<T>& x) const {
  return dense(x, weight.tensor, bias.tensor, name);
}

template <class T>
Conv2d<T>::Conv2d(std::string name, std::size_t kh, std::size_t kw, std::size_t in, std::size_t out, RngStream& rng)
    : kernel(name + ".kernel", {kh, kw, in, out}, init_values<T>(kh * kw * in * out, kh * kw * in, InitScheme::HeUniform, rng)),
      bias(name + ".bias", {out}, std::vector<T>(out, T(0))) {}

template <class T>
Recurrent<T>::Recurrent(std::string name, CellKind k, std::size_t features, std::size_t u, RngStream& rng)
    : kind(k), units(u) {
  const std::size_t gates = kind == CellKind::Lstm ? 4 : 3;
  input_weight = Parameter<T>(name + ".input_weight", {features, gates * units},
                              init_values<T>(features * gates * units, features, InitScheme::LecunUniform, rng));
  recurrent_weight = Parameter<T>(name + ".recurrent_weight", {units, gates * units},
                                  init_values<T>(units * gates * units, units, InitScheme::LecunUniform, rng));
  std::vector<T> b(gates * units, T(0));
  if (kind == CellKind::Lstm) {
    for (std::size_t i = units; i < 2 * units; ++i) b[i] = T(1);  // forget gate
  }
  bias = Parameter<T>(name + ".bias", {gates * units}, std::move(b));
  if (kind == CellKind::Gru) {
    recurrent_bias = Parameter<T>(name + ".recurrent_bias", {gates * units}, std::vector<T>(gates * units, T(0)));
  }
}

template <class T>
void Recurrent<T>::collect(ParameterRefs<T>& out) {
  out.push_back(&input_weight);
  out.push_back(&recurrent_weight);
  out.push_back(&bias);
  if (kind == CellKind::Gru) out.push_back(&recurrent_bias);
}

template <class T>
Tensor<T> Recurrent<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(0) == 0) throw InvalidArgument("recurrent layer expects [T, F] with T >= 1");
  const std::size_t steps = x.dim(0);
  const std::size_t u = units;
  const Tensor<T> projected = add_bias(matmul(x, input_weight.tensor), bias.tensor);
  Tensor<T> h = Tensor<T>::zeros({1, u});
  Tensor<T> c = Tensor<T>::zeros({1, u});
  std::vector<Tensor<T>> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor<T> xt = slice_rows(projected, t, t + 1);
    if (kind == CellKind::Lstm) {
      const Tensor<T> z = add(xt, matmul(h, recurrent_weight.tensor));
      const Tensor<T> i = sigmoid(slice_cols(z, 0, u));
      const Tensor<T> f = sigmoid(slice_cols(z, u, 2 * u));
      const Tensor<T> g = tanh(slice_cols(z, 2 * u, 3 * u));
      const Tensor<T> o = sigmoid(slice_cols(z, 3 * u, 4 * u));
      c = add(mul(f, c), mul(i, g));
      h = mul(o, tanh(c));
    } else {
      const Tensor<T> hw = add_bias(matmul(h, recurrent_weight.tensor), recurrent_bias.tensor);
      const Tensor<T> z = sigmoid(add(slice_cols(xt, 0, u), slice_cols(hw, 0, u)));
      const Tensor<T> r = sigmoid(add(slice_cols(xt, u, 2 * u), slice_cols(hw, u, 2 * u)));
      const Tensor<T> n = tanh(add(slice_cols(xt, 2 * u, 3 * u), mul(r, slice_cols(hw, 2 * u, 3 * u))));
      h = add(n, mul(z, sub(h, n)));  // z*h + (1-z)*n
    }
    outputs.push_back(h);
  }
  return stack_rows(outputs);
}

template <class T>
MultiHeadAttention<T>::MultiHeadAttention(std::string name, std::size_t d, std::size_t h, RngStream& rng)
    : d_model(d), heads(h) {
  if (h == 0 || d % h != 0) {
    throw InvalidArgument("model width " + std::to_string(d) + " is not divisible by " + std::to_string(h) + " heads");
  }
  auto w = [&](const char* tag) {
    return Parameter<T>(name + "." + tag, {d, d}, init_values<T>(d * d, d, InitScheme::LecunUniform, rng));
  };
  auto b = [&](const char* tag) { return Parameter<T>(name + "." + tag, {d}, std::vector<T>(d, T(0))); };
  wq = w("query_weight");
  wk = w("key_weight");
  wv = w("value_weight");
  wo = w("output_weight");
  bq = b("query_bias");
  bk = b("key_bias");
  bv = b("value_bias");
  bo = b("output_bias");
}

template <class T>
void MultiHeadAttention<T>::collect(ParameterRefs<T>& out) {
  for (Parameter<T>* p : {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}) out.push_back(p);
}

template <class T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& x, std::vector<Tensor<T>>* weights) const {
  if (x.rank() != 2 || x.dim(1) != d_model) {
    throw InvalidArgument("attention expects [T, " + std::to_string(d_model) + "], got " + to_string(x.shape()));
  }
  const std::size_t dh = d_model / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  const Tensor<T> q = add_bias(matmul(x, wq.tensor), bq.tensor);
  const Tensor<T> k = add_bias(matmul(x, wk.tensor), bk.tensor);
  const Tensor<T> v = add_bias(matmul(x, wv.tensor), bv.tensor);
  std::vector<Tensor<T>> per_head;
  per_head.reserve(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const std::size_t b = hd * dh, e = b + dh;
    const Tensor<T> scores = scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)), inv_sqrt);
    const Tensor<T> attn = softmax_rows(scores);
    if (weights) weights->push_back(attn);
    per_head.push_back(matmul(attn, slice_cols(v, b, e)));
  }
  const Tensor<T> merged = heads == 1 ? per_head.front() : concat_cols(per_head);
  return add_bias(matmul(merged, wo.tensor), bo.tensor);
}

template <class T>
LayerNorm<T>::LayerNorm(std::string name, std::size_t d)
    : gain(name + ".gain", {d}, std::vector<T>(d, T(1))), shift(name + ".shift", {d}, std::vector<T>(d, T(0))) {}

template <class T>
Tensor<T> sinusoidal_position_encoding(std::size_t steps, std::size_t d) {
  std::vector<T> table(steps * d);
  for (std::size_t pos = 0; pos < steps; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double pair = static_cast<double>(i / 2 * 2);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(d));
      table[pos * d + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor<T>::constant({steps, d}, std::move(table));
}

template std::vector<float> init_values<float>(std::size_t, std::size_t, InitScheme, RngStream&);
template std::vector<double> init_values<double>(std::size_t, std::size_t, InitScheme, RngStream&);
template class Dense<float>;
template class Dense<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class Recurrent<float>;
template class Recurrent<double>;
template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template Tensor<float> sinusoidal_position_encoding<float>(std::size_t, std::size_t);
template Tensor<double> sinusoidal_position_encoding<double>(std::size_t, std::size_t);

}  // namespace rffi::tn
