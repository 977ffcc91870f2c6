#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rffi/random.hpp"
#include "rffi/tensornet/ops.hpp"

namespace rffi::tn {

/// Trainable tensor with its Adam moment accumulators.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  std::vector<T> adam_m;
  std::vector<T> adam_v;

  Parameter() = default;
  Parameter(std::string n, Shape shape, std::vector<T> values)
      : name(std::move(n)),
        tensor(Tensor<T>::leaf(std::move(shape), std::move(values))),
        adam_m(tensor.size(), T(0)),
        adam_v(tensor.size(), T(0)) {}

  std::size_t size() const { return tensor.size(); }
};

template <class T>
using ParameterRefs = std::vector<Parameter<T>*>;

/// HeadUniform is LeCun uniform shrunk tenfold, for classifier outputs.
enum class InitScheme { HeUniform, LecunUniform, HeadUniform, Zeros, Ones };

template <class T>
std::vector<T> init_values(std::size_t count, std::size_t fan_in, InitScheme scheme, RngStream& rng);

template <class T>
class Dense {
 public:
  Dense() = default;
  /// Weights are [out, in].
  Dense(std::string name, std::size_t in, std::size_t out, RngStream& rng, InitScheme scheme = InitScheme::LecunUniform);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParameterRefs<T>& out) { out.push_back(&weight); out.push_back(&bias); }

  std::string name;
  Parameter<T> weight;
  Parameter<T> bias;
};

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t kh, std::size_t kw, std::size_t in, std::size_t out, RngStream& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, kernel.tensor, bias.tensor); }
  void collect(ParameterRefs<T>& out) { out.push_back(&kernel); out.push_back(&bias); }

  Parameter<T> kernel;
  Parameter<T> bias;
};

enum class CellKind { Lstm, Gru };

/// Recurrent layer over [T, F] returning all T hidden states [T, units].
/// LSTM gates (i, f, g, o) use one bias; GRU gates (z, r, n) keep separate
/// input and recurrent biases with the reset gate applied after the
/// recurrent projection.
template <class T>
class Recurrent {
 public:
  Recurrent() = default;
  Recurrent(std::string name, CellKind kind, std::size_t features, std::size_t units, RngStream& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParameterRefs<T>& out);

  CellKind kind = CellKind::Lstm;
  std::size_t units = 0;
  Parameter<T> input_weight;      // [F, gates*units]
  Parameter<T> recurrent_weight;  // [units, gates*units]
  Parameter<T> bias;              // [gates*units]
  Parameter<T> recurrent_bias;    // GRU only
};

/// Self-attention with learned Q, K, V and output projections.
template <class T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::string name, std::size_t d_model, std::size_t heads, RngStream& rng);
  /// When `weights` is non-null it receives each head's [T, T] attention matrix.
  Tensor<T> operator()(const Tensor<T>& x, std::vector<Tensor<T>>* weights = nullptr) const;
  void collect(ParameterRefs<T>& out);

  std::size_t d_model = 0;
  std::size_t heads = 1;
  Parameter<T> wq, wk, wv, wo;  // [d, d], applied as x * W
  Parameter<T> bq, bk, bv, bo;
};

template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t d);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain.tensor, shift.tensor); }
  void collect(ParameterRefs<T>& out) { out.push_back(&gain); out.push_back(&shift); }

  Parameter<T> gain;
  Parameter<T> shift;
};

/// Interleaved table: even columns sin(pos / 10000^(2i/d)), odd columns cos.
template <class T>
Tensor<T> sinusoidal_position_encoding(std::size_t steps, std::size_t d);

}  // namespace rffi::tn
