#include "rffi/tensornet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rffi/errors.hpp"

namespace rffi::tn {

namespace {

thread_local BranchTrace* g_trace = nullptr;

}  // namespace

BranchTrace::BranchTrace() : previous_(g_trace) { g_trace = this; }

BranchTrace::~BranchTrace() { g_trace = previous_; }

void BranchTrace::record(std::uint64_t value) {
  if (g_trace) g_trace->digest_ = (g_trace->digest_ ^ value) * 0x100000001b3ULL + 0x9e3779b97f4a7c15ULL;
}

namespace {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const Mat<T>>;
template <class T>
using MapM = Eigen::Map<Mat<T>>;

// Gradient buffer of an input, or nullptr when it does not need one.
template <class T>
std::vector<T>* grad_of(Node<T>* n) {
  return n->requires_grad ? &n->ensure_grad() : nullptr;
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                          to_string(b.shape()));
  }
}

template <class T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                          to_string(a.shape()));
  }
}

template <class T, class F, class G>
Tensor<T> unary(const Tensor<T>& x, F forward, G derivative_from_output_and_input) {
  std::vector<T> y(x.size());
  const auto xs = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = forward(xs[i]);
  Node<T>* in = x.node();
  return make_result<T>(x.shape(), std::move(y), {&x}, [in, derivative_from_output_and_input](Node<T>& self) {
    if (auto* g = grad_of(in)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        (*g)[i] += self.grad[i] * derivative_from_output_and_input(self.value[i], in->value[i]);
      }
    }
  });
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  Node<T>* na = a.node();
  Node<T>* nb = b.node();
  return make_result<T>(a.shape(), std::move(y), {&a, &b}, [na, nb](Node<T>& self) {
    for (Node<T>* n : {na, nb}) {
      if (auto* g = grad_of(n)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  Node<T>* na = a.node();
  Node<T>* nb = b.node();
  return make_result<T>(a.shape(), std::move(y), {&a, &b}, [na, nb](Node<T>& self) {
    if (auto* g = grad_of(na)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(nb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  Node<T>* na = a.node();
  Node<T>* nb = b.node();
  return make_result<T>(a.shape(), std::move(y), {&a, &b}, [na, nb](Node<T>& self) {
    if (auto* g = grad_of(na)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * nb->value[i];
    }
    if (auto* g = grad_of(nb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * na->value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.size();
  if (x.rank() == 0 || x.shape().back() != n) {
    throw InvalidArgument("add_bias: last extent of " + to_string(x.shape()) + " does not match bias " +
                          to_string(bias.shape()));
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias.data()[i % n];
  Node<T>* nx = x.node();
  Node<T>* nb = bias.node();
  return make_result<T>(x.shape(), std::move(y), {&x, &bias}, [nx, nb, n](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(nb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % n] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  if (g_trace) {
    std::uint64_t word = 0;
    std::size_t i = 0;
    for (T v : x.data()) {
      word = (word << 1) | (v > T(0) ? 1u : 0u);
      if (++i % 64 == 0) BranchTrace::record(word);
    }
    BranchTrace::record(word);
  }
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T, T in) { return in > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T out, T) { return out * (T(1) - out); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T out, T) { return T(1) - out * out; });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw InvalidArgument("matmul: inner extents differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<T> y(m * n);
  MapM<T>(y.data(), m, n).noalias() = MapC<T>(a.data().data(), m, k) * MapC<T>(b.data().data(), k, n);
  Node<T>* na = a.node();
  Node<T>* nb = b.node();
  return make_result<T>({m, n}, std::move(y), {&a, &b}, [na, nb, m, k, n](Node<T>& self) {
    MapC<T> dy(self.grad.data(), m, n);
    if (auto* g = grad_of(na)) {
      MapM<T>(g->data(), m, k).noalias() += dy * MapC<T>(nb->value.data(), k, n).transpose();
    }
    if (auto* g = grad_of(nb)) {
      MapM<T>(g->data(), k, n).noalias() += MapC<T>(na->value.data(), m, k).transpose() * dy;
    }
  });
}

template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw InvalidArgument("matmul_nt: inner extents differ, " + to_string(a.shape()) + " x " +
                          to_string(b.shape()) + "^T");
  }
  std::vector<T> y(m * n);
  MapM<T>(y.data(), m, n).noalias() =
      MapC<T>(a.data().data(), m, k) * MapC<T>(b.data().data(), n, k).transpose();
  Node<T>* na = a.node();
  Node<T>* nb = b.node();
  return make_result<T>({m, n}, std::move(y), {&a, &b}, [na, nb, m, k, n](Node<T>& self) {
    MapC<T> dy(self.grad.data(), m, n);
    if (auto* g = grad_of(na)) {
      MapM<T>(g->data(), m, k).noalias() += dy * MapC<T>(nb->value.data(), n, k);
    }
    if (auto* g = grad_of(nb)) {
      MapM<T>(g->data(), n, k).noalias() += dy.transpose() * MapC<T>(na->value.data(), m, k);
    }
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> y(m * n);
  MapM<T>(y.data(), n, m) = MapC<T>(a.data().data(), m, n).transpose();
  Node<T>* na = a.node();
  return make_result<T>({n, m}, std::move(y), {&a}, [na, m, n](Node<T>& self) {
    if (auto* g = grad_of(na)) MapM<T>(g->data(), m, n) += MapC<T>(self.grad.data(), n, m).transpose();
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw InvalidArgument("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  Node<T>* nx = x.node();
  return make_result<T>(std::move(shape), std::move(y), {&x}, [nx](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  const std::size_t n = x.dim(1);
  if (begin >= end || end > x.dim(0)) throw InvalidArgument("slice_rows: range out of bounds");
  std::vector<T> y(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                   x.data().begin() + static_cast<std::ptrdiff_t>(end * n));
  Node<T>* nx = x.node();
  return make_result<T>({end - begin, n}, std::move(y), {&x}, [nx, begin, n](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[begin * n + i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1), w = end - begin;
  if (begin >= end || end > n) throw InvalidArgument("slice_cols: range out of bounds");
  std::vector<T> y(m * w);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(r * n + begin), w,
                y.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  Node<T>* nx = x.node();
  return make_result<T>({m, w}, std::move(y), {&x}, [nx, begin, m, n, w](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < w; ++c) (*g)[r * n + begin + c] += self.grad[r * w + c];
      }
    }
  });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  std::vector<Node<T>*> nodes;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) throw InvalidArgument("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    nodes.push_back(p.node());
    total += p.dim(1);
  }
  std::vector<T> y(m * total);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(parts[i].data().begin() + static_cast<std::ptrdiff_t>(r * widths[i]), widths[i],
                  y.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += widths[i];
  }
  return make_result<T>({m, total}, std::move(y), parts, [nodes, widths, m, total](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (auto* g = grad_of(nodes[i])) {
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < widths[i]; ++c) (*g)[r * widths[i] + c] += self.grad[r * total + off + c];
        }
      }
      off += widths[i];
    }
  });
}

template <class T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows) {
  if (rows.empty()) throw InvalidArgument("stack_rows: no inputs");
  const std::size_t n = rows.front().size();
  std::vector<T> y;
  y.reserve(rows.size() * n);
  std::vector<Node<T>*> nodes;
  for (const auto& r : rows) {
    if (r.size() != n) throw InvalidArgument("stack_rows: row sizes differ");
    y.insert(y.end(), r.data().begin(), r.data().end());
    nodes.push_back(r.node());
  }
  return make_result<T>({rows.size(), n}, std::move(y), rows, [nodes, n](Node<T>& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (auto* g = grad_of(nodes[i])) {
        for (std::size_t c = 0; c < n; ++c) (*g)[c] += self.grad[i * n + c];
      }
    }
  });
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> y(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    const T* in = x.data().data() + r * n;
    T* out = y.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T total = 0;
    for (std::size_t c = 0; c < n; ++c) total += (out[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < n; ++c) out[c] /= total;
  }
  Node<T>* nx = x.node();
  return make_result<T>({m, n}, std::move(y), {&x}, [nx, m, n](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t r = 0; r < m; ++r) {
        const T* p = self.value.data() + r * n;
        const T* dy = self.grad.data() + r * n;
        T dot = 0;
        for (std::size_t c = 0; c < n; ++c) dot += dy[c] * p[c];
        for (std::size_t c = 0; c < n; ++c) (*g)[r * n + c] += p[c] * (dy[c] - dot);
      }
    }
  });
}

template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias, const std::string& name) {
  require_rank(weights, 2, "dense");
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  if (x.rank() == 0 || x.shape().back() != in) {
    throw DimensionMismatch("dense layer '" + name + "' expects " + std::to_string(in) +
                            " input features but received shape " + to_string(x.shape()) +
                            "; a dense layer's weight matrix fixes its input length, so variable-length "
                            "inputs must be pooled to a fixed extent first");
  }
  const std::size_t rows = x.size() / in;
  Tensor<T> flat = x.rank() == 2 ? x : reshape(x, {rows, in});
  Tensor<T> y = matmul_nt(flat, weights);
  if (bias.defined()) y = add_bias(y, bias);
  Shape shape = x.shape();
  shape.back() = out;
  return x.rank() == 2 ? y : reshape(y, shape);
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  require_rank(x, 3, "conv2d");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) {
    throw InvalidArgument("conv2d: input has " + std::to_string(cin) + " channels, kernel expects " +
                          std::to_string(kernel.dim(2)));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw InvalidArgument("conv2d: kernel extents must be odd");
  if (bias.defined() && (bias.rank() != 1 || bias.size() != cout)) throw InvalidArgument("conv2d: bias extent");
  const std::size_t ph = kh / 2, pw = kw / 2;
  const std::size_t pixels = h * w;
  const std::size_t patch = kh * kw * cin;
  const bool pointwise = kh == 1 && kw == 1;

  // Columns are ordered (ki, kj, c), matching the kernel's row-major layout.
  std::vector<T> cols;
  if (!pointwise) {
    cols.assign(pixels * patch, T(0));
    const T* src = x.data().data();
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        T* dst = cols.data() + (r * w + c) * patch;
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r + i) - static_cast<std::ptrdiff_t>(ph);
          if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c + j) - static_cast<std::ptrdiff_t>(pw);
            if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(w)) continue;
            std::copy_n(src + (static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)) * cin, cin,
                        dst + (i * kw + j) * cin);
          }
        }
      }
    }
  }
  const T* col_ptr = pointwise ? x.data().data() : cols.data();

  std::vector<T> y(pixels * cout);
  MapM<T> ym(y.data(), pixels, cout);
  ym.noalias() = MapC<T>(col_ptr, pixels, patch) * MapC<T>(kernel.data().data(), patch, cout);
  if (bias.defined()) {
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), cout);
  }

  Node<T>* nx = x.node();
  Node<T>* nk = kernel.node();
  Node<T>* nb = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(
      {h, w, cout}, std::move(y), {&x, &kernel, &bias},
      [nx, nk, nb, cols = std::move(cols), pointwise, h, w, cin, kh, kw, ph, pw, pixels, patch, cout](Node<T>& self) {
        MapC<T> dy(self.grad.data(), pixels, cout);
        const T* col_ptr = pointwise ? nx->value.data() : cols.data();
        if (auto* g = grad_of(nk)) {
          MapM<T>(g->data(), patch, cout).noalias() += MapC<T>(col_ptr, pixels, patch).transpose() * dy;
        }
        if (nb) {
          if (auto* g = grad_of(nb)) {
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g->data(), cout) += dy.colwise().sum();
          }
        }
        if (auto* g = grad_of(nx)) {
          if (pointwise) {
            MapM<T>(g->data(), pixels, cin).noalias() += dy * MapC<T>(nk->value.data(), patch, cout).transpose();
            return;
          }
          Mat<T> dcols = dy * MapC<T>(nk->value.data(), patch, cout).transpose();
          for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
              const T* srcp = dcols.data() + (r * w + c) * patch;
              for (std::size_t i = 0; i < kh; ++i) {
                const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r + i) - static_cast<std::ptrdiff_t>(ph);
                if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t j = 0; j < kw; ++j) {
                  const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c + j) - static_cast<std::ptrdiff_t>(pw);
                  if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(w)) continue;
                  T* dst = g->data() + (static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)) * cin;
                  const T* s = srcp + (i * kw + j) * cin;
                  for (std::size_t ch = 0; ch < cin; ++ch) dst[ch] += s[ch];
                }
              }
            }
          }
        }
      });
}

template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  require_rank(x, 3, "max_pool2d");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw InvalidArgument("max_pool2d: spatial extents must be even, got " + to_string(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> y(oh * ow * c);
  std::vector<std::size_t> argmax(y.size());
  const T* src = x.data().data();
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t q = 0; q < ow; ++q) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((2 * r) * w + 2 * q) * c + ch;
        for (std::size_t dr = 0; dr < 2; ++dr) {
          for (std::size_t dq = 0; dq < 2; ++dq) {
            const std::size_t idx = ((2 * r + dr) * w + 2 * q + dq) * c + ch;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (r * ow + q) * c + ch;
        y[o] = src[best];
        argmax[o] = best;
        if (g_trace) BranchTrace::record(best);
      }
    }
  }
  Node<T>* nx = x.node();
  return make_result<T>({oh, ow, c}, std::move(y), {&x}, [nx, argmax = std::move(argmax)](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t o = 0; o < argmax.size(); ++o) (*g)[argmax[o]] += self.grad[o];
    }
  });
}

template <class T>
Tensor<T> global_avg_pool2d(const Tensor<T>& x) {
  require_rank(x, 3, "global_avg_pool2d");
  const std::size_t hw = x.dim(0) * x.dim(1), c = x.dim(2);
  std::vector<T> y(c, T(0));
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) y[ch] += x.data()[p * c + ch];
  }
  const T inv = T(1) / static_cast<T>(hw);
  for (T& v : y) v *= inv;
  Node<T>* nx = x.node();
  return make_result<T>({c}, std::move(y), {&x}, [nx, hw, c, inv](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t ch = 0; ch < c; ++ch) (*g)[p * c + ch] += self.grad[ch] * inv;
      }
    }
  });
}

template <class T>
Tensor<T> global_avg_pool1d(const Tensor<T>& x) {
  require_rank(x, 2, "global_avg_pool1d");
  const std::size_t steps = x.dim(0), f = x.dim(1);
  std::vector<T> y(f, T(0));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < f; ++i) y[i] += x.data()[t * f + i];
  }
  const T inv = T(1) / static_cast<T>(steps);
  for (T& v : y) v *= inv;
  Node<T>* nx = x.node();
  return make_result<T>({f}, std::move(y), {&x}, [nx, steps, f, inv](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < f; ++i) (*g)[t * f + i] += self.grad[i] * inv;
      }
    }
  });
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, T eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (gain.size() != d || shift.size() != d) throw InvalidArgument("layer_norm: gain/shift extent");
  std::vector<T> xhat(rows * d), y(rows * d), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    T mean = 0;
    for (std::size_t i = 0; i < d; ++i) mean += in[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<T>(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (in[i] - mean) * inv_std[r];
      y[r * d + i] = xhat[r * d + i] * gain.data()[i] + shift.data()[i];
    }
  }
  Node<T>* nx = x.node();
  Node<T>* ng = gain.node();
  Node<T>* nb = shift.node();
  return make_result<T>(
      {rows, d}, std::move(y), {&x, &gain, &shift},
      [nx, ng, nb, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        auto* gx = grad_of(nx);
        auto* gg = grad_of(ng);
        auto* gb = grad_of(nb);
        std::vector<T> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dy = self.grad.data() + r * d;
          const T* xh = xhat.data() + r * d;
          T mean_dxhat = 0, mean_dxhat_xhat = 0;
          for (std::size_t i = 0; i < d; ++i) {
            if (gg) (*gg)[i] += dy[i] * xh[i];
            if (gb) (*gb)[i] += dy[i];
            dxhat[i] = dy[i] * ng->value[i];
            mean_dxhat += dxhat[i];
            mean_dxhat_xhat += dxhat[i] * xh[i];
          }
          if (!gx) continue;
          mean_dxhat /= static_cast<T>(d);
          mean_dxhat_xhat /= static_cast<T>(d);
          for (std::size_t i = 0; i < d; ++i) {
            (*gx)[r * d + i] += inv_std[r] * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
          }
        }
      });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  Node<T>* nx = x.node();
  return make_result<T>({1}, {total}, {&x}, [nx](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (T& v : *g) v += self.grad[0];
    }
  });
}

template <class T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights) {
  if (weights.size() != x.size()) throw InvalidArgument("weighted_sum: weight count mismatch");
  T total = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += x.data()[i] * weights[i];
  Node<T>* nx = x.node();
  return make_result<T>({1}, {total}, {&x}, [nx, weights](Node<T>& self) {
    if (auto* g = grad_of(nx)) {
      for (std::size_t i = 0; i < weights.size(); ++i) (*g)[i] += self.grad[0] * weights[i];
    }
  });
}

template <class T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> p(logits.size());
  if (logits.empty()) return p;
  const T mx = *std::max_element(logits.begin(), logits.end());
  T total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] = std::exp(logits[i] - mx));
  for (T& v : p) v /= total;
  return p;
}

template <class T>
CrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label) {
  const std::size_t k = logits.size();
  if (label >= k) {
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " + std::to_string(k) + " classes");
  }
  const auto z = logits.data();
  const T mx = *std::max_element(z.begin(), z.end());
  T total = 0;
  for (T v : z) total += std::exp(v - mx);
  const T lse = mx + std::log(total);
  std::vector<T> p(k);
  for (std::size_t i = 0; i < k; ++i) p[i] = std::exp(z[i] - lse);
  Node<T>* nz = logits.node();
  Tensor<T> loss = make_result<T>({1}, {lse - z[label]}, {&logits}, [nz, p, label](Node<T>& self) {
    if (auto* g = grad_of(nz)) {
      for (std::size_t i = 0; i < p.size(); ++i) (*g)[i] += self.grad[0] * (p[i] - (i == label ? T(1) : T(0)));
    }
  });
  return {loss, std::move(p)};
}

#define RFFI_TN_INSTANTIATE(T)                                                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                                         \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> relu(const Tensor<T>&);                                                             \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                          \
  template Tensor<T> tanh(const Tensor<T>&);                                                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> transpose(const Tensor<T>&);                                                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                   \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                             \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                             \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                         \
  template Tensor<T> stack_rows(const std::vector<Tensor<T>>&);                                          \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                     \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const std::string&);    \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> max_pool2d(const Tensor<T>&);                                                       \
  template Tensor<T> global_avg_pool2d(const Tensor<T>&);                                                \
  template Tensor<T> global_avg_pool1d(const Tensor<T>&);                                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                \
  template Tensor<T> sum(const Tensor<T>&);                                                              \
  template Tensor<T> weighted_sum(const Tensor<T>&, const std::vector<T>&);                              \
  template std::vector<T> softmax(std::span<const T>);                                                   \
  template CrossEntropy<T> softmax_cross_entropy(const Tensor<T>&, std::size_t);

RFFI_TN_INSTANTIATE(float)
RFFI_TN_INSTANTIATE(double)

}  // namespace rffi::tn
