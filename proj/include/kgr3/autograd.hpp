#pragma once
// Reverse-mode tape over 2-D tensors. The tape is rebuilt for every
// training step; nodes hold value, gradient and a backward closure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "kgr3/tensor.hpp"

namespace kgr3 {

// Square boolean attention structure; allow[i*cols + j] != 0 means token i
// may attend to token j.
struct BoolMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allow;

  BoolMask() = default;
  BoolMask(std::size_t r, std::size_t c) : rows(r), cols(c), allow(r * c, 0) {}
  std::uint8_t& at(std::size_t i, std::size_t j) { return allow[i * cols + j]; }
  std::uint8_t at(std::size_t i, std::size_t j) const {
    return allow[i * cols + j];
  }

  friend bool operator==(const BoolMask&, const BoolMask&) = default;
};

template <typename T>
class Tape {
 public:
  using Id = std::int32_t;

  Id leaf(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  const Tensor<T>& value(Id id) const { return nodes_[check(id)].value; }
  const Tensor<T>& grad(Id id) const { return nodes_[check(id)].grad; }
  std::size_t size() const { return nodes_.size(); }

  // C = A.B
  Id matmul(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.cols != B.rows) throw std::invalid_argument("matmul shape mismatch");
    Tensor<T> C(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t k = 0; k < A.cols; ++k) {
        T aik = A.at(i, k);
        if (aik == T(0)) continue;
        for (std::size_t j = 0; j < B.cols; ++j)
          C.at(i, j) += aik * B.at(k, j);
      }
    return push(std::move(C), needs(a) || needs(b), [this, a, b](Id out) {
      const auto& G = nodes_[out].value_grad();
      const auto& A = value(a);
      const auto& B = value(b);
      if (needs(a)) {
        auto& GA = nodes_[a].grad;
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < B.cols; ++j) {
            T gij = G.at(i, j);
            if (gij == T(0)) continue;
            for (std::size_t k = 0; k < A.cols; ++k)
              GA.at(i, k) += gij * B.at(k, j);
          }
      }
      if (needs(b)) {
        auto& GB = nodes_[b].grad;
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t k = 0; k < A.cols; ++k) {
            T aik = A.at(i, k);
            if (aik == T(0)) continue;
            for (std::size_t j = 0; j < B.cols; ++j)
              GB.at(k, j) += aik * G.at(i, j);
          }
      }
    });
  }

  // C = A.B^T
  Id matmul_nt(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.cols != B.cols)
      throw std::invalid_argument("matmul_nt shape mismatch");
    Tensor<T> C(A.rows, B.rows);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < B.rows; ++j) {
        T s = T(0);
        for (std::size_t k = 0; k < A.cols; ++k) s += A.at(i, k) * B.at(j, k);
        C.at(i, j) = s;
      }
    return push(std::move(C), needs(a) || needs(b), [this, a, b](Id out) {
      const auto& G = nodes_[out].value_grad();
      const auto& A = value(a);
      const auto& B = value(b);
      if (needs(a)) {
        auto& GA = nodes_[a].grad;
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < B.rows; ++j) {
            T gij = G.at(i, j);
            if (gij == T(0)) continue;
            for (std::size_t k = 0; k < A.cols; ++k)
              GA.at(i, k) += gij * B.at(j, k);
          }
      }
      if (needs(b)) {
        auto& GB = nodes_[b].grad;
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < B.rows; ++j) {
            T gij = G.at(i, j);
            if (gij == T(0)) continue;
            for (std::size_t k = 0; k < A.cols; ++k)
              GB.at(j, k) += gij * A.at(i, k);
          }
      }
    });
  }

  // Same shape, or b a 1xN row broadcast over a's rows.
  Id add(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    bool broadcast = B.rows == 1 && A.cols == B.cols && A.rows != B.rows;
    if (!broadcast && !A.same_shape(B))
      throw std::invalid_argument("add shape mismatch");
    Tensor<T> C = A;
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < A.cols; ++j)
        C.at(i, j) += B.at(broadcast ? 0 : i, j);
    return push(std::move(C), needs(a) || needs(b),
                [this, a, b, broadcast](Id out) {
                  const auto& G = nodes_[out].value_grad();
                  if (needs(a)) {
                    auto& GA = nodes_[a].grad;
                    for (std::size_t i = 0; i < G.size(); ++i)
                      GA.data[i] += G.data[i];
                  }
                  if (needs(b)) {
                    auto& GB = nodes_[b].grad;
                    for (std::size_t i = 0; i < G.rows; ++i)
                      for (std::size_t j = 0; j < G.cols; ++j)
                        GB.at(broadcast ? 0 : i, j) += G.at(i, j);
                  }
                });
  }

  Id mul(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (!A.same_shape(B)) throw std::invalid_argument("mul shape mismatch");
    Tensor<T> C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
    return push(std::move(C), needs(a) || needs(b), [this, a, b](Id out) {
      const auto& G = nodes_[out].value_grad();
      const auto& A = value(a);
      const auto& B = value(b);
      if (needs(a))
        for (std::size_t i = 0; i < G.size(); ++i)
          nodes_[a].grad.data[i] += G.data[i] * B.data[i];
      if (needs(b))
        for (std::size_t i = 0; i < G.size(); ++i)
          nodes_[b].grad.data[i] += G.data[i] * A.data[i];
    });
  }

  Id scale(Id a, T s) {
    Tensor<T> C = value(a);
    for (auto& v : C.data) v *= s;
    return push(std::move(C), needs(a), [this, a, s](Id out) {
      if (!needs(a)) return;
      const auto& G = nodes_[out].value_grad();
      for (std::size_t i = 0; i < G.size(); ++i)
        nodes_[a].grad.data[i] += s * G.data[i];
    });
  }

  Id relu(Id a) {
    Tensor<T> C = value(a);
    for (auto& v : C.data) v = v > T(0) ? v : T(0);
    return push(std::move(C), needs(a), [this, a](Id out) {
      if (!needs(a)) return;
      const auto& G = nodes_[out].value_grad();
      const auto& A = value(a);
      for (std::size_t i = 0; i < G.size(); ++i)
        if (A.data[i] > T(0)) nodes_[a].grad.data[i] += G.data[i];
    });
  }

  Id log(Id a) {
    Tensor<T> C = value(a);
    for (auto& v : C.data) v = std::log(v);
    return push(std::move(C), needs(a), [this, a](Id out) {
      if (!needs(a)) return;
      const auto& G = nodes_[out].value_grad();
      const auto& A = value(a);
      for (std::size_t i = 0; i < G.size(); ++i)
        nodes_[a].grad.data[i] += G.data[i] / A.data[i];
    });
  }

  Id exp(Id a) {
    Tensor<T> C = value(a);
    for (auto& v : C.data) v = std::exp(v);
    return push(std::move(C), needs(a), [this, a](Id out) {
      if (!needs(a)) return;
      const auto& G = nodes_[out].value_grad();
      const auto& C = nodes_[out].value;
      for (std::size_t i = 0; i < G.size(); ++i)
        nodes_[a].grad.data[i] += G.data[i] * C.data[i];
    });
  }

  Id concat_cols(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.rows != B.rows)
      throw std::invalid_argument("concat_cols row mismatch");
    Tensor<T> C(A.rows, A.cols + B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
      for (std::size_t j = 0; j < B.cols; ++j)
        C.at(i, A.cols + j) = B.at(i, j);
    }
    return push(std::move(C), needs(a) || needs(b), [this, a, b](Id out) {
      const auto& G = nodes_[out].value_grad();
      const auto& A = value(a);
      const auto& B = value(b);
      if (needs(a))
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < A.cols; ++j)
            nodes_[a].grad.at(i, j) += G.at(i, j);
      if (needs(b))
        for (std::size_t i = 0; i < B.rows; ++i)
          for (std::size_t j = 0; j < B.cols; ++j)
            nodes_[b].grad.at(i, j) += G.at(i, A.cols + j);
    });
  }

  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    std::size_t cols = value(parts[0]).cols;
    std::size_t rows = 0;
    bool grad = false;
    for (Id p : parts) {
      if (value(p).cols != cols)
        throw std::invalid_argument("concat_rows col mismatch");
      rows += value(p).rows;
      grad = grad || needs(p);
    }
    Tensor<T> C(rows, cols);
    std::size_t r = 0;
    for (Id p : parts) {
      const auto& P = value(p);
      std::copy(P.data.begin(), P.data.end(), C.data.begin() + r * cols);
      r += P.rows;
    }
    return push(std::move(C), grad, [this, parts](Id out) {
      const auto& G = nodes_[out].value_grad();
      std::size_t r = 0;
      for (Id p : parts) {
        const auto& P = value(p);
        if (needs(p))
          for (std::size_t i = 0; i < P.size(); ++i)
            nodes_[p].grad.data[i] += G.data[r * G.cols + i];
        r += P.rows;
      }
    });
  }

  Id gather_rows(Id table, std::vector<std::int32_t> indices) {
    const auto& A = value(table);
    Tensor<T> C(indices.size(), A.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      auto idx = indices[i];
      if (idx < 0 || static_cast<std::size_t>(idx) >= A.rows)
        throw std::out_of_range("gather_rows index out of range");
      for (std::size_t j = 0; j < A.cols; ++j)
        C.at(i, j) = A.at(static_cast<std::size_t>(idx), j);
    }
    return push(std::move(C), needs(table),
                [this, table, indices = std::move(indices)](Id out) {
                  if (!needs(table)) return;
                  const auto& G = nodes_[out].value_grad();
                  auto& GT = nodes_[table].grad;
                  for (std::size_t i = 0; i < indices.size(); ++i)
                    for (std::size_t j = 0; j < G.cols; ++j)
                      GT.at(static_cast<std::size_t>(indices[i]), j) +=
                          G.at(i, j);
                });
  }

  Id slice_rows(Id a, std::size_t r0, std::size_t r1) {
    const auto& A = value(a);
    if (r0 >= r1 || r1 > A.rows)
      throw std::invalid_argument("slice_rows range");
    Tensor<T> C(r1 - r0, A.cols);
    std::copy(A.data.begin() + r0 * A.cols, A.data.begin() + r1 * A.cols,
              C.data.begin());
    return push(std::move(C), needs(a), [this, a, r0](Id out) {
      if (!needs(a)) return;
      const auto& G = nodes_[out].value_grad();
      auto& GA = nodes_[a].grad;
      for (std::size_t i = 0; i < G.size(); ++i)
        GA.data[r0 * GA.cols + i] += G.data[i];
    });
  }

  Id slice_cols(Id a, std::size_t c0, std::size_t c1) {
    const auto& A = value(a);
    if (c0 >= c1 || c1 > A.cols)
      throw std::invalid_argument("slice_cols range");
    Tensor<T> C(A.rows, c1 - c0);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = c0; j < c1; ++j) C.at(i, j - c0) = A.at(i, j);
    return push(std::move(C), needs(a), [this, a, c0](Id out) {
      if (!needs(a)) return;
      const auto& G = nodes_[out].value_grad();
      auto& GA = nodes_[a].grad;
      for (std::size_t i = 0; i < G.rows; ++i)
        for (std::size_t j = 0; j < G.cols; ++j)
          GA.at(i, c0 + j) += G.at(i, j);
    });
  }

  // Row-wise softmax restricted to the allowed set; disallowed outputs are
  // exactly zero and receive exactly zero gradient.
  Id masked_softmax_rows(Id a, const BoolMask& mask) {
    const auto& A = value(a);
    if (mask.rows != A.rows || mask.cols != A.cols)
      throw std::invalid_argument("masked_softmax_rows mask shape mismatch");
    Tensor<T> C(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < A.cols; ++j)
        if (mask.at(i, j) && A.at(i, j) > mx) mx = A.at(i, j);
      if (mx == -std::numeric_limits<T>::infinity())
        throw std::invalid_argument("masked_softmax_rows: empty allow row");
      T denom = T(0);
      for (std::size_t j = 0; j < A.cols; ++j)
        if (mask.at(i, j)) denom += std::exp(A.at(i, j) - mx);
      for (std::size_t j = 0; j < A.cols; ++j)
        C.at(i, j) = mask.at(i, j) ? std::exp(A.at(i, j) - mx) / denom : T(0);
    }
    return push(std::move(C), needs(a), [this, a, mask](Id out) {
      if (!needs(a)) return;
      const auto& G = nodes_[out].value_grad();
      const auto& Y = nodes_[out].value;
      auto& GA = nodes_[a].grad;
      for (std::size_t i = 0; i < Y.rows; ++i) {
        T dot = T(0);
        for (std::size_t j = 0; j < Y.cols; ++j)
          if (mask.at(i, j)) dot += G.at(i, j) * Y.at(i, j);
        for (std::size_t j = 0; j < Y.cols; ++j)
          if (mask.at(i, j)) GA.at(i, j) += Y.at(i, j) * (G.at(i, j) - dot);
      }
    });
  }

  Id softmax_rows(Id a) {
    BoolMask full(value(a).rows, value(a).cols);
    std::fill(full.allow.begin(), full.allow.end(), std::uint8_t(1));
    return masked_softmax_rows(a, full);
  }

  // Per-row normalization with learned gain/bias (both 1xd).
  Id layer_norm_rows(Id a, Id gain, Id bias, T eps = T(1e-5)) {
    const auto& A = value(a);
    const auto& Gn = value(gain);
    const auto& Bs = value(bias);
    if (Gn.rows != 1 || Bs.rows != 1 || Gn.cols != A.cols ||
        Bs.cols != A.cols)
      throw std::invalid_argument("layer_norm_rows shape mismatch");
    Tensor<T> C(A.rows, A.cols);
    Tensor<T> xhat(A.rows, A.cols);
    std::vector<T> inv_std(A.rows);
    const T n = static_cast<T>(A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      T mean = T(0);
      for (std::size_t j = 0; j < A.cols; ++j) mean += A.at(i, j);
      mean /= n;
      T var = T(0);
      for (std::size_t j = 0; j < A.cols; ++j) {
        T d = A.at(i, j) - mean;
        var += d * d;
      }
      var /= n;
      T is = T(1) / std::sqrt(var + eps);
      inv_std[i] = is;
      for (std::size_t j = 0; j < A.cols; ++j) {
        xhat.at(i, j) = (A.at(i, j) - mean) * is;
        C.at(i, j) = Gn.at(0, j) * xhat.at(i, j) + Bs.at(0, j);
      }
    }
    return push(std::move(C), needs(a) || needs(gain) || needs(bias),
                [this, a, gain, bias, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Id out) {
                  const auto& G = nodes_[out].value_grad();
                  const auto& Gn = value(gain);
                  const T n = static_cast<T>(G.cols);
                  if (needs(gain) || needs(bias)) {
                    for (std::size_t i = 0; i < G.rows; ++i)
                      for (std::size_t j = 0; j < G.cols; ++j) {
                        if (needs(gain))
                          nodes_[gain].grad.at(0, j) +=
                              G.at(i, j) * xhat.at(i, j);
                        if (needs(bias))
                          nodes_[bias].grad.at(0, j) += G.at(i, j);
                      }
                  }
                  if (needs(a)) {
                    auto& GA = nodes_[a].grad;
                    for (std::size_t i = 0; i < G.rows; ++i) {
                      T sum_dx = T(0), sum_dxx = T(0);
                      for (std::size_t j = 0; j < G.cols; ++j) {
                        T dxh = G.at(i, j) * Gn.at(0, j);
                        sum_dx += dxh;
                        sum_dxx += dxh * xhat.at(i, j);
                      }
                      for (std::size_t j = 0; j < G.cols; ++j) {
                        T dxh = G.at(i, j) * Gn.at(0, j);
                        GA.at(i, j) += inv_std[i] *
                                       (dxh - sum_dx / n -
                                        xhat.at(i, j) * sum_dxx / n);
                      }
                    }
                  }
                });
  }

  Id sum(Id a) {
    const auto& A = value(a);
    T s = T(0);
    for (T v : A.data) s += v;
    Tensor<T> C(1, 1);
    C.at(0, 0) = s;
    return push(std::move(C), needs(a), [this, a](Id out) {
      if (!needs(a)) return;
      T g = nodes_[out].value_grad().at(0, 0);
      for (auto& v : nodes_[a].grad.data) v += g;
    });
  }

  // -log softmax(logits)[gold] with max-subtraction; logits is 1xN.
  Id cross_entropy(Id logits, std::int32_t gold) {
    const auto& Z = value(logits);
    if (Z.rows != 1) throw std::invalid_argument("cross_entropy: 1xN expected");
    if (gold < 0 || static_cast<std::size_t>(gold) >= Z.cols)
      throw std::out_of_range("cross_entropy: gold index out of range");
    T mx = Z.data[0];
    for (T v : Z.data) mx = std::max(mx, v);
    T denom = T(0);
    for (T v : Z.data) denom += std::exp(v - mx);
    Tensor<T> C(1, 1);
    C.at(0, 0) = std::log(denom) + mx - Z.data[static_cast<std::size_t>(gold)];
    return push(std::move(C), needs(logits),
                [this, logits, gold, mx, denom](Id out) {
                  if (!needs(logits)) return;
                  T g = nodes_[out].value_grad().at(0, 0);
                  const auto& Z = value(logits);
                  auto& GZ = nodes_[logits].grad;
                  for (std::size_t j = 0; j < Z.cols; ++j) {
                    T p = std::exp(Z.data[j] - mx) / denom;
                    GZ.data[j] += g * (p - (j == static_cast<std::size_t>(gold)
                                                ? T(1)
                                                : T(0)));
                  }
                });
  }

  // Seeds d(loss)=1 and runs the tape in reverse creation order.
  void backward(Id loss) {
    auto& L = nodes_[check(loss)];
    if (L.value.size() != 1)
      throw std::invalid_argument("backward expects a scalar loss");
    L.grad.at(0, 0) = T(1);
    for (Id i = static_cast<Id>(nodes_.size()) - 1; i >= 0; --i)
      if (nodes_[i].backward && nodes_[i].requires_grad)
        nodes_[i].backward(i);
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void(Id)> backward;
    const Tensor<T>& value_grad() const { return grad; }
  };

  bool needs(Id id) const { return nodes_[check(id)].requires_grad; }

  Id push(Tensor<T> value, bool requires_grad,
          std::function<void(Id)> backward) {
    Node n;
    n.grad = Tensor<T>::zeros(value.rows, value.cols);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id check(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw std::out_of_range("tape id out of range");
    return id;
  }

  std::vector<Node> nodes_;
};

}  // namespace kgr3
