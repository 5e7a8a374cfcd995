#pragma once
// Test-only reference implementations, written as straight loops and kept
// independent of the tape ops they check.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kgr3/autograd.hpp"
#include "kgr3/model.hpp"
#include "kgr3/tensor.hpp"

namespace kgr3::oracle {

using Mat = Tensor<double>;

inline Mat project(const Mat& x, const Mat& w) {  // x . w^T
  Mat out(x.rows, w.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t o = 0; o < w.rows; ++o) {
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) s += x.at(i, j) * w.at(o, j);
      out.at(i, o) = s;
    }
  return out;
}

inline Mat layer_norm(const Mat& x, const Mat& g, const Mat& b,
                      double eps = 1e-5) {
  Mat out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j)
      out.at(i, j) =
          g.at(0, j) * (x.at(i, j) - mean) / std::sqrt(var + eps) +
          b.at(0, j);
  }
  return out;
}

// Dense multi-head attention with disallowed logits forced to -inf before
// the softmax; nullptr mask means fully connected.
inline Mat dense_masked_attention(const Mat& q_states, const Mat& kv_states,
                                  const BoolMask* mask, const Mat& wq,
                                  const Mat& wk, const Mat& wv, const Mat& wo,
                                  std::size_t heads) {
  const std::size_t d = q_states.cols;
  const std::size_t dk = d / heads;
  Mat q = project(q_states, wq);
  Mat k = project(kv_states, wk);
  Mat v = project(kv_states, wv);
  Mat concat(q_states.rows, d);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q_states.rows; ++i) {
      std::vector<double> logits(kv_states.rows);
      for (std::size_t j = 0; j < kv_states.rows; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c)
          s += q.at(i, h * dk + c) * k.at(j, h * dk + c);
        s /= std::sqrt(static_cast<double>(dk));
        if (mask && !mask->at(i, j))
          s = -std::numeric_limits<double>::infinity();
        logits[j] = s;
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (double l : logits) mx = std::max(mx, l);
      double denom = 0.0;
      for (double l : logits) denom += std::exp(l - mx);
      for (std::size_t c = 0; c < dk; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < kv_states.rows; ++j)
          acc += std::exp(logits[j] - mx) / denom * v.at(j, h * dk + c);
        concat.at(i, h * dk + c) = acc;
      }
    }
  }
  return project(concat, wo);
}

// Full post-norm sublayer pair matching the reader's layer layout.
inline Mat transformer_layer(const Mat& q_states, const Mat& kv_states,
                             const BoolMask* mask,
                             const std::map<std::string, Mat>& params,
                             const std::string& prefix, std::size_t heads) {
  auto p = [&](const std::string& n) -> const Mat& {
    return params.at(prefix + n);
  };
  Mat attended = dense_masked_attention(q_states, kv_states, mask, p("Wq"),
                                        p("Wk"), p("Wv"), p("Wo"), heads);
  Mat x(q_states.rows, q_states.cols);
  for (std::size_t i = 0; i < x.size(); ++i)
    x.data[i] = q_states.data[i] + attended.data[i];
  x = layer_norm(x, p("ln1.g"), p("ln1.b"));
  Mat h = project(x, p("ffn.W1"));
  for (std::size_t i = 0; i < h.rows; ++i)
    for (std::size_t j = 0; j < h.cols; ++j)
      h.at(i, j) = std::max(0.0, h.at(i, j) + p("ffn.b1").at(0, j));
  Mat o = project(h, p("ffn.W2"));
  for (std::size_t i = 0; i < o.rows; ++i)
    for (std::size_t j = 0; j < o.cols; ++j)
      o.at(i, j) += p("ffn.b2").at(0, j) + x.at(i, j);
  return layer_norm(o, p("ln2.g"), p("ln2.b"));
}

// Rule-by-rule evaluator of the graph-induced attention structure.
inline bool attention_allowed(const TokenSequence& seq,
                              const SubgraphContext& ctx, std::size_t i,
                              std::size_t j) {
  const std::size_t m = seq.node_count;
  if (i == j) return true;
  bool i_node = i < m, j_node = j < m;
  if (i_node && j_node) return true;
  if (!i_node && !j_node) return true;
  std::size_t edge = (i_node ? j : i) - m;
  std::size_t node = i_node ? i : j;
  const Triple& e = ctx.edges[edge];
  return seq.tokens[node].index == e.head || seq.tokens[node].index == e.tail;
}

}  // namespace kgr3::oracle
