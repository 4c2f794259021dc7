#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "catmt/mat.hpp"
#include "catmt/rng.hpp"

namespace catmt {

// Reverse-mode autodiff over matrices. Operations append nodes in
// evaluation order; backward() replays the recording in reverse, so the
// tape is its own topological order. Parameter leaves hold references into
// caller-owned storage (both value and gradient), so registering a large
// embedding table costs nothing; the caller keeps those tensors alive
// until the last backward() call.
template <typename T>
class TapeT {
 public:
  using Mat = MatT<T>;

  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  int constant(Mat value) {
    return push(std::move(value), nullptr);
  }

  // grad may be null when the caller does not need this leaf's gradient.
  int param(const Mat& value, Mat* grad) {
    if (grad != nullptr && !grad->same_shape(value)) {
      throw std::invalid_argument("param grad buffer shape mismatch");
    }
    Node node;
    node.val_ref = &value;
    node.grad_ref = grad;
    node.back = nullptr;
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Mat& value(int id) const { return val(check(id)); }
  const Mat& grad(int id) const {
    const Node& node = nodes_[check(id)];
    return node.grad_ref != nullptr ? *node.grad_ref : node.grad;
  }

  int matmul(int a, int b) {
    Mat out = matops::matmul(val(a), val(b));
    return push(std::move(out), [this, a, b](const Mat& g) {
      matops::matmul_nt_acc(g, val(b), grad_of(a), true);
      matops::matmul_tn_acc(val(a), g, grad_of(b), true);
    });
  }

  // a * b^T
  int matmul_nt(int a, int b) {
    Mat out = matops::matmul_nt(val(a), val(b));
    return push(std::move(out), [this, a, b](const Mat& g) {
      matops::matmul_acc(g, val(b), grad_of(a), true);
      matops::matmul_tn_acc(g, val(a), grad_of(b), true);
    });
  }

  int add(int a, int b) {
    matops::check_shape<T>(val(a).same_shape(val(b)), "tape add");
    Mat out = val(a);
    matops::add_inplace(out, val(b));
    return push(std::move(out), [this, a, b](const Mat& g) {
      matops::add_inplace(grad_of(a), g);
      matops::add_inplace(grad_of(b), g);
    });
  }

  // Broadcast a 1 x n row vector over every row of a.
  int add_rowvec(int a, int b) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    matops::check_shape<T>(bv.rows == 1 && bv.cols == av.cols, "tape add_rowvec");
    Mat out = av;
    for (int i = 0; i < out.rows; ++i) {
      for (int j = 0; j < out.cols; ++j) out.at(i, j) += bv.at(0, j);
    }
    return push(std::move(out), [this, a, b](const Mat& g) {
      matops::add_inplace(grad_of(a), g);
      Mat& bg = grad_of(b);
      for (int i = 0; i < g.rows; ++i) {
        for (int j = 0; j < g.cols; ++j) bg.at(0, j) += g.at(i, j);
      }
    });
  }

  int scale(int a, T s) {
    Mat out = val(a);
    matops::scale_inplace(out, s);
    return push(std::move(out), [this, a, s](const Mat& g) {
      Mat& ag = grad_of(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) ag.data[i] += s * g.data[i];
    });
  }

  int relu(int a) {
    Mat out = val(a);
    for (auto& x : out.data) x = x > T(0) ? x : T(0);
    return push(std::move(out), [this, a](const Mat& g) {
      Mat& ag = grad_of(a);
      const Mat& av = val(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (av.data[i] > T(0)) ag.data[i] += g.data[i];
      }
    });
  }

  // Per-row layer normalization with learnable gain/bias (1 x n each).
  int layer_norm(int x, int gain, int bias, T eps = T(1e-5)) {
    const Mat& xv = val(x);
    const Mat& gv = val(gain);
    const Mat& bv = val(bias);
    matops::check_shape<T>(gv.rows == 1 && gv.cols == xv.cols && bv.rows == 1 &&
                           bv.cols == xv.cols, "layer_norm");
    const int n = xv.cols;
    Mat out(xv.rows, n);
    auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(xv.rows) * 2);
    for (int i = 0; i < xv.rows; ++i) {
      double mean = 0.0;
      for (int j = 0; j < n; ++j) mean += xv.at(i, j);
      mean /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) {
        double d = xv.at(i, j) - mean;
        var += d * d;
      }
      var /= n;
      const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
      (*stats)[2 * static_cast<std::size_t>(i)] = mean;
      (*stats)[2 * static_cast<std::size_t>(i) + 1] = inv_std;
      for (int j = 0; j < n; ++j) {
        double xhat = (xv.at(i, j) - mean) * inv_std;
        out.at(i, j) = static_cast<T>(xhat * gv.at(0, j) + bv.at(0, j));
      }
    }
    return push(std::move(out), [this, x, gain, bias, stats](const Mat& g) {
      const Mat& xv = val(x);
      const Mat& gv = val(gain);
      Mat& xg = grad_of(x);
      Mat& gg = grad_of(gain);
      Mat& bg = grad_of(bias);
      const int n = xv.cols;
      for (int i = 0; i < xv.rows; ++i) {
        const double mean = (*stats)[2 * static_cast<std::size_t>(i)];
        const double inv_std = (*stats)[2 * static_cast<std::size_t>(i) + 1];
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < n; ++j) {
          double xhat = (xv.at(i, j) - mean) * inv_std;
          double dxhat = static_cast<double>(g.at(i, j)) * gv.at(0, j);
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          gg.at(0, j) += static_cast<T>(static_cast<double>(g.at(i, j)) * xhat);
          bg.at(0, j) += g.at(i, j);
        }
        for (int j = 0; j < n; ++j) {
          double xhat = (xv.at(i, j) - mean) * inv_std;
          double dxhat = static_cast<double>(g.at(i, j)) * gv.at(0, j);
          double dx = (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n) * inv_std;
          xg.at(i, j) += static_cast<T>(dx);
        }
      }
    });
  }

  // Row softmax under a visibility mask (empty mask = all visible).
  int softmax_rows(int scores, std::vector<std::uint8_t> mask = {}) {
    Mat out = matops::softmax_rows_masked(val(scores), mask);
    auto shared_mask = std::make_shared<std::vector<std::uint8_t>>(std::move(mask));
    int id = push(std::move(out), nullptr);
    nodes_[id].back = [this, scores, id, shared_mask](const Mat& g) {
      const Mat& p = nodes_[id].val;
      Mat& sg = grad_of(scores);
      const auto& m = *shared_mask;
      for (int i = 0; i < p.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < p.cols; ++j) {
          dot += static_cast<double>(g.at(i, j)) * static_cast<double>(p.at(i, j));
        }
        for (int j = 0; j < p.cols; ++j) {
          bool visible = m.empty() || m[static_cast<std::size_t>(i) * p.cols + j];
          if (!visible) continue;
          double d = static_cast<double>(p.at(i, j)) * (static_cast<double>(g.at(i, j)) - dot);
          sg.at(i, j) += static_cast<T>(d);
        }
      }
    };
    return id;
  }

  // Inverted dropout; the mask is drawn at recording time, so a fixed rng
  // seed reproduces the run.
  int dropout(int a, double rate, SplitMix64& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
    const Mat& av = val(a);
    auto mask = std::make_shared<std::vector<T>>(av.data.size());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : *mask) m = rng.next_double() < rate ? T(0) : keep_scale;
    Mat out = av;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= (*mask)[i];
    return push(std::move(out), [this, a, mask](const Mat& g) {
      Mat& ag = grad_of(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) ag.data[i] += g.data[i] * (*mask)[i];
    });
  }

  // Embedding lookup: one row of `table` per id.
  int gather_rows(int table, std::vector<int> ids) {
    const Mat& tv = val(table);
    Mat out(static_cast<int>(ids.size()), tv.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= tv.rows) {
        throw std::out_of_range("gather id out of range: " + std::to_string(ids[i]));
      }
      for (int j = 0; j < tv.cols; ++j) out.at(static_cast<int>(i), j) = tv.at(ids[i], j);
    }
    auto shared_ids = std::make_shared<std::vector<int>>(std::move(ids));
    return push(std::move(out), [this, table, shared_ids](const Mat& g) {
      Mat& tg = grad_of(table);
      for (std::size_t i = 0; i < shared_ids->size(); ++i) {
        for (int j = 0; j < g.cols; ++j) {
          tg.at((*shared_ids)[i], j) += g.at(static_cast<int>(i), j);
        }
      }
    });
  }

  int concat_cols(std::vector<int> parts) {
    if (parts.empty()) throw std::invalid_argument("concat of nothing");
    int rows = val(parts[0]).rows;
    int total_cols = 0;
    for (int p : parts) {
      matops::check_shape<T>(val(p).rows == rows, "concat_cols");
      total_cols += val(p).cols;
    }
    Mat out(rows, total_cols);
    int offset = 0;
    for (int p : parts) {
      const Mat& pv = val(p);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < pv.cols; ++j) out.at(i, offset + j) = pv.at(i, j);
      }
      offset += pv.cols;
    }
    auto shared_parts = std::make_shared<std::vector<int>>(std::move(parts));
    return push(std::move(out), [this, shared_parts](const Mat& g) {
      int offset = 0;
      for (int p : *shared_parts) {
        Mat& pg = grad_of(p);
        for (int i = 0; i < pg.rows; ++i) {
          for (int j = 0; j < pg.cols; ++j) pg.at(i, j) += g.at(i, offset + j);
        }
        offset += pg.cols;
      }
    });
  }

  // Reduction to a 1x1 node.
  int sum(int a) {
    double total = 0.0;
    for (T v : val(a).data) total += v;
    Mat out(1, 1);
    out.at(0, 0) = static_cast<T>(total);
    return push(std::move(out), [this, a](const Mat& g) {
      const T upstream = g.at(0, 0);
      for (auto& x : grad_of(a).data) x += upstream;
    });
  }

  // Sum over rows with gold != skip_id of -log softmax(logits_row)[gold].
  // Returns a 1x1 node.
  int cross_entropy_sum(int logits, std::vector<int> gold, int skip_id, int* counted = nullptr) {
    const Mat& lv = val(logits);
    if (static_cast<int>(gold.size()) != lv.rows) {
      throw std::invalid_argument("one logits row per gold symbol required");
    }
    auto log_probs = std::make_shared<MatT<double>>(lv.rows, lv.cols);
    double total = 0.0;
    int count = 0;
    for (int i = 0; i < lv.rows; ++i) {
      double max_logit = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < lv.cols; ++j) max_logit = std::max(max_logit, static_cast<double>(lv.at(i, j)));
      double sum = 0.0;
      for (int j = 0; j < lv.cols; ++j) sum += std::exp(static_cast<double>(lv.at(i, j)) - max_logit);
      const double log_z = max_logit + std::log(sum);
      for (int j = 0; j < lv.cols; ++j) log_probs->at(i, j) = static_cast<double>(lv.at(i, j)) - log_z;
      if (gold[static_cast<std::size_t>(i)] == skip_id) continue;
      if (gold[static_cast<std::size_t>(i)] < 0 || gold[static_cast<std::size_t>(i)] >= lv.cols) {
        throw std::out_of_range("gold id out of vocabulary range");
      }
      total -= log_probs->at(i, gold[static_cast<std::size_t>(i)]);
      ++count;
    }
    if (counted != nullptr) *counted = count;
    Mat out(1, 1);
    out.at(0, 0) = static_cast<T>(total);
    auto shared_gold = std::make_shared<std::vector<int>>(std::move(gold));
    return push(std::move(out), [this, logits, shared_gold, skip_id, log_probs](const Mat& g) {
      const double upstream = g.at(0, 0);
      Mat& lg = grad_of(logits);
      for (int i = 0; i < lg.rows; ++i) {
        const int y = (*shared_gold)[static_cast<std::size_t>(i)];
        if (y == skip_id) continue;
        for (int j = 0; j < lg.cols; ++j) {
          double p = std::exp(log_probs->at(i, j));
          lg.at(i, j) += static_cast<T>((p - (j == y ? 1.0 : 0.0)) * upstream);
        }
      }
    });
  }

  // Reverse sweep from a 1x1 node. Gradient buffers are allocated here,
  // so a recording that is never differentiated costs no gradient memory.
  void backward(int loss) {
    if (value(loss).rows != 1 || value(loss).cols != 1) {
      throw std::invalid_argument("backward requires a scalar (1x1) node");
    }
    for (Node& node : nodes_) {
      if (node.grad_ref != nullptr) continue;
      if (node.grad.data.empty()) {
        const Mat& v = node.val_ref != nullptr ? *node.val_ref : node.val;
        node.grad = Mat::zeros(v.rows, v.cols);
      } else {
        std::fill(node.grad.data.begin(), node.grad.data.end(), T(0));  // repeat sweeps start clean
      }
    }
    grad_of(loss).at(0, 0) = T(1);
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      Node& node = nodes_[static_cast<std::size_t>(id)];
      if (node.back) node.back(node.grad_ref != nullptr ? *node.grad_ref : node.grad);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;                       // owned output value (ops)
    const Mat* val_ref = nullptr;  // caller-owned value (parameter leaves)
    Mat grad;                      // owned gradient, allocated by backward()
    Mat* grad_ref = nullptr;       // caller-owned gradient (parameter leaves)
    std::function<void(const Mat&)> back;
  };

  const Mat& val(int id) const {
    const Node& node = nodes_[check(id)];
    return node.val_ref != nullptr ? *node.val_ref : node.val;
  }

  Mat& grad_of(int id) {
    Node& node = nodes_[check(id)];
    return node.grad_ref != nullptr ? *node.grad_ref : node.grad;
  }

  int check(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
      throw std::out_of_range("bad tape node id");
    }
    return id;
  }

  int push(Mat value, std::function<void(const Mat&)> back) {
    Node node;
    node.val = std::move(value);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

}  // namespace catmt
