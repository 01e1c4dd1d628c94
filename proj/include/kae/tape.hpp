#pragma once

#include <functional>
#include <memory>

#include "kae/array.hpp"

namespace kae {

// Reverse-mode tape. Each op builds a Node holding the forward value and a
// closure that scatters the node's gradient into its parents.
struct Node {
  Array value;
  Array grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Array& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor constant(Array v);
  static Tensor param(Array v);  // leaf with requires_grad

  const Array& value() const { return node_->value; }
  Array& mutable_value() { return node_->value; }
  const Array& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }
  void zero_grad();

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables tape recording in scope (inference paths).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Runs reverse accumulation from a scalar root. Gradients of all reachable
// requires_grad nodes are populated; fan-out sums contributions.
void backward(const Tensor& root);

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor concat_seq(const Tensor& a, const Tensor& b);       // [B,S1,E]+[B,S2,E]
Tensor slice_seq(const Tensor& a, int start, int len);     // along axis 1
Tensor split_heads(const Tensor& x, int heads);            // [B,S,E]->[B,H,S,E/H]
Tensor merge_heads(const Tensor& x);                       // [B,H,S,dh]->[B,S,H*dh]

// ---- linear algebra ----
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // [.,E]x[E,F]+[F]
Tensor matmul(const Tensor& a, const Tensor& b);                   // [m,k]x[k,n]
// map along the sequence axis: x [B,S,E], w [S2,S], b [S2,E] -> [B,S2,E]
Tensor seq_linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor bmm(const Tensor& a, const Tensor& b);     // [N,m,k]x[N,k,n]
Tensor bmm_nt(const Tensor& a, const Tensor& b);  // [N,m,k]x[N,n,k]^T

// ---- nn ----
Tensor embedding(const Tensor& table, const std::vector<int>& ids,
                 std::vector<int> out_prefix_shape);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);
Tensor softmax_lastdim(const Tensor& x);
// scores [B,H,Sq,Sk]; key_mask (optional, [B,Sk], nonzero = masked out);
// causal adds a strictly-upper-triangular mask.
Tensor mask_scores(const Tensor& scores, const Array* key_mask, bool causal);
// zeroes rows marked in mask [B,S] of x [B,S,E]
Tensor zero_rows(const Tensor& x, const Array& mask);
Tensor dropout(const Tensor& x, double p, Rng& rng);

// ---- fused losses ----
// logits [B,S,T], labels/mask flat [B*S]; mask nonzero = pad (excluded).
// Sum of -log softmax at the label over non-pad positions; divided by B when
// mean_over_batch. Log probabilities are floored at log(1e-12).
Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& labels,
                            const Array& pad_mask, bool mean_over_batch = true);

// mean over all pairs of exp(-(1/D)*|x_i-y_j|^2 / two_sigma_sq)
Tensor kernel_cross_mean(const Tensor& x, const Array& y, double two_sigma_sq);
// mean over all (i,j) pairs of the kernel within x (includes i==j)
Tensor kernel_self_mean(const Tensor& x, double two_sigma_sq);

}  // namespace kae
