#include "kae/tape.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace kae {

namespace {
thread_local bool g_grad_enabled = true;

bool any_requires(const std::vector<std::shared_ptr<Node>>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

Tensor make_node(Array value, std::vector<std::shared_ptr<Node>> parents,
                 std::function<void(Node&)> bwd) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled && any_requires(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(bwd);
  }
  return Tensor(std::move(n));
}

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace

Array& Node::ensure_grad() {
  if (grad.data.empty() || grad.shape != value.shape) grad = Array(value.shape);
  return grad;
}

Tensor Tensor::constant(Array v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return Tensor(std::move(n));
}

Tensor Tensor::param(Array v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

void Tensor::zero_grad() {
  if (node_) node_->grad = Array(node_->value.shape);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& root) {
  check(root.defined(), "backward: undefined tensor");
  check(root.value().size() == 1, "backward: root must be scalar");
  if (!root.node()->requires_grad) return;

  // iterative post-order topological sort
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad().data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) {
      n->ensure_grad();
      for (auto& p : n->parents) p->ensure_grad();
      n->backward(*n);
    }
  }
}

// ---------------- elementwise ----------------

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.value().same_shape(b.value()), "add: shape mismatch");
  Array out = a.value();
  const auto& bd = b.value().data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
  return make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
    for (size_t i = 0; i < n.grad.data.size(); ++i) {
      n.parents[0]->grad.data[i] += n.grad.data[i];
      n.parents[1]->grad.data[i] += n.grad.data[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.value().same_shape(b.value()), "sub: shape mismatch");
  Array out = a.value();
  const auto& bd = b.value().data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bd[i];
  return make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
    for (size_t i = 0; i < n.grad.data.size(); ++i) {
      n.parents[0]->grad.data[i] += n.grad.data[i];
      n.parents[1]->grad.data[i] -= n.grad.data[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.value().same_shape(b.value()), "mul: shape mismatch");
  Array out = a.value();
  const auto& bd = b.value().data;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bd[i];
  return make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
    const auto& av = n.parents[0]->value.data;
    const auto& bv = n.parents[1]->value.data;
    for (size_t i = 0; i < n.grad.data.size(); ++i) {
      n.parents[0]->grad.data[i] += n.grad.data[i] * bv[i];
      n.parents[1]->grad.data[i] += n.grad.data[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  Array out = a.value();
  for (auto& x : out.data) x *= c;
  return make_node(std::move(out), {a.node()}, [c](Node& n) {
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      n.parents[0]->grad.data[i] += n.grad.data[i] * c;
  });
}

Tensor add_const(const Tensor& a, double c) {
  Array out = a.value();
  for (auto& x : out.data) x += c;
  return make_node(std::move(out), {a.node()}, [](Node& n) {
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      n.parents[0]->grad.data[i] += n.grad.data[i];
  });
}

Tensor relu(const Tensor& a) {
  Array out = a.value();
  for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
  return make_node(std::move(out), {a.node()}, [](Node& n) {
    const auto& av = n.parents[0]->value.data;
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      if (av[i] > 0.0) n.parents[0]->grad.data[i] += n.grad.data[i];
  });
}

Tensor exp_t(const Tensor& a) {
  Array out = a.value();
  for (auto& x : out.data) x = std::exp(x);
  return make_node(std::move(out), {a.node()}, [](Node& n) {
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      n.parents[0]->grad.data[i] += n.grad.data[i] * n.value.data[i];
  });
}

Tensor log_t(const Tensor& a) {
  Array out = a.value();
  for (auto& x : out.data) x = std::log(x);
  return make_node(std::move(out), {a.node()}, [](Node& n) {
    const auto& av = n.parents[0]->value.data;
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      n.parents[0]->grad.data[i] += n.grad.data[i] / av[i];
  });
}

Tensor square(const Tensor& a) {
  Array out = a.value();
  for (auto& x : out.data) x = x * x;
  return make_node(std::move(out), {a.node()}, [](Node& n) {
    const auto& av = n.parents[0]->value.data;
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      n.parents[0]->grad.data[i] += 2.0 * n.grad.data[i] * av[i];
  });
}

Tensor sum_all(const Tensor& a) {
  Array out({1});
  double s = 0.0;
  for (double x : a.value().data) s += x;
  out.data[0] = s;
  return make_node(std::move(out), {a.node()}, [](Node& n) {
    double g = n.grad.data[0];
    for (auto& x : n.parents[0]->grad.data) x += g;
  });
}

Tensor mean_all(const Tensor& a) {
  check(a.value().size() > 0, "mean_all: empty");
  double inv = 1.0 / static_cast<double>(a.value().size());
  Array out({1});
  double s = 0.0;
  for (double x : a.value().data) s += x;
  out.data[0] = s * inv;
  return make_node(std::move(out), {a.node()}, [inv](Node& n) {
    double g = n.grad.data[0] * inv;
    for (auto& x : n.parents[0]->grad.data) x += g;
  });
}

// ---------------- shape ----------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  check(shape_numel(shape) == a.value().size(), "reshape: numel mismatch");
  Array out = a.value();
  out.shape = std::move(shape);
  return make_node(std::move(out), {a.node()}, [](Node& n) {
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      n.parents[0]->grad.data[i] += n.grad.data[i];
  });
}

Tensor concat_seq(const Tensor& a, const Tensor& b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  check(av.ndim() == 3 && bv.ndim() == 3, "concat_seq: expect rank 3");
  check(av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(2),
        "concat_seq: batch/embed mismatch");
  int B = av.dim(0), S1 = av.dim(1), S2 = bv.dim(1), E = av.dim(2);
  Array out({B, S1 + S2, E});
  for (int i = 0; i < B; ++i) {
    std::copy(av.data.begin() + static_cast<size_t>(i) * S1 * E,
              av.data.begin() + static_cast<size_t>(i + 1) * S1 * E,
              out.data.begin() + static_cast<size_t>(i) * (S1 + S2) * E);
    std::copy(bv.data.begin() + static_cast<size_t>(i) * S2 * E,
              bv.data.begin() + static_cast<size_t>(i + 1) * S2 * E,
              out.data.begin() + static_cast<size_t>(i) * (S1 + S2) * E +
                  static_cast<size_t>(S1) * E);
  }
  return make_node(std::move(out), {a.node(), b.node()},
                   [B, S1, S2, E](Node& n) {
                     auto& ga = n.parents[0]->grad.data;
                     auto& gb = n.parents[1]->grad.data;
                     for (int i = 0; i < B; ++i) {
                       size_t base = static_cast<size_t>(i) * (S1 + S2) * E;
                       for (int j = 0; j < S1 * E; ++j)
                         ga[static_cast<size_t>(i) * S1 * E + j] +=
                             n.grad.data[base + j];
                       for (int j = 0; j < S2 * E; ++j)
                         gb[static_cast<size_t>(i) * S2 * E + j] +=
                             n.grad.data[base + static_cast<size_t>(S1) * E + j];
                     }
                   });
}

Tensor slice_seq(const Tensor& a, int start, int len) {
  const Array& av = a.value();
  check(av.ndim() == 3, "slice_seq: expect rank 3");
  check(start >= 0 && len >= 0 && start + len <= av.dim(1),
        "slice_seq: out of range");
  int B = av.dim(0), S = av.dim(1), E = av.dim(2);
  Array out({B, len, E});
  for (int i = 0; i < B; ++i)
    std::copy(av.data.begin() + (static_cast<size_t>(i) * S + start) * E,
              av.data.begin() + (static_cast<size_t>(i) * S + start + len) * E,
              out.data.begin() + static_cast<size_t>(i) * len * E);
  return make_node(std::move(out), {a.node()}, [B, S, E, start, len](Node& n) {
    auto& g = n.parents[0]->grad.data;
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < len * E; ++j)
        g[(static_cast<size_t>(i) * S + start) * E + j] +=
            n.grad.data[static_cast<size_t>(i) * len * E + j];
  });
}

Tensor split_heads(const Tensor& x, int heads) {
  const Array& xv = x.value();
  check(xv.ndim() == 3, "split_heads: expect rank 3");
  int B = xv.dim(0), S = xv.dim(1), E = xv.dim(2);
  check(E % heads == 0, "split_heads: E not divisible by heads");
  int dh = E / heads;
  Array out({B, heads, S, dh});
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      for (int h = 0; h < heads; ++h)
        std::copy(
            xv.data.begin() + ((static_cast<size_t>(b) * S + s) * E + h * dh),
            xv.data.begin() +
                ((static_cast<size_t>(b) * S + s) * E + (h + 1) * dh),
            out.data.begin() +
                (((static_cast<size_t>(b) * heads + h) * S + s) * dh));
  return make_node(std::move(out), {x.node()}, [B, S, E, heads, dh](Node& n) {
    auto& g = n.parents[0]->grad.data;
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < S; ++s)
        for (int h = 0; h < heads; ++h)
          for (int d = 0; d < dh; ++d)
            g[(static_cast<size_t>(b) * S + s) * E + h * dh + d] +=
                n.grad.data[((static_cast<size_t>(b) * heads + h) * S + s) * dh +
                            d];
  });
}

Tensor merge_heads(const Tensor& x) {
  const Array& xv = x.value();
  check(xv.ndim() == 4, "merge_heads: expect rank 4");
  int B = xv.dim(0), H = xv.dim(1), S = xv.dim(2), dh = xv.dim(3);
  int E = H * dh;
  Array out({B, S, E});
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s)
        std::copy(xv.data.begin() +
                      ((static_cast<size_t>(b) * H + h) * S + s) * dh,
                  xv.data.begin() +
                      ((static_cast<size_t>(b) * H + h) * S + s + 1) * dh,
                  out.data.begin() +
                      (static_cast<size_t>(b) * S + s) * E + h * dh);
  return make_node(std::move(out), {x.node()}, [B, H, S, dh, E](Node& n) {
    auto& g = n.parents[0]->grad.data;
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
          for (int d = 0; d < dh; ++d)
            g[((static_cast<size_t>(b) * H + h) * S + s) * dh + d] +=
                n.grad.data[(static_cast<size_t>(b) * S + s) * E + h * dh + d];
  });
}

// ---------------- linear algebra ----------------

namespace {
// C[m,n] += A[m,k] * B[k,n]
void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}
// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt_acc(const double* a, const double* b, double* c, int m, int k,
                 int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}
// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn_acc(const double* a, const double* b, double* c, int m, int k,
                 int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    const double* bi = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}
}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Array& xv = x.value();
  const Array& wv = w.value();
  const Array& bv = b.value();
  check(wv.ndim() == 2 && bv.ndim() == 1, "linear: weight/bias rank");
  int E = wv.dim(0), F = wv.dim(1);
  check(xv.ndim() >= 1 && xv.shape.back() == E, "linear: feature mismatch");
  check(bv.dim(0) == F, "linear: bias mismatch");
  int rows = static_cast<int>(xv.size() / E);
  std::vector<int> oshape = xv.shape;
  oshape.back() = F;
  Array out(oshape);
  for (int i = 0; i < rows; ++i)
    std::copy(bv.data.begin(), bv.data.end(),
              out.data.begin() + static_cast<size_t>(i) * F);
  gemm_acc(xv.data.data(), wv.data.data(), out.data.data(), rows, E, F);
  return make_node(std::move(out), {x.node(), w.node(), b.node()},
                   [rows, E, F](Node& n) {
                     const auto& xv2 = n.parents[0]->value;
                     const auto& wv2 = n.parents[1]->value;
                     // dX = dY * W^T
                     gemm_nt_acc(n.grad.data.data(), wv2.data.data(),
                                 n.parents[0]->grad.data.data(), rows, F, E);
                     // dW = X^T * dY
                     gemm_tn_acc(xv2.data.data(), n.grad.data.data(),
                                 n.parents[1]->grad.data.data(), rows, E, F);
                     auto& gb = n.parents[2]->grad.data;
                     for (int i = 0; i < rows; ++i)
                       for (int j = 0; j < F; ++j)
                         gb[j] += n.grad.data[static_cast<size_t>(i) * F + j];
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  check(av.ndim() == 2 && bv.ndim() == 2, "matmul: expect rank 2");
  check(av.dim(1) == bv.dim(0), "matmul: inner mismatch");
  int m = av.dim(0), k = av.dim(1), n2 = bv.dim(1);
  Array out({m, n2});
  gemm_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n2);
  return make_node(std::move(out), {a.node(), b.node()}, [m, k, n2](Node& n) {
    gemm_nt_acc(n.grad.data.data(), n.parents[1]->value.data.data(),
                n.parents[0]->grad.data.data(), m, n2, k);
    gemm_tn_acc(n.parents[0]->value.data.data(), n.grad.data.data(),
                n.parents[1]->grad.data.data(), m, k, n2);
  });
}

Tensor seq_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Array& xv = x.value();
  const Array& wv = w.value();
  const Array& bv = b.value();
  check(xv.ndim() == 3 && wv.ndim() == 2 && bv.ndim() == 2,
        "seq_linear: rank mismatch");
  int B = xv.dim(0), S = xv.dim(1), E = xv.dim(2);
  int S2 = wv.dim(0);
  check(wv.dim(1) == S, "seq_linear: weight mismatch");
  check(bv.dim(0) == S2 && bv.dim(1) == E, "seq_linear: bias mismatch");
  Array out({B, S2, E});
  for (int i = 0; i < B; ++i) {
    double* o = out.data.data() + static_cast<size_t>(i) * S2 * E;
    for (int r = 0; r < S2; ++r)
      std::copy(bv.data.begin() + static_cast<size_t>(r) * E,
                bv.data.begin() + static_cast<size_t>(r + 1) * E,
                o + static_cast<size_t>(r) * E);
    gemm_acc(wv.data.data(), xv.data.data() + static_cast<size_t>(i) * S * E, o,
             S2, S, E);
  }
  return make_node(
      std::move(out), {x.node(), w.node(), b.node()}, [B, S, S2, E](Node& n) {
        const auto& xv2 = n.parents[0]->value;
        const auto& wv2 = n.parents[1]->value;
        for (int i = 0; i < B; ++i) {
          const double* gy = n.grad.data.data() + static_cast<size_t>(i) * S2 * E;
          // dX_i = W^T * dY_i
          gemm_tn_acc(wv2.data.data(), gy,
                      n.parents[0]->grad.data.data() +
                          static_cast<size_t>(i) * S * E,
                      S2, S, E);
          // dW += dY_i * X_i^T
          gemm_nt_acc(gy, xv2.data.data() + static_cast<size_t>(i) * S * E,
                      n.parents[1]->grad.data.data(), S2, E, S);
          auto& gb = n.parents[2]->grad.data;
          for (int j = 0; j < S2 * E; ++j) gb[j] += gy[j];
        }
      });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  check(av.ndim() >= 3 && bv.ndim() == av.ndim(), "bmm: rank mismatch");
  int nd = av.ndim();
  std::int64_t batch = 1;
  for (int i = 0; i < nd - 2; ++i) {
    check(av.dim(i) == bv.dim(i), "bmm: batch mismatch");
    batch *= av.dim(i);
  }
  int m = av.dim(nd - 2), k = av.dim(nd - 1);
  check(bv.dim(nd - 2) == k, "bmm: inner mismatch");
  int n2 = bv.dim(nd - 1);
  std::vector<int> oshape = av.shape;
  oshape[nd - 1] = n2;
  Array out(oshape);
  for (std::int64_t i = 0; i < batch; ++i)
    gemm_acc(av.data.data() + i * m * k, bv.data.data() + i * k * n2,
             out.data.data() + i * m * n2, m, k, n2);
  return make_node(std::move(out), {a.node(), b.node()},
                   [batch, m, k, n2](Node& n) {
                     const auto& av2 = n.parents[0]->value;
                     const auto& bv2 = n.parents[1]->value;
                     for (std::int64_t i = 0; i < batch; ++i) {
                       gemm_nt_acc(n.grad.data.data() + i * m * n2,
                                   bv2.data.data() + i * k * n2,
                                   n.parents[0]->grad.data.data() + i * m * k,
                                   m, n2, k);
                       gemm_tn_acc(av2.data.data() + i * m * k,
                                   n.grad.data.data() + i * m * n2,
                                   n.parents[1]->grad.data.data() + i * k * n2,
                                   m, k, n2);
                     }
                   });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  const Array& av = a.value();
  const Array& bv = b.value();
  check(av.ndim() >= 3 && bv.ndim() == av.ndim(), "bmm_nt: rank mismatch");
  int nd = av.ndim();
  std::int64_t batch = 1;
  for (int i = 0; i < nd - 2; ++i) {
    check(av.dim(i) == bv.dim(i), "bmm_nt: batch mismatch");
    batch *= av.dim(i);
  }
  int m = av.dim(nd - 2), k = av.dim(nd - 1);
  check(bv.dim(nd - 1) == k, "bmm_nt: inner mismatch");
  int n2 = bv.dim(nd - 2);
  std::vector<int> oshape = av.shape;
  oshape[nd - 2] = m;
  oshape[nd - 1] = n2;
  Array out(oshape);
  for (std::int64_t i = 0; i < batch; ++i)
    gemm_nt_acc(av.data.data() + i * m * k, bv.data.data() + i * n2 * k,
                out.data.data() + i * m * n2, m, k, n2);
  return make_node(
      std::move(out), {a.node(), b.node()}, [batch, m, k, n2](Node& n) {
        const auto& av2 = n.parents[0]->value;
        const auto& bv2 = n.parents[1]->value;
        for (std::int64_t i = 0; i < batch; ++i) {
          // dA = dY * B
          gemm_acc(n.grad.data.data() + i * m * n2, bv2.data.data() + i * n2 * k,
                   n.parents[0]->grad.data.data() + i * m * k, m, n2, k);
          // dB = dY^T * A
          gemm_tn_acc(n.grad.data.data() + i * m * n2,
                      av2.data.data() + i * m * k,
                      n.parents[1]->grad.data.data() + i * n2 * k, m, n2, k);
        }
      });
}

// ---------------- nn ----------------

Tensor embedding(const Tensor& table, const std::vector<int>& ids,
                 std::vector<int> out_prefix_shape) {
  const Array& tv = table.value();
  check(tv.ndim() == 2, "embedding: table rank");
  check(shape_numel(out_prefix_shape) == static_cast<std::int64_t>(ids.size()),
        "embedding: ids/shape mismatch");
  int T = tv.dim(0), E = tv.dim(1);
  std::vector<int> oshape = std::move(out_prefix_shape);
  oshape.push_back(E);
  Array out(oshape);
  for (size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < T, "embedding: id out of range");
    std::copy(tv.data.begin() + static_cast<size_t>(ids[i]) * E,
              tv.data.begin() + static_cast<size_t>(ids[i] + 1) * E,
              out.data.begin() + i * E);
  }
  return make_node(std::move(out), {table.node()}, [ids, E](Node& n) {
    auto& g = n.parents[0]->grad.data;
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < E; ++j)
        g[static_cast<size_t>(ids[i]) * E + j] += n.grad.data[i * E + j];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const Array& xv = x.value();
  int E = xv.shape.back();
  check(gamma.value().size() == E && beta.value().size() == E,
        "layer_norm: affine size mismatch");
  int rows = static_cast<int>(xv.size() / E);
  Array out(xv.shape);
  Array mu({rows}), istd({rows}), xhat(xv.shape);
  for (int i = 0; i < rows; ++i) {
    const double* xi = xv.data.data() + static_cast<size_t>(i) * E;
    double m = 0.0;
    for (int j = 0; j < E; ++j) m += xi[j];
    m /= E;
    double v = 0.0;
    for (int j = 0; j < E; ++j) v += (xi[j] - m) * (xi[j] - m);
    v /= E;
    double is = 1.0 / std::sqrt(v + eps);
    mu.data[i] = m;
    istd.data[i] = is;
    for (int j = 0; j < E; ++j) {
      double xh = (xi[j] - m) * is;
      xhat.data[static_cast<size_t>(i) * E + j] = xh;
      out.data[static_cast<size_t>(i) * E + j] =
          xh * gamma.value().data[j] + beta.value().data[j];
    }
  }
  return make_node(
      std::move(out), {x.node(), gamma.node(), beta.node()},
      [rows, E, istd = std::move(istd), xhat = std::move(xhat)](Node& n) {
        const auto& gv = n.parents[1]->value.data;
        auto& gx = n.parents[0]->grad.data;
        auto& gg = n.parents[1]->grad.data;
        auto& gb = n.parents[2]->grad.data;
        for (int i = 0; i < rows; ++i) {
          const double* dy = n.grad.data.data() + static_cast<size_t>(i) * E;
          const double* xh = xhat.data.data() + static_cast<size_t>(i) * E;
          double sum_dyg = 0.0, sum_dyg_xh = 0.0;
          for (int j = 0; j < E; ++j) {
            double dyg = dy[j] * gv[j];
            sum_dyg += dyg;
            sum_dyg_xh += dyg * xh[j];
            gg[j] += dy[j] * xh[j];
            gb[j] += dy[j];
          }
          double is = istd.data[i];
          for (int j = 0; j < E; ++j) {
            double dyg = dy[j] * gv[j];
            gx[static_cast<size_t>(i) * E + j] +=
                is * (dyg - sum_dyg / E - xh[j] * sum_dyg_xh / E);
          }
        }
      });
}

Tensor softmax_lastdim(const Tensor& x) {
  const Array& xv = x.value();
  int T = xv.shape.back();
  int rows = static_cast<int>(xv.size() / T);
  Array out(xv.shape);
  for (int i = 0; i < rows; ++i) {
    const double* xi = xv.data.data() + static_cast<size_t>(i) * T;
    double* oi = out.data.data() + static_cast<size_t>(i) * T;
    double mx = xi[0];
    for (int j = 1; j < T; ++j) mx = std::max(mx, xi[j]);
    double s = 0.0;
    for (int j = 0; j < T; ++j) {
      oi[j] = std::exp(xi[j] - mx);
      s += oi[j];
    }
    for (int j = 0; j < T; ++j) oi[j] /= s;
  }
  return make_node(std::move(out), {x.node()}, [rows, T](Node& n) {
    auto& gx = n.parents[0]->grad.data;
    for (int i = 0; i < rows; ++i) {
      const double* p = n.value.data.data() + static_cast<size_t>(i) * T;
      const double* dy = n.grad.data.data() + static_cast<size_t>(i) * T;
      double dot = 0.0;
      for (int j = 0; j < T; ++j) dot += p[j] * dy[j];
      for (int j = 0; j < T; ++j)
        gx[static_cast<size_t>(i) * T + j] += p[j] * (dy[j] - dot);
    }
  });
}

Tensor mask_scores(const Tensor& scores, const Array* key_mask, bool causal) {
  const Array& sv = scores.value();
  check(sv.ndim() == 4, "mask_scores: expect [B,H,Sq,Sk]");
  int B = sv.dim(0), H = sv.dim(1), Sq = sv.dim(2), Sk = sv.dim(3);
  const double NEG = -1e30;
  Array out = sv;
  if (key_mask) {
    check(key_mask->ndim() == 2 && key_mask->dim(0) == B &&
              key_mask->dim(1) == Sk,
          "mask_scores: key mask shape");
  }
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < H; ++h)
      for (int q = 0; q < Sq; ++q) {
        double* row =
            out.data.data() +
            (((static_cast<size_t>(b) * H + h) * Sq + q) * Sk);
        for (int k = 0; k < Sk; ++k) {
          bool masked = false;
          if (key_mask &&
              key_mask->data[static_cast<size_t>(b) * Sk + k] != 0.0)
            masked = true;
          if (causal && k > q) masked = true;
          if (masked) row[k] = NEG;
        }
      }
  // gradient passes through unmasked entries only
  Array keep(sv.shape, 1.0);
  for (std::int64_t i = 0; i < keep.size(); ++i)
    if (out.data[static_cast<size_t>(i)] == NEG) keep.data[static_cast<size_t>(i)] = 0.0;
  return make_node(std::move(out), {scores.node()},
                   [keep = std::move(keep)](Node& n) {
                     auto& g = n.parents[0]->grad.data;
                     for (size_t i = 0; i < g.size(); ++i)
                       g[i] += n.grad.data[i] * keep.data[i];
                   });
}

Tensor zero_rows(const Tensor& x, const Array& mask) {
  const Array& xv = x.value();
  check(xv.ndim() == 3, "zero_rows: expect rank 3");
  int B = xv.dim(0), S = xv.dim(1), E = xv.dim(2);
  check(mask.ndim() == 2 && mask.dim(0) == B && mask.dim(1) == S,
        "zero_rows: mask shape");
  Array out = xv;
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      if (mask.data[static_cast<size_t>(b) * S + s] != 0.0)
        for (int e = 0; e < E; ++e)
          out.data[(static_cast<size_t>(b) * S + s) * E + e] = 0.0;
  Array keep = mask;
  return make_node(std::move(out), {x.node()},
                   [B, S, E, keep = std::move(keep)](Node& n) {
                     auto& g = n.parents[0]->grad.data;
                     for (int b = 0; b < B; ++b)
                       for (int s = 0; s < S; ++s) {
                         if (keep.data[static_cast<size_t>(b) * S + s] != 0.0)
                           continue;
                         for (int e = 0; e < E; ++e) {
                           size_t i = (static_cast<size_t>(b) * S + s) * E + e;
                           g[i] += n.grad.data[i];
                         }
                       }
                   });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  check(p >= 0.0 && p < 1.0, "dropout: p out of range");
  if (p == 0.0) return x;
  const Array& xv = x.value();
  Array mask(xv.shape);
  double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask.data) m = rng.uniform() < p ? 0.0 : keep_scale;
  Array out = xv;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
  return make_node(std::move(out), {x.node()}, [mask = std::move(mask)](Node& n) {
    auto& g = n.parents[0]->grad.data;
    for (size_t i = 0; i < g.size(); ++i)
      g[i] += n.grad.data[i] * mask.data[i];
  });
}

// ---------------- fused losses ----------------

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& labels,
                            const Array& pad_mask, bool mean_over_batch) {
  const Array& lv = logits.value();
  check(lv.ndim() == 3, "cross_entropy: expect [B,S,T]");
  int B = lv.dim(0), S = lv.dim(1), T = lv.dim(2);
  check(static_cast<int>(labels.size()) == B * S, "cross_entropy: label count");
  check(pad_mask.size() == B * S, "cross_entropy: mask size");
  const double log_floor = std::log(1e-12);
  double denom = mean_over_batch ? static_cast<double>(B) : 1.0;

  Array probs({B, S, T});
  double total = 0.0;
  for (int i = 0; i < B * S; ++i) {
    const double* xi = lv.data.data() + static_cast<size_t>(i) * T;
    double* pi = probs.data.data() + static_cast<size_t>(i) * T;
    double mx = xi[0];
    for (int j = 1; j < T; ++j) mx = std::max(mx, xi[j]);
    double s = 0.0;
    for (int j = 0; j < T; ++j) {
      pi[j] = std::exp(xi[j] - mx);
      s += pi[j];
    }
    for (int j = 0; j < T; ++j) pi[j] /= s;
    if (pad_mask.data[static_cast<size_t>(i)] != 0.0) continue;
    int y = labels[static_cast<size_t>(i)];
    check(y >= 0 && y < T, "cross_entropy: label out of range");
    double logp = (xi[y] - mx) - std::log(s);
    if (logp < log_floor) logp = log_floor;
    total -= logp;
  }
  Array out({1});
  out.data[0] = total / denom;
  Array mask_copy = pad_mask;
  return make_node(std::move(out), {logits.node()},
                   [B, S, T, denom, labels, probs = std::move(probs),
                    mask_copy = std::move(mask_copy)](Node& n) {
                     double g = n.grad.data[0] / denom;
                     auto& gx = n.parents[0]->grad.data;
                     for (int i = 0; i < B * S; ++i) {
                       if (mask_copy.data[static_cast<size_t>(i)] != 0.0)
                         continue;
                       const double* pi =
                           probs.data.data() + static_cast<size_t>(i) * T;
                       int y = labels[static_cast<size_t>(i)];
                       for (int j = 0; j < T; ++j)
                         gx[static_cast<size_t>(i) * T + j] += g * pi[j];
                       gx[static_cast<size_t>(i) * T + y] -= g;
                     }
                   });
}

namespace {
double rbf(const double* a, const double* b, int D, double two_sigma_sq) {
  double ss = 0.0;
  for (int d = 0; d < D; ++d) {
    double diff = a[d] - b[d];
    ss += diff * diff;
  }
  return std::exp(-(ss / D) / two_sigma_sq);
}
}  // namespace

Tensor kernel_cross_mean(const Tensor& x, const Array& y, double two_sigma_sq) {
  const Array& xv = x.value();
  check(xv.ndim() == 2 && y.ndim() == 2, "kernel_cross_mean: expect rank 2");
  check(xv.dim(1) == y.dim(1), "kernel_cross_mean: dimension mismatch");
  check(xv.dim(0) > 0 && y.dim(0) > 0, "kernel_cross_mean: empty set");
  check(two_sigma_sq > 0.0, "kernel_cross_mean: bandwidth must be positive");
  int N = xv.dim(0), Ny = y.dim(0), D = xv.dim(1);
  Array kmat({N, Ny});
  double s = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < Ny; ++j) {
      double k = rbf(xv.data.data() + static_cast<size_t>(i) * D,
                     y.data.data() + static_cast<size_t>(j) * D, D, two_sigma_sq);
      kmat.data[static_cast<size_t>(i) * Ny + j] = k;
      s += k;
    }
  Array out({1});
  out.data[0] = s / (static_cast<double>(N) * Ny);
  Array y_copy = y;
  return make_node(
      std::move(out), {x.node()},
      [N, Ny, D, two_sigma_sq, kmat = std::move(kmat),
       y_copy = std::move(y_copy)](Node& n) {
        double g = n.grad.data[0] / (static_cast<double>(N) * Ny);
        const auto& xv2 = n.parents[0]->value;
        auto& gx = n.parents[0]->grad.data;
        double c = -2.0 / (D * two_sigma_sq);
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < Ny; ++j) {
            double k = kmat.data[static_cast<size_t>(i) * Ny + j];
            for (int d = 0; d < D; ++d)
              gx[static_cast<size_t>(i) * D + d] +=
                  g * k * c *
                  (xv2.data[static_cast<size_t>(i) * D + d] -
                   y_copy.data[static_cast<size_t>(j) * D + d]);
          }
      });
}

Tensor kernel_self_mean(const Tensor& x, double two_sigma_sq) {
  const Array& xv = x.value();
  check(xv.ndim() == 2, "kernel_self_mean: expect rank 2");
  check(xv.dim(0) > 0, "kernel_self_mean: empty set");
  check(two_sigma_sq > 0.0, "kernel_self_mean: bandwidth must be positive");
  int N = xv.dim(0), D = xv.dim(1);
  Array kmat({N, N});
  double s = 0.0;
  for (int i = 0; i < N; ++i) {
    kmat.data[static_cast<size_t>(i) * N + i] = 1.0;
    s += 1.0;
    for (int j = i + 1; j < N; ++j) {
      double k = rbf(xv.data.data() + static_cast<size_t>(i) * D,
                     xv.data.data() + static_cast<size_t>(j) * D, D,
                     two_sigma_sq);
      kmat.data[static_cast<size_t>(i) * N + j] = k;
      kmat.data[static_cast<size_t>(j) * N + i] = k;
      s += 2.0 * k;
    }
  }
  Array out({1});
  out.data[0] = s / (static_cast<double>(N) * N);
  return make_node(std::move(out), {x.node()},
                   [N, D, two_sigma_sq, kmat = std::move(kmat)](Node& n) {
                     double g = n.grad.data[0] / (static_cast<double>(N) * N);
                     const auto& xv2 = n.parents[0]->value;
                     auto& gx = n.parents[0]->grad.data;
                     double c = -2.0 / (D * two_sigma_sq);
                     for (int i = 0; i < N; ++i)
                       for (int j = 0; j < N; ++j) {
                         if (i == j) continue;
                         double k = kmat.data[static_cast<size_t>(i) * N + j];
                         for (int d = 0; d < D; ++d)
                           gx[static_cast<size_t>(i) * D + d] +=
                               2.0 * g * k * c *
                               (xv2.data[static_cast<size_t>(i) * D + d] -
                                xv2.data[static_cast<size_t>(j) * D + d]);
                       }
                   });
}

}  // namespace kae
