#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gbm/conv.hpp"
#include "gbm/image.hpp"
#include "gbm/tensor.hpp"

namespace gbm {

// Reverse-mode tape. Each forward call builds a fresh graph of Node values;
// backward() walks it once in reverse topological order. Parameter nodes are
// long-lived and accumulate gradients across calls until zero_grad.
template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  double scalar = std::numeric_limits<double>::quiet_NaN();  // losses only
  bool requires_grad = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;

  void ensure_grad() {
    if (grad.size() != value.size() || !grad.same_shape(value)) {
      grad = Tensor<S>(value.n, value.c, value.h, value.w);
    }
  }
};

template <typename S>
using NodePtr = std::shared_ptr<Node<S>>;

template <typename S>
NodePtr<S> make_input(Tensor<S> value) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->requires_grad = false;
  return n;
}

namespace detail {

template <typename S>
NodePtr<S> make_op(Tensor<S> value, std::vector<NodePtr<S>> parents) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->requires_grad = false;
  for (const auto& p : n->parents) n->requires_grad = n->requires_grad || p->requires_grad;
  return n;
}

}  // namespace detail

template <typename S>
void backward(const NodePtr<S>& root) {
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::function<void(Node<S>*)> dfs = [&](Node<S>* nd) {
    if (!seen.insert(nd).second) return;
    for (const auto& p : nd->parents) dfs(p.get());
    order.push_back(nd);
  };
  dfs(root.get());
  root->ensure_grad();
  root->grad.data.setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* nd = *it;
    if (nd->backprop && nd->requires_grad && nd->grad.size() > 0) nd->backprop();
  }
}

// Named trainable tensor; the node outlives individual tapes.
template <typename S>
struct Param {
  std::string name;
  NodePtr<S> node;

  Tensor<S>& value() const { return node->value; }
  Tensor<S>& grad() const {
    node->ensure_grad();
    return node->grad;
  }
};

template <typename S>
Param<S> make_param(std::string name, Tensor<S> value) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->ensure_grad();
  return Param<S>{std::move(name), std::move(n)};
}

template <typename S>
Tensor<S> he_normal(int n, int c, int h, int w, int fan_in, std::mt19937& rng) {
  if (fan_in <= 0) throw ValidationError("he_normal: fan_in must be > 0");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor<S> t(n, c, h, w);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<S>(dist(rng));
  return t;
}

// ---- ops ------------------------------------------------------------------

template <typename S>
NodePtr<S> conv2d(const NodePtr<S>& x, const NodePtr<S>& w, const NodePtr<S>& b, int stride,
                  int pad, int dil = 1) {
  Tensor<S> y = conv2d_forward(x->value, w->value, b ? &b->value : nullptr, stride, pad, dil);
  std::vector<NodePtr<S>> parents{x, w};
  if (b) parents.push_back(b);
  auto n = detail::make_op(std::move(y), std::move(parents));
  Node<S>*xp = x.get(), *wp = w.get(), *np = n.get();
  Node<S>* bp = b ? b.get() : nullptr;
  n->backprop = [xp, wp, bp, np, stride, pad, dil] {
    wp->ensure_grad();
    if (bp) bp->ensure_grad();
    Tensor<S>* gx = nullptr;
    if (xp->requires_grad) {
      xp->ensure_grad();
      gx = &xp->grad;
    }
    conv2d_backward(xp->value, wp->value, np->grad, stride, pad, dil, gx, wp->grad,
                    bp ? &bp->grad : nullptr);
  };
  return n;
}

// Flattens (n, c, h, w) to n feature rows; weight is (out, c*h*w).
template <typename S>
NodePtr<S> dense(const NodePtr<S>& x, const NodePtr<S>& w, const NodePtr<S>& b) {
  const Eigen::Index feat = static_cast<Eigen::Index>(x->value.c) * x->value.h * x->value.w;
  if (w->value.c != feat || w->value.h != 1 || w->value.w != 1) {
    throw ValidationError("dense: weight shape does not match flattened input");
  }
  const int batch = x->value.n, out = w->value.n;
  Eigen::Map<const MatRM<S>> X(x->value.data.data(), batch, feat);
  Eigen::Map<const MatRM<S>> W(w->value.data.data(), out, feat);
  Tensor<S> y(batch, out, 1, 1);
  Eigen::Map<MatRM<S>> Y(y.data.data(), batch, out);
  Y.noalias() = X * W.transpose();
  if (b) {
    for (int i = 0; i < batch; ++i) {
      Y.row(i) += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b->value.data.data(), out);
    }
  }
  std::vector<NodePtr<S>> parents{x, w};
  if (b) parents.push_back(b);
  auto n = detail::make_op(std::move(y), std::move(parents));
  Node<S>*xp = x.get(), *wp = w.get(), *np = n.get();
  Node<S>* bp = b ? b.get() : nullptr;
  n->backprop = [xp, wp, bp, np, batch, out, feat] {
    Eigen::Map<const MatRM<S>> GY(np->grad.data.data(), batch, out);
    Eigen::Map<const MatRM<S>> X2(xp->value.data.data(), batch, feat);
    Eigen::Map<const MatRM<S>> W2(wp->value.data.data(), out, feat);
    wp->ensure_grad();
    Eigen::Map<MatRM<S>> GW(wp->grad.data.data(), out, feat);
    GW.noalias() += GY.transpose() * X2;
    if (bp) {
      bp->ensure_grad();
      for (int oc = 0; oc < out; ++oc) bp->grad.data[oc] += GY.col(oc).sum();
    }
    if (xp->requires_grad) {
      xp->ensure_grad();
      Eigen::Map<MatRM<S>> GX(xp->grad.data.data(), batch, feat);
      GX.noalias() += GY * W2;
    }
  };
  return n;
}

template <typename S>
NodePtr<S> relu(const NodePtr<S>& x) {
  Tensor<S> y = x->value;
  y.data = y.data.max(S(0));
  auto n = detail::make_op(std::move(y), {x});
  Node<S>*xp = x.get(), *np = n.get();
  n->backprop = [xp, np] {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    xp->grad.data += np->grad.data * (xp->value.data > S(0)).template cast<S>();
  };
  return n;
}

template <typename S>
NodePtr<S> add(const NodePtr<S>& a, const NodePtr<S>& b) {
  if (!a->value.same_shape(b->value)) throw ValidationError("add: shape mismatch");
  Tensor<S> y = a->value;
  y.data += b->value.data;
  auto n = detail::make_op(std::move(y), {a, b});
  Node<S>*ap = a.get(), *bp = b.get(), *np = n.get();
  n->backprop = [ap, bp, np] {
    for (Node<S>* p : {ap, bp}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      p->grad.data += np->grad.data;
    }
  };
  return n;
}

template <typename S>
NodePtr<S> maxpool(const NodePtr<S>& x, int k, int stride, int pad = 0) {
  const auto& xv = x->value;
  const int oh = conv_out_size(xv.h, k, stride, pad, 1);
  const int ow = conv_out_size(xv.w, k, stride, pad, 1);
  Tensor<S> y(xv.n, xv.c, oh, ow);
  auto argmax = std::make_shared<std::vector<Eigen::Index>>(static_cast<size_t>(y.size()), -1);
  Eigen::Index oi = 0;
  for (int ni = 0; ni < xv.n; ++ni) {
    for (int ci = 0; ci < xv.c; ++ci) {
      const auto src = xv.plane(ni, ci);
      const Eigen::Index base = xv.offset(ni, ci);
      for (int r = 0; r < oh; ++r) {
        for (int cc = 0; cc < ow; ++cc, ++oi) {
          S best = std::numeric_limits<S>::lowest();
          Eigen::Index best_idx = -1;
          for (int ky = 0; ky < k; ++ky) {
            const int sy = r * stride - pad + ky;
            if (sy < 0 || sy >= xv.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int sx = cc * stride - pad + kx;
              if (sx < 0 || sx >= xv.w) continue;
              if (best_idx < 0 || src(sy, sx) > best) {
                best = src(sy, sx);
                best_idx = base + static_cast<Eigen::Index>(sy) * xv.w + sx;
              }
            }
          }
          y.data[oi] = best_idx >= 0 ? best : S(0);
          (*argmax)[static_cast<size_t>(oi)] = best_idx;
        }
      }
    }
  }
  auto n = detail::make_op(std::move(y), {x});
  Node<S>*xp = x.get(), *np = n.get();
  n->backprop = [xp, np, argmax] {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    for (Eigen::Index i = 0; i < np->grad.size(); ++i) {
      const Eigen::Index src = (*argmax)[static_cast<size_t>(i)];
      if (src >= 0) xp->grad.data[src] += np->grad.data[i];
    }
  };
  return n;
}

template <typename S>
NodePtr<S> upsample_nearest2(const NodePtr<S>& x) {
  const auto& xv = x->value;
  Tensor<S> y(xv.n, xv.c, xv.h * 2, xv.w * 2);
  for (int ni = 0; ni < xv.n; ++ni) {
    for (int ci = 0; ci < xv.c; ++ci) {
      const auto src = xv.plane(ni, ci);
      auto dst = y.plane(ni, ci);
      for (int r = 0; r < y.h; ++r) {
        for (int cc = 0; cc < y.w; ++cc) dst(r, cc) = src(r / 2, cc / 2);
      }
    }
  }
  auto n = detail::make_op(std::move(y), {x});
  Node<S>*xp = x.get(), *np = n.get();
  n->backprop = [xp, np] {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    for (int ni = 0; ni < xp->value.n; ++ni) {
      for (int ci = 0; ci < xp->value.c; ++ci) {
        const auto g = np->grad.plane(ni, ci);
        auto dst = xp->grad.plane(ni, ci);
        for (int r = 0; r < g.rows(); ++r) {
          for (int cc = 0; cc < g.cols(); ++cc) dst(r / 2, cc / 2) += g(r, cc);
        }
      }
    }
  };
  return n;
}

namespace detail {

struct ResizeAxis {
  std::vector<Eigen::Index> lo, hi;
  std::vector<double> frac;
};

// Half-pixel source mapping clamped to the valid range (identity when sizes
// match; broadcasts from a single source element).
inline ResizeAxis resize_axis(int in, int out) {
  ResizeAxis ax;
  ax.lo.resize(out);
  ax.hi.resize(out);
  ax.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::min(std::max(s, 0.0), static_cast<double>(in - 1));
    const double f = std::floor(s);
    ax.lo[i] = static_cast<Eigen::Index>(f);
    ax.hi[i] = std::min<Eigen::Index>(ax.lo[i] + 1, in - 1);
    ax.frac[i] = s - f;
  }
  return ax;
}

}  // namespace detail

template <typename S>
NodePtr<S> resize_bilinear(const NodePtr<S>& x, int oh, int ow) {
  const auto& xv = x->value;
  if (oh <= 0 || ow <= 0) throw ValidationError("resize_bilinear: output dims must be > 0");
  auto ay = std::make_shared<detail::ResizeAxis>(detail::resize_axis(xv.h, oh));
  auto axx = std::make_shared<detail::ResizeAxis>(detail::resize_axis(xv.w, ow));
  Tensor<S> y(xv.n, xv.c, oh, ow);
  for (int ni = 0; ni < xv.n; ++ni) {
    for (int ci = 0; ci < xv.c; ++ci) {
      const auto src = xv.plane(ni, ci);
      auto dst = y.plane(ni, ci);
      for (int r = 0; r < oh; ++r) {
        const double wy = ay->frac[r];
        for (int cc = 0; cc < ow; ++cc) {
          const double wx = axx->frac[cc];
          const double top = (1.0 - wx) * src(ay->lo[r], axx->lo[cc]) +
                             wx * src(ay->lo[r], axx->hi[cc]);
          const double bot = (1.0 - wx) * src(ay->hi[r], axx->lo[cc]) +
                             wx * src(ay->hi[r], axx->hi[cc]);
          dst(r, cc) = static_cast<S>((1.0 - wy) * top + wy * bot);
        }
      }
    }
  }
  auto n = detail::make_op(std::move(y), {x});
  Node<S>*xp = x.get(), *np = n.get();
  n->backprop = [xp, np, ay, axx, oh, ow] {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    for (int ni = 0; ni < xp->value.n; ++ni) {
      for (int ci = 0; ci < xp->value.c; ++ci) {
        const auto g = np->grad.plane(ni, ci);
        auto dst = xp->grad.plane(ni, ci);
        for (int r = 0; r < oh; ++r) {
          const double wy = ay->frac[r];
          for (int cc = 0; cc < ow; ++cc) {
            const double wx = axx->frac[cc];
            const double gv = static_cast<double>(g(r, cc));
            dst(ay->lo[r], axx->lo[cc]) += static_cast<S>((1.0 - wy) * (1.0 - wx) * gv);
            dst(ay->lo[r], axx->hi[cc]) += static_cast<S>((1.0 - wy) * wx * gv);
            dst(ay->hi[r], axx->lo[cc]) += static_cast<S>(wy * (1.0 - wx) * gv);
            dst(ay->hi[r], axx->hi[cc]) += static_cast<S>(wy * wx * gv);
          }
        }
      }
    }
  };
  return n;
}

template <typename S>
NodePtr<S> global_avg_pool(const NodePtr<S>& x) {
  const auto& xv = x->value;
  Tensor<S> y(xv.n, xv.c, 1, 1);
  const double inv = 1.0 / (static_cast<double>(xv.h) * xv.w);
  for (int ni = 0; ni < xv.n; ++ni) {
    for (int ci = 0; ci < xv.c; ++ci) {
      y.at(ni, ci, 0, 0) = static_cast<S>(xv.plane(ni, ci).template cast<double>().sum() * inv);
    }
  }
  auto n = detail::make_op(std::move(y), {x});
  Node<S>*xp = x.get(), *np = n.get();
  n->backprop = [xp, np, inv] {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    for (int ni = 0; ni < xp->value.n; ++ni) {
      for (int ci = 0; ci < xp->value.c; ++ci) {
        xp->grad.plane(ni, ci) += static_cast<S>(np->grad.at(ni, ci, 0, 0) * inv);
      }
    }
  };
  return n;
}

template <typename S>
NodePtr<S> concat_channels(const std::vector<NodePtr<S>>& xs) {
  if (xs.empty()) throw ValidationError("concat_channels: empty input list");
  const auto& first = xs[0]->value;
  int total_c = 0;
  for (const auto& x : xs) {
    if (x->value.n != first.n || x->value.h != first.h || x->value.w != first.w) {
      throw ValidationError("concat_channels: spatial/batch shape mismatch");
    }
    total_c += x->value.c;
  }
  Tensor<S> y(first.n, total_c, first.h, first.w);
  for (int ni = 0; ni < first.n; ++ni) {
    int co = 0;
    for (const auto& x : xs) {
      for (int ci = 0; ci < x->value.c; ++ci, ++co) y.plane(ni, co) = x->value.plane(ni, ci);
    }
  }
  std::vector<NodePtr<S>> parents = xs;
  auto n = detail::make_op(std::move(y), std::move(parents));
  Node<S>* np = n.get();
  std::vector<Node<S>*> raw;
  for (const auto& x : xs) raw.push_back(x.get());
  n->backprop = [raw, np] {
    for (int ni = 0; ni < np->value.n; ++ni) {
      int co = 0;
      for (Node<S>* p : raw) {
        if (!p->requires_grad) {
          co += p->value.c;
          continue;
        }
        p->ensure_grad();
        for (int ci = 0; ci < p->value.c; ++ci, ++co) {
          p->grad.plane(ni, ci) += np->grad.plane(ni, co);
        }
      }
    }
  };
  return n;
}

// ---- losses ----------------------------------------------------------------
// Loss nodes are scalar tensors; their double-precision value is kept in
// Node::scalar so reporting does not round through S.

// Binary cross-entropy on a single logit per sample; probabilities clamp to
// [eps, 1-eps] and clamped samples contribute zero gradient.
template <typename S>
NodePtr<S> bce_with_logits(const NodePtr<S>& logits, const std::vector<int>& labels,
                           double eps = 1e-7) {
  const auto& lv = logits->value;
  if (lv.c != 1 || lv.h != 1 || lv.w != 1) {
    throw ValidationError("bce_with_logits: expected one logit per sample");
  }
  if (static_cast<size_t>(lv.n) != labels.size()) {
    throw ValidationError("bce_with_logits: label count mismatch");
  }
  double total = 0.0;
  for (int i = 0; i < lv.n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("bce_with_logits: labels must be 0/1");
    const double z = static_cast<double>(lv.data[i]);
    const double p = std::min(std::max(1.0 / (1.0 + std::exp(-z)), eps), 1.0 - eps);
    total += labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  const double loss = total / lv.n;
  Tensor<S> y(1, 1, 1, 1);
  y.data[0] = static_cast<S>(loss);
  auto n = detail::make_op(std::move(y), {logits});
  n->scalar = loss;
  Node<S>*xp = logits.get(), *np = n.get();
  auto lab = std::make_shared<std::vector<int>>(labels);
  n->backprop = [xp, np, lab, eps] {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    const double g = static_cast<double>(np->grad.data[0]) / xp->value.n;
    for (int i = 0; i < xp->value.n; ++i) {
      const double z = static_cast<double>(xp->value.data[i]);
      const double p = 1.0 / (1.0 + std::exp(-z));
      if (p <= eps || p >= 1.0 - eps) continue;  // clamped: flat loss
      xp->grad.data[i] += static_cast<S>(g * (p - (*lab)[i]));
    }
  };
  return n;
}

// Per-pixel softmax cross-entropy averaged over batch * H * W.
template <typename S>
NodePtr<S> softmax_cross_entropy(const NodePtr<S>& logits,
                                 const std::vector<SegmentationMask>& targets) {
  const auto& lv = logits->value;
  if (static_cast<size_t>(lv.n) != targets.size()) {
    throw ValidationError("softmax_cross_entropy: target count mismatch");
  }
  for (const auto& t : targets) {
    if (t.rows() != lv.h || t.cols() != lv.w) {
      throw ValidationError("softmax_cross_entropy: target size mismatch");
    }
    if ((t < 0).any() || (t >= lv.c).any()) {
      throw ValidationError("softmax_cross_entropy: target class out of range");
    }
  }
  const double denom = static_cast<double>(lv.n) * lv.h * lv.w;
  double total = 0.0;
  std::vector<double> zs(static_cast<size_t>(lv.c));
  for (int ni = 0; ni < lv.n; ++ni) {
    for (int r = 0; r < lv.h; ++r) {
      for (int cc = 0; cc < lv.w; ++cc) {
        double zmax = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < lv.c; ++k) {
          zs[k] = static_cast<double>(lv.at(ni, k, r, cc));
          zmax = std::max(zmax, zs[k]);
        }
        double sum = 0.0;
        for (int k = 0; k < lv.c; ++k) sum += std::exp(zs[k] - zmax);
        total += std::log(sum) + zmax - zs[targets[static_cast<size_t>(ni)](r, cc)];
      }
    }
  }
  const double loss = total / denom;
  Tensor<S> y(1, 1, 1, 1);
  y.data[0] = static_cast<S>(loss);
  auto n = detail::make_op(std::move(y), {logits});
  n->scalar = loss;
  Node<S>*xp = logits.get(), *np = n.get();
  auto tgt = std::make_shared<std::vector<SegmentationMask>>(targets);
  n->backprop = [xp, np, tgt, denom] {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    const auto& lv2 = xp->value;
    const double g = static_cast<double>(np->grad.data[0]) / denom;
    std::vector<double> zs2(static_cast<size_t>(lv2.c));
    for (int ni = 0; ni < lv2.n; ++ni) {
      for (int r = 0; r < lv2.h; ++r) {
        for (int cc = 0; cc < lv2.w; ++cc) {
          double zmax = -std::numeric_limits<double>::infinity();
          for (int k = 0; k < lv2.c; ++k) {
            zs2[k] = static_cast<double>(lv2.at(ni, k, r, cc));
            zmax = std::max(zmax, zs2[k]);
          }
          double sum = 0.0;
          for (int k = 0; k < lv2.c; ++k) sum += std::exp(zs2[k] - zmax);
          const int t = (*tgt)[static_cast<size_t>(ni)](r, cc);
          for (int k = 0; k < lv2.c; ++k) {
            const double p = std::exp(zs2[k] - zmax) / sum;
            xp->grad.at(ni, k, r, cc) += static_cast<S>(g * (p - (k == t ? 1.0 : 0.0)));
          }
        }
      }
    }
  };
  return n;
}

template <typename S>
NodePtr<S> mse_loss(const NodePtr<S>& pred, const Tensor<S>& target) {
  if (!pred->value.same_shape(target)) throw ValidationError("mse_loss: shape mismatch");
  const double denom = static_cast<double>(pred->value.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred->value.size(); ++i) {
    const double d = static_cast<double>(pred->value.data[i]) - static_cast<double>(target.data[i]);
    total += d * d;
  }
  const double loss = total / denom;
  Tensor<S> y(1, 1, 1, 1);
  y.data[0] = static_cast<S>(loss);
  auto n = detail::make_op(std::move(y), {pred});
  n->scalar = loss;
  Node<S>*xp = pred.get(), *np = n.get();
  auto tgt = std::make_shared<Tensor<S>>(target);
  n->backprop = [xp, np, tgt, denom] {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    const double g = 2.0 * static_cast<double>(np->grad.data[0]) / denom;
    for (Eigen::Index i = 0; i < xp->value.size(); ++i) {
      xp->grad.data[i] += static_cast<S>(
          g * (static_cast<double>(xp->value.data[i]) - static_cast<double>(tgt->data[i])));
    }
  };
  return n;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace gbm
