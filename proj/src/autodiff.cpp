#include "megalap/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "megalap/params.hpp"

namespace megalap {

namespace {

double stable_sigmoid(double x) {
  double s;
  if (x >= 0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  // keep the advertised open-interval range even when exp saturates
  s = std::min(s, std::nextafter(1.0, 0.0));
  s = std::max(s, std::numeric_limits<double>::denorm_min());
  return s;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Tensor& Node::grad_ref() {
  if (!grad.defined()) grad = Tensor(value.shape());
  return grad;
}

void Node::accumulate(i64 i, double g) { grad_ref()[i] += g; }

void Node::accumulate_all(const Tensor& g) {
  Tensor& dst = grad_ref();
  for (i64 i = 0; i < g.numel(); ++i) dst[i] += g[i];
}

const Tensor& Var::grad() const { return node_->grad_ref(); }

Var Tape::make(Tensor value, bool requires_grad, std::string label) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->index = nodes_.size();
  n->label = std::move(label);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.back().get());
}

Var Tape::constant(Tensor value, std::string label) { return make(std::move(value), false, std::move(label)); }

Var Tape::leaf(Tensor value, std::string label) { return make(std::move(value), true, std::move(label)); }

Var Tape::use(Parameter& p) {
  Var v = make(p.value, true, p.name);
  v.node()->owner = &p;
  return v;
}

void Tape::reset() {
  nodes_.clear();
  backward_done = false;
}

void backward(const Var& loss) {
  Tape& tape = *loss.tape();
  if (tape.backward_done)
    throw std::logic_error("backward() already ran on this tape; call Tape::reset() before the next pass");
  if (loss.value().numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_string(loss.shape()));

  loss.node()->grad_ref()[0] = 1.0;
  for (size_t i = loss.node()->index + 1; i-- > 0;) {
    Node& n = tape.node(i);
    if (!n.grad.defined() || !n.backprop) continue;
    n.backprop(n);
  }
  // flush into parameters in tape order so accumulation is deterministic
  for (size_t i = 0; i < tape.size(); ++i) {
    Node& n = tape.node(i);
    if (n.owner && n.grad.defined()) {
      if (!n.owner->grad.defined()) n.owner->grad = Tensor(n.value.shape());
      for (i64 j = 0; j < n.grad.numel(); ++j) n.owner->grad[j] += n.grad[j];
    }
  }
  tape.backward_done = true;
}

i64 reflect_index(i64 p, i64 n) {
  while (p < 0 || p >= n) {
    if (p < 0) p = -p - 1;
    if (p >= n) p = 2 * n - 1 - p;
  }
  return p;
}

std::vector<LerpTap> lerp_taps(i64 in, i64 out) {
  std::vector<LerpTap> taps(static_cast<size_t>(out));
  for (i64 o = 0; o < out; ++o) {
    double p = (out > 1) ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1)
                         : static_cast<double>(in - 1) / 2.0;
    i64 lo = static_cast<i64>(std::floor(p));
    lo = std::clamp<i64>(lo, 0, std::max<i64>(in - 2, 0));
    i64 hi = std::min<i64>(lo + 1, in - 1);
    taps[static_cast<size_t>(o)] = {lo, hi, p - static_cast<double>(lo)};
  }
  return taps;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

Var conv2d(const Var& input, const Var& weight, const Var& bias, i64 stride, Padding padding) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require(x.rank() == 4, "conv2d: input must be [B,Cin,H,W], got " + shape_string(x.shape()));
  require(w.rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw], got " + shape_string(w.shape()));
  const i64 B = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3);
  const i64 Cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  require(w.extent(1) == Cin, "conv2d: weight input channels " + std::to_string(w.extent(1)) +
                                  " do not match input channels " + std::to_string(Cin));
  require(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel extents must be odd, got " + shape_string(w.shape()));
  require(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
  require(b.rank() == 1 && b.extent(0) == Cout,
          "conv2d: bias must be [Cout]=" + std::to_string(Cout) + ", got " + shape_string(b.shape()));

  const i64 ph = (padding == Padding::Valid) ? 0 : (kh - 1) / 2;
  const i64 pw = (padding == Padding::Valid) ? 0 : (kw - 1) / 2;
  const i64 OH = (H + 2 * ph - kh) / stride + 1;
  const i64 OW = (W + 2 * pw - kw) / stride + 1;
  require(OH >= 1 && OW >= 1, "conv2d: kernel " + shape_string(w.shape()) + " too large for input height/width " +
                                  std::to_string(H) + "x" + std::to_string(W));

  // Precompute source coordinates per (output position, kernel tap); -1 means
  // the tap reads the zero pad.
  auto build_map = [&](i64 out, i64 k, i64 pad, i64 n) {
    std::vector<i64> map(static_cast<size_t>(out * k));
    for (i64 o = 0; o < out; ++o)
      for (i64 t = 0; t < k; ++t) {
        i64 p = o * stride - pad + t;
        if (p < 0 || p >= n) p = (padding == Padding::Reflect) ? reflect_index(p, n) : -1;
        map[static_cast<size_t>(o * k + t)] = p;
      }
    return map;
  };
  auto ymap = std::make_shared<std::vector<i64>>(build_map(OH, kh, ph, H));
  auto xmap = std::make_shared<std::vector<i64>>(build_map(OW, kw, pw, W));

  Tensor out({B, Cout, OH, OW});
  {
    const double* xd = x.data();
    const double* wd = w.data();
    double* od = out.data();
    for (i64 bi = 0; bi < B; ++bi)
      for (i64 co = 0; co < Cout; ++co) {
        const double* wco = wd + co * Cin * kh * kw;
        const double bco = b[co];
        for (i64 oh = 0; oh < OH; ++oh) {
          const i64* ym = ymap->data() + oh * kh;
          for (i64 ow = 0; ow < OW; ++ow) {
            const i64* xm = xmap->data() + ow * kw;
            double acc = bco;
            for (i64 ci = 0; ci < Cin; ++ci) {
              const double* xc = xd + ((bi * Cin + ci) * H) * W;
              const double* wk = wco + ci * kh * kw;
              for (i64 i = 0; i < kh; ++i) {
                const i64 yy = ym[i];
                if (yy < 0) continue;
                const double* row = xc + yy * W;
                const double* wrow = wk + i * kw;
                for (i64 j = 0; j < kw; ++j) {
                  const i64 xx = xm[j];
                  if (xx >= 0) acc += row[xx] * wrow[j];
                }
              }
            }
            od[((bi * Cout + co) * OH + oh) * OW + ow] = acc;
          }
        }
      }
  }

  Node* xn = input.node();
  Node* wn = weight.node();
  Node* bn = bias.node();
  bool needs = xn->requires_grad || wn->requires_grad || bn->requires_grad;
  Var res = input.tape()->make(std::move(out), needs, "conv2d");
  if (needs) {
    res.node()->backprop = [xn, wn, bn, ymap, xmap, B, Cin, Cout, H, W, OH, OW, kh, kw](Node& self) {
      const double* gd = self.grad.data();
      const double* xd = xn->value.data();
      const double* wd = wn->value.data();
      double* dx = xn->requires_grad ? xn->grad_ref().data() : nullptr;
      double* dw = wn->requires_grad ? wn->grad_ref().data() : nullptr;
      double* db = bn->requires_grad ? bn->grad_ref().data() : nullptr;
      for (i64 bi = 0; bi < B; ++bi)
        for (i64 co = 0; co < Cout; ++co) {
          const double* wco = wd + co * Cin * kh * kw;
          double* dwco = dw ? dw + co * Cin * kh * kw : nullptr;
          for (i64 oh = 0; oh < OH; ++oh) {
            const i64* ym = ymap->data() + oh * kh;
            for (i64 ow = 0; ow < OW; ++ow) {
              const double g = gd[((bi * Cout + co) * OH + oh) * OW + ow];
              if (g == 0.0) continue;
              if (db) db[co] += g;
              const i64* xm = xmap->data() + ow * kw;
              for (i64 ci = 0; ci < Cin; ++ci) {
                const double* xc = xd + ((bi * Cin + ci) * H) * W;
                double* dxc = dx ? dx + ((bi * Cin + ci) * H) * W : nullptr;
                const double* wk = wco + ci * kh * kw;
                double* dwk = dwco ? dwco + ci * kh * kw : nullptr;
                for (i64 i = 0; i < kh; ++i) {
                  const i64 yy = ym[i];
                  if (yy < 0) continue;
                  for (i64 j = 0; j < kw; ++j) {
                    const i64 xx = xm[j];
                    if (xx < 0) continue;
                    if (dwk) dwk[i * kw + j] += xc[yy * W + xx] * g;
                    if (dxc) dxc[yy * W + xx] += wk[i * kw + j] * g;
                  }
                }
              }
            }
          }
        }
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// elementwise / unary
// ---------------------------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Var unary_op(const Var& x, const char* label, Fwd fwd, Bwd bwd_factor) {
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (i64 i = 0; i < v.numel(); ++i) out[i] = fwd(v[i]);
  Node* xn = x.node();
  Var res = x.tape()->make(std::move(out), xn->requires_grad, label);
  if (xn->requires_grad) {
    Node* on = res.node();
    res.node()->backprop = [xn, on, bwd_factor](Node& self) {
      double* dx = xn->grad_ref().data();
      const double* g = self.grad.data();
      const double* xv = xn->value.data();
      const double* ov = on->value.data();
      for (i64 i = 0; i < self.grad.numel(); ++i) dx[i] += g[i] * bwd_factor(xv[i], ov[i]);
    };
  }
  return res;
}

}  // namespace

Var sigmoid(const Var& x) {
  return unary_op(
      x, "sigmoid", [](double v) { return stable_sigmoid(v); },
      [](double /*xv*/, double s) { return s * (1.0 - s); });
}

Var relu(const Var& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0 ? v : 0.0; },
      [](double xv, double /*ov*/) { return xv > 0 ? 1.0 : 0.0; });
}

Var vabs(const Var& x) {
  return unary_op(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double xv, double /*ov*/) { return xv > 0 ? 1.0 : (xv < 0 ? -1.0 : 0.0); });
}

Var affine(const Var& x, double scale, double shift) {
  return unary_op(
      x, "affine", [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

// ---------------------------------------------------------------------------
// broadcasting binary ops
// ---------------------------------------------------------------------------

namespace {

struct BroadcastPlan {
  std::vector<i64> out_shape;
  std::vector<i64> stride_a, stride_b;
  i64 numel = 1;
};

BroadcastPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* op) {
  require(a.rank() == b.rank(), std::string(op) + ": operands must have equal rank, got " +
                                    shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const i64 r = a.rank();
  BroadcastPlan plan;
  plan.out_shape.resize(static_cast<size_t>(r));
  for (i64 i = 0; i < r; ++i) {
    i64 ea = a.extent(i), eb = b.extent(i);
    require(ea == eb || ea == 1 || eb == 1, std::string(op) + ": axis " + std::to_string(i) +
                                                " is incompatible: " + shape_string(a.shape()) + " vs " +
                                                shape_string(b.shape()));
    plan.out_shape[static_cast<size_t>(i)] = std::max(ea, eb);
    plan.numel *= std::max(ea, eb);
  }
  auto strides_of = [&](const Tensor& t) {
    std::vector<i64> s(static_cast<size_t>(r));
    i64 acc = 1;
    for (i64 i = r - 1; i >= 0; --i) {
      s[static_cast<size_t>(i)] = (t.extent(i) == 1 && plan.out_shape[static_cast<size_t>(i)] != 1) ? 0 : acc;
      acc *= t.extent(i);
    }
    return s;
  };
  plan.stride_a = strides_of(a);
  plan.stride_b = strides_of(b);
  return plan;
}

// Walks the broadcast output, calling fn(out_index, a_index, b_index).
template <class Fn>
void broadcast_walk(const BroadcastPlan& plan, Fn fn) {
  const i64 r = static_cast<i64>(plan.out_shape.size());
  std::vector<i64> coord(static_cast<size_t>(r), 0);
  i64 ia = 0, ib = 0;
  for (i64 o = 0; o < plan.numel; ++o) {
    fn(o, ia, ib);
    for (i64 ax = r - 1; ax >= 0; --ax) {
      coord[static_cast<size_t>(ax)]++;
      ia += plan.stride_a[static_cast<size_t>(ax)];
      ib += plan.stride_b[static_cast<size_t>(ax)];
      if (coord[static_cast<size_t>(ax)] < plan.out_shape[static_cast<size_t>(ax)]) break;
      ia -= plan.stride_a[static_cast<size_t>(ax)] * plan.out_shape[static_cast<size_t>(ax)];
      ib -= plan.stride_b[static_cast<size_t>(ax)] * plan.out_shape[static_cast<size_t>(ax)];
      coord[static_cast<size_t>(ax)] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

Var binary_op(const Var& a, const Var& b, BinOp op, const char* label) {
  auto plan = std::make_shared<BroadcastPlan>(broadcast_plan(a.value(), b.value(), label));
  Tensor out(plan->out_shape);
  const double* av = a.value().data();
  const double* bv = b.value().data();
  double* ov = out.data();
  broadcast_walk(*plan, [&](i64 o, i64 ia, i64 ib) {
    switch (op) {
      case BinOp::Add: ov[o] = av[ia] + bv[ib]; break;
      case BinOp::Sub: ov[o] = av[ia] - bv[ib]; break;
      case BinOp::Mul: ov[o] = av[ia] * bv[ib]; break;
    }
  });
  Node* anode = a.node();
  Node* bnode = b.node();
  bool needs = anode->requires_grad || bnode->requires_grad;
  Var res = a.tape()->make(std::move(out), needs, label);
  if (needs) {
    res.node()->backprop = [anode, bnode, plan, op](Node& self) {
      const double* g = self.grad.data();
      double* da = anode->requires_grad ? anode->grad_ref().data() : nullptr;
      double* db = bnode->requires_grad ? bnode->grad_ref().data() : nullptr;
      const double* av = anode->value.data();
      const double* bv = bnode->value.data();
      broadcast_walk(*plan, [&](i64 o, i64 ia, i64 ib) {
        switch (op) {
          case BinOp::Add:
            if (da) da[ia] += g[o];
            if (db) db[ib] += g[o];
            break;
          case BinOp::Sub:
            if (da) da[ia] += g[o];
            if (db) db[ib] -= g[o];
            break;
          case BinOp::Mul:
            if (da) da[ia] += g[o] * bv[ib];
            if (db) db[ib] += g[o] * av[ia];
            break;
        }
      });
    };
  }
  return res;
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary_op(a, b, BinOp::Add, "add"); }
Var sub(const Var& a, const Var& b) { return binary_op(a, b, BinOp::Sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary_op(a, b, BinOp::Mul, "mul"); }

Var div(const Var& a, const Var& b) {
  require(a.value().numel() == 1 && b.value().numel() == 1,
          "div: both operands must be scalars, got " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  const double av = a.value()[0], bv = b.value()[0];
  Node* anode = a.node();
  Node* bnode = b.node();
  bool needs = anode->requires_grad || bnode->requires_grad;
  Var res = a.tape()->make(Tensor({1}, {av / bv}), needs, "div");
  if (needs) {
    res.node()->backprop = [anode, bnode, av, bv](Node& self) {
      const double g = self.grad[0];
      if (anode->requires_grad) anode->accumulate(0, g / bv);
      if (bnode->requires_grad) bnode->accumulate(0, -g * av / (bv * bv));
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// concat / pooling / reductions
// ---------------------------------------------------------------------------

Var concat(const std::vector<Var>& xs, i64 axis) {
  require(!xs.empty(), "concat: need at least one input");
  const i64 r = xs[0].value().rank();
  require(axis >= 0 && axis < r, "concat: axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  std::vector<i64> out_shape = xs[0].value().shape();
  i64 axis_total = 0;
  for (const Var& x : xs) {
    require(x.value().rank() == r, "concat: rank mismatch");
    for (i64 i = 0; i < r; ++i)
      if (i != axis)
        require(x.value().extent(i) == out_shape[static_cast<size_t>(i)],
                "concat: axis " + std::to_string(i) + " mismatch: " + shape_string(x.value().shape()) + " vs " +
                    shape_string(out_shape));
    axis_total += x.value().extent(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;

  i64 outer = 1, inner = 1;
  for (i64 i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
  for (i64 i = axis + 1; i < r; ++i) inner *= out_shape[static_cast<size_t>(i)];

  Tensor out(out_shape);
  i64 offset = 0;
  for (const Var& x : xs) {
    const i64 block = x.value().extent(axis) * inner;
    const double* src = x.value().data();
    for (i64 o = 0; o < outer; ++o)
      std::copy(src + o * block, src + (o + 1) * block, out.data() + o * axis_total * inner + offset);
    offset += block;
  }

  std::vector<Node*> parents;
  bool needs = false;
  for (const Var& x : xs) {
    parents.push_back(x.node());
    needs = needs || x.node()->requires_grad;
  }
  Var res = xs[0].tape()->make(std::move(out), needs, "concat");
  if (needs) {
    res.node()->backprop = [parents, outer, inner, axis_total, axis](Node& self) {
      const double* g = self.grad.data();
      i64 offset = 0;
      for (Node* p : parents) {
        const i64 block = p->value.extent(axis) * inner;
        if (p->requires_grad) {
          double* dp = p->grad_ref().data();
          for (i64 o = 0; o < outer; ++o) {
            const double* gs = g + o * axis_total * inner + offset;
            double* dd = dp + o * block;
            for (i64 i = 0; i < block; ++i) dd[i] += gs[i];
          }
        }
        offset += block;
      }
    };
  }
  return res;
}

Var max_pool2d(const Var& x, i64 k, i64 stride) {
  const Tensor& v = x.value();
  require(v.rank() == 4, "max_pool2d: input must be [B,C,H,W], got " + shape_string(v.shape()));
  require(k >= 1 && stride >= 1, "max_pool2d: k and stride must be >= 1");
  const i64 B = v.extent(0), C = v.extent(1), H = v.extent(2), W = v.extent(3);
  const i64 OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  require(OH >= 1 && OW >= 1, "max_pool2d: window " + std::to_string(k) + " too large for input " +
                                  std::to_string(H) + "x" + std::to_string(W));
  Tensor out({B, C, OH, OW});
  auto argmax = std::make_shared<std::vector<i64>>(static_cast<size_t>(out.numel()));
  i64 o = 0;
  for (i64 b = 0; b < B; ++b)
    for (i64 c = 0; c < C; ++c) {
      const double* plane = v.data() + (b * C + c) * H * W;
      for (i64 oh = 0; oh < OH; ++oh)
        for (i64 ow = 0; ow < OW; ++ow, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          i64 best_idx = 0;
          for (i64 i = 0; i < k; ++i)
            for (i64 j = 0; j < k; ++j) {
              const i64 idx = (oh * stride + i) * W + (ow * stride + j);
              if (plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
              }
            }
          out[o] = best;
          (*argmax)[static_cast<size_t>(o)] = (b * C + c) * H * W + best_idx;
        }
    }
  Node* xn = x.node();
  Var res = x.tape()->make(std::move(out), xn->requires_grad, "max_pool2d");
  if (xn->requires_grad) {
    res.node()->backprop = [xn, argmax](Node& self) {
      double* dx = xn->grad_ref().data();
      const double* g = self.grad.data();
      for (i64 i = 0; i < self.grad.numel(); ++i) dx[(*argmax)[static_cast<size_t>(i)]] += g[i];
    };
  }
  return res;
}

namespace {

// Shared shape check for the [B,C,H,W] reductions.
void require_4d(const Tensor& v, const char* op) {
  require(v.rank() == 4, std::string(op) + ": input must be [B,C,H,W], got " + shape_string(v.shape()));
}

}  // namespace

Var global_avg_pool(const Var& x) {
  const Tensor& v = x.value();
  require_4d(v, "global_avg_pool");
  const i64 B = v.extent(0), C = v.extent(1), H = v.extent(2), W = v.extent(3);
  Tensor out({B, C, 1, 1});
  for (i64 b = 0; b < B; ++b)
    for (i64 c = 0; c < C; ++c) {
      const double* plane = v.data() + (b * C + c) * H * W;
      double s = 0;
      for (i64 i = 0; i < H * W; ++i) s += plane[i];
      out[b * C + c] = s / static_cast<double>(H * W);
    }
  Node* xn = x.node();
  Var res = x.tape()->make(std::move(out), xn->requires_grad, "global_avg_pool");
  if (xn->requires_grad) {
    res.node()->backprop = [xn, B, C, H, W](Node& self) {
      double* dx = xn->grad_ref().data();
      const double inv = 1.0 / static_cast<double>(H * W);
      for (i64 bc = 0; bc < B * C; ++bc) {
        const double g = self.grad[bc] * inv;
        double* plane = dx + bc * H * W;
        for (i64 i = 0; i < H * W; ++i) plane[i] += g;
      }
    };
  }
  return res;
}

Var global_max_pool(const Var& x) {
  const Tensor& v = x.value();
  require_4d(v, "global_max_pool");
  const i64 B = v.extent(0), C = v.extent(1), H = v.extent(2), W = v.extent(3);
  Tensor out({B, C, 1, 1});
  auto argmax = std::make_shared<std::vector<i64>>(static_cast<size_t>(B * C));
  for (i64 bc = 0; bc < B * C; ++bc) {
    const double* plane = v.data() + bc * H * W;
    i64 best = 0;
    for (i64 i = 1; i < H * W; ++i)
      if (plane[i] > plane[best]) best = i;
    out[bc] = plane[best];
    (*argmax)[static_cast<size_t>(bc)] = bc * H * W + best;
  }
  Node* xn = x.node();
  Var res = x.tape()->make(std::move(out), xn->requires_grad, "global_max_pool");
  if (xn->requires_grad) {
    res.node()->backprop = [xn, argmax](Node& self) {
      double* dx = xn->grad_ref().data();
      for (i64 i = 0; i < self.grad.numel(); ++i) dx[(*argmax)[static_cast<size_t>(i)]] += self.grad[i];
    };
  }
  return res;
}

Var channel_mean(const Var& x) {
  const Tensor& v = x.value();
  require_4d(v, "channel_mean");
  const i64 B = v.extent(0), C = v.extent(1), H = v.extent(2), W = v.extent(3);
  Tensor out({B, 1, H, W});
  for (i64 b = 0; b < B; ++b)
    for (i64 p = 0; p < H * W; ++p) {
      double s = 0;
      for (i64 c = 0; c < C; ++c) s += v.data()[(b * C + c) * H * W + p];
      out[b * H * W + p] = s / static_cast<double>(C);
    }
  Node* xn = x.node();
  Var res = x.tape()->make(std::move(out), xn->requires_grad, "channel_mean");
  if (xn->requires_grad) {
    res.node()->backprop = [xn, B, C, H, W](Node& self) {
      double* dx = xn->grad_ref().data();
      const double inv = 1.0 / static_cast<double>(C);
      for (i64 b = 0; b < B; ++b)
        for (i64 p = 0; p < H * W; ++p) {
          const double g = self.grad[b * H * W + p] * inv;
          for (i64 c = 0; c < C; ++c) dx[(b * C + c) * H * W + p] += g;
        }
    };
  }
  return res;
}

Var channel_max(const Var& x) {
  const Tensor& v = x.value();
  require_4d(v, "channel_max");
  const i64 B = v.extent(0), C = v.extent(1), H = v.extent(2), W = v.extent(3);
  Tensor out({B, 1, H, W});
  auto argmax = std::make_shared<std::vector<i64>>(static_cast<size_t>(B * H * W));
  for (i64 b = 0; b < B; ++b)
    for (i64 p = 0; p < H * W; ++p) {
      i64 best = 0;
      for (i64 c = 1; c < C; ++c)
        if (v.data()[(b * C + c) * H * W + p] > v.data()[(b * C + best) * H * W + p]) best = c;
      out[b * H * W + p] = v.data()[(b * C + best) * H * W + p];
      (*argmax)[static_cast<size_t>(b * H * W + p)] = (b * C + best) * H * W + p;
    }
  Node* xn = x.node();
  Var res = x.tape()->make(std::move(out), xn->requires_grad, "channel_max");
  if (xn->requires_grad) {
    res.node()->backprop = [xn, argmax](Node& self) {
      double* dx = xn->grad_ref().data();
      for (i64 i = 0; i < self.grad.numel(); ++i) dx[(*argmax)[static_cast<size_t>(i)]] += self.grad[i];
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

Var upsample_bilinear(const Var& x, i64 out_h, i64 out_w) {
  const Tensor& v = x.value();
  require(v.rank() >= 2, "upsample_bilinear: input must have spatial trailing axes");
  const i64 H = v.extent(v.rank() - 2), W = v.extent(v.rank() - 1);
  require(out_h >= 1 && out_w >= 1, "upsample_bilinear: target extents must be positive");
  i64 N = 1;
  for (i64 i = 0; i < v.rank() - 2; ++i) N *= v.extent(i);

  auto ytaps = std::make_shared<std::vector<LerpTap>>(lerp_taps(H, out_h));
  auto xtaps = std::make_shared<std::vector<LerpTap>>(lerp_taps(W, out_w));

  std::vector<i64> out_shape = v.shape();
  out_shape[static_cast<size_t>(v.rank() - 2)] = out_h;
  out_shape[static_cast<size_t>(v.rank() - 1)] = out_w;
  Tensor out(out_shape);
  for (i64 n = 0; n < N; ++n) {
    const double* plane = v.data() + n * H * W;
    double* op = out.data() + n * out_h * out_w;
    for (i64 oy = 0; oy < out_h; ++oy) {
      const LerpTap ty = (*ytaps)[static_cast<size_t>(oy)];
      const double* rlo = plane + ty.lo * W;
      const double* rhi = plane + ty.hi * W;
      for (i64 ox = 0; ox < out_w; ++ox) {
        const LerpTap tx = (*xtaps)[static_cast<size_t>(ox)];
        // a + w*(b-a) form: equal endpoints interpolate bit-exactly
        const double top = rlo[tx.lo] + tx.w_hi * (rlo[tx.hi] - rlo[tx.lo]);
        const double bot = rhi[tx.lo] + tx.w_hi * (rhi[tx.hi] - rhi[tx.lo]);
        op[oy * out_w + ox] = top + ty.w_hi * (bot - top);
      }
    }
  }
  Node* xn = x.node();
  Var res = x.tape()->make(std::move(out), xn->requires_grad, "upsample_bilinear");
  if (xn->requires_grad) {
    res.node()->backprop = [xn, ytaps, xtaps, N, H, W, out_h, out_w](Node& self) {
      double* dx = xn->grad_ref().data();
      const double* g = self.grad.data();
      for (i64 n = 0; n < N; ++n) {
        double* dplane = dx + n * H * W;
        const double* gp = g + n * out_h * out_w;
        for (i64 oy = 0; oy < out_h; ++oy) {
          const LerpTap ty = (*ytaps)[static_cast<size_t>(oy)];
          for (i64 ox = 0; ox < out_w; ++ox) {
            const LerpTap tx = (*xtaps)[static_cast<size_t>(ox)];
            const double gg = gp[oy * out_w + ox];
            dplane[ty.lo * W + tx.lo] += gg * (1.0 - ty.w_hi) * (1.0 - tx.w_hi);
            dplane[ty.lo * W + tx.hi] += gg * (1.0 - ty.w_hi) * tx.w_hi;
            dplane[ty.hi * W + tx.lo] += gg * ty.w_hi * (1.0 - tx.w_hi);
            dplane[ty.hi * W + tx.hi] += gg * ty.w_hi * tx.w_hi;
          }
        }
      }
    };
  }
  return res;
}

Var upsample_bilinear(const Var& x, i64 factor) {
  require(factor >= 1, "upsample_bilinear: factor must be >= 1, got " + std::to_string(factor));
  const i64 H = x.value().extent(x.value().rank() - 2);
  const i64 W = x.value().extent(x.value().rank() - 1);
  return upsample_bilinear(x, H * factor, W * factor);
}

Var downsample2(const Var& x) {
  const Tensor& v = x.value();
  require(v.rank() >= 2, "downsample2: input must have spatial trailing axes");
  const i64 H = v.extent(v.rank() - 2), W = v.extent(v.rank() - 1);
  const i64 OH = (H + 1) / 2, OW = (W + 1) / 2;
  i64 N = 1;
  for (i64 i = 0; i < v.rank() - 2; ++i) N *= v.extent(i);
  std::vector<i64> out_shape = v.shape();
  out_shape[static_cast<size_t>(v.rank() - 2)] = OH;
  out_shape[static_cast<size_t>(v.rank() - 1)] = OW;
  Tensor out(out_shape);
  for (i64 n = 0; n < N; ++n)
    for (i64 oy = 0; oy < OH; ++oy)
      for (i64 ox = 0; ox < OW; ++ox)
        out[(n * OH + oy) * OW + ox] = v[(n * H + 2 * oy) * W + 2 * ox];
  Node* xn = x.node();
  Var res = x.tape()->make(std::move(out), xn->requires_grad, "downsample2");
  if (xn->requires_grad) {
    res.node()->backprop = [xn, N, H, W, OH, OW](Node& self) {
      double* dx = xn->grad_ref().data();
      const double* g = self.grad.data();
      for (i64 n = 0; n < N; ++n)
        for (i64 oy = 0; oy < OH; ++oy)
          for (i64 ox = 0; ox < OW; ++ox) dx[(n * H + 2 * oy) * W + 2 * ox] += g[(n * OH + oy) * OW + ox];
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// reductions to scalar / loss kernels
// ---------------------------------------------------------------------------

Var sum(const Var& x) {
  double s = 0;
  for (i64 i = 0; i < x.value().numel(); ++i) s += x.value()[i];
  Node* xn = x.node();
  Var res = x.tape()->make(Tensor({1}, {s}), xn->requires_grad, "sum");
  if (xn->requires_grad) {
    res.node()->backprop = [xn](Node& self) {
      const double g = self.grad[0];
      double* dx = xn->grad_ref().data();
      for (i64 i = 0; i < xn->value.numel(); ++i) dx[i] += g;
    };
  }
  return res;
}

Var mean(const Var& x) {
  const i64 n = x.value().numel();
  double s = 0;
  for (i64 i = 0; i < n; ++i) s += x.value()[i];
  Node* xn = x.node();
  Var res = x.tape()->make(Tensor({1}, {s / static_cast<double>(n)}), xn->requires_grad, "mean");
  if (xn->requires_grad) {
    res.node()->backprop = [xn, n](Node& self) {
      const double g = self.grad[0] / static_cast<double>(n);
      double* dx = xn->grad_ref().data();
      for (i64 i = 0; i < n; ++i) dx[i] += g;
    };
  }
  return res;
}

Var bce_with_logits(const Var& logit, const Tensor& target) {
  require_same_shape(logit.value(), target, "bce_with_logits");
  for (i64 i = 0; i < target.numel(); ++i)
    require(target[i] == 0.0 || target[i] == 1.0,
            "bce_with_logits: target must be binary, found " + std::to_string(target[i]));
  const i64 n = target.numel();
  double loss = 0;
  for (i64 i = 0; i < n; ++i) {
    const double x = logit.value()[i];
    loss += std::max(x, 0.0) - x * target[i] + std::log1p(std::exp(-std::fabs(x)));
  }
  loss /= static_cast<double>(n);
  Node* xn = logit.node();
  Var res = logit.tape()->make(Tensor({1}, {loss}), xn->requires_grad, "bce_with_logits");
  if (xn->requires_grad) {
    auto tgt = std::make_shared<Tensor>(target);
    res.node()->backprop = [xn, tgt, n](Node& self) {
      const double g = self.grad[0] / static_cast<double>(n);
      double* dx = xn->grad_ref().data();
      for (i64 i = 0; i < n; ++i) dx[i] += g * (stable_sigmoid(xn->value[i]) - (*tgt)[i]);
    };
  }
  return res;
}

}  // namespace megalap
