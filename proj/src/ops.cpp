#include "cbm/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cbm::ad {

namespace {

Tape& tape_of(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
  return *t.tape();
}

void check_same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": tensors live on different tapes");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

bool track(const Tape& t, bool any_input_rg) { return t.recording() && any_input_rg; }

}  // namespace

Tensor relu(Tensor x) {
  Tape& t = tape_of(x, "relu");
  bool rg = track(t, x.requires_grad());
  int out = t.make_node(x.shape(), rg);
  const auto& xv = t.value_of(x.id());
  auto& ov = t.value_of(out);
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (rg) {
    int xid = x.id();
    t.push_record([xid, out](Tape& tp) {
      const auto& g = tp.grad_of(out);
      const auto& xv2 = tp.value_of(xid);
      auto& xg = tp.grad_of(xid);
      // subgradient at 0 is 0
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv2[i] > 0.0) xg[i] += g[i];
    });
  }
  return t.handle(out);
}

Tensor sigmoid(Tensor x) {
  Tape& t = tape_of(x, "sigmoid");
  bool rg = track(t, x.requires_grad());
  int out = t.make_node(x.shape(), rg);
  const auto& xv = t.value_of(x.id());
  auto& ov = t.value_of(out);
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  if (rg) {
    int xid = x.id();
    t.push_record([xid, out](Tape& tp) {
      const auto& g = tp.grad_of(out);
      const auto& s = tp.value_of(out);
      auto& xg = tp.grad_of(xid);
      for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i] * s[i] * (1.0 - s[i]);
    });
  }
  return t.handle(out);
}

Tensor add(Tensor a, Tensor b) {
  Tape& t = tape_of(a, "add");
  check_same_tape(a, b, "add");
  check_same_shape(a, b, "add");
  bool rg = track(t, a.requires_grad() || b.requires_grad());
  int out = t.make_node(a.shape(), rg);
  const auto& av = t.value_of(a.id());
  const auto& bv = t.value_of(b.id());
  auto& ov = t.value_of(out);
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  if (rg) {
    int aid = a.id(), bid = b.id();
    bool arg = a.requires_grad(), brg = b.requires_grad();
    t.push_record([aid, bid, arg, brg, out](Tape& tp) {
      const auto& g = tp.grad_of(out);
      if (arg) {
        auto& ag = tp.grad_of(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i];
      }
      if (brg) {
        auto& bg = tp.grad_of(bid);
        for (std::size_t i = 0; i < g.size(); ++i) bg[i] += g[i];
      }
    });
  }
  return t.handle(out);
}

Tensor mul(Tensor a, Tensor b) {
  Tape& t = tape_of(a, "mul");
  check_same_tape(a, b, "mul");
  check_same_shape(a, b, "mul");
  bool rg = track(t, a.requires_grad() || b.requires_grad());
  int out = t.make_node(a.shape(), rg);
  const auto& av = t.value_of(a.id());
  const auto& bv = t.value_of(b.id());
  auto& ov = t.value_of(out);
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  if (rg) {
    int aid = a.id(), bid = b.id();
    bool arg = a.requires_grad(), brg = b.requires_grad();
    t.push_record([aid, bid, arg, brg, out](Tape& tp) {
      const auto& g = tp.grad_of(out);
      const auto& av2 = tp.value_of(aid);
      const auto& bv2 = tp.value_of(bid);
      if (arg) {
        auto& ag = tp.grad_of(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ag[i] += g[i] * bv2[i];
      }
      if (brg) {
        auto& bg = tp.grad_of(bid);
        for (std::size_t i = 0; i < g.size(); ++i) bg[i] += g[i] * av2[i];
      }
    });
  }
  return t.handle(out);
}

Tensor scale(Tensor x, double c) {
  Tape& t = tape_of(x, "scale");
  bool rg = track(t, x.requires_grad());
  int out = t.make_node(x.shape(), rg);
  const auto& xv = t.value_of(x.id());
  auto& ov = t.value_of(out);
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = c * xv[i];
  if (rg) {
    int xid = x.id();
    t.push_record([xid, out, c](Tape& tp) {
      const auto& g = tp.grad_of(out);
      auto& xg = tp.grad_of(xid);
      for (std::size_t i = 0; i < g.size(); ++i) xg[i] += c * g[i];
    });
  }
  return t.handle(out);
}

Tensor flatten(Tensor x) {
  Tape& t = tape_of(x, "flatten");
  bool rg = track(t, x.requires_grad());
  int out = t.make_node({static_cast<int>(x.size())}, rg);
  t.value_of(out) = t.value_of(x.id());
  if (rg) {
    int xid = x.id();
    t.push_record([xid, out](Tape& tp) {
      const auto& g = tp.grad_of(out);
      auto& xg = tp.grad_of(xid);
      for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
    });
  }
  return t.handle(out);
}

Tensor concat_channels(Tensor a, Tensor b) {
  Tape& t = tape_of(a, "concat_channels");
  check_same_tape(a, b, "concat_channels");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[1] != sb[1] || sa[2] != sb[2])
    throw std::invalid_argument("concat_channels: incompatible shapes " + shape_str(sa) + " vs " + shape_str(sb));
  bool rg = track(t, a.requires_grad() || b.requires_grad());
  int out = t.make_node({sa[0] + sb[0], sa[1], sa[2]}, rg);
  const auto& av = t.value_of(a.id());
  const auto& bv = t.value_of(b.id());
  auto& ov = t.value_of(out);
  std::copy(av.begin(), av.end(), ov.begin());
  std::copy(bv.begin(), bv.end(), ov.begin() + static_cast<std::ptrdiff_t>(av.size()));
  if (rg) {
    int aid = a.id(), bid = b.id();
    bool arg = a.requires_grad(), brg = b.requires_grad();
    std::size_t na = av.size();
    t.push_record([aid, bid, arg, brg, out, na](Tape& tp) {
      const auto& g = tp.grad_of(out);
      if (arg) {
        auto& ag = tp.grad_of(aid);
        for (std::size_t i = 0; i < na; ++i) ag[i] += g[i];
      }
      if (brg) {
        auto& bg = tp.grad_of(bid);
        for (std::size_t i = na; i < g.size(); ++i) bg[i - na] += g[i];
      }
    });
  }
  return t.handle(out);
}

Tensor conv2d(Tensor x, Tensor kernel, Tensor bias, int padding) {
  Tape& t = tape_of(x, "conv2d");
  check_same_tape(x, kernel, "conv2d");
  check_same_tape(x, bias, "conv2d");
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  const auto& bs = bias.shape();
  if (xs.size() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " + shape_str(xs));
  if (ks.size() != 4) throw std::invalid_argument("conv2d: kernel must be [Co,Ci,kh,kw], got " + shape_str(ks));
  if (ks[1] != xs[0])
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(xs) + " kernel " + shape_str(ks));
  if (ks[2] % 2 == 0 || ks[3] % 2 == 0)
    throw std::invalid_argument("conv2d: kernel extents must be odd, got " + shape_str(ks));
  if (bs.size() != 1 || bs[0] != ks[0])
    throw std::invalid_argument("conv2d: bias must be [Co]=" + std::to_string(ks[0]) + ", got " + shape_str(bs));
  if (padding < 0) throw std::invalid_argument("conv2d: negative padding");

  const int ci = xs[0], h = xs[1], w = xs[2];
  const int co = ks[0], kh = ks[2], kw = ks[3];
  const int oh = h + 2 * padding - kh + 1;
  const int ow = w + 2 * padding - kw + 1;
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("conv2d: kernel " + shape_str(ks) + " larger than padded input " + shape_str(xs));

  bool rg = track(t, x.requires_grad() || kernel.requires_grad() || bias.requires_grad());
  int out = t.make_node({co, oh, ow}, rg);
  {
    const auto& xv = t.value_of(x.id());
    const auto& kv = t.value_of(kernel.id());
    const auto& bv = t.value_of(bias.id());
    auto& ov = t.value_of(out);
    for (int c = 0; c < co; ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bv[c];
          for (int ic = 0; ic < ci; ++ic) {
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy + ky - padding;
              if (iy < 0 || iy >= h) continue;
              const double* xrow = &xv[(static_cast<std::size_t>(ic) * h + iy) * w];
              const double* krow = &kv[((static_cast<std::size_t>(c) * ci + ic) * kh + ky) * kw];
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox + kx - padding;
                if (ix < 0 || ix >= w) continue;
                acc += xrow[ix] * krow[kx];
              }
            }
          }
          ov[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  if (rg) {
    int xid = x.id(), kid = kernel.id(), bid = bias.id();
    bool xrg = x.requires_grad(), krg = kernel.requires_grad(), brg = bias.requires_grad();
    t.push_record([=](Tape& tp) {
      const auto& g = tp.grad_of(out);
      const auto& xv = tp.value_of(xid);
      const auto& kv = tp.value_of(kid);
      for (int c = 0; c < co; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const double gv = g[(static_cast<std::size_t>(c) * oh + oy) * ow + ox];
            if (gv == 0.0) continue;
            if (brg) tp.grad_of(bid)[c] += gv;
            for (int ic = 0; ic < ci; ++ic) {
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy + ky - padding;
                if (iy < 0 || iy >= h) continue;
                const std::size_t xbase = (static_cast<std::size_t>(ic) * h + iy) * w;
                const std::size_t kbase = ((static_cast<std::size_t>(c) * ci + ic) * kh + ky) * kw;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ix = ox + kx - padding;
                  if (ix < 0 || ix >= w) continue;
                  if (krg) tp.grad_of(kid)[kbase + kx] += gv * xv[xbase + ix];
                  if (xrg) tp.grad_of(xid)[xbase + ix] += gv * kv[kbase + kx];
                }
              }
            }
          }
        }
      }
    });
  }
  return t.handle(out);
}

Tensor affine(Tensor x, Tensor weight, Tensor bias) {
  Tape& t = tape_of(x, "affine");
  check_same_tape(x, weight, "affine");
  check_same_tape(x, bias, "affine");
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  const auto& bs = bias.shape();
  if (xs.size() != 1) throw std::invalid_argument("affine: input must be rank-1, got " + shape_str(xs));
  if (ws.size() != 2 || ws[1] != xs[0])
    throw std::invalid_argument("affine: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  if (bs.size() != 1 || bs[0] != ws[0])
    throw std::invalid_argument("affine: bias " + shape_str(bs) + " incompatible with weight " + shape_str(ws));

  const int dout = ws[0], din = ws[1];
  bool rg = track(t, x.requires_grad() || weight.requires_grad() || bias.requires_grad());
  int out = t.make_node({dout}, rg);
  {
    const auto& xv = t.value_of(x.id());
    const auto& wv = t.value_of(weight.id());
    const auto& bv = t.value_of(bias.id());
    auto& ov = t.value_of(out);
    for (int o = 0; o < dout; ++o) {
      double acc = bv[o];
      const double* wrow = &wv[static_cast<std::size_t>(o) * din];
      for (int i = 0; i < din; ++i) acc += wrow[i] * xv[i];
      ov[o] = acc;
    }
  }
  if (rg) {
    int xid = x.id(), wid = weight.id(), bid = bias.id();
    bool xrg = x.requires_grad(), wrg = weight.requires_grad(), brg = bias.requires_grad();
    t.push_record([=](Tape& tp) {
      const auto& g = tp.grad_of(out);
      const auto& xv = tp.value_of(xid);
      const auto& wv = tp.value_of(wid);
      for (int o = 0; o < dout; ++o) {
        const double gv = g[o];
        if (gv == 0.0) continue;
        if (brg) tp.grad_of(bid)[o] += gv;
        if (wrg) {
          auto& wg = tp.grad_of(wid);
          for (int i = 0; i < din; ++i) wg[static_cast<std::size_t>(o) * din + i] += gv * xv[i];
        }
        if (xrg) {
          auto& xg = tp.grad_of(xid);
          for (int i = 0; i < din; ++i) xg[i] += gv * wv[static_cast<std::size_t>(o) * din + i];
        }
      }
    });
  }
  return t.handle(out);
}

Tensor sum(Tensor x) {
  Tape& t = tape_of(x, "sum");
  bool rg = track(t, x.requires_grad());
  int out = t.make_node({}, rg);
  const auto& xv = t.value_of(x.id());
  double acc = 0.0;
  for (double v : xv) acc += v;
  t.value_of(out)[0] = acc;
  if (rg) {
    int xid = x.id();
    t.push_record([xid, out](Tape& tp) {
      const double g = tp.grad_of(out)[0];
      auto& xg = tp.grad_of(xid);
      for (double& v : xg) v += g;
    });
  }
  return t.handle(out);
}

Tensor mse(Tensor pred, Tensor target) {
  Tape& t = tape_of(pred, "mse");
  check_same_tape(pred, target, "mse");
  check_same_shape(pred, target, "mse");
  bool rg = track(t, pred.requires_grad() || target.requires_grad());
  int out = t.make_node({}, rg);
  const auto& pv = t.value_of(pred.id());
  const auto& tv = t.value_of(target.id());
  const double n = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    acc += d * d;
  }
  t.value_of(out)[0] = acc / n;
  if (rg) {
    int pid = pred.id(), tid = target.id();
    bool prg = pred.requires_grad(), trg = target.requires_grad();
    t.push_record([pid, tid, prg, trg, out, n](Tape& tp) {
      const double g = tp.grad_of(out)[0];
      const auto& pv2 = tp.value_of(pid);
      const auto& tv2 = tp.value_of(tid);
      for (std::size_t i = 0; i < pv2.size(); ++i) {
        const double d = 2.0 * (pv2[i] - tv2[i]) / n * g;
        if (prg) tp.grad_of(pid)[i] += d;
        if (trg) tp.grad_of(tid)[i] -= d;
      }
    });
  }
  return t.handle(out);
}

Tensor softmax_xent(Tensor logits, int label) {
  Tape& t = tape_of(logits, "softmax_xent");
  const auto& ls = logits.shape();
  if (ls.size() != 1) throw std::invalid_argument("softmax_xent: logits must be rank-1, got " + shape_str(ls));
  if (label < 0 || label >= ls[0])
    throw std::invalid_argument("softmax_xent: label " + std::to_string(label) + " out of range for " +
                                std::to_string(ls[0]) + " classes");
  bool rg = track(t, logits.requires_grad());
  int out = t.make_node({}, rg);
  const auto& lv = t.value_of(logits.id());
  double m = lv[0];
  for (double v : lv) m = std::max(m, v);
  double z = 0.0;
  for (double v : lv) z += std::exp(v - m);
  t.value_of(out)[0] = std::log(z) - (lv[label] - m);
  if (rg) {
    int lid = logits.id();
    t.push_record([lid, out, label, m, z](Tape& tp) {
      const double g = tp.grad_of(out)[0];
      const auto& lv2 = tp.value_of(lid);
      auto& lg = tp.grad_of(lid);
      // fused backward: softmax minus one-hot
      for (std::size_t i = 0; i < lv2.size(); ++i) {
        double p = std::exp(lv2[i] - m) / z;
        if (static_cast<int>(i) == label) p -= 1.0;
        lg[i] += p * g;
      }
    });
  }
  return t.handle(out);
}

Tensor gated_edge(Tensor x, Gate gate) {
  Tape& t = tape_of(x, "gated_edge");
  const bool pass = gate == Gate::Pass;
  bool rg = track(t, pass && x.requires_grad());
  int out = t.make_node(x.shape(), rg);
  t.value_of(out) = t.value_of(x.id());
  if (rg) {
    int xid = x.id();
    t.push_record([xid, out](Tape& tp) {
      const auto& g = tp.grad_of(out);
      auto& xg = tp.grad_of(xid);
      for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
    });
  }
  return t.handle(out);
}

}  // namespace cbm::ad
