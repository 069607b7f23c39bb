#include "irstd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace irstd {

namespace {

using Node = Tensor::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(std::vector<int> shape, std::vector<double> data) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

void check_finite(const Node& n, const char* op) {
  for (double v : n.data) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("non-finite value produced by ") + op);
    }
  }
}

// Finalizes an op output: propagates requires_grad and attaches the tape entry.
Tensor finish(NodePtr out, std::vector<NodePtr> parents,
              std::function<void(Node&)> backprop, const char* op) {
  check_finite(*out, op);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  out->requires_grad = rg;
  if (rg) {
    out->parents = std::move(parents);
    out->backprop = std::move(backprop);
  }
  return Tensor(std::move(out));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

// Elementwise binary op with scalar broadcasting on either side.
template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, BwdA bwd_a,
                 BwdB bwd_b, const char* op) {
  bool a_scalar = a.size() == 1;
  bool b_scalar = b.size() == 1;
  if (!a_scalar && !b_scalar) check_same_shape(a, b, op);

  const auto& big = (a_scalar && !b_scalar) ? b : a;
  int64_t n = big.size();
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (int64_t i = 0; i < n; ++i) {
    out[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  }
  auto an = a.node();
  auto bn = b.node();
  auto result = make_node(big.shape(), std::move(out));
  return finish(
      result, {an, bn},
      [an, bn, a_scalar, b_scalar, bwd_a, bwd_b](Node& self) {
        int64_t n = self.size();
        if (an->requires_grad) {
          an->ensure_grad();
          for (int64_t i = 0; i < n; ++i) {
            double x = an->data[a_scalar ? 0 : i];
            double y = bn->data[b_scalar ? 0 : i];
            an->grad[a_scalar ? 0 : i] += self.grad[i] * bwd_a(x, y);
          }
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t i = 0; i < n; ++i) {
            double x = an->data[a_scalar ? 0 : i];
            double y = bn->data[b_scalar ? 0 : i];
            bn->grad[b_scalar ? 0 : i] += self.grad[i] * bwd_b(x, y);
          }
        }
      },
      op);
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd, const char* op) {
  int64_t n = a.size();
  std::vector<double> out(n);
  const auto& av = a.data();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  auto an = a.node();
  auto result = make_node(a.shape(), std::move(out));
  return finish(
      result, {an},
      [an, bwd](Node& self) {
        an->ensure_grad();
        for (int64_t i = 0; i < self.size(); ++i) {
          an->grad[i] += self.grad[i] * bwd(an->data[i], self.data[i]);
        }
      },
      op);
}

}  // namespace

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("non-positive dimension");
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(shape_size(shape), value));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_size(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("from_data: shape/data size mismatch");
  }
  auto n = make_node(std::move(shape), std::move(data));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = rng.normal(0.0, stddev);
  auto n = make_node(std::move(shape), std::move(data));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

double Tensor::value() const {
  if (!is_scalar()) throw std::invalid_argument("value(): tensor is not scalar");
  return node_->data[0];
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x + y; },
                   [](double, double) { return 1.0; },
                   [](double, double) { return 1.0; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x - y; },
                   [](double, double) { return 1.0; },
                   [](double, double) { return -1.0; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x * y; },
                   [](double, double y) { return y; },
                   [](double x, double) { return x; }, "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, [](double x, double y) { return x / y; },
                   [](double, double y) { return 1.0 / y; },
                   [](double x, double y) { return -x / (y * y); }, "div");
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x) { return -x; },
                  [](double, double) { return -1.0; }, "neg");
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Tensor sigmoid(const Tensor& a) {
  // branch on sign so exp never overflows
  auto stable = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary_op(a, stable,
                  [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor sqrt_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; }, "sqrt");
}

Tensor abs_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::fabs(x); },
                  [](double x, double) { return x >= 0.0 ? 1.0 : -1.0; }, "abs");
}

Tensor atan_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::atan(x); },
                  [](double x, double) { return 1.0 / (1.0 + x * x); }, "atan");
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto an = a.node();
  auto result = make_node({1}, {s});
  return finish(
      result, {an},
      [an](Node& self) {
        an->ensure_grad();
        double g = self.grad[0];
        for (auto& gv : an->grad) gv += g;
      },
      "sum");
}

Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes) {
  const auto& shape = a.shape();
  int ndim = static_cast<int>(shape.size());
  std::vector<bool> reduce(ndim, false);
  for (int ax : axes) {
    if (ax < 0 || ax >= ndim) throw std::invalid_argument("reduce_sum: bad axis");
    reduce[ax] = true;
  }
  std::vector<int> out_shape;
  for (int d = 0; d < ndim; ++d) {
    if (!reduce[d]) out_shape.push_back(shape[d]);
  }
  if (out_shape.empty()) out_shape = {1};

  // strides of the input, and the output index for each input element
  std::vector<int64_t> strides(ndim, 1);
  for (int d = ndim - 2; d >= 0; --d) strides[d] = strides[d + 1] * shape[d + 1];
  int64_t n = a.size();
  std::vector<int64_t> out_index(n);
  for (int64_t i = 0; i < n; ++i) {
    int64_t rem = i, oi = 0;
    for (int d = 0; d < ndim; ++d) {
      int64_t coord = rem / strides[d];
      rem %= strides[d];
      if (!reduce[d]) oi = oi * shape[d] + coord;
    }
    out_index[i] = oi;
  }
  std::vector<double> out(shape_size(out_shape), 0.0);
  const auto& av = a.data();
  for (int64_t i = 0; i < n; ++i) out[out_index[i]] += av[i];

  auto an = a.node();
  auto result = make_node(std::move(out_shape), std::move(out));
  return finish(
      result, {an},
      [an, idx = std::move(out_index)](Node& self) {
        an->ensure_grad();
        for (int64_t i = 0; i < static_cast<int64_t>(idx.size()); ++i) {
          an->grad[i] += self.grad[idx[i]];
        }
      },
      "reduce_sum");
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(a, b,
                   [](double x, double y) { return x <= y ? x : y; },
                   [](double x, double y) { return x <= y ? 1.0 : 0.0; },
                   [](double x, double y) { return x <= y ? 0.0 : 1.0; }, "min");
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(a, b,
                   [](double x, double y) { return x >= y ? x : y; },
                   [](double x, double y) { return x >= y ? 1.0 : 0.0; },
                   [](double x, double y) { return x >= y ? 0.0 : 1.0; }, "max");
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  if (input.shape().size() != 4) throw std::invalid_argument("conv2d: input must be NCHW");
  if (weight.shape().size() != 4) throw std::invalid_argument("conv2d: weight must be OIKK");
  if (stride <= 0) throw std::invalid_argument("conv2d: non-positive stride");
  if (padding < 0) throw std::invalid_argument("conv2d: negative padding");
  const int N = input.shape()[0], C = input.shape()[1];
  const int H = input.shape()[2], W = input.shape()[3];
  const int O = weight.shape()[0], I = weight.shape()[1];
  const int KH = weight.shape()[2], KW = weight.shape()[3];
  if (I != C) throw std::invalid_argument("conv2d: channel count mismatch");
  if (bias.shape() != std::vector<int>{O}) throw std::invalid_argument("conv2d: bias must have O entries");
  const int HO = (H + 2 * padding - KH) / stride + 1;
  const int WO = (W + 2 * padding - KW) / stride + 1;
  if (HO <= 0 || WO <= 0 || H + 2 * padding < KH || W + 2 * padding < KW) {
    throw std::invalid_argument("conv2d: kernel does not fit");
  }

  const auto& in = input.data();
  const auto& wt = weight.data();
  const auto& bs = bias.data();
  std::vector<double> out(static_cast<int64_t>(N) * O * HO * WO);

  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) {
      double* op = out.data() + ((static_cast<int64_t>(n) * O + o) * HO) * WO;
      for (int64_t i = 0; i < static_cast<int64_t>(HO) * WO; ++i) op[i] = bs[o];
      for (int c = 0; c < C; ++c) {
        const double* ip = in.data() + ((static_cast<int64_t>(n) * C + c) * H) * W;
        for (int kh = 0; kh < KH; ++kh) {
          for (int kw = 0; kw < KW; ++kw) {
            double w = wt[((static_cast<int64_t>(o) * I + c) * KH + kh) * KW + kw];
            for (int oh = 0; oh < HO; ++oh) {
              int ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= H) continue;
              const double* irow = ip + static_cast<int64_t>(ih) * W;
              double* orow = op + static_cast<int64_t>(oh) * WO;
              for (int ow = 0; ow < WO; ++ow) {
                int iw = ow * stride - padding + kw;
                if (iw < 0 || iw >= W) continue;
                orow[ow] += w * irow[iw];
              }
            }
          }
        }
      }
    }
  }

  auto in_n = input.node();
  auto w_n = weight.node();
  auto b_n = bias.node();
  auto result = make_node({N, O, HO, WO}, std::move(out));
  return finish(
      result, {in_n, w_n, b_n},
      [in_n, w_n, b_n, N, C, H, W, O, I, KH, KW, HO, WO, stride,
       padding](Node& self) {
        const auto& g = self.grad;
        if (b_n->requires_grad) {
          b_n->ensure_grad();
          for (int n = 0; n < N; ++n) {
            for (int o = 0; o < O; ++o) {
              const double* gp = g.data() + ((static_cast<int64_t>(n) * O + o) * HO) * WO;
              double s = 0.0;
              for (int64_t i = 0; i < static_cast<int64_t>(HO) * WO; ++i) s += gp[i];
              b_n->grad[o] += s;
            }
          }
        }
        if (in_n->requires_grad) in_n->ensure_grad();
        if (w_n->requires_grad) w_n->ensure_grad();
        for (int n = 0; n < N; ++n) {
          for (int o = 0; o < O; ++o) {
            const double* gp = g.data() + ((static_cast<int64_t>(n) * O + o) * HO) * WO;
            for (int c = 0; c < C; ++c) {
              const double* ip = in_n->data.data() + ((static_cast<int64_t>(n) * C + c) * H) * W;
              double* gip = in_n->requires_grad
                                ? in_n->grad.data() + ((static_cast<int64_t>(n) * C + c) * H) * W
                                : nullptr;
              for (int kh = 0; kh < KH; ++kh) {
                for (int kw = 0; kw < KW; ++kw) {
                  int64_t widx = ((static_cast<int64_t>(o) * I + c) * KH + kh) * KW + kw;
                  double w = w_n->data[widx];
                  double gw = 0.0;
                  for (int oh = 0; oh < HO; ++oh) {
                    int ih = oh * stride - padding + kh;
                    if (ih < 0 || ih >= H) continue;
                    const double* grow = gp + static_cast<int64_t>(oh) * WO;
                    const double* irow = ip + static_cast<int64_t>(ih) * W;
                    double* girow = gip ? gip + static_cast<int64_t>(ih) * W : nullptr;
                    for (int ow = 0; ow < WO; ++ow) {
                      int iw = ow * stride - padding + kw;
                      if (iw < 0 || iw >= W) continue;
                      gw += grow[ow] * irow[iw];
                      if (girow) girow[iw] += grow[ow] * w;
                    }
                  }
                  if (w_n->requires_grad) w_n->grad[widx] += gw;
                }
              }
            }
          }
        }
      },
      "conv2d");
}

Tensor max_pool2d(const Tensor& input, int factor) {
  if (input.shape().size() != 4) throw std::invalid_argument("max_pool2d: input must be NCHW");
  if (factor <= 0) throw std::invalid_argument("max_pool2d: non-positive factor");
  const int N = input.shape()[0], C = input.shape()[1];
  const int H = input.shape()[2], W = input.shape()[3];
  if (H % factor != 0 || W % factor != 0) {
    throw std::invalid_argument("max_pool2d: spatial dims not divisible by factor");
  }
  const int HO = H / factor, WO = W / factor;
  const auto& in = input.data();
  std::vector<double> out(static_cast<int64_t>(N) * C * HO * WO);
  std::vector<int64_t> argmax(out.size());

  int64_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const int64_t base = ((static_cast<int64_t>(n) * C + c) * H) * W;
      for (int oh = 0; oh < HO; ++oh) {
        for (int ow = 0; ow < WO; ++ow, ++oi) {
          double best = -1e300;
          int64_t best_i = -1;
          for (int dh = 0; dh < factor; ++dh) {
            for (int dw = 0; dw < factor; ++dw) {
              int64_t i = base + static_cast<int64_t>(oh * factor + dh) * W + ow * factor + dw;
              if (in[i] > best) {  // first occurrence wins on ties
                best = in[i];
                best_i = i;
              }
            }
          }
          out[oi] = best;
          argmax[oi] = best_i;
        }
      }
    }
  }

  auto in_n = input.node();
  auto result = make_node({N, C, HO, WO}, std::move(out));
  return finish(
      result, {in_n},
      [in_n, argmax = std::move(argmax)](Node& self) {
        in_n->ensure_grad();
        for (int64_t i = 0; i < self.size(); ++i) {
          in_n->grad[argmax[i]] += self.grad[i];
        }
      },
      "max_pool2d");
}

Tensor upsample_bilinear(const Tensor& input, int factor) {
  if (input.shape().size() != 4) throw std::invalid_argument("upsample_bilinear: input must be NCHW");
  if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor < 1");
  const int N = input.shape()[0], C = input.shape()[1];
  const int H = input.shape()[2], W = input.shape()[3];
  const int HO = H * factor, WO = W * factor;

  // half-pixel-center mapping, clamped at the borders
  struct Lerp { int lo, hi; double frac; };
  auto make_axis = [factor](int out_len, int in_len) {
    std::vector<Lerp> axis(out_len);
    for (int i = 0; i < out_len; ++i) {
      double src = (i + 0.5) / factor - 0.5;
      if (src < 0.0) src = 0.0;
      if (src > in_len - 1) src = in_len - 1;
      int lo = static_cast<int>(std::floor(src));
      int hi = std::min(lo + 1, in_len - 1);
      axis[i] = {lo, hi, src - lo};
    }
    return axis;
  };
  auto ys = make_axis(HO, H);
  auto xs = make_axis(WO, W);

  const auto& in = input.data();
  std::vector<double> out(static_cast<int64_t>(N) * C * HO * WO);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const int64_t ibase = ((static_cast<int64_t>(n) * C + c) * H) * W;
      const int64_t obase = ((static_cast<int64_t>(n) * C + c) * HO) * WO;
      for (int oy = 0; oy < HO; ++oy) {
        const auto& ly = ys[oy];
        for (int ox = 0; ox < WO; ++ox) {
          const auto& lx = xs[ox];
          double v00 = in[ibase + static_cast<int64_t>(ly.lo) * W + lx.lo];
          double v01 = in[ibase + static_cast<int64_t>(ly.lo) * W + lx.hi];
          double v10 = in[ibase + static_cast<int64_t>(ly.hi) * W + lx.lo];
          double v11 = in[ibase + static_cast<int64_t>(ly.hi) * W + lx.hi];
          double top = v00 + (v01 - v00) * lx.frac;
          double bot = v10 + (v11 - v10) * lx.frac;
          out[obase + static_cast<int64_t>(oy) * WO + ox] = top + (bot - top) * ly.frac;
        }
      }
    }
  }

  auto in_n = input.node();
  auto result = make_node({N, C, HO, WO}, std::move(out));
  return finish(
      result, {in_n},
      [in_n, ys = std::move(ys), xs = std::move(xs), N, C, H, W, HO, WO](Node& self) {
        in_n->ensure_grad();
        for (int n = 0; n < N; ++n) {
          for (int c = 0; c < C; ++c) {
            const int64_t ibase = ((static_cast<int64_t>(n) * C + c) * H) * W;
            const int64_t obase = ((static_cast<int64_t>(n) * C + c) * HO) * WO;
            for (int oy = 0; oy < HO; ++oy) {
              const auto& ly = ys[oy];
              for (int ox = 0; ox < WO; ++ox) {
                const auto& lx = xs[ox];
                double g = self.grad[obase + static_cast<int64_t>(oy) * WO + ox];
                double wy1 = ly.frac, wy0 = 1.0 - wy1;
                double wx1 = lx.frac, wx0 = 1.0 - wx1;
                in_n->grad[ibase + static_cast<int64_t>(ly.lo) * W + lx.lo] += g * wy0 * wx0;
                in_n->grad[ibase + static_cast<int64_t>(ly.lo) * W + lx.hi] += g * wy0 * wx1;
                in_n->grad[ibase + static_cast<int64_t>(ly.hi) * W + lx.lo] += g * wy1 * wx0;
                in_n->grad[ibase + static_cast<int64_t>(ly.hi) * W + lx.hi] += g * wy1 * wx1;
              }
            }
          }
        }
      },
      "upsample_bilinear");
}

Tensor concat_channels(const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const auto& first = inputs[0].shape();
  if (first.size() != 4) throw std::invalid_argument("concat_channels: inputs must be NCHW");
  const int N = first[0], H = first[2], W = first[3];
  int C_total = 0;
  for (const auto& t : inputs) {
    const auto& s = t.shape();
    if (s.size() != 4 || s[0] != N || s[2] != H || s[3] != W) {
      throw std::invalid_argument("concat_channels: spatial/batch mismatch");
    }
    C_total += s[1];
  }

  std::vector<double> out(static_cast<int64_t>(N) * C_total * H * W);
  const int64_t plane = static_cast<int64_t>(H) * W;
  int c_off = 0;
  for (const auto& t : inputs) {
    const int C = t.shape()[1];
    const auto& in = t.data();
    for (int n = 0; n < N; ++n) {
      std::copy(in.begin() + n * C * plane, in.begin() + (n + 1) * C * plane,
                out.begin() + (static_cast<int64_t>(n) * C_total + c_off) * plane);
    }
    c_off += C;
  }

  std::vector<NodePtr> parents;
  parents.reserve(inputs.size());
  for (const auto& t : inputs) parents.push_back(t.node());
  auto result = make_node({N, C_total, H, W}, std::move(out));
  return finish(
      result, parents,
      [parents, N, C_total, plane](Node& self) {
        int c_off = 0;
        for (const auto& p : parents) {
          const int C = p->shape[1];
          if (p->requires_grad) {
            p->ensure_grad();
            for (int n = 0; n < N; ++n) {
              const double* g = self.grad.data() +
                                (static_cast<int64_t>(n) * C_total + c_off) * plane;
              double* pg = p->grad.data() + static_cast<int64_t>(n) * C * plane;
              for (int64_t i = 0; i < C * plane; ++i) pg[i] += g[i];
            }
          }
          c_off += C;
        }
      },
      "concat_channels");
}

Tensor instance_norm(const Tensor& input, double eps) {
  if (input.shape().size() != 4) throw std::invalid_argument("instance_norm: input must be NCHW");
  const int N = input.shape()[0], C = input.shape()[1];
  const int H = input.shape()[2], W = input.shape()[3];
  const int64_t plane = static_cast<int64_t>(H) * W;
  const auto& in = input.data();
  std::vector<double> out(in.size());
  std::vector<double> inv_std(static_cast<int64_t>(N) * C);

  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    const double* x = in.data() + nc * plane;
    double mean = 0.0;
    for (int64_t i = 0; i < plane; ++i) mean += x[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (int64_t i = 0; i < plane; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(plane);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[nc] = is;
    double* y = out.data() + nc * plane;
    for (int64_t i = 0; i < plane; ++i) y[i] = (x[i] - mean) * is;
  }

  auto in_n = input.node();
  auto result = make_node(input.shape(), std::move(out));
  return finish(
      result, {in_n},
      [in_n, inv_std = std::move(inv_std), plane](Node& self) {
        in_n->ensure_grad();
        for (int64_t nc = 0; nc < static_cast<int64_t>(inv_std.size()); ++nc) {
          const double* y = self.data.data() + nc * plane;
          const double* g = self.grad.data() + nc * plane;
          double* gx = in_n->grad.data() + nc * plane;
          double gmean = 0.0, gymean = 0.0;
          for (int64_t i = 0; i < plane; ++i) {
            gmean += g[i];
            gymean += g[i] * y[i];
          }
          gmean /= static_cast<double>(plane);
          gymean /= static_cast<double>(plane);
          double is = inv_std[nc];
          for (int64_t i = 0; i < plane; ++i) {
            gx[i] += is * (g[i] - gmean - y[i] * gymean);
          }
        }
      },
      "instance_norm");
}

Tensor reshape(const Tensor& input, std::vector<int> new_shape) {
  if (shape_size(new_shape) != input.size()) {
    throw std::invalid_argument("reshape: element count mismatch");
  }
  auto in_n = input.node();
  auto result = make_node(std::move(new_shape), input.data());
  return finish(
      result, {in_n},
      [in_n](Node& self) {
        in_n->ensure_grad();
        for (int64_t i = 0; i < self.size(); ++i) in_n->grad[i] += self.grad[i];
      },
      "reshape");
}

void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar()) {
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  }
  auto root = loss.node();
  if (!root->requires_grad) return;

  // iterative post-order DFS; each node visited exactly once
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step, int max_coords, Rng* rng) {
  Tensor probe = Tensor::from_data(x.shape(), x.data(), true);
  Tensor y = f(probe);
  if (!y.is_scalar()) throw std::invalid_argument("grad_check: f must return a scalar");
  backward(y);
  std::vector<double> analytic = probe.grad();

  std::vector<int64_t> coords;
  int64_t n = x.size();
  if (max_coords > 0 && max_coords < n) {
    if (!rng) throw std::invalid_argument("grad_check: rng required for coordinate sampling");
    for (int i = 0; i < max_coords; ++i) {
      coords.push_back(static_cast<int64_t>(rng->next_u64() % static_cast<uint64_t>(n)));
    }
  } else {
    coords.resize(n);
    for (int64_t i = 0; i < n; ++i) coords[i] = i;
  }

  double max_err = 0.0;
  for (int64_t i : coords) {
    Tensor xp = Tensor::from_data(x.shape(), x.data(), false);
    xp.data()[i] += step;
    double fp = f(xp).value();
    Tensor xm = Tensor::from_data(x.shape(), x.data(), false);
    xm.data()[i] -= step;
    double fm = f(xm).value();
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("grad_check: non-finite function value");
    }
    double numeric = (fp - fm) / (2.0 * step);
    double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace irstd
