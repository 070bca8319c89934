#include "tgv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

namespace tgv {

namespace {

void check_finite(const char* op, const std::vector<double>& v) {
  if (!finite_checks_enabled()) return;
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by op '") +
                         op + "'");
    }
  }
}

Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::initializer_list<Tensor> inputs,
               std::function<void(const TensorNode&)> backward) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  check_finite(op, node->value);
  if (grad_mode_enabled()) {
    bool rg = false;
    for (const Tensor& t : inputs) rg = rg || t.requires_grad();
    if (rg) {
      node->requires_grad = true;
      for (const Tensor& t : inputs) node->parents.push_back(t.node_ptr());
      node->backward_fn = std::move(backward);
    }
  }
  return Tensor(node);
}

// Accumulate into a parent's grad if it participates in the sweep.
void acc_ready(TensorNode& p) { p.ensure_grad(); }

// ---- raw matrix kernels (each output element accumulates over the
// contraction index in ascending order) ----

// C[m,n] += A[m,k] * B[k,n]
void mm_acc(double* __restrict c, const double* __restrict a,
            const double* __restrict b, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m,k] += dC[m,n] * B^T
void mm_abt_acc(double* __restrict da, const double* __restrict dc,
                const double* __restrict b, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* dcrow = dc + i * n;
    double* darow = da + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j) s += dcrow[j] * brow[j];
      darow[p] += s;
    }
  }
}

// dB[k,n] += A^T * dC
void mm_atb_acc(double* __restrict db, const double* __restrict a,
                const double* __restrict dc, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* dcrow = dc + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* dbrow = db + p * n;
      for (int64_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

struct MatmulPlan {
  int64_t m = 0, k = 0, n = 0;
  int64_t batch = 1;
  Shape out_shape;
  // Element offset of each batch's matrix block inside a / b.
  std::vector<int64_t> a_off, b_off;
};

MatmulPlan plan_matmul(const Shape& sa, const Shape& sb) {
  if (sa.size() < 2 || sb.size() < 2) {
    throw ShapeError("matmul requires rank >= 2 operands, got " +
                     shape_str(sa) + " x " + shape_str(sb));
  }
  MatmulPlan plan;
  plan.m = sa[sa.size() - 2];
  plan.k = sa[sa.size() - 1];
  plan.n = sb[sb.size() - 1];
  if (sb[sb.size() - 2] != plan.k) {
    throw ShapeError("matmul inner extents disagree: " + shape_str(sa) +
                     " x " + shape_str(sb));
  }
  const size_t ra = sa.size() - 2, rb = sb.size() - 2;
  const size_t rbatch = std::max(ra, rb);
  Shape batch(rbatch, 1);
  for (size_t i = 0; i < rbatch; ++i) {
    int64_t da = i < rbatch - ra ? 1 : sa[i - (rbatch - ra)];
    int64_t db = i < rbatch - rb ? 1 : sb[i - (rbatch - rb)];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("matmul batch extents do not broadcast: " +
                       shape_str(sa) + " x " + shape_str(sb));
    }
    batch[i] = std::max(da, db);
  }
  plan.out_shape = batch;
  plan.out_shape.push_back(plan.m);
  plan.out_shape.push_back(plan.n);
  plan.batch = shape_size(batch);

  // Per-dim block strides, zero where the operand broadcasts.
  auto block_strides = [&](const Shape& s, size_t r) {
    std::vector<int64_t> st(rbatch, 0);
    int64_t run = 1;
    for (size_t i = r; i-- > 0;) {
      size_t bi = i + (rbatch - r);
      st[bi] = (s[i] == 1 && batch[bi] != 1) ? 0 : run;
      run *= s[i];
    }
    return st;
  };
  auto sta = block_strides(sa, ra);
  auto stb = block_strides(sb, rb);

  plan.a_off.resize(plan.batch);
  plan.b_off.resize(plan.batch);
  const int64_t a_block = plan.m * plan.k, b_block = plan.k * plan.n;
  Shape idx(rbatch, 0);
  for (int64_t f = 0; f < plan.batch; ++f) {
    int64_t ao = 0, bo = 0;
    for (size_t i = 0; i < rbatch; ++i) {
      ao += idx[i] * sta[i];
      bo += idx[i] * stb[i];
    }
    plan.a_off[f] = ao * a_block;
    plan.b_off[f] = bo * b_block;
    for (size_t i = rbatch; i-- > 0;) {
      if (++idx[i] < batch[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

// Raw permutation copy: dst[out multi-index] = src[in multi-index].
void permute_raw(const double* src, double* dst, const Shape& in_shape,
                 const std::vector<int64_t>& perm) {
  const size_t r = in_shape.size();
  Shape out_shape(r);
  for (size_t i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
  std::vector<int64_t> in_strides(r, 1);
  for (size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  std::vector<int64_t> step(r);  // stride in src per out axis
  for (size_t i = 0; i < r; ++i) step[i] = in_strides[perm[i]];

  const int64_t total = shape_size(in_shape);
  if (total == 0) return;
  Shape idx(r, 0);
  int64_t src_off = 0;
  for (int64_t f = 0; f < total; ++f) {
    dst[f] = src[src_off];
    for (size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) {
        src_off += step[i];
        break;
      }
      idx[i] = 0;
      src_off -= step[i] * (out_shape[i] - 1);
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(a.values());
  const double* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  return make_op("add", a.shape(), std::move(out), {a, b},
                 [](const TensorNode& self) {
                   for (int side = 0; side < 2; ++side) {
                     TensorNode& p = *self.parents[side];
                     if (!p.requires_grad) continue;
                     acc_ready(p);
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       p.grad[i] += self.grad[i];
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(a.values());
  const double* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  return make_op("mul", a.shape(), std::move(out), {a, b},
                 [](const TensorNode& self) {
                   TensorNode& pa = *self.parents[0];
                   TensorNode& pb2 = *self.parents[1];
                   if (pa.requires_grad) {
                     acc_ready(pa);
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       pa.grad[i] += self.grad[i] * pb2.value[i];
                   }
                   if (pb2.requires_grad) {
                     acc_ready(pb2);
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       pb2.grad[i] += self.grad[i] * pa.value[i];
                   }
                 });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  return make_op("scale", a.shape(), std::move(out), {a},
                 [c](const TensorNode& self) {
                   TensorNode& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   acc_ready(p);
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     p.grad[i] += self.grad[i] * c;
                 });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  MatmulPlan plan = plan_matmul(a.shape(), b.shape());
  std::vector<double> out(
      static_cast<size_t>(plan.batch * plan.m * plan.n), 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  const int64_t c_block = plan.m * plan.n;
  for (int64_t f = 0; f < plan.batch; ++f) {
    mm_acc(out.data() + f * c_block, pa + plan.a_off[f], pb + plan.b_off[f],
           plan.m, plan.k, plan.n);
  }
  return make_op(
      "matmul", plan.out_shape, std::move(out), {a, b},
      [plan](const TensorNode& self) {
        TensorNode& pa2 = *self.parents[0];
        TensorNode& pb2 = *self.parents[1];
        const int64_t c_block = plan.m * plan.n;
        if (pa2.requires_grad) {
          acc_ready(pa2);
          for (int64_t f = 0; f < plan.batch; ++f) {
            mm_abt_acc(pa2.grad.data() + plan.a_off[f],
                       self.grad.data() + f * c_block,
                       pb2.value.data() + plan.b_off[f], plan.m, plan.k,
                       plan.n);
          }
        }
        if (pb2.requires_grad) {
          acc_ready(pb2);
          for (int64_t f = 0; f < plan.batch; ++f) {
            mm_atb_acc(pb2.grad.data() + plan.b_off[f],
                       pa2.value.data() + plan.a_off[f],
                       self.grad.data() + f * c_block, plan.m, plan.k,
                       plan.n);
          }
        }
      });
}

namespace {
int64_t normalize_axis(int64_t axis, int64_t rank, const char* op) {
  int64_t a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return a;
}
}  // namespace

Tensor softmax(const Tensor& x, int64_t axis) {
  const Shape& s = x.shape();
  const int64_t a = normalize_axis(axis, x.rank(), "softmax");
  const int64_t len = s[a];
  int64_t inner = 1, outer = 1;
  for (int64_t i = a + 1; i < x.rank(); ++i) inner *= s[i];
  for (int64_t i = 0; i < a; ++i) outer *= s[i];

  std::vector<double> out(x.values());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      double* base = out.data() + o * len * inner + in;
      double mx = base[0];
      for (int64_t i = 1; i < len; ++i) mx = std::max(mx, base[i * inner]);
      double sum = 0.0;
      for (int64_t i = 0; i < len; ++i) {
        double e = std::exp(base[i * inner] - mx);
        base[i * inner] = e;
        sum += e;
      }
      for (int64_t i = 0; i < len; ++i) base[i * inner] /= sum;
    }
  }
  return make_op("softmax", s, std::move(out), {x},
                 [len, inner, outer](const TensorNode& self) {
                   TensorNode& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   acc_ready(p);
                   for (int64_t o = 0; o < outer; ++o) {
                     for (int64_t in = 0; in < inner; ++in) {
                       const int64_t base = o * len * inner + in;
                       double dot = 0.0;
                       for (int64_t i = 0; i < len; ++i) {
                         const int64_t ix = base + i * inner;
                         dot += self.grad[ix] * self.value[ix];
                       }
                       for (int64_t i = 0; i < len; ++i) {
                         const int64_t ix = base + i * inner;
                         p.grad[ix] += self.value[ix] * (self.grad[ix] - dot);
                       }
                     }
                   }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm requires rank >= 1 input");
  const int64_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm affine shapes " + shape_str(gain.shape()) +
                     " / " + shape_str(bias.shape()) +
                     " do not match feature extent " + std::to_string(d));
  }
  if (eps <= 0) throw ConfigError("layer_norm eps must be positive");

  const int64_t tokens = x.size() / d;
  std::vector<double> out(static_cast<size_t>(x.size()));
  const double* px = x.data();
  const double* pg = gain.data();
  const double* pb = bias.data();
  for (int64_t t = 0; t < tokens; ++t) {
    const double* xr = px + t * d;
    double* yr = out.data() + t * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += xr[j];
    mean /= d;
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < d; ++j)
      yr[j] = (xr[j] - mean) * inv * pg[j] + pb[j];
  }
  return make_op(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [d, tokens, eps](const TensorNode& self) {
        TensorNode& px2 = *self.parents[0];
        TensorNode& pg2 = *self.parents[1];
        TensorNode& pb2 = *self.parents[2];
        if (px2.requires_grad) acc_ready(px2);
        if (pg2.requires_grad) acc_ready(pg2);
        if (pb2.requires_grad) acc_ready(pb2);
        std::vector<double> xhat(static_cast<size_t>(d));
        for (int64_t t = 0; t < tokens; ++t) {
          const double* xr = px2.value.data() + t * d;
          const double* dy = self.grad.data() + t * d;
          double mean = 0.0;
          for (int64_t j = 0; j < d; ++j) mean += xr[j];
          mean /= d;
          double var = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
          }
          var /= d;
          const double inv = 1.0 / std::sqrt(var + eps);
          for (int64_t j = 0; j < d; ++j) xhat[j] = (xr[j] - mean) * inv;

          if (pg2.requires_grad || pb2.requires_grad) {
            for (int64_t j = 0; j < d; ++j) {
              if (pg2.requires_grad) pg2.grad[j] += dy[j] * xhat[j];
              if (pb2.requires_grad) pb2.grad[j] += dy[j];
            }
          }
          if (px2.requires_grad) {
            double m1 = 0.0, m2 = 0.0;
            for (int64_t j = 0; j < d; ++j) {
              const double g = dy[j] * pg2.value[j];
              m1 += g;
              m2 += g * xhat[j];
            }
            m1 /= d;
            m2 /= d;
            double* dx = px2.grad.data() + t * d;
            for (int64_t j = 0; j < d; ++j) {
              const double g = dy[j] * pg2.value[j];
              dx[j] += inv * (g - m1 - xhat[j] * m2);
            }
          }
        }
      });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return make_op("sigmoid", x.shape(), std::move(out), {x},
                 [](const TensorNode& self) {
                   TensorNode& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   acc_ready(p);
                   for (size_t i = 0; i < self.grad.size(); ++i) {
                     const double y = self.value[i];
                     p.grad[i] += self.grad[i] * y * (1.0 - y);
                   }
                 });
}

namespace {
// cos/sin per (position, pair); table reused across all batch fibers.
struct RopeTable {
  int64_t seq, half;
  std::vector<double> c, s;
};

RopeTable rope_table(const std::vector<int64_t>& positions, int64_t d,
                     double base) {
  RopeTable t;
  t.seq = static_cast<int64_t>(positions.size());
  t.half = d / 2;
  t.c.resize(static_cast<size_t>(t.seq * t.half));
  t.s.resize(static_cast<size_t>(t.seq * t.half));
  for (int64_t p = 0; p < t.seq; ++p) {
    for (int64_t i = 0; i < t.half; ++i) {
      const double freq =
          std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(positions[p]) * freq;
      t.c[p * t.half + i] = std::cos(angle);
      t.s[p * t.half + i] = std::sin(angle);
    }
  }
  return t;
}
}  // namespace

Tensor rope_apply(const Tensor& x, const std::vector<int64_t>& positions,
                  double base) {
  if (x.rank() < 2) throw ShapeError("rope_apply requires rank >= 2 input");
  const int64_t d = x.shape().back();
  const int64_t seq = x.shape()[x.rank() - 2];
  if (d % 2 != 0) {
    throw ConfigError("rope_apply requires an even head dimension, got " +
                      std::to_string(d));
  }
  if (static_cast<int64_t>(positions.size()) != seq) {
    throw ShapeError("rope_apply positions length " +
                     std::to_string(positions.size()) +
                     " does not match sequence extent " + std::to_string(seq));
  }
  auto table = std::make_shared<RopeTable>(rope_table(positions, d, base));
  const int64_t fibers = x.size() / (seq * d);
  std::vector<double> out(static_cast<size_t>(x.size()));
  const double* px = x.data();
  const int64_t half = d / 2;
  for (int64_t f = 0; f < fibers; ++f) {
    for (int64_t p = 0; p < seq; ++p) {
      const double* xr = px + (f * seq + p) * d;
      double* yr = out.data() + (f * seq + p) * d;
      const double* cr = table->c.data() + p * half;
      const double* sr = table->s.data() + p * half;
      for (int64_t i = 0; i < half; ++i) {
        const double x0 = xr[2 * i], x1 = xr[2 * i + 1];
        yr[2 * i] = x0 * cr[i] - x1 * sr[i];
        yr[2 * i + 1] = x0 * sr[i] + x1 * cr[i];
      }
    }
  }
  return make_op("rope_apply", x.shape(), std::move(out), {x},
                 [table, fibers, seq, d, half](const TensorNode& self) {
                   TensorNode& p2 = *self.parents[0];
                   if (!p2.requires_grad) return;
                   acc_ready(p2);
                   for (int64_t f = 0; f < fibers; ++f) {
                     for (int64_t p = 0; p < seq; ++p) {
                       const double* dy =
                           self.grad.data() + (f * seq + p) * d;
                       double* dx = p2.grad.data() + (f * seq + p) * d;
                       const double* cr = table->c.data() + p * half;
                       const double* sr = table->s.data() + p * half;
                       for (int64_t i = 0; i < half; ++i) {
                         const double g0 = dy[2 * i], g1 = dy[2 * i + 1];
                         dx[2 * i] += g0 * cr[i] + g1 * sr[i];
                         dx[2 * i + 1] += -g0 * sr[i] + g1 * cr[i];
                       }
                     }
                   }
                 });
}

Tensor rope_apply(const Tensor& x, double base) {
  if (x.rank() < 2) throw ShapeError("rope_apply requires rank >= 2 input");
  const int64_t seq = x.shape()[x.rank() - 2];
  std::vector<int64_t> positions(static_cast<size_t>(seq));
  for (int64_t i = 0; i < seq; ++i) positions[i] = i;
  return rope_apply(x, positions, base);
}

Tensor concat(const Tensor& a, const Tensor& b, int64_t axis) {
  if (a.rank() != b.rank()) {
    throw ShapeError("concat rank mismatch: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const int64_t ax = normalize_axis(axis, a.rank(), "concat");
  for (int64_t i = 0; i < a.rank(); ++i) {
    if (i != ax && a.shape()[i] != b.shape()[i]) {
      throw ShapeError("concat extents disagree off-axis: " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
  Shape out_shape = a.shape();
  out_shape[ax] += b.shape()[ax];

  int64_t inner = 1, outer = 1;
  for (int64_t i = ax + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  for (int64_t i = 0; i < ax; ++i) outer *= a.shape()[i];
  const int64_t a_blk = a.shape()[ax] * inner;
  const int64_t b_blk = b.shape()[ax] * inner;

  std::vector<double> out(static_cast<size_t>(shape_size(out_shape)));
  const double* pa = a.size() ? a.data() : nullptr;
  const double* pb = b.size() ? b.data() : nullptr;
  for (int64_t o = 0; o < outer; ++o) {
    double* dst = out.data() + o * (a_blk + b_blk);
    if (a_blk) std::memcpy(dst, pa + o * a_blk, a_blk * sizeof(double));
    if (b_blk)
      std::memcpy(dst + a_blk, pb + o * b_blk, b_blk * sizeof(double));
  }
  return make_op("concat", out_shape, std::move(out), {a, b},
                 [outer, a_blk, b_blk](const TensorNode& self) {
                   TensorNode& pa2 = *self.parents[0];
                   TensorNode& pb2 = *self.parents[1];
                   if (pa2.requires_grad) acc_ready(pa2);
                   if (pb2.requires_grad) acc_ready(pb2);
                   for (int64_t o = 0; o < outer; ++o) {
                     const double* g = self.grad.data() + o * (a_blk + b_blk);
                     if (pa2.requires_grad) {
                       for (int64_t i = 0; i < a_blk; ++i)
                         pa2.grad[o * a_blk + i] += g[i];
                     }
                     if (pb2.requires_grad) {
                       for (int64_t i = 0; i < b_blk; ++i)
                         pb2.grad[o * b_blk + i] += g[a_blk + i];
                     }
                   }
                 });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  return concat(a, b, a.rank() - 1);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape from " + shape_str(x.shape()) + " to " +
                     shape_str(shape) + " changes element count");
  }
  return make_op("reshape", std::move(shape), x.values(), {x},
                 [](const TensorNode& self) {
                   TensorNode& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   acc_ready(p);
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     p.grad[i] += self.grad[i];
                 });
}

Tensor permute(const Tensor& x, const std::vector<int64_t>& perm) {
  const size_t r = static_cast<size_t>(x.rank());
  if (perm.size() != r) {
    throw ShapeError("permute order has rank " + std::to_string(perm.size()) +
                     ", tensor has rank " + std::to_string(r));
  }
  std::vector<bool> seen(r, false);
  for (int64_t p : perm) {
    if (p < 0 || p >= static_cast<int64_t>(r) || seen[p]) {
      throw ShapeError("permute order is not a permutation");
    }
    seen[p] = true;
  }
  Shape out_shape(r);
  for (size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[perm[i]];

  std::vector<double> out(static_cast<size_t>(x.size()));
  permute_raw(x.data(), out.data(), x.shape(), perm);

  std::vector<int64_t> inverse(r);
  for (size_t i = 0; i < r; ++i) inverse[perm[i]] = i;
  Shape fwd_out_shape = out_shape;
  return make_op("permute", std::move(out_shape), std::move(out), {x},
                 [inverse, fwd_out_shape](const TensorNode& self) {
                   TensorNode& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   acc_ready(p);
                   std::vector<double> back(self.grad.size());
                   permute_raw(self.grad.data(), back.data(), fwd_out_shape,
                               inverse);
                   for (size_t i = 0; i < back.size(); ++i)
                     p.grad[i] += back[i];
                 });
}

Tensor mean_rows(const Tensor& x) {
  if (x.rank() != 2) {
    throw ShapeError("mean_rows expects a rank-2 tensor, got " +
                     shape_str(x.shape()));
  }
  const int64_t n = x.shape()[0], d = x.shape()[1];
  if (n == 0) throw ShapeError("mean_rows on an empty tensor");
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  const double* px = x.data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) out[j] += px[i * d + j];
  }
  for (double& v : out) v /= static_cast<double>(n);
  return make_op("mean_rows", Shape{d}, std::move(out), {x},
                 [n, d](const TensorNode& self) {
                   TensorNode& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   acc_ready(p);
                   const double inv = 1.0 / static_cast<double>(n);
                   for (int64_t i = 0; i < n; ++i) {
                     for (int64_t j = 0; j < d; ++j)
                       p.grad[i * d + j] += self.grad[j] * inv;
                   }
                 });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  const double* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) s += px[i];
  return make_op("sum_all", Shape{}, {s}, {x}, [](const TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    acc_ready(p);
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor cross_entropy_logits(const Tensor& logits, int64_t label) {
  if (logits.rank() != 1) {
    throw ShapeError("cross_entropy_logits expects rank-1 logits, got " +
                     shape_str(logits.shape()));
  }
  const int64_t c = logits.shape()[0];
  if (label < 0 || label >= c) {
    throw UsageError("class label " + std::to_string(label) +
                     " out of range for " + std::to_string(c) + " classes");
  }
  const double* pl = logits.data();
  double mx = pl[0];
  for (int64_t i = 1; i < c; ++i) mx = std::max(mx, pl[i]);
  double sum = 0.0;
  for (int64_t i = 0; i < c; ++i) sum += std::exp(pl[i] - mx);
  const double lse = std::log(sum) + mx;
  const double loss = lse - pl[label];
  return make_op("cross_entropy_logits", Shape{}, {loss}, {logits},
                 [label, c, lse](const TensorNode& self) {
                   TensorNode& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   acc_ready(p);
                   const double g = self.grad[0];
                   for (int64_t i = 0; i < c; ++i) {
                     const double soft = std::exp(p.value[i] - lse);
                     p.grad[i] +=
                         g * (soft - (i == label ? 1.0 : 0.0));
                   }
                 });
}

}  // namespace tgv
