#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "tgv/ops.hpp"
#include "tgv/tensor.hpp"

using tgv::Rng;
using tgv::Shape;
using tgv::Tensor;

namespace {

double eval_scalar(const std::function<Tensor()>& build) {
  tgv::NoGradGuard ng;
  return build().item();
}

// Central-difference check of d(build())/d(param) against reverse mode,
// element by element. `build` must close over `param` and return a scalar.
void check_grads_fd(Tensor param, const std::function<Tensor()>& build,
                    double h = 1e-5) {
  param.zero_grad();
  Tensor loss = build();
  loss.backward();
  const std::vector<double> analytic = param.grad();
  REQUIRE(static_cast<int64_t>(analytic.size()) == param.size());
  for (int64_t i = 0; i < param.size(); ++i) {
    const double orig = param.data()[i];
    param.data()[i] = orig + h;
    const double fp = eval_scalar(build);
    param.data()[i] = orig - h;
    const double fm = eval_scalar(build);
    param.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[static_cast<size_t>(i)];
    const double tol = std::max(1e-4 * std::max(std::abs(a), std::abs(numeric)), 1e-8);
    INFO("element ", i, ": analytic ", a, " vs numeric ", numeric);
    CHECK(std::abs(a - numeric) <= tol);
  }
}

Tensor rand_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> data(static_cast<size_t>(tgv::shape_size(shape)));
  for (double& v : data) v = rng.normal();
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Independent triple-loop oracle for a single [m,k] x [k,n] product.
std::vector<double> naive_mm(const std::vector<double>& a,
                             const std::vector<double>& b, int64_t m, int64_t k,
                             int64_t n) {
  std::vector<double> c(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

// Long-double softmax over one fiber.
std::vector<double> softmax_ld(const std::vector<double>& x) {
  long double mx = x[0];
  for (double v : x) mx = std::max<long double>(mx, v);
  std::vector<long double> e(x.size());
  long double s = 0.0L;
  for (size_t i = 0; i < x.size(); ++i) {
    e[i] = expl(static_cast<long double>(x[i]) - mx);
    s += e[i];
  }
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / s);
  return out;
}

}  // namespace

TEST_CASE("construction, indexing, and shape validation") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.size() == 6);
  CHECK(z.rank() == 2);
  for (int64_t i = 0; i < 6; ++i) CHECK(z.data()[i] == 0.0);

  Tensor f = Tensor::full({2, 2}, 1.5);
  CHECK(f.at({1, 1}) == 1.5);

  Tensor d = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(d.at({0, 0}) == 1.0);
  CHECK(d.at({0, 2}) == 3.0);
  CHECK(d.at({1, 0}) == 4.0);
  CHECK(d.at({1, 2}) == 6.0);

  Tensor s = Tensor::scalar(4.25);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 4.25);

  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), tgv::ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({-1}, {}), tgv::ShapeError);
  CHECK_THROWS_AS(d.item(), tgv::UsageError);

  // Zero extents are legal (empty tensors participate in concat).
  Tensor e = Tensor::zeros({2, 0});
  CHECK(e.size() == 0);
}

TEST_CASE("init factories draw from the given stream") {
  Rng r1(3), r2(3);
  Tensor a = Tensor::truncated_normal({4, 4}, 0.02, r1);
  Tensor b = Tensor::truncated_normal({4, 4}, 0.02, r2);
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(a.data()[i] == b.data()[i]);
    CHECK(std::abs(a.data()[i]) <= 0.04);
  }
  Rng r3(3);
  Tensor c = Tensor::randn({64}, r3);
  bool any_large = false;
  for (int64_t i = 0; i < c.size(); ++i) any_large = any_large || std::abs(c.data()[i]) > 0.1;
  CHECK(any_large);
}

TEST_CASE("backward accumulates into leaves across repeated calls") {
  Tensor x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  Tensor loss = tgv::sum_all(tgv::mul(x, x));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
  loss.backward();  // same graph again: leaf grads double, nothing compounds
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-8.0));
  x.zero_grad();
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("diamond-shaped graphs sum gradient contributions") {
  Tensor x = Tensor::from_data({2}, {3.0, -1.0}, true);
  Tensor y = tgv::mul(x, x);
  Tensor z = tgv::add(y, y);
  tgv::sum_all(z).backward();
  // d/dx sum(2 x^2) = 4x
  CHECK(x.grad()[0] == doctest::Approx(12.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
}

TEST_CASE("backward requires a scalar root") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y = tgv::scale(x, 2.0);
  CHECK_THROWS_AS(y.backward(), tgv::UsageError);
}

TEST_CASE("gradients do not flow into constant leaves") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor c = Tensor::from_data({2}, {5.0, 6.0}, false);
  tgv::sum_all(tgv::mul(x, c)).backward();
  CHECK(x.grad()[0] == doctest::Approx(5.0));
  CHECK(x.grad()[1] == doctest::Approx(6.0));
  CHECK(!c.has_grad());
}

TEST_CASE("NoGradGuard suppresses graph construction") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  tgv::NoGradGuard ng;
  Tensor y = tgv::mul(x, x);
  CHECK(!y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("finite checks flag non-finite op outputs") {
  tgv::set_finite_checks(true);
  Tensor x = Tensor::from_data({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(tgv::scale(x, 2.0), tgv::NumericError);
  tgv::set_finite_checks(false);
  Tensor y = tgv::scale(x, 2.0);
  CHECK(std::isnan(y.data()[1]));
  tgv::set_finite_checks(true);
}

TEST_CASE("detach and clone") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor d = x.detach();
  CHECK(!d.requires_grad());
  CHECK(d.data()[0] == 1.0);
  Tensor c = x.clone();
  c.data()[0] = 9.0;
  CHECK(x.data()[0] == 1.0);
}

TEST_CASE("add, mul, scale: values and gradients") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor b = Tensor::from_data({2, 2}, {10, 20, 30, 40}, true);
  Tensor s = tgv::add(a, b);
  CHECK(s.at({1, 1}) == 44.0);
  Tensor p = tgv::mul(a, b);
  CHECK(p.at({1, 0}) == 90.0);
  Tensor k = tgv::scale(a, -0.5);
  CHECK(k.at({0, 1}) == -1.0);

  CHECK_THROWS_AS(tgv::add(a, Tensor::zeros({3})), tgv::ShapeError);
  CHECK_THROWS_AS(tgv::mul(a, Tensor::zeros({2, 3})), tgv::ShapeError);

  tgv::sum_all(tgv::mul(a, b)).backward();
  CHECK(a.grad()[3] == doctest::Approx(40.0));
  CHECK(b.grad()[0] == doctest::Approx(1.0));

  Rng rng(11);
  Tensor x = rand_tensor({3, 4}, rng);
  Tensor w = rand_tensor({3, 4}, rng, false);
  check_grads_fd(x, [&] { return tgv::sum_all(tgv::mul(tgv::add(x, w), tgv::scale(x, 0.7))); });
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(21);
  const int64_t m = 5, k = 7, n = 4;
  Tensor a = rand_tensor({m, k}, rng, false);
  Tensor b = rand_tensor({k, n}, rng, false);
  Tensor c = tgv::matmul(a, b);
  REQUIRE(c.shape() == Shape{m, n});
  const std::vector<double> ref = naive_mm(a.values(), b.values(), m, k, n);
  for (int64_t i = 0; i < c.size(); ++i) {
    CHECK(std::abs(c.data()[i] - ref[static_cast<size_t>(i)]) <= 1e-12);
  }
}

TEST_CASE("matmul broadcasts batch extents") {
  Rng rng(22);
  const int64_t B = 3, m = 2, k = 4, n = 3;
  Tensor a3 = rand_tensor({B, m, k}, rng, false);
  Tensor b3 = rand_tensor({B, k, n}, rng, false);
  Tensor b2 = rand_tensor({k, n}, rng, false);
  Tensor a2 = rand_tensor({m, k}, rng, false);

  Tensor c_full = tgv::matmul(a3, b3);
  REQUIRE(c_full.shape() == Shape{B, m, n});
  Tensor c_bcast_b = tgv::matmul(a3, b2);
  Tensor c_bcast_a = tgv::matmul(a2, b3);
  REQUIRE(c_bcast_b.shape() == Shape{B, m, n});
  REQUIRE(c_bcast_a.shape() == Shape{B, m, n});

  for (int64_t bi = 0; bi < B; ++bi) {
    std::vector<double> ab(a3.values().begin() + bi * m * k,
                           a3.values().begin() + (bi + 1) * m * k);
    std::vector<double> bb(b3.values().begin() + bi * k * n,
                           b3.values().begin() + (bi + 1) * k * n);
    std::vector<double> ref_full = naive_mm(ab, bb, m, k, n);
    std::vector<double> ref_b = naive_mm(ab, b2.values(), m, k, n);
    std::vector<double> ref_a = naive_mm(a2.values(), bb, m, k, n);
    for (int64_t i = 0; i < m * n; ++i) {
      CHECK(std::abs(c_full.data()[bi * m * n + i] - ref_full[i]) <= 1e-12);
      CHECK(std::abs(c_bcast_b.data()[bi * m * n + i] - ref_b[i]) <= 1e-12);
      CHECK(std::abs(c_bcast_a.data()[bi * m * n + i] - ref_a[i]) <= 1e-12);
    }
  }

  CHECK_THROWS_AS(tgv::matmul(a3, rand_tensor({k + 1, n}, rng, false)), tgv::ShapeError);
  CHECK_THROWS_AS(tgv::matmul(rand_tensor({2, m, k}, rng, false), b3), tgv::ShapeError);
  CHECK_THROWS_AS(tgv::matmul(rand_tensor({k}, rng, false), b2), tgv::ShapeError);
}

TEST_CASE("matmul gradients: closed form and finite differences") {
  // L = sum(A B): dA = ones * B^T, dB = A^T * ones.
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12}, true);
  tgv::sum_all(tgv::matmul(a, b)).backward();
  for (int64_t i = 0; i < 2; ++i) {
    for (int64_t p = 0; p < 3; ++p) {
      const double row_sum = b.values()[p * 2] + b.values()[p * 2 + 1];
      CHECK(a.grad()[i * 3 + p] == doctest::Approx(row_sum));
    }
  }
  for (int64_t p = 0; p < 3; ++p) {
    const double col_sum = a.values()[p] + a.values()[3 + p];
    CHECK(b.grad()[p * 2] == doctest::Approx(col_sum));
    CHECK(b.grad()[p * 2 + 1] == doctest::Approx(col_sum));
  }

  Rng rng(23);
  Tensor x = rand_tensor({2, 3, 4}, rng);
  Tensor w = rand_tensor({4, 2}, rng);
  Tensor probe = rand_tensor({2, 3, 2}, rng, false);
  auto build = [&] { return tgv::sum_all(tgv::mul(tgv::matmul(x, w), probe)); };
  check_grads_fd(x, build);
  check_grads_fd(w, build);
}

TEST_CASE("softmax matches a long-double oracle on both axes") {
  const std::vector<double> rows = {0.3, -1.2, 2.5, 0.3, 4.0, -0.7, 0.0, 1.1};
  Tensor x = Tensor::from_data({2, 4}, rows);

  Tensor y_last = tgv::softmax(x, -1);
  for (int64_t r = 0; r < 2; ++r) {
    std::vector<double> fiber(rows.begin() + r * 4, rows.begin() + (r + 1) * 4);
    std::vector<double> ref = softmax_ld(fiber);
    double sum = 0.0;
    for (int64_t j = 0; j < 4; ++j) {
      CHECK(y_last.data()[r * 4 + j] == doctest::Approx(ref[j]).epsilon(1e-14));
      sum += y_last.data()[r * 4 + j];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  Tensor y_first = tgv::softmax(x, 0);
  for (int64_t j = 0; j < 4; ++j) {
    std::vector<double> fiber = {rows[j], rows[4 + j]};
    std::vector<double> ref = softmax_ld(fiber);
    CHECK(y_first.data()[j] == doctest::Approx(ref[0]).epsilon(1e-14));
    CHECK(y_first.data()[4 + j] == doctest::Approx(ref[1]).epsilon(1e-14));
  }
}

TEST_CASE("softmax is stable under extreme logits") {
  Tensor x = Tensor::from_data({1, 3}, {1000.0, 0.0, -1000.0});
  Tensor y = tgv::softmax(x, -1);
  CHECK(y.data()[0] == doctest::Approx(1.0));
  CHECK(y.data()[1] >= 0.0);
  CHECK(y.data()[2] >= 0.0);
  for (int64_t i = 0; i < 3; ++i) CHECK(std::isfinite(y.data()[i]));
}

TEST_CASE("softmax gradients") {
  Rng rng(31);
  Tensor x = rand_tensor({3, 5}, rng);
  Tensor w = rand_tensor({3, 5}, rng, false);
  check_grads_fd(x, [&] { return tgv::sum_all(tgv::mul(tgv::softmax(x, -1), w)); });
  check_grads_fd(x, [&] { return tgv::sum_all(tgv::mul(tgv::softmax(x, 0), w)); });
}

TEST_CASE("layer_norm matches the closed form") {
  const double eps = 1e-5;
  Tensor x = Tensor::from_data({1, 4}, {1.0, 2.0, 3.0, 4.0});
  Tensor gain = Tensor::from_data({4}, {1.0, 1.0, 1.0, 1.0});
  Tensor bias = Tensor::zeros({4});
  Tensor y = tgv::layer_norm(x, gain, bias, eps);
  const double mean = 2.5;
  const double var = 1.25;  // population variance
  const double inv = 1.0 / std::sqrt(var + eps);
  for (int64_t j = 0; j < 4; ++j) {
    const double ref = (x.data()[j] - mean) * inv;
    CHECK(y.data()[j] == doctest::Approx(ref).epsilon(1e-14));
  }

  Tensor gain2 = Tensor::from_data({4}, {2.0, -1.0, 0.5, 3.0});
  Tensor bias2 = Tensor::from_data({4}, {0.1, 0.2, -0.3, 0.4});
  Tensor y2 = tgv::layer_norm(x, gain2, bias2, eps);
  for (int64_t j = 0; j < 4; ++j) {
    const double ref = gain2.data()[j] * (x.data()[j] - mean) * inv + bias2.data()[j];
    CHECK(y2.data()[j] == doctest::Approx(ref).epsilon(1e-13));
  }

  CHECK_THROWS_AS(tgv::layer_norm(x, Tensor::zeros({3}), bias, eps), tgv::ShapeError);
  CHECK_THROWS_AS(tgv::layer_norm(x, gain, bias, 0.0), tgv::ConfigError);
}

TEST_CASE("layer_norm is exact on constant fibers and differentiable") {
  Tensor x = Tensor::full({2, 3}, 5.0);
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias = Tensor::zeros({3});
  Tensor y = tgv::layer_norm(x, gain, bias);
  for (int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(0.0));

  Rng rng(41);
  Tensor xr = rand_tensor({2, 3, 6}, rng);
  Tensor g = rand_tensor({6}, rng);
  Tensor b = rand_tensor({6}, rng);
  Tensor w = rand_tensor({2, 3, 6}, rng, false);
  auto build = [&] { return tgv::sum_all(tgv::mul(tgv::layer_norm(xr, g, b), w)); };
  check_grads_fd(xr, build);
  check_grads_fd(g, build);
  check_grads_fd(b, build);
}

TEST_CASE("sigmoid is stable across the full double range") {
  Tensor x = Tensor::from_data({5}, {0.0, 710.0, -710.0, 36.0, -36.0});
  Tensor y = tgv::sigmoid(x);
  CHECK(y.data()[0] == 0.5);
  CHECK(y.data()[1] == 1.0);
  CHECK(y.data()[2] > 0.0);
  CHECK(y.data()[2] < 1e-300);
  CHECK(y.data()[3] == doctest::Approx(1.0).epsilon(1e-15));
  for (int64_t i = 0; i < 5; ++i) CHECK(std::isfinite(y.data()[i]));

  Tensor z = Tensor::from_data({1}, {0.3}, true);
  tgv::sum_all(tgv::sigmoid(z)).backward();
  const double s = 1.0 / (1.0 + std::exp(-0.3));
  CHECK(z.grad()[0] == doctest::Approx(s * (1.0 - s)).epsilon(1e-12));
}

TEST_CASE("rope at position zero is the identity") {
  Rng rng(51);
  Tensor x = rand_tensor({1, 8}, rng, false);
  Tensor y = tgv::rope_apply(x);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("rope matches the explicit rotation formula") {
  // d=4: pair 0 rotates by angle p, pair 1 by angle p * base^(-1/2).
  const double base = 10000.0;
  Tensor x = Tensor::from_data({2, 4}, {1.0, 0.0, 0.5, -0.25, 0.3, 0.7, -0.2, 0.9});
  Tensor y = tgv::rope_apply(x, base);
  // Position 0: identity.
  for (int64_t i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
  // Position 1.
  const double th0 = 1.0;
  const double th1 = std::pow(base, -2.0 / 4.0);
  const double a = x.data()[4], b = x.data()[5], c = x.data()[6], d = x.data()[7];
  CHECK(y.data()[4] == doctest::Approx(a * std::cos(th0) - b * std::sin(th0)).epsilon(1e-15));
  CHECK(y.data()[5] == doctest::Approx(a * std::sin(th0) + b * std::cos(th0)).epsilon(1e-15));
  CHECK(y.data()[6] == doctest::Approx(c * std::cos(th1) - d * std::sin(th1)).epsilon(1e-15));
  CHECK(y.data()[7] == doctest::Approx(c * std::sin(th1) + d * std::cos(th1)).epsilon(1e-15));
}

TEST_CASE("rope preserves norms and relative-position dot products") {
  Rng rng(52);
  Tensor x = rand_tensor({6, 16}, rng, false);
  Tensor y = tgv::rope_apply(x);
  for (int64_t p = 0; p < 6; ++p) {
    double n0 = 0.0, n1 = 0.0;
    for (int64_t j = 0; j < 16; ++j) {
      n0 += x.data()[p * 16 + j] * x.data()[p * 16 + j];
      n1 += y.data()[p * 16 + j] * y.data()[p * 16 + j];
    }
    CHECK(n1 == doctest::Approx(n0).epsilon(1e-12));
  }

  // <rope(q,m), rope(k,n)> depends only on m - n.
  Tensor q = rand_tensor({1, 16}, rng, false);
  Tensor k = rand_tensor({1, 16}, rng, false);
  auto dot_at = [&](int64_t m, int64_t n) {
    Tensor qm = tgv::rope_apply(q, std::vector<int64_t>{m});
    Tensor kn = tgv::rope_apply(k, std::vector<int64_t>{n});
    double s = 0.0;
    for (int64_t j = 0; j < 16; ++j) s += qm.data()[j] * kn.data()[j];
    return s;
  };
  const double d0 = dot_at(3, 7);
  CHECK(dot_at(8, 12) == doctest::Approx(d0).epsilon(1e-10));
  CHECK(dot_at(103, 107) == doctest::Approx(d0).epsilon(1e-10));
}

TEST_CASE("rope applies per batch fiber and differentiates") {
  Rng rng(53);
  Tensor x = rand_tensor({2, 3, 4}, rng);
  Tensor y = tgv::rope_apply(x);
  // Each batch entry gets the same rotation table.
  Tensor x0 = Tensor::from_data({3, 4}, std::vector<double>(x.values().begin(),
                                                            x.values().begin() + 12));
  Tensor y0 = tgv::rope_apply(x0);
  for (int64_t i = 0; i < 12; ++i) CHECK(y.data()[i] == y0.data()[i]);

  Tensor w = rand_tensor({2, 3, 4}, rng, false);
  check_grads_fd(x, [&] { return tgv::sum_all(tgv::mul(tgv::rope_apply(x), w)); });

  CHECK_THROWS_AS(tgv::rope_apply(rand_tensor({2, 3}, rng, false)), tgv::ConfigError);
  CHECK_THROWS_AS(tgv::rope_apply(rand_tensor({4}, rng, false)), tgv::ShapeError);
}

TEST_CASE("concat joins along the requested axis") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 3}, {5, 6, 7, 8, 9, 10});
  Tensor c = tgv::concat(a, b, 1);
  REQUIRE(c.shape() == Shape{2, 5});
  const std::vector<double> want = {1, 2, 5, 6, 7, 3, 4, 8, 9, 10};
  for (int64_t i = 0; i < 10; ++i) CHECK(c.data()[i] == want[static_cast<size_t>(i)]);

  Tensor d = Tensor::from_data({1, 2}, {11, 12});
  Tensor e = tgv::concat(a, d, 0);
  REQUIRE(e.shape() == Shape{3, 2});
  CHECK(e.at({2, 1}) == 12.0);

  // Concatenating an empty tensor is the identity on values.
  Tensor empty = Tensor::zeros({2, 0});
  Tensor f = tgv::concat(a, empty, 1);
  REQUIRE(f.shape() == Shape{2, 2});
  for (int64_t i = 0; i < 4; ++i) CHECK(f.data()[i] == a.data()[i]);

  CHECK_THROWS_AS(tgv::concat(a, Tensor::zeros({3, 3}), 1), tgv::ShapeError);
  CHECK(tgv::concat_last(a, b).shape() == Shape{2, 5});
}

TEST_CASE("concat routes gradients to the right parent") {
  Rng rng(61);
  Tensor a = rand_tensor({2, 3}, rng);
  Tensor b = rand_tensor({2, 2}, rng);
  Tensor w = rand_tensor({2, 5}, rng, false);
  auto build = [&] { return tgv::sum_all(tgv::mul(tgv::concat(a, b, 1), w)); };
  check_grads_fd(a, build);
  check_grads_fd(b, build);
  a.zero_grad();
  b.zero_grad();
  build().backward();
  // dL/da[i,j] must equal w at the matching position of the joined tensor.
  CHECK(a.grad()[0] == doctest::Approx(w.data()[0]));
  CHECK(b.grad()[0] == doctest::Approx(w.data()[3]));
}

TEST_CASE("reshape preserves row-major order and element count") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor y = tgv::reshape(x, {3, 2});
  CHECK(y.at({0, 1}) == 2.0);
  CHECK(y.at({2, 0}) == 5.0);
  CHECK_THROWS_AS(tgv::reshape(x, {4, 2}), tgv::ShapeError);

  Rng rng(62);
  Tensor xr = rand_tensor({2, 6}, rng);
  Tensor w = rand_tensor({3, 4}, rng, false);
  check_grads_fd(xr, [&] { return tgv::sum_all(tgv::mul(tgv::reshape(xr, {3, 4}), w)); });
}

TEST_CASE("permute moves axes and inverts cleanly") {
  Tensor x = Tensor::from_data({2, 3, 4}, [] {
    std::vector<double> v(24);
    for (size_t i = 0; i < 24; ++i) v[i] = static_cast<double>(i);
    return v;
  }());
  Tensor y = tgv::permute(x, {1, 0, 2});
  REQUIRE(y.shape() == Shape{3, 2, 4});
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 3; ++j)
      for (int64_t k = 0; k < 4; ++k) CHECK(y.at({j, i, k}) == x.at({i, j, k}));

  Tensor back = tgv::permute(y, {1, 0, 2});
  for (int64_t i = 0; i < 24; ++i) CHECK(back.data()[i] == x.data()[i]);

  Tensor z = tgv::permute(x, {2, 0, 1});
  REQUIRE(z.shape() == Shape{4, 2, 3});
  CHECK(z.at({3, 1, 2}) == x.at({1, 2, 3}));

  CHECK_THROWS_AS(tgv::permute(x, {0, 1}), tgv::ShapeError);
  CHECK_THROWS_AS(tgv::permute(x, {0, 0, 1}), tgv::ShapeError);

  Rng rng(63);
  Tensor xr = rand_tensor({2, 3, 4}, rng);
  Tensor w = rand_tensor({4, 3, 2}, rng, false);
  check_grads_fd(xr, [&] { return tgv::sum_all(tgv::mul(tgv::permute(xr, {2, 1, 0}), w)); });
}

TEST_CASE("mean_rows and sum_all") {
  Tensor x = Tensor::from_data({3, 2}, {1, 10, 2, 20, 3, 30}, true);
  Tensor m = tgv::mean_rows(x);
  REQUIRE(m.shape() == Shape{2});
  CHECK(m.data()[0] == doctest::Approx(2.0));
  CHECK(m.data()[1] == doctest::Approx(20.0));

  Tensor s = tgv::sum_all(x);
  CHECK(s.rank() == 0);
  CHECK(s.item() == doctest::Approx(66.0));

  Tensor w = Tensor::from_data({2}, {3.0, -1.0});
  tgv::sum_all(tgv::mul(tgv::mean_rows(x), w)).backward();
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(x.grad()[i * 2] == doctest::Approx(1.0));       // 3 / 3
    CHECK(x.grad()[i * 2 + 1] == doctest::Approx(-1.0 / 3.0));
  }
  CHECK_THROWS_AS(tgv::mean_rows(Tensor::zeros({3})), tgv::ShapeError);
}

TEST_CASE("cross entropy matches a long-double log-sum-exp") {
  const std::vector<double> logits = {0.2, -0.3, 0.5};
  Tensor x = Tensor::from_data({3}, logits, true);
  Tensor loss = tgv::cross_entropy_logits(x, 1);
  long double s = 0.0L;
  for (double v : logits) s += expl(static_cast<long double>(v));
  const double want = static_cast<double>(logl(s)) - logits[1];
  CHECK(loss.item() == doctest::Approx(want).epsilon(1e-14));

  loss.backward();
  std::vector<double> soft = softmax_ld(logits);
  CHECK(x.grad()[0] == doctest::Approx(soft[0]).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(soft[1] - 1.0).epsilon(1e-12));
  CHECK(x.grad()[2] == doctest::Approx(soft[2]).epsilon(1e-12));
}

TEST_CASE("cross entropy is stable and validates the label") {
  Tensor x = Tensor::from_data({3}, {1000.0, 0.0, -500.0});
  Tensor loss = tgv::cross_entropy_logits(x, 0);
  CHECK(loss.item() >= 0.0);
  CHECK(loss.item() < 1e-12);
  CHECK(std::isfinite(loss.item()));

  Tensor y = Tensor::from_data({3}, {0.0, 1000.0, 0.0});
  CHECK(tgv::cross_entropy_logits(y, 0).item() == doctest::Approx(1000.0));

  CHECK_THROWS_AS(tgv::cross_entropy_logits(x, 3), tgv::UsageError);
  CHECK_THROWS_AS(tgv::cross_entropy_logits(x, -1), tgv::UsageError);
  CHECK_THROWS_AS(tgv::cross_entropy_logits(Tensor::zeros({2, 2}), 0), tgv::ShapeError);

  Rng rng(71);
  Tensor z = rand_tensor({5}, rng);
  check_grads_fd(z, [&] { return tgv::cross_entropy_logits(z, 3); });
}

TEST_CASE("composite graph end-to-end finite differences") {
  Rng rng(81);
  Tensor x = rand_tensor({2, 4}, rng);
  Tensor w1 = rand_tensor({4, 6}, rng);
  Tensor g = Tensor::full({6}, 1.0, true);
  Tensor b = Tensor::zeros({6}, true);
  Tensor w2 = rand_tensor({6, 3}, rng);
  auto build = [&] {
    Tensor h = tgv::layer_norm(tgv::matmul(x, w1), g, b);
    Tensor act = tgv::mul(h, tgv::sigmoid(h));
    Tensor logits = tgv::mean_rows(tgv::matmul(act, w2));
    return tgv::cross_entropy_logits(logits, 2);
  };
  check_grads_fd(x, build);
  check_grads_fd(w1, build);
  check_grads_fd(g, build);
  check_grads_fd(b, build);
  check_grads_fd(w2, build);
}
