#include "tgv/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "tgv/errors.hpp"
#include "tgv/harness.hpp"
#include "tgv/ops.hpp"
#include "tgv/pipeline.hpp"

namespace tgv {

bool OracleReport::pass() const {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

Tensor naive_attention_reference(const Tensor& x, const AttentionParams& p,
                                 int64_t num_heads, bool rope, double rope_base) {
  const int64_t b = x.shape()[0], s = x.shape()[1], d = x.shape()[2];
  const int64_t hd = d / num_heads;
  const double* px = x.data();
  const double* wq = p.w_q.data();
  const double* wk = p.w_k.data();
  const double* wv = p.w_v.data();
  const double* wo = p.w_o.data();

  std::vector<double> out(static_cast<size_t>(b * s * d), 0.0);
  std::vector<double> q(static_cast<size_t>(s * hd)), k(q), v(q);
  std::vector<double> scores(static_cast<size_t>(s)), mixed(static_cast<size_t>(hd));
  std::vector<double> merged(static_cast<size_t>(s * d));

  for (int64_t f = 0; f < b; ++f) {
    const double* xf = px + f * s * d;
    for (int64_t h = 0; h < num_heads; ++h) {
      // Projections restricted to this head's output columns.
      for (int64_t i = 0; i < s; ++i) {
        for (int64_t j = 0; j < hd; ++j) {
          const int64_t col = h * hd + j;
          double aq = 0.0, ak = 0.0, av = 0.0;
          for (int64_t c = 0; c < d; ++c) {
            const double xv = xf[i * d + c];
            aq += xv * wq[c * d + col];
            ak += xv * wk[c * d + col];
            av += xv * wv[c * d + col];
          }
          q[i * hd + j] = aq;
          k[i * hd + j] = ak;
          v[i * hd + j] = av;
        }
      }
      if (rope) {
        for (int64_t i = 0; i < s; ++i) {
          for (int64_t l = 0; l < hd / 2; ++l) {
            const double angle =
                static_cast<double>(i) *
                std::pow(rope_base, -2.0 * static_cast<double>(l) /
                                        static_cast<double>(hd));
            const double c = std::cos(angle), sn = std::sin(angle);
            const double q0 = q[i * hd + 2 * l], q1 = q[i * hd + 2 * l + 1];
            q[i * hd + 2 * l] = q0 * c - q1 * sn;
            q[i * hd + 2 * l + 1] = q0 * sn + q1 * c;
            const double k0 = k[i * hd + 2 * l], k1 = k[i * hd + 2 * l + 1];
            k[i * hd + 2 * l] = k0 * c - k1 * sn;
            k[i * hd + 2 * l + 1] = k0 * sn + k1 * c;
          }
        }
      }
      const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
      for (int64_t i = 0; i < s; ++i) {
        double mx = -HUGE_VAL;
        for (int64_t j = 0; j < s; ++j) {
          double dot = 0.0;
          for (int64_t l = 0; l < hd; ++l) dot += q[i * hd + l] * k[j * hd + l];
          scores[static_cast<size_t>(j)] = dot * inv_scale;
          mx = std::max(mx, scores[static_cast<size_t>(j)]);
        }
        double z = 0.0;
        for (int64_t j = 0; j < s; ++j) {
          scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - mx);
          z += scores[static_cast<size_t>(j)];
        }
        for (int64_t l = 0; l < hd; ++l) {
          double acc = 0.0;
          for (int64_t j = 0; j < s; ++j)
            acc += (scores[static_cast<size_t>(j)] / z) * v[j * hd + l];
          mixed[static_cast<size_t>(l)] = acc;
        }
        for (int64_t l = 0; l < hd; ++l)
          merged[i * d + h * hd + l] = mixed[static_cast<size_t>(l)];
      }
    }
    for (int64_t i = 0; i < s; ++i) {
      for (int64_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int64_t l = 0; l < d; ++l) acc += merged[i * d + l] * wo[l * d + c];
        out[(f * s + i) * d + c] = acc;
      }
    }
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

namespace {

std::string fmt_err(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return std::string(buf);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.data(), b.data(),
                     static_cast<size_t>(a.size()) * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

AttentionParams random_attention(int64_t d, Rng base) {
  auto w = [&](const char* tag) {
    Rng stream = base.substream(tag);
    return Tensor::truncated_normal({d, d}, 0.2, stream);
  };
  AttentionParams p;
  p.w_q = w("w_q");
  p.w_k = w("w_k");
  p.w_v = w("w_v");
  p.w_o = w("w_o");
  p.ln.gain = Tensor::full({d}, 1.0);
  p.ln.bias = Tensor::zeros({d});
  return p;
}

OracleResult check_attention_naive(uint64_t seed) {
  NoGradGuard ng;
  double worst = 0.0;
  for (int64_t i = 0; i < 20; ++i) {
    Rng r = Rng(seed).substream("attention").substream(static_cast<uint64_t>(i));
    const int64_t b = 1 + static_cast<int64_t>(r.next_u64() % 3);
    const int64_t s = 1 + static_cast<int64_t>(r.next_u64() % 6);
    const int64_t heads[] = {1, 2, 4};
    const int64_t H = heads[r.next_u64() % 3];
    const int64_t hd = 2 + 2 * static_cast<int64_t>(r.next_u64() % 3);  // 2, 4, 6
    const int64_t d = H * hd;
    const bool rope = (i % 2 == 0);
    AttentionParams p = random_attention(d, r.substream("params"));
    Rng xr = r.substream("x");
    Tensor x = Tensor::randn({b, s, d}, xr);
    Tensor lib = multi_head_self_attention(x, p, H, rope);
    Tensor ref = naive_attention_reference(x, p, H, rope);
    worst = std::max(worst, max_abs_diff(lib, ref));
  }
  return {"attention matches naive reference", worst <= 1e-12,
          "max |diff| " + fmt_err(worst) + " over 20 shapes (tol 1e-12)"};
}

OracleResult check_rope_shift(uint64_t seed) {
  NoGradGuard ng;
  const int64_t s = 6, d = 8;
  Rng r = Rng(seed).substream("rope");
  Tensor q = Tensor::randn({s, d}, r);
  Tensor k = Tensor::randn({s, d}, r);
  auto scores_at = [&](int64_t offset) {
    std::vector<int64_t> pos(static_cast<size_t>(s));
    for (int64_t i = 0; i < s; ++i) pos[static_cast<size_t>(i)] = offset + i;
    Tensor qr = rope_apply(q, pos);
    Tensor kr = rope_apply(k, pos);
    std::vector<double> sc(static_cast<size_t>(s * s));
    for (int64_t i = 0; i < s; ++i)
      for (int64_t j = 0; j < s; ++j) {
        double dot = 0.0;
        for (int64_t c = 0; c < d; ++c)
          dot += qr.data()[i * d + c] * kr.data()[j * d + c];
        sc[static_cast<size_t>(i * s + j)] = dot;
      }
    return sc;
  };
  const auto base = scores_at(0);
  double worst = 0.0;
  for (int64_t offset : {1, 7, 103}) {
    const auto shifted = scores_at(offset);
    for (size_t i = 0; i < base.size(); ++i)
      worst = std::max(worst, std::abs(base[i] - shifted[i]));
  }
  return {"rope scores depend only on relative position", worst <= 1e-9,
          "max |diff| " + fmt_err(worst) + " across shifts 1/7/103 (tol 1e-9)"};
}

TGConfig small_layer_config() {
  TGConfig cfg;
  cfg.num_layers = 1;
  cfg.d_model = 8;
  cfg.num_heads = 2;
  cfg.mlp_hidden = 16;
  return cfg;
}

OracleResult check_force_zero(uint64_t seed) {
  NoGradGuard ng;
  TGConfig cfg = small_layer_config();
  cfg.gate_override = GateOverride::ForceZero;
  Rng pr = Rng(seed).substream("force_zero");
  TGLayerParams params = init_layer(cfg, pr);
  Rng xr = pr.substream("x");
  Tensor x = Tensor::randn({4, 5, cfg.d_model}, xr);
  Tensor y = tg_layer_forward(x, params, cfg);
  const bool ok = bitwise_equal(x, y);
  return {"force-zero gates make the layer an identity", ok,
          ok ? "output bitwise equal to input" : "output differs from input"};
}

OracleResult check_force_one(uint64_t seed) {
  NoGradGuard ng;
  TGConfig forced = small_layer_config();
  forced.gate_override = GateOverride::ForceOne;
  TGConfig ungated = small_layer_config();
  ungated.gating_enabled = false;
  Rng pr = Rng(seed).substream("force_one");
  TGLayerParams params = init_layer(forced, pr);
  Rng xr = pr.substream("x");
  Tensor x = Tensor::randn({4, 5, forced.d_model}, xr);
  Tensor a = tg_layer_forward(x, params, forced);
  Tensor b = tg_layer_forward(x, params, ungated);
  const double worst = max_abs_diff(a, b);
  return {"force-one gates equal the ungated residual", worst <= 1e-12,
          "max |diff| " + fmt_err(worst) + " (tol 1e-12)"};
}

OracleResult check_fresh_gates(uint64_t seed) {
  NoGradGuard ng;
  PipelineConfig cfg;
  cfg.tg = small_layer_config();
  cfg.tg.num_layers = 2;
  cfg.l_q = 2;
  cfg.l_t = 2;
  Model model(cfg, seed);
  Rng xr = Rng(seed).substream("fresh_gates");
  Tensor video = Tensor::randn({3, 4, cfg.tg.d_model}, xr);
  GateCaptureSink sink;
  model.forward(video, &sink);
  const size_t expected = 6;  // 2 layers x 3 gated submodules
  if (sink.entries.size() != expected)
    return {"fresh gates start at exactly 0.5", false,
            "captured " + std::to_string(sink.entries.size()) + " gate tensors, expected " +
                std::to_string(expected)};
  for (const auto& e : sink.entries)
    for (int64_t i = 0; i < e.values.size(); ++i)
      if (e.values.data()[i] != 0.5)
        return {"fresh gates start at exactly 0.5", false,
                "found gate value " + fmt_err(e.values.data()[i])};
  return {"fresh gates start at exactly 0.5", true,
          std::to_string(expected) + " gate tensors, every value exactly 0.5"};
}

// One locality trial: forward a random video, perturb one frame (spatial) or
// one site (temporal), and demand every untouched fiber of the output be
// bitwise unchanged.
bool locality_trial(uint64_t seed, int64_t trial, bool spatial, std::string* why) {
  Rng r = Rng(seed).substream(spatial ? "loc_spatial" : "loc_temporal")
              .substream(static_cast<uint64_t>(trial));
  TGConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 1 + static_cast<int64_t>(r.next_u64() % 2);
  cfg.d_model = cfg.num_heads * (2 + 2 * static_cast<int64_t>(r.next_u64() % 2));
  cfg.mlp_hidden = 8;
  cfg.rope_enabled = (trial % 2 == 0);
  cfg.spatial_enabled = spatial;
  cfg.temporal_enabled = !spatial;
  cfg.mlp_enabled = false;
  const int64_t T = 2 + static_cast<int64_t>(r.next_u64() % 4);
  const int64_t L = 2 + static_cast<int64_t>(r.next_u64() % 5);
  TGLayerParams params = init_layer(cfg, r.substream("params"));
  Rng xr = r.substream("x");
  Tensor x = Tensor::randn({T, L, cfg.d_model}, xr);
  Tensor y1 = tg_layer_forward(x, params, cfg);

  Tensor x2 = x.clone();
  const int64_t d = cfg.d_model;
  if (spatial) {
    const int64_t t2 = static_cast<int64_t>(r.next_u64() % static_cast<uint64_t>(T));
    for (int64_t i = 0; i < L * d; ++i) x2.data()[t2 * L * d + i] += 0.717;
    Tensor y2 = tg_layer_forward(x2, params, cfg);
    for (int64_t t = 0; t < T; ++t) {
      if (t == t2) continue;
      if (std::memcmp(y1.data() + t * L * d, y2.data() + t * L * d,
                      static_cast<size_t>(L * d) * sizeof(double)) != 0) {
        *why = "trial " + std::to_string(trial) + ": frame " + std::to_string(t) +
               " changed after perturbing frame " + std::to_string(t2);
        return false;
      }
    }
  } else {
    const int64_t s2 = static_cast<int64_t>(r.next_u64() % static_cast<uint64_t>(L));
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < d; ++c) x2.data()[(t * L + s2) * d + c] += 0.717;
    Tensor y2 = tg_layer_forward(x2, params, cfg);
    for (int64_t t = 0; t < T; ++t)
      for (int64_t s = 0; s < L; ++s) {
        if (s == s2) continue;
        if (std::memcmp(y1.data() + (t * L + s) * d, y2.data() + (t * L + s) * d,
                        static_cast<size_t>(d) * sizeof(double)) != 0) {
          *why = "trial " + std::to_string(trial) + ": site " + std::to_string(s) +
                 " changed after perturbing site " + std::to_string(s2);
          return false;
        }
      }
  }
  return true;
}

OracleResult check_locality(uint64_t seed, bool spatial) {
  NoGradGuard ng;
  const char* name = spatial ? "spatial sublayer never mixes frames"
                             : "temporal sublayer never mixes sites";
  std::string why;
  for (int64_t trial = 0; trial < 50; ++trial)
    if (!locality_trial(seed, trial, spatial, &why)) return {name, false, why};
  return {name, true, "50 random instances bitwise unchanged off the perturbed fiber"};
}

OracleResult check_optimizer(uint64_t /*seed*/) {
  // Two hand-checkable steps of the update rule
  //   theta -= lr * (mhat / (sqrt(vhat) + eps) + wd * theta)
  // with bias-corrected mhat/vhat, computed here from the closed form.
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  const std::vector<double> theta0 = {1.0, -2.0};
  const std::vector<double> g1 = {1.0, 0.5}, g2 = {-0.25, 0.75};
  const double lr1 = 0.1, lr2 = 0.05;

  Tensor p = Tensor::from_data({2}, theta0, true);
  AdamW opt({{"p", p}}, cfg);
  p.node()->ensure_grad();
  p.node()->grad = g1;
  opt.step(lr1);
  p.node()->grad = g2;
  opt.step(lr2);

  double worst = 0.0;
  for (int i = 0; i < 2; ++i) {
    double th = theta0[static_cast<size_t>(i)];
    double m = 0.0, v = 0.0;
    const double gs[2] = {g1[static_cast<size_t>(i)], g2[static_cast<size_t>(i)]};
    const double lrs[2] = {lr1, lr2};
    for (int t = 1; t <= 2; ++t) {
      const double g = gs[t - 1];
      m = cfg.beta1 * m + (1 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
      const double mhat = m / (1 - std::pow(cfg.beta1, t));
      const double vhat = v / (1 - std::pow(cfg.beta2, t));
      th -= lrs[t - 1] * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * th);
    }
    worst = std::max(worst, std::abs(th - p.data()[i]));
  }
  return {"optimizer steps match the closed form", worst <= 1e-15,
          "max |diff| " + fmt_err(worst) + " after two steps (tol 1e-15)"};
}

OracleResult check_checkpoint_roundtrip(uint64_t seed) {
  NoGradGuard ng;
  PipelineConfig cfg;
  cfg.tg = small_layer_config();
  cfg.tg.num_layers = 2;
  cfg.l_q = 2;
  cfg.l_t = 2;
  Model model(cfg, seed ^ 0x5eedULL);
  const std::string path =
      (std::filesystem::temp_directory_path() /
       ("tgv_oracle_ckpt_" + std::to_string(seed) + ".bin"))
          .string();
  model.save(path);
  Model loaded = Model::load(path);
  std::filesystem::remove(path);

  const auto& a = model.named_params();
  const auto& b = loaded.named_params();
  if (a.size() != b.size())
    return {"checkpoint round-trips bitwise", false, "parameter count changed"};
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first)
      return {"checkpoint round-trips bitwise", false,
              "parameter order changed at " + a[i].first};
    if (!bitwise_equal(a[i].second, b[i].second))
      return {"checkpoint round-trips bitwise", false,
              "values changed for " + a[i].first};
  }
  Rng xr = Rng(seed).substream("ckpt_probe");
  Tensor video = Tensor::randn({3, 4, cfg.tg.d_model}, xr);
  Tensor l1 = model.forward(video).logits;
  Tensor l2 = loaded.forward(video).logits;
  const bool ok = bitwise_equal(l1, l2);
  return {"checkpoint round-trips bitwise", ok,
          ok ? std::to_string(a.size()) + " tensors and probe logits identical"
             : "probe logits differ after reload"};
}

}  // namespace

OracleReport run_oracles(uint64_t seed) {
  using Check = OracleResult (*)(uint64_t);
  struct Item {
    const char* fallback_name;
    Check fn;
  };
  const Item items[] = {
      {"attention matches naive reference", &check_attention_naive},
      {"rope scores depend only on relative position", &check_rope_shift},
      {"force-zero gates make the layer an identity", &check_force_zero},
      {"force-one gates equal the ungated residual", &check_force_one},
      {"fresh gates start at exactly 0.5", &check_fresh_gates},
      {"spatial sublayer never mixes frames",
       +[](uint64_t s) { return check_locality(s, true); }},
      {"temporal sublayer never mixes sites",
       +[](uint64_t s) { return check_locality(s, false); }},
      {"optimizer steps match the closed form", &check_optimizer},
      {"checkpoint round-trips bitwise", &check_checkpoint_roundtrip},
  };
  OracleReport report;
  for (const Item& item : items) {
    try {
      report.results.push_back(item.fn(seed));
    } catch (const std::exception& e) {
      report.results.push_back(
          {item.fallback_name, false, std::string("exception: ") + e.what()});
    }
  }
  return report;
}

std::string oracle_table(const OracleReport& report) {
  size_t width = 0;
  for (const auto& r : report.results) width = std::max(width, r.name.size());
  std::ostringstream os;
  int passed = 0;
  for (const auto& r : report.results) {
    os << (r.pass ? "PASS  " : "FAIL  ") << r.name
       << std::string(width - r.name.size() + 2, ' ') << r.detail << "\n";
    passed += r.pass ? 1 : 0;
  }
  os << (report.pass() ? "PASS" : "FAIL") << "  " << passed << "/"
     << report.results.size() << " checks\n";
  return os.str();
}

}  // namespace tgv
