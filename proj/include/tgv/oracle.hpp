#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tgv/block.hpp"
#include "tgv/tensor.hpp"

namespace tgv {

/// Outcome of one self-check. `detail` carries the measured error (or the
/// first mismatch) so failures are diagnosable from the report alone.
struct OracleResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct OracleReport {
  std::vector<OracleResult> results;
  bool pass() const;
};

/// Independent reference implementation of multi_head_self_attention,
/// written as plain double loops (its own projections, rotation, stable
/// softmax). Shares no code with the op it checks.
Tensor naive_attention_reference(const Tensor& x, const AttentionParams& p,
                                 int64_t num_heads, bool rope,
                                 double rope_base = 10000.0);

/// Runs the built-in consistency suite:
///   - attention vs. the naive reference (20 random shapes, both RoPE modes)
///   - RoPE score invariance under a shared position shift
///   - gate override identities (force_zero bitwise, force_one == ungated)
///   - fresh gates sitting at exactly 0.5
///   - spatial/temporal locality of the factorized views (bitwise)
///   - optimizer first-step against the closed form
///   - checkpoint round-trip (bitwise parameters)
/// Deterministic given `seed`.
OracleReport run_oracles(uint64_t seed);

/// Fixed-width text table, one row per check plus a PASS/FAIL footer.
std::string oracle_table(const OracleReport& report);

}  // namespace tgv
