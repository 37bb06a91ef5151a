#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

// Self-contained oracle and invariant suites shared by `ticl selftest` and
// the acceptance binary. Each returns a verdict with a one-line summary of
// the measured quantity.
namespace ticl::experiment {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Central-difference check of every autodiff primitive and of a full
/// 1-layer backbone (64-bit, embed dim 8), both heads.
CheckResult check_gradients();
/// Query rows permuted or removed, context rows permuted, over `episodes`
/// random episodes in 64-bit.
CheckResult check_mask_invariance(std::size_t episodes = 100);
/// count_tasks and enumeration against brute force for k <= 12; budgeted
/// lists distinct, deterministic and prefix nested.
CheckResult check_task_space();
/// AUC against pairwise counting, Spearman against tie-averaged rank
/// Pearson, R^2 of the mean predictor.
CheckResult check_metric_oracles(std::size_t instances = 1000);
/// Bundled CC-18 reference records: Spearman(n-features, score) > 0 and the
/// boosted meta-regressor ranks n-features above n-instances.
CheckResult check_reference_meta(std::uint64_t seed = 0);
/// Planted meta-data where the score is a monotone function of n-features.
CheckResult check_planted_meta(std::uint64_t seed = 0);
/// Repeat runs give identical traces and checkpoint checksums; a checkpoint
/// round trip keeps downstream predictions bitwise. Scratch files go to
/// `scratch`.
CheckResult check_determinism(const std::filesystem::path& scratch, std::size_t steps = 30);
/// Forest accuracy on a separable toy, single-tree identity, logistic
/// iteration cap.
CheckResult check_baselines();

/// The fast suites above, in order.
std::vector<CheckResult> run_selftest(const std::filesystem::path& scratch);

}  // namespace ticl::experiment
