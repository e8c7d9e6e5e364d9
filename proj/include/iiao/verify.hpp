#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Self-checks runnable from the command line: finite-difference gradient
// checks and scalar-loop oracles for the loss, attention and label code.
namespace iiao::verify {

struct CaseResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<CaseResult> cases;

  bool passed() const;
  const CaseResult* first_failure() const;
};

// grads, rcloss, softblock, windows, labels, metrics
std::vector<std::string> suite_names();
// "all" runs every suite. Throws std::invalid_argument for unknown names.
std::vector<SuiteResult> run(const std::string& suite, std::uint64_t seed = 0);

// Soft block F_wei against a per-pixel softmax dot product.
CaseResult softblock_oracle(int trials, std::uint64_t seed, double tol = 1e-10);

// Finite differences at relative tolerance `tol`.
std::vector<CaseResult> primitive_grads(std::uint64_t seed, double tol = 1e-4);
CaseResult softblock_grads(std::uint64_t seed, double tol = 1e-4);
CaseResult rcloss_grads(int points, std::uint64_t seed, double tol = 1e-4);
// Tiny network (C = 16, 32 x 32 input) under the total loss.
CaseResult network_grads(std::uint64_t seed, double tol = 1e-4);

// (50, 50, 27, 23) gives the 2 x 2 grid at {0, 23}^2.
CaseResult window_reference_case();
// Every pixel covered for all 1 <= s <= k <= min(h, w) <= max_dim.
CaseResult window_coverage(int max_dim = 32);

CaseResult rcloss_bruteforce(int trials, std::uint64_t seed, double tol = 1e-12);
// threshold 1, s = k, k | h, k | w: rc_loss == (1/B) sum E^2.
CaseResult rcloss_mse_degeneracy(int trials, std::uint64_t seed, double tol = 1e-12);
// (E sigmoid(E) + E)^2 > E^2 for random E > 0.
CaseResult incremental_penalty(int samples, std::uint64_t seed);

// |sum - count| < 1e-6 count for fixed and adaptive kernels, and the 1/8
// grid keeps the sum.
CaseResult label_conservation(int trials, int max_points, std::uint64_t seed);

CaseResult metric_formulas();
CaseResult mae_below_mse(int trials, std::uint64_t seed);

}  // namespace iiao::verify
