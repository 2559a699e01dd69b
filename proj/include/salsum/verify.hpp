#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace salsum {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // measured value vs bound
};

struct VerifyOptions {
  int64_t attention_configs = 1000;
  int64_t oracle_cases = 1000;
  int64_t seg_docs = 200;
  int64_t grad_coords_per_param = 4;  // sampled coordinates per parameter
  bool include_smoke = true;          // short fine-tune training run
};

// Check groups, each usable on its own (the acceptance suite times them
// individually). run_verification is their concatenation and backs the
// `verify` subcommand.
std::vector<CheckResult> check_gradients(int64_t grad_coords_per_param);
std::vector<CheckResult> check_attention_algebra(int64_t configs);
std::vector<CheckResult> check_rouge_oracle(int64_t cases);
std::vector<CheckResult> check_label_oracle(int64_t cases);
std::vector<CheckResult> check_seg_oracle(int64_t docs);
std::vector<CheckResult> check_loss_tables();
std::vector<CheckResult> check_smoke_training();

std::vector<CheckResult> run_verification(const VerifyOptions& opts = {});

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace salsum
