#pragma once

#include <string>

#include "pslr/config.hpp"

namespace pslr {

inline constexpr const char* kToolVersion = "0.1.0";

// CLI subcommand bodies. Each writes its artifacts plus a provenance record
// (config snapshot, seed, tool version) under paths.out_dir and returns 0;
// failures are reported by exception (ConfigError/DataError/NumericError).
int cmd_gen_synthetic(const RunConfig& config);
int cmd_train_proto(const RunConfig& config, const std::string& resume_path = "");
int cmd_train_baseline(const RunConfig& config);
int cmd_eval(const RunConfig& config);
int cmd_eval_cross(const RunConfig& config);
int cmd_confusions(const RunConfig& config);
int cmd_project(const RunConfig& config);

}  // namespace pslr
