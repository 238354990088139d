#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fbl/config.hpp"
#include "fbl/moments.hpp"

namespace fbl {

/// Pipeline stages in execution order.
enum class Stage { certify, mollify, moments, flow, xval, probe };

std::string to_string(Stage s);

/// Stages run by a subcommand: "run" runs all of them, the others run their
/// own stage plus the stages it depends on.
std::vector<Stage> stages_for(const std::string& subcommand);

struct RunOutcome {
  std::vector<CheckReport> checks;
  std::string error;  // "<stage>: <message>" when a stage threw
  bool all_pass = false;
  int exit_code = 1;  // 0 iff every executed check passed and no stage failed
  nlohmann::json report;
};

/// Executes the requested stages and writes artifacts, report.json/.txt and
/// manifest.json into cfg.output. Admissibility gates of the requested checks
/// are evaluated before any stage runs.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::string& subcommand = "run");

struct VerifyOutcome {
  bool hashes_ok = false;
  bool all_pass = false;
  int exit_code = 1;
  nlohmann::json report;
};

/// Re-hashes an output directory against its manifest and config hash, then
/// re-evaluates every recorded check from the stored numbers and CSVs.
/// Writes verify_report.json/.txt (byte-identical for unchanged inputs).
VerifyOutcome verify_output(const std::string& out_dir);

/// "%.17g"
std::string format_double(double v);

}  // namespace fbl
