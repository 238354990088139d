// formbound-lab <subcommand> --config <path> [--seed N] [--out DIR] [--threads N]

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <omp.h>

#include "fbl/config.hpp"
#include "fbl/runner.hpp"
#include "fbl/simd.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 0;
};

void add_common(CLI::App* sub, Options& o, bool config_required) {
  auto* c = sub->add_option("--config", o.config, "experiment config (JSON)");
  if (config_required) c->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "override the master seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--threads", o.threads, "worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
}

int run_sub(const std::string& name, const Options& o) {
  if (o.threads > 0) omp_set_num_threads(o.threads);
  auto cfg = fbl::load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    if (cfg.probe) cfg.probe->seed = cfg.seed;
  }
  if (o.out) cfg.output = *o.out;
  else if (std::filesystem::path(cfg.output).is_relative())
    cfg.output = (std::filesystem::path(cfg.base_dir) / cfg.output).string();
  std::fprintf(stderr, "formbound-lab %s: config_hash=%s seed=%llu out=%s kernels=%s\n", name.c_str(),
               cfg.hash().c_str(), static_cast<unsigned long long>(cfg.seed), cfg.output.c_str(),
               fbl::simd::to_string(fbl::simd::kernels().isa).c_str());
  const auto res = fbl::run_experiment(cfg, name);
  std::ifstream txt(std::filesystem::path(cfg.output) / "report.txt");
  std::cout << txt.rdbuf();
  if (!res.error.empty()) std::fprintf(stderr, "error in stage %s\n", res.error.c_str());
  return res.exit_code;
}

int verify_sub(const Options& o) {
  std::string dir;
  if (o.out) dir = *o.out;
  else if (!o.config.empty()) {
    const auto cfg = fbl::load_config(o.config);
    dir = std::filesystem::path(cfg.output).is_relative()
              ? (std::filesystem::path(cfg.base_dir) / cfg.output).string()
              : cfg.output;
  } else {
    throw std::invalid_argument("verify needs --out DIR or --config");
  }
  const auto vo = fbl::verify_output(dir);
  std::ifstream txt(std::filesystem::path(dir) / "verify_report.txt");
  std::cout << txt.rdbuf();
  return vo.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"formbound-lab: form-bounded drift experiments"};
  app.require_subcommand(1);
  Options o;
  const char* subs[][2] = {{"certify", "form-bound certificate and cross-checks"},
                           {"mollify", "mollified drift sequence"},
                           {"moments", "moment PDE solves and bound checks"},
                           {"flow", "stochastic flow snapshots"},
                           {"xval", "Monte Carlo vs moment PDE cross-validation"},
                           {"probe", "criticality probe"},
                           {"run", "all stages"}};
  for (auto& s : subs) add_common(app.add_subcommand(s[0], s[1]), o, true);
  add_common(app.add_subcommand("verify", "re-check an output directory"), o, false);
  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return name == "verify" ? verify_sub(o) : run_sub(name, o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "formbound-lab: %s\n", e.what());
    return 2;
  }
}
