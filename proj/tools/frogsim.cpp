// Command-line front end: run, audit-lemmas, bisect, verify, summarize.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "frogsim/error.hpp"
#include "frogsim/harness.hpp"

namespace fs = std::filesystem;
using frogsim::ExperimentSpec;

namespace {

std::string sibling_spec(const std::string& records) {
  return (fs::path(records).parent_path() / "spec.ini").string();
}

int cmd_run(const std::string& spec_path, const std::string& out_dir, unsigned threads) {
  const ExperimentSpec spec = ExperimentSpec::load(spec_path);
  frogsim::RunOptions opts;
  opts.threads = threads;
  opts.output_dir = out_dir.empty() ? "frogsim-" + spec.name : out_dir;
  const auto outcome = frogsim::run_experiment(spec, opts);

  nlohmann::json report = {{"spec_hash", spec.hash_hex()},
                           {"records", outcome.records.size()},
                           {"abort_rate", outcome.abort_rate},
                           {"audit_ok", outcome.audit_ok},
                           {"output_dir", opts.output_dir},
                           {"exit_code", outcome.exit_code}};
  if (spec.experiment == frogsim::Experiment::kHatTreeSuite || spec.experiment == frogsim::Experiment::kHorizonScaling) {
    if (spec.horizons.size() >= 2) report["suite"] = frogsim::hat_tree_suite(spec, outcome.records).to_json();
  } else if (spec.experiment == frogsim::Experiment::kJoinedTreeSuite) {
    report["suite"] = frogsim::joined_tree_suite(spec, outcome.records).to_json();
  }
  if (report.contains("suite"))
    std::ofstream((fs::path(opts.output_dir) / "suite.json").string()) << report["suite"].dump(2) << '\n';
  std::cout << report.dump(2) << '\n';
  return outcome.exit_code;
}

int cmd_verify(const std::string& records_path, std::string spec_path, double fraction) {
  if (spec_path.empty()) spec_path = sibling_spec(records_path);
  const ExperimentSpec spec = ExperimentSpec::load(spec_path);
  const auto records = frogsim::read_records(records_path);
  const auto rep = frogsim::verify_records(spec, records, fraction);
  std::cout << "checked " << rep.checked << " of " << rep.total << " records, " << rep.mismatched << " mismatched\n";
  for (const auto& m : rep.mismatches) std::cout << "  " << m << '\n';
  return rep.ok() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frogsim: frog-model simulation and verification toolkit"};
  app.set_version_flag("--version", std::string(frogsim::kEngineVersion));
  app.require_subcommand(1);

  unsigned threads = 0;
  std::string spec_path, out_dir;
  auto* run = app.add_subcommand("run", "Run an experiment described by a spec file");
  run->add_option("spec", spec_path, "Spec file (INI)")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", out_dir, "Output directory (default frogsim-<name>)");
  run->add_option("-j,--threads", threads, "Worker threads (default FROGSIM_THREADS or all cores)");

  frogsim::LemmaSuiteOptions lemma;
  auto* audit = app.add_subcommand("audit-lemmas", "Certified lemma audits on the standing ensemble");
  audit->add_option("--seed", lemma.master_seed, "Master seed");
  audit->add_option("--b1-trees", lemma.b1_trees, "Trees for the first-hit versus harmonic audit");
  audit->add_option("--b1-level", lemma.b1_level, "Level of the first-hit audit");
  audit->add_option("--a1-trees", lemma.a1_trees, "Trees for the depth-3 lower-bound audit");
  audit->add_option("--level1-trees", lemma.level1_trees, "Trees for the level-1 harmonic bounds");
  audit->add_option("--rn-replicas", lemma.rn_replicas, "Replicas for the AGW/GW ratio");
  audit->add_option("--rn-level", lemma.rn_level, "Level of the AGW/GW ratio");

  frogsim::BisectOptions bis;
  auto* bisect = app.add_subcommand("bisect", "Bisect lambda for the return-count proxy (a proxy, not a decision)");
  bisect->add_option("--tree", bis.tree, "Tree kind, e.g. dary:2");
  bisect->add_option("-R,--returns", bis.return_threshold, "Return threshold R");
  bisect->add_option("-H,--horizon", bis.horizon, "Horizon H");
  bisect->add_option("--theta", bis.theta, "Target probability");
  bisect->add_option("--lo", bis.lo, "Lower lambda bound");
  bisect->add_option("--hi", bis.hi, "Upper lambda bound");
  bisect->add_option("--tolerance", bis.tolerance, "Final interval width");
  bisect->add_option("--replicas", bis.replicas, "Replicas per lambda");
  bisect->add_option("--seed", bis.master_seed, "Master seed");
  bisect->add_option("--max-active", bis.caps.max_active, "Population cap (capped runs count as successes)");

  std::string records_path, verify_spec;
  double fraction = 0.01;
  auto* verify = app.add_subcommand("verify", "Re-run a sample of records and compare byte for byte");
  verify->add_option("records", records_path, "records.jsonl")->required()->check(CLI::ExistingFile);
  verify->add_option("--spec", verify_spec, "Spec file (default spec.ini next to the records)");
  verify->add_option("--fraction", fraction, "Fraction of records to re-run")->check(CLI::Range(0.0, 1.0));

  auto* summarize = app.add_subcommand("summarize", "Recompute summary.csv from records");
  summarize->add_option("records", records_path, "records.jsonl")->required()->check(CLI::ExistingFile);
  summarize->add_option("--spec", verify_spec, "Spec file (default spec.ini next to the records)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(spec_path, out_dir, threads);
    if (*audit) {
      const auto res = frogsim::audit_lemma_suite(lemma);
      std::cout << res.report.dump(2) << '\n';
      return res.pass ? 0 : 2;
    }
    if (*bisect) {
      const auto res = frogsim::bisect_lambda_star(bis);
      std::cout << res.to_json().dump(2) << '\n';
      return res.monotone ? 0 : 2;
    }
    if (*verify) return cmd_verify(records_path, verify_spec, fraction);
    if (*summarize) {
      const ExperimentSpec spec =
          ExperimentSpec::load(verify_spec.empty() ? sibling_spec(records_path) : verify_spec);
      std::cout << frogsim::summarize(spec, frogsim::read_records(records_path));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "frogsim: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
