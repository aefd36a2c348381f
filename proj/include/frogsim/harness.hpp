#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "frogsim/stats.hpp"
#include "frogsim/tree.hpp"

namespace frogsim {

inline constexpr const char* kEngineVersion = FROGSIM_VERSION;

enum class Experiment {
  kPhaseSweep,
  kHorizonScaling,
  kCouplingAudit,
  kBrwSupermartingale,
  kLemmaAudits,
  kHatTreeSuite,
  kJoinedTreeSuite,
  kActivationMinOverP,
  kRnRatio,
};
const char* to_string(Experiment e) noexcept;
Experiment experiment_from_string(const std::string& s);

enum class Model { kFm, kFmPlus, kTfm, kTfmP, kBrw };
const char* to_string(Model m) noexcept;
Model model_from_string(const std::string& s);

struct Caps {
  std::uint32_t depth_cap = 60;
  std::uint64_t max_active = 1'000'000;
  std::uint64_t step_budget = 1'000'000;
  /// Fraction of replicas that may end on a cap before the run exits with 3.
  double max_abort_rate = 1.0;
  /// Depth cap of the harmonic solver used for rays and audits.
  std::uint32_t solver_depth_cap = 40;
  /// Levels of recursion below each vertex on random trees.
  std::uint32_t solver_relative_depth = 6;
};

/// Everything needed to re-create an experiment. Every field has a default,
/// so a spec file only lists what it changes (see docs/spec-format.md).
struct ExperimentSpec {
  std::string name = "experiment";
  Experiment experiment = Experiment::kPhaseSweep;
  std::string tree = "dary:2";
  Model model = Model::kFm;
  std::vector<double> lambda_grid{0.5};
  std::vector<double> p_grid{0.5, 0.6, 0.7, 0.8, 0.9, 0.99};
  std::vector<std::uint32_t> horizons{1000};
  std::uint64_t replicas = 100;
  std::uint64_t master_seed = 1;
  Caps caps;

  /// Tree level used by lemma audits, activation profiles and rn_ratio.
  std::vector<std::uint32_t> levels{3};
  /// Audits run by lemma_audits: any of b1, a1, level1, lemma44.
  std::vector<std::string> audits{"b1", "level1"};
  /// Lemma 4.4: child-count threshold N and observable threshold.
  std::uint32_t lemma44_n = 8;
  double lemma44_threshold = 0.25;
  /// rn_ratio events, each "t1=<k>" (root has exactly k children).
  std::vector<std::string> events{"t1=2", "t1=3"};
  /// Branching walk: eta law (empty means Poisson(lambda) at each grid
  /// point) and, on the hat tree, the level N.
  std::string eta;
  std::uint32_t hat_n = 5;
  /// Returns threshold R of the headline indicator returns >= R.
  std::uint32_t return_threshold = 5;
  /// Joined-tree suite: depth at which the initial frog's side is read.
  std::uint32_t side_depth = 5;

  void validate() const;
  /// Normalized text form; the spec hash is computed from it.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

  static ExperimentSpec parse(const std::string& text);
  static ExperimentSpec load(const std::string& path);
};

/// One cell of the experiment grid.
struct GridPoint {
  std::uint64_t index = 0;
  double lambda = 0.0;
  std::optional<double> p;
  std::uint32_t level = 0;
  /// Audit name for lemma_audits points.
  std::string audit;
};
std::vector<GridPoint> grid_points(const ExperimentSpec& spec);

/// Replica seed: a pure function of (spec hash, replica index). Grid points
/// share replica seeds, so lambda comparisons use common random numbers.
std::uint64_t derive_seed(const ExperimentSpec& spec, std::uint64_t replica);

struct RunRecord {
  std::string spec_hash;
  std::uint64_t point = 0;
  std::uint64_t replica = 0;
  std::uint64_t seed = 0;
  std::string status;
  nlohmann::json result;
  double wall_ms = 0.0;
  std::string engine_version = kEngineVersion;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

/// Runs one replica at one grid point. `status` is "ok" or a termination.
RunRecord run_replica(const ExperimentSpec& spec, const GridPoint& point, std::uint64_t replica);

struct RunOptions {
  /// 0 means FROGSIM_THREADS or the hardware default.
  unsigned threads = 0;
  /// Directory for records.jsonl, summary.csv, trajectory.tsv and spec.ini;
  /// empty keeps everything in memory.
  std::string output_dir;
};

struct ExperimentOutcome {
  std::vector<RunRecord> records;
  std::string summary_csv;
  std::string trajectory_tsv;  // brw_supermartingale only
  /// Replica-level audit verdict (coupling, lemma audits).
  bool audit_ok = true;
  double abort_rate = 0.0;
  /// 0 success, 2 audit failure, 3 cap-abort rate exceeded.
  int exit_code = 0;
};

ExperimentOutcome run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// CSV summary per grid point; a pure function of the records.
std::string summarize(const ExperimentSpec& spec, const std::vector<RunRecord>& records);
/// Mean branching-walk trajectory as TSV (n, W_n, particles, returns).
std::string mean_trajectory_tsv(const std::vector<RunRecord>& records);

void write_records(const std::string& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records(const std::string& path);

struct VerifyReport {
  std::uint64_t total = 0;
  std::uint64_t checked = 0;
  std::uint64_t mismatched = 0;
  std::vector<std::string> mismatches;
  bool ok() const noexcept { return mismatched == 0 && (checked > 0 || total == 0); }
};
/// Re-runs a deterministic sample of about `fraction` of the records and
/// compares the result JSON byte for byte.
VerifyReport verify_records(const ExperimentSpec& spec, const std::vector<RunRecord>& records,
                            double fraction = 0.01);

int thread_count_from_env();

// ---------------------------------------------------------------------------
// Window trends

/// Paired per-replica differences of window counts between consecutive
/// horizon windows [0,H0], (H0,H1], ...
struct WindowStep {
  std::uint32_t from_end = 0;
  std::uint32_t to_end = 0;
  std::uint64_t eligible = 0;
  double mean_from = 0.0;
  double mean_to = 0.0;
  double mean_diff = 0.0;
  double stderr_diff = 0.0;
};
struct WindowTrend {
  std::vector<WindowStep> steps;
  std::uint64_t censored = 0;
  /// Every step has mean_diff <= 3 se (and enough eligible replicas).
  bool nonincreasing = false;
  /// Every step has mean_diff > 3 se (and enough eligible replicas).
  bool increasing = false;
  nlohmann::json to_json() const;
};
inline constexpr std::uint64_t kMinEligible = 30;

/// Trend of windowed returns from records carrying "returns_at_horizons".
/// A replica is censored for every window that ends after it hit a cap.
WindowTrend windowed_trend(const std::vector<std::uint32_t>& horizons, const std::vector<const RunRecord*>& records);

// ---------------------------------------------------------------------------
// Suites

struct BisectOptions {
  std::string tree = "dary:2";
  std::uint32_t return_threshold = 5;  // R
  std::uint32_t horizon = 1000;        // H
  double theta = 0.5;
  double lo = 0.0;
  double hi = 4.0;
  double tolerance = 0.5;
  std::uint64_t replicas = 200;
  std::uint64_t master_seed = 1;
  Caps caps;
};
struct BisectStep {
  double lambda = 0.0;
  std::uint64_t successes = 0;
  std::uint64_t censored = 0;
  double estimate = 0.0;
  Interval wilson;
};
struct BisectResult {
  double lo = 0.0;
  double hi = 0.0;
  double estimate = 0.0;
  std::vector<BisectStep> steps;
  bool monotone = true;
  std::string diagnostic;
  nlohmann::json to_json() const;
};
/// Bisection on lambda for P(returns >= R by H) >= theta with shared
/// per-replica seeds. Aborts (monotone = false) if any replica's indicator
/// decreases in lambda. Replicas that hit the population cap below R are
/// counted as successes and reported as censored.
BisectResult bisect_lambda_star(const BisectOptions& options);

struct SideStats {
  std::uint64_t count = 0;
  double mean = 0.0;
  double stderr_mean = 0.0;
};
struct JoinedSuiteRow {
  double lambda = 0.0;
  SideStats binary_side;
  SideStats wide_side;
  std::uint64_t undecided = 0;
  double ratio = 0.0;  // binary-side mean over wide-side mean
};
struct JoinedSuiteResult {
  std::uint32_t d = 0;
  std::vector<JoinedSuiteRow> rows;
  nlohmann::json to_json() const;
};
/// Conditional return statistics on JoinedTree(d), split by the side
/// through which the initial frog first passes depth `spec.side_depth`.
JoinedSuiteResult joined_tree_suite(const ExperimentSpec& spec, const std::vector<RunRecord>& records);

struct HatSuiteRow {
  double lambda = 0.0;
  WindowTrend trend;
};
struct HatSuiteResult {
  std::string tree;
  std::vector<HatSuiteRow> rows;
  nlohmann::json to_json() const;
};
HatSuiteResult hat_tree_suite(const ExperimentSpec& spec, const std::vector<RunRecord>& records);

/// Standing-ensemble lemma audits behind `frogsim audit-lemmas`.
struct LemmaSuiteOptions {
  std::uint64_t b1_trees = 100;
  std::uint32_t b1_level = 5;
  std::uint64_t a1_trees = 50;
  std::uint64_t level1_trees = 100;
  std::uint64_t rn_replicas = 100'000;
  std::uint32_t rn_level = 3;
  std::uint64_t master_seed = 1;
};
struct LemmaSuiteRun {
  ExperimentSpec spec;
  ExperimentOutcome outcome;
};
struct LemmaSuiteResult {
  nlohmann::json report;
  bool pass = true;
  std::vector<LemmaSuiteRun> runs;
};
LemmaSuiteResult audit_lemma_suite(const LemmaSuiteOptions& options);

}  // namespace frogsim
