#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "frogsim/offspring.hpp"
#include "frogsim/rng.hpp"
#include "frogsim/stats.hpp"
#include "frogsim/tree.hpp"

namespace frogsim {

/// Interval certified to contain an infinite-tree probability.
struct ProbBracket {
  double lo = 0.0;
  double hi = 1.0;

  double width() const noexcept { return hi - lo; }
  double mid() const noexcept { return 0.5 * (lo + hi); }
  bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

/// Interval product with outward rounding.
ProbBracket operator*(const ProbBracket& a, const ProbBracket& b);

/// Slack subtracted from lower and added to upper ends after every
/// arithmetic operation.
inline constexpr double kOutwardSlack = 1e-15;
inline constexpr std::uint32_t kMinDepthCap = 10;

struct SolverOptions {
  /// On random (GW/AGW) trees the recursion below a vertex stops this many
  /// levels down, or at depth_cap if that comes first. Deterministic kinds
  /// always recurse to depth_cap.
  std::uint32_t relative_depth = 8;
  /// If set, random trees use one absolute boundary level
  /// min(depth_cap, anchor_depth + relative_depth) for every vertex.
  std::optional<std::uint32_t> anchor_depth;
  /// Budget of recursion evaluations before VertexCapExceeded.
  std::size_t max_evaluations = 50'000'000;
};

/// Bottom-up solver for the return probability h(u) = P_u(hit parent(u)).
///
/// h satisfies h(u) = 1 / (1 + d_u - sum_c h(c)) and is increasing in every
/// h(c), so evaluating the recursion from a lower and an upper boundary value
/// at the truncation level brackets the true value. On kinds where every
/// vertex has at least two children, h(u) lies in [1/(d+1), 2/(d+2)], which
/// is the boundary used; explicit finite trees use [0, 1] and treat a leaf as
/// an absorbing sink (h = 0).
///
/// 1 - h(c) is also the conductance of the edge into c in series with the
/// subtree below it, so harmonic measure splits at v in proportion to
/// 1 - h(c) over the children c of v.
class HarmonicSolver {
 public:
  HarmonicSolver(const TreeHandle& tree, std::uint32_t depth_cap, SolverOptions options = {});

  const TreeHandle& tree() const noexcept { return tree_; }
  std::uint32_t depth_cap() const noexcept { return depth_cap_; }

  /// P(SRW from u ever hits the parent of u).
  ProbBracket hit_parent(NodeId u);
  /// P(SRW from u ever hits the root): product of hit_parent along the path.
  ProbBracket hit_root(NodeId u);
  /// HARM_{T(v)} of the i-th child of v.
  ProbBracket harm_child(NodeId v, std::uint32_t i);
  /// HARM_T(v) as the product of harm_child along the root-to-v path.
  ProbBracket harm_vertex(NodeId v);
  /// Escape-through-child weights 1 - h(c) for every child of v.
  std::vector<ProbBracket> child_weights(NodeId v);

  std::size_t evaluations() const noexcept { return evaluations_; }

 private:
  std::uint32_t levels_below(NodeId u) const;
  ProbBracket h_node(NodeId u, std::uint32_t r);
  ProbBracket h_class(ClassKey c, std::uint32_t r);
  ProbBracket boundary(std::uint32_t child_count) const;
  ProbBracket combine(std::uint32_t child_count, double sum_lo, double sum_hi) const;
  void charge();

  const TreeHandle& tree_;
  std::uint32_t depth_cap_;
  SolverOptions options_;
  bool random_kind_;
  bool finite_kind_;
  std::unordered_map<std::uint64_t, ProbBracket> node_memo_;
  std::unordered_map<std::uint64_t, ProbBracket> class_memo_;
  std::size_t evaluations_ = 0;
};

ProbBracket hit_parent_prob(const TreeHandle& tree, NodeId v, std::uint32_t depth_cap, SolverOptions options = {});
ProbBracket hit_root_prob(const TreeHandle& tree, NodeId u, std::uint32_t depth_cap, SolverOptions options = {});
ProbBracket harm_child(const TreeHandle& tree, NodeId v, std::uint32_t i, std::uint32_t depth_cap,
                       SolverOptions options = {});
ProbBracket harm_vertex(const TreeHandle& tree, NodeId v, std::uint32_t depth_cap, SolverOptions options = {});

/// P(a walk on T+ started at `start` is eventually killed at the extra leaf),
/// where each visit to the leaf kills with probability p. With k root
/// children this is p / (k + p - sum_c h(c)) from the root, times
/// P(hit root) from elsewhere.
ProbBracket leaf_kill_prob(const TreeHandle& tree, NodeId start, double p, std::uint32_t depth_cap,
                           SolverOptions options = {});

/// Exact first-hit distribution on level n: probability that each level-n
/// vertex is the first one hit by SRW from the root.
struct FirstHit {
  std::vector<NodeId> vertices;
  std::vector<double> f;
};
FirstHit first_hit_level_n(const TreeHandle& tree, std::uint32_t n, std::size_t max_vertices = 5'000'000);

/// Harmonic ray v_0..v_n sampled child by child in proportion to bracket
/// midpoints.
struct HarmonicRay {
  std::vector<NodeId> vertices;
  double width_accumulated = 0.0;  // sum of bracket widths of the chosen children
  bool flagged = false;            // accumulated width above 0.01
};
HarmonicRay sample_harmonic_ray(const TreeHandle& tree, std::uint32_t n, std::uint32_t depth_cap, SplitMix64& gen,
                                SolverOptions options = {});
HarmonicRay sample_harmonic_ray(HarmonicSolver& solver, std::uint32_t n, SplitMix64& gen);

/// Result shape shared by all lemma audits.
struct AuditReport {
  std::string lemma;
  std::uint64_t instances = 0;
  /// Smallest margin by which the audited inequality held (negative on
  /// failure), expressed as a log-ratio so different audits are comparable.
  double worst_slack = 0.0;
  bool pass = true;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
  void merge(const AuditReport& other);
};

inline constexpr double kLemmaB1Constant = 33.0 / 2.0;
inline constexpr double kLemmaA1Constant = 4.0 / 81.0;

/// HARM_lo / C <= f(v) <= C * HARM_hi on every level-n vertex with C = 33/2.
/// details: worst f/HARM_hi ratio, worst HARM_lo/f ratio, widest bracket.
AuditReport audit_lemma_B1(const TreeHandle& tree, std::uint32_t n, std::uint32_t depth_cap,
                           SolverOptions options = {});

/// p0_lo(u) >= (4/81) HARM_lo / (|T1(u)| |T1(parent of v)|), v the depth-2
/// ancestor of u and HARM computed inside T(v). Needs a root with at least
/// three children on a kind with at least two children everywhere else.
AuditReport audit_lemma_A1(const TreeHandle& tree, NodeId u, std::uint32_t depth_cap, SolverOptions options = {});

/// 1/(2|T1|) <= HARM(v_i) <= 2/|T1| for every root child.
AuditReport audit_level1_harm(const TreeHandle& tree, std::uint32_t depth_cap, SolverOptions options = {});

struct Lemma44Value {
  double value = 0.0;
  double width = 0.0;  // sum of HARM widths over the counted vertices
  bool low_precision = false;
};
/// sum over level-n v of HARM_mid(v) * 1{|T1(v)| >= N}.
Lemma44Value lemma_4_4_observable(const TreeHandle& tree, std::uint32_t n, std::uint32_t big_n, std::uint32_t depth_cap,
                                  SolverOptions options = {});

/// Predicate on a rooted tree, evaluated on the handle of that tree.
using TreePredicate = std::function<bool(const TreeHandle&)>;

struct RatioEstimate {
  double agw_prob = 0.0;
  double gw_prob = 0.0;
  double ratio = 0.0;
  double stderr_ratio = 0.0;
  Interval ci;  // ratio +- 3 standard errors
  std::uint64_t replicas = 0;
  std::uint64_t flagged_rays = 0;
};
/// One replica of the ratio estimate for several events on the same pair of
/// trees (an AGW tree read at its harmonic v_n, and an independent GW tree).
struct RnSample {
  std::vector<bool> agw;
  std::vector<bool> gw;
  bool flagged = false;
};
RnSample rn_ratio_sample(const OffspringDistribution& dist, std::uint32_t n, const std::vector<TreePredicate>& events,
                         std::uint64_t replica_seed, SolverOptions options = {}, AgwMode mode = AgwMode::kExtraSubtree);
/// Ratio with a delta-method standard error; refuses fewer than 10 GW hits.
RatioEstimate ratio_from_counts(std::uint64_t agw_hits, std::uint64_t gw_hits, std::uint64_t replicas,
                                std::uint64_t flagged = 0);

/// Ratio AGW_n(A) / GW(A). AGW_n(A) is estimated by drawing an AGW tree and a
/// harmonic ray to v_n and testing A on the subtree at v_n; GW(A) from fresh
/// GW trees. Refuses (PreconditionError) if GW(A) is below 10/replicas.
RatioEstimate rn_ratio_estimate(const OffspringDistribution& dist, std::uint32_t n, const TreePredicate& event,
                                std::uint64_t replicas, std::uint64_t seed, SolverOptions options = {},
                                AgwMode mode = AgwMode::kExtraSubtree);

}  // namespace frogsim
