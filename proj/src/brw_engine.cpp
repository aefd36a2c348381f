#include "frogsim/brw_engine.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "frogsim/error.hpp"
#include "frogsim/walks.hpp"

namespace frogsim {

// ---------------------------------------------------------------------------
// Schedules

WeightSchedule make_schedule(WeightSchedule::Variant v) {
  WeightSchedule s;
  s.variant = v;
  if (const auto* r = std::get_if<WeightSchedule::Regular>(&v)) {
    if (r->k < 2) throw PreconditionError("regular schedule needs k >= 2");
    if (!(r->mean_eta >= 0.0)) throw PreconditionError("regular schedule needs E[eta] >= 0");
    s.alpha = 1.0 / std::sqrt((r->mean_eta + 1.0) * r->k);
    s.m = 2.0 / s.alpha / (r->k + 1.0);
    s.warning = !(r->mean_eta < regular_threshold(r->k));
    if (!s.warning && !(s.m < 1.0)) throw Error("regular schedule: m >= 1 below the threshold");
  } else {
    const auto& h = std::get<WeightSchedule::Hat>(v);
    if (!(h.lambda >= 0.0)) throw PreconditionError("hat schedule needs lambda >= 0");
    if (h.big_n < 2) throw PreconditionError("hat schedule needs N >= 2");
    const double n = h.big_n;
    if (!(n * n / (4.0 * (n + 1.0)) > h.lambda))
      throw PreconditionError("hat schedule requires N^2/(4(N+1)) > lambda; got N = " + std::to_string(h.big_n) +
                              ", lambda = " + std::to_string(h.lambda));
    s.alpha = 1.0 / std::sqrt((h.lambda + 1.0) * (n + 1.0));
    s.m = std::max(2.0 / std::sqrt(5.0), 2.0 / s.alpha / (n + 2.0));
    if (!(s.m < 1.0)) throw Error("hat schedule: m >= 1 although N^2/(4(N+1)) > lambda");
  }
  return s;
}

double WeightSchedule::log_w(std::uint32_t j) const {
  if (const auto* r = std::get_if<Regular>(&variant)) {
    (void)r;
    return j * std::log(alpha);
  }
  const auto& h = std::get<Hat>(variant);
  // log(((j+2)!/2)^(-1/2)) = -(lgamma(j+3) - log 2) / 2
  if (j < h.big_n) return -0.5 * (std::lgamma(j + 3.0) - std::log(2.0));
  return -0.5 * (std::lgamma(h.big_n + 2.0) - std::log(2.0)) + (static_cast<double>(j) - h.big_n + 1.0) * std::log(alpha);
}

double WeightSchedule::w(std::uint32_t j) const { return std::exp(log_w(j)); }

std::string WeightSchedule::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (const auto* r = std::get_if<Regular>(&variant))
    os << "regular:k=" << r->k << ",mean_eta=" << r->mean_eta;
  else {
    const auto& h = std::get<Hat>(variant);
    os << "hat:lambda=" << h.lambda << ",N=" << h.big_n;
  }
  os << ",alpha=" << alpha << ",m=" << m;
  return os.str();
}

namespace {

/// Expected number of particles (self plus births) arriving at `level` after
/// an away step.
double away_factor(const WeightSchedule& s, std::uint32_t level) {
  if (const auto* r = std::get_if<WeightSchedule::Regular>(&s.variant)) return r->mean_eta + 1.0;
  const auto& h = std::get<WeightSchedule::Hat>(s.variant);
  return level >= h.big_n ? h.lambda + 1.0 : 1.0;
}

bool births_at(const WeightSchedule& s, std::uint32_t level) {
  if (std::holds_alternative<WeightSchedule::Regular>(s.variant)) return true;
  return level >= std::get<WeightSchedule::Hat>(s.variant).big_n;
}

}  // namespace

double expected_contribution_ratio(const WeightSchedule& s, std::uint32_t j, std::uint32_t child_count) {
  const double c = s.is_hat() ? j + 2.0 : static_cast<double>(child_count);
  const double lw = s.log_w(j);
  const double down = away_factor(s, j + 1) * std::exp(s.log_w(j + 1) - lw);
  if (j == 0) return down;
  const double up = std::exp(s.log_w(j - 1) - lw);
  return up / (c + 1.0) + c / (c + 1.0) * down;
}

double expected_contribution(const WeightSchedule& s, std::uint32_t j, std::uint32_t child_count) {
  return s.w(j) * expected_contribution_ratio(s, j, child_count);
}

// ---------------------------------------------------------------------------
// Eta

double EtaLaw::mean() const {
  if (const auto* p = std::get_if<Poisson>(&variant)) return p->mean;
  double m = 0.0;
  for (const auto& [k, w] : std::get<Explicit>(variant).weights) m += k * w;
  return m;
}

std::uint32_t EtaLaw::sample(SplitMix64& gen) const {
  if (const auto* p = std::get_if<Poisson>(&variant)) return thinned_poisson(gen, p->mean);
  const auto& w = std::get<Explicit>(variant).weights;
  double u = uniform01(gen);
  for (const auto& [k, pr] : w) {
    if (u < pr) return k;
    u -= pr;
  }
  return w.back().first;
}

EtaLaw EtaLaw::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (kind == "poisson") {
      const double m = std::stod(rest);
      if (!(m >= 0)) throw PreconditionError("eta mean must be >= 0");
      return EtaLaw{Poisson{m}};
    }
    if (kind == "pmf") {
      Explicit e;
      std::stringstream ss(rest);
      std::string item;
      double total = 0.0;
      while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw PreconditionError("eta pmf entries are k=weight");
        const double w = std::stod(item.substr(eq + 1));
        if (!(w >= 0)) throw PreconditionError("eta pmf: negative weight");
        e.weights.emplace_back(static_cast<std::uint32_t>(std::stoul(item.substr(0, eq))), w);
        total += w;
      }
      if (e.weights.empty() || std::abs(total - 1.0) > 1e-12) throw PreconditionError("eta pmf must sum to 1");
      return EtaLaw{e};
    }
  } catch (const std::logic_error&) {
    throw PreconditionError("eta law '" + text + "': malformed number");
  }
  throw PreconditionError("unknown eta law '" + text + "'");
}

std::string EtaLaw::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (const auto* p = std::get_if<Poisson>(&variant)) {
    os << "poisson:" << p->mean;
  } else {
    os << "pmf:";
    const auto& w = std::get<Explicit>(variant).weights;
    for (std::size_t i = 0; i < w.size(); ++i) os << (i ? "," : "") << w[i].first << '=' << w[i].second;
  }
  return os.str();
}

std::string BrwTrajectory::to_tsv(bool header) const {
  std::ostringstream os;
  os.precision(17);
  if (header) os << "n\tW_n\tparticles\treturns\n";
  for (const auto& p : points) os << p.n << '\t' << p.w << '\t' << p.particles << '\t' << p.returns << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

constexpr std::uint32_t kRecomputeEvery = 32;

std::uint64_t births_for(const EtaLaw& eta, std::uint64_t n, SplitMix64& gen) {
  if (n == 0) return 0;
  if (const auto* p = std::get_if<EtaLaw::Poisson>(&eta.variant)) {
    if (p->mean <= 0.0) return 0;
    std::poisson_distribution<std::uint64_t> d(p->mean * static_cast<double>(n));
    return d(gen);
  }
  std::uint64_t total = 0;
  for (std::uint64_t i = 0; i < n; ++i) total += eta.sample(gen);
  return total;
}

void check_schedule_tree(const TreeHandle& tree, const WeightSchedule& s) {
  if (s.is_hat()) {
    if (!std::holds_alternative<TreeKind::HatTree>(tree.kind().variant))
      throw PreconditionError("hat schedule needs the hat tree");
    if (std::get<WeightSchedule::Hat>(s.variant).big_n > 12) throw PreconditionError("hat schedule: N is capped at 12");
  }
}

BrwTrajectory run_profile(const TreeHandle& tree, const WeightSchedule& s, const BrwConfig& cfg, std::uint64_t seed) {
  BrwTrajectory out;
  out.profile_mode = true;
  const std::uint32_t cap = cfg.depth_cap;
  std::vector<double> w(cap + 1);
  for (std::uint32_t d = 0; d <= cap; ++d) w[d] = s.w(d);
  auto children_at = [&](std::uint32_t d) -> double {
    if (s.is_hat()) return d + 2.0;
    return std::get<TreeKind::Dary>(tree.kind().variant).d;
  };
  SplitMix64 gen = keyed_stream(seed, StreamTag::kBrwBirth, {0x70726f66ULL});
  std::vector<std::uint64_t> counts(cap + 1, 0), next(cap + 1, 0);
  counts[0] = 1;
  if (s.is_hat()) {
    const auto& h = std::get<WeightSchedule::Hat>(s.variant);
    double level_size = 1.0;
    for (std::uint32_t n = 1; n < h.big_n && n < cap; ++n) {
      level_size *= n + 1.0;  // (n+1)! vertices on level n
      if (h.lambda > 0.0) {
        std::poisson_distribution<std::uint64_t> d(h.lambda * level_size);
        counts[n] = d(gen);
      }
    }
  }
  auto exact_w = [&] {
    double total = 0.0;
    for (std::uint32_t d = 0; d < cap; ++d) total += counts[d] * w[d];
    return total;
  };
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  double W = exact_w();
  std::uint64_t returns = 0;
  out.points.push_back({0, W, total, 0});
  for (std::uint32_t t = 1; t <= cfg.horizon; ++t) {
    if (total == 0) {
      out.termination = Termination::kExtinct;
      break;
    }
    std::fill(next.begin(), next.end(), 0);
    double delta = 0.0;
    for (std::uint32_t d = 0; d < cap; ++d) {
      const std::uint64_t n = counts[d];
      if (n == 0) continue;
      std::uint64_t up = 0;
      if (d > 0) {
        std::binomial_distribution<std::uint64_t> b(n, 1.0 / (children_at(d) + 1.0));
        up = b(gen);
        next[d - 1] += up;
        if (d == 1) returns += up;
        delta += up * (w[d - 1] - w[d]);
      }
      const std::uint64_t down = n - up;
      if (d + 1 >= cap) {
        delta -= down * w[d];
        continue;
      }
      const std::uint64_t born = births_at(s, d + 1) ? births_for(cfg.eta, down, gen) : 0;
      next[d + 1] += down + born;
      delta += down * (w[d + 1] - w[d]) + born * w[d + 1];
    }
    counts.swap(next);
    total = 0;
    for (auto c : counts) total += c;
    W += delta;
    if (t % kRecomputeEvery == 0 || t == cfg.horizon) {
      const double exact = exact_w();
      if (exact > 0.0) out.max_drift = std::max(out.max_drift, std::abs(W - exact) / exact);
      W = exact;
    }
    out.points.push_back({t, W, total, returns});
    if (total > cfg.max_particles) {
      out.termination = Termination::kPopulationCapped;
      break;
    }
  }
  return out;
}

struct Particle {
  NodeId pos;
  SplitMix64 move;
  SplitMix64 birth;
};

BrwTrajectory run_tree_mode(const TreeHandle& tree, const WeightSchedule& s, const BrwConfig& cfg, std::uint64_t seed) {
  BrwTrajectory out;
  const std::uint32_t cap = cfg.depth_cap;
  std::vector<Particle> parts;
  const std::uint64_t rk = tree.key(tree.root());
  parts.push_back({tree.root(), frog_stream(seed, rk, 0), keyed_stream(seed, StreamTag::kBrwBirth, {rk, 0})});
  if (s.is_hat()) {
    const auto& h = std::get<WeightSchedule::Hat>(s.variant);
    std::vector<NodeId> order{tree.root()};
    for (std::size_t i = 0; i < order.size(); ++i) {
      const NodeId v = order[i];
      if (tree.depth(v) + 1 < std::min(h.big_n, cap))
        for (std::uint32_t c = 0; c < tree.child_count(v); ++c) order.push_back(tree.child(v, c));
      if (tree.is_root(v)) continue;
      const std::uint32_t n = sleeper_count(seed, tree.key(v), h.lambda);
      for (std::uint32_t k = 0; k < n; ++k)
        parts.push_back({v, frog_stream(seed, tree.key(v), k), keyed_stream(seed, StreamTag::kBrwBirth, {tree.key(v), k})});
    }
  }
  auto exact_w = [&] {
    double total = 0.0;
    for (const auto& p : parts) total += s.w(tree.depth(p.pos));
    return total;
  };
  double W = exact_w();
  std::uint64_t returns = 0;
  out.points.push_back({0, W, parts.size(), 0});
  std::vector<Particle> born;
  for (std::uint32_t t = 1; t <= cfg.horizon; ++t) {
    if (parts.empty()) {
      out.termination = Termination::kExtinct;
      break;
    }
    double delta = 0.0;
    std::size_t keep = 0;
    born.clear();
    for (std::size_t i = 0; i < parts.size(); ++i) {
      Particle p = parts[i];
      const std::uint32_t d0 = tree.depth(p.pos);
      p.pos = srw_step(tree, p.pos, p.move);
      const std::uint32_t d1 = tree.depth(p.pos);
      if (d1 >= cap) {
        delta -= s.w(d0);
        continue;
      }
      delta += s.w(d1) - s.w(d0);
      if (tree.is_root(p.pos)) ++returns;
      if (d1 > d0 && births_at(s, d1)) {
        const std::uint32_t n = cfg.eta.sample(p.birth);
        for (std::uint32_t k = 0; k < n; ++k) born.push_back({p.pos, SplitMix64(p.birth()), SplitMix64(p.birth())});
        delta += n * s.w(d1);
      }
      parts[keep++] = p;
    }
    parts.resize(keep);
    parts.insert(parts.end(), born.begin(), born.end());
    W += delta;
    if (t % kRecomputeEvery == 0 || t == cfg.horizon) {
      const double exact = exact_w();
      if (exact > 0.0) out.max_drift = std::max(out.max_drift, std::abs(W - exact) / exact);
      W = exact;
    }
    out.points.push_back({t, W, parts.size(), returns});
    if (parts.size() > cfg.max_particles) {
      out.termination = Termination::kPopulationCapped;
      break;
    }
  }
  return out;
}

}  // namespace

BrwTrajectory run_brw(const TreeHandle& tree, const WeightSchedule& schedule, const BrwConfig& cfg,
                      std::uint64_t seed) {
  if (cfg.depth_cap < 2) throw PreconditionError("depth_cap must be >= 2");
  check_schedule_tree(tree, schedule);
  const bool homogeneous = std::holds_alternative<TreeKind::Dary>(tree.kind().variant) ||
                           std::holds_alternative<TreeKind::HatTree>(tree.kind().variant);
  if (cfg.allow_profile && homogeneous) return run_profile(tree, schedule, cfg, seed);
  return run_tree_mode(tree, schedule, cfg, seed);
}

DominanceResult dominance_check_brw_fm(const TreeHandle& tree, double lambda, std::uint64_t seed,
                                       const FrogConfig& caps) {
  DominanceResult out;
  const RunStats fm = run_fm(tree, caps, seed);

  std::vector<Particle> parts;
  const std::uint64_t rk = tree.key(tree.root());
  parts.push_back({tree.root(), frog_stream(seed, rk, 0), keyed_stream(seed, StreamTag::kBrwBirth, {rk, 0})});
  std::vector<std::uint8_t> birthed;
  auto first_birth = [&](NodeId v) {
    if (birthed.size() <= v.value) birthed.resize(std::max<std::size_t>(v.value + 1, birthed.size() * 2), 0);
    if (birthed[v.value]) return false;
    birthed[v.value] = 1;
    return true;
  };
  first_birth(tree.root());
  std::uint64_t returns = 0;
  std::uint32_t t = 0;
  const std::uint64_t brw_cap = caps.max_active * 10;
  std::vector<Particle> born;
  std::uint64_t brw_at_fm_end = 0;
  bool capped = false;
  while (t < fm.ticks && !parts.empty()) {
    ++t;
    born.clear();
    std::size_t keep = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      Particle p = parts[i];
      const std::uint32_t d0 = tree.depth(p.pos);
      p.pos = srw_step(tree, p.pos, p.move);
      const std::uint32_t d1 = tree.depth(p.pos);
      if (d1 >= caps.depth_cap) continue;
      if (tree.is_root(p.pos)) ++returns;
      if (d1 > d0) {
        if (first_birth(p.pos)) {
          const std::uint64_t key = tree.key(p.pos);
          const std::uint32_t n = sleeper_count(seed, key, lambda);
          for (std::uint32_t k = 0; k < n; ++k)
            born.push_back({p.pos, frog_stream(seed, key, k), keyed_stream(seed, StreamTag::kBrwBirth, {key, k})});
        } else {
          const std::uint32_t n = lambda > 0.0 ? thinned_poisson(p.birth, lambda) : 0;
          for (std::uint32_t k = 0; k < n; ++k) born.push_back({p.pos, SplitMix64(p.birth()), SplitMix64(p.birth())});
        }
      }
      parts[keep++] = p;
    }
    parts.resize(keep);
    parts.insert(parts.end(), born.begin(), born.end());
    brw_at_fm_end = returns;
    if (parts.size() > brw_cap) {
      capped = true;
      break;
    }
  }
  out.window_end = t;
  out.brw_returns = brw_at_fm_end;
  out.fm_returns = fm.returns_at(t);
  out.holds = out.brw_returns >= out.fm_returns;
  if (capped) out.note = "branching walk hit its population cap at tick " + std::to_string(t);
  if (parts.empty() && t < fm.ticks) {
    // Extinct BRW: FM frogs are a subset, so FM is extinct by now as well.
    out.fm_returns = fm.total_root_returns;
    out.holds = out.brw_returns >= out.fm_returns;
  }
  return out;
}

}  // namespace frogsim
