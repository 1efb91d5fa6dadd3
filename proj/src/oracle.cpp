#include "infsub/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "infsub/influence_model.hpp"

namespace infsub::oracle {

namespace {

constexpr int kMaxLadderScan = 256;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<QueryId> intersect_ids(const std::vector<QueryId>& a,
                                   const std::vector<QueryId>& b) {
  std::vector<QueryId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

// Higher value wins; ties prefer the smaller, then lexicographically smaller
// set. Matches the result argmax of the engine under test.
bool better_set(const std::vector<UserId>& s_a, double f_a,
                const std::vector<UserId>& s_b, double f_b) {
  if (f_a != f_b) return f_a > f_b;
  if (s_a.size() != s_b.size()) return s_a.size() < s_b.size();
  return s_a < s_b;
}

}  // namespace

// --------------------------------------------------------------------------
// ExactEdgeMap

void ExactEdgeMap::ingest(const Action& a) {
  if (a.influencer == a.influencee) return;  // self-actions carry no edge
  const std::int64_t sum = a.t_e + a.t_r;
  auto& row = ts_sum_[a.influencer];
  auto [it, inserted] = row.try_emplace(a.influencee, sum);
  if (!inserted && sum > it->second) it->second = sum;
}

double ExactEdgeMap::weight(UserId u_r, UserId u_e, double lambda,
                            Timestamp t_cur) const {
  auto it = ts_sum_.find(u_r);
  if (it == ts_sum_.end()) return 0.0;
  auto jt = it->second.find(u_e);
  if (jt == it->second.end()) return 0.0;
  return std::exp(lambda *
                  (static_cast<double>(jt->second) -
                   2.0 * static_cast<double>(t_cur)));
}

double ExactEdgeMap::coverage(std::span<const UserId> s, double lambda,
                              Timestamp t_cur) const {
  // Best member timestamp sum per target; integer max, so no rounding enters
  // before the final exp-and-add.
  std::map<UserId, std::int64_t> best;
  for (UserId u : s) {
    auto it = ts_sum_.find(u);
    if (it == ts_sum_.end()) continue;
    for (const auto& [v, sum] : it->second) {
      auto [jt, inserted] = best.try_emplace(v, sum);
      if (!inserted && sum > jt->second) jt->second = sum;
    }
  }
  double total = 0.0;
  for (const auto& [v, sum] : best)
    total += std::exp(lambda * (static_cast<double>(sum) -
                                2.0 * static_cast<double>(t_cur)));
  return total;
}

std::vector<UserId> ExactEdgeMap::influencers() const {
  std::vector<UserId> out;
  out.reserve(ts_sum_.size());
  for (const auto& [u, row] : ts_sum_) out.push_back(u);
  std::sort(out.begin(), out.end());
  return out;
}

// --------------------------------------------------------------------------
// Exhaustive optimum and greedy baseline

ScoredSet exhaustive_opt(std::span<const UserId> pool, std::size_t k,
                         const ExactEdgeMap& edges, double lambda,
                         Timestamp t_cur) {
  if (pool.size() > 20)
    throw std::invalid_argument(
        "exhaustive_opt: pool too large for full enumeration");
  std::vector<UserId> sorted(pool.begin(), pool.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  ScoredSet best;  // the empty set scores 0
  const std::size_t n = sorted.size();
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) > k) continue;
    std::vector<UserId> subset;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) subset.push_back(sorted[i]);
    const double value = edges.coverage(subset, lambda, t_cur);
    if (better_set(subset, value, best.users, best.value)) {
      best.users = std::move(subset);
      best.value = value;
    }
  }
  return best;
}

ScoredSet greedy(std::span<const UserId> pool, std::size_t k,
                 const ExactEdgeMap& edges, double lambda, Timestamp t_cur) {
  std::vector<UserId> remaining(pool.begin(), pool.end());
  std::sort(remaining.begin(), remaining.end());
  remaining.erase(std::unique(remaining.begin(), remaining.end()),
                  remaining.end());

  ScoredSet out;
  while (out.users.size() < k && !remaining.empty()) {
    UserId pick = 0;
    double pick_value = out.value;
    bool found = false;
    for (UserId u : remaining) {
      std::vector<UserId> candidate = out.users;
      candidate.insert(
          std::upper_bound(candidate.begin(), candidate.end(), u), u);
      const double value = edges.coverage(candidate, lambda, t_cur);
      if (value > pick_value) {  // strict: ties keep the smaller id
        pick = u;
        pick_value = value;
        found = true;
      }
    }
    if (!found) break;  // nothing improves the objective
    out.users.insert(
        std::upper_bound(out.users.begin(), out.users.end(), pick), pick);
    out.value = pick_value;
    remaining.erase(std::find(remaining.begin(), remaining.end(), pick));
  }
  return out;
}

// --------------------------------------------------------------------------
// ReferenceEngine

ReferenceEngine::ReferenceEngine(RefConfig config,
                                 std::vector<UserProfile> profiles,
                                 std::span<const Subscription> subscriptions)
    : config_(config), queries_(build_queries(subscriptions)) {
  config_.params.validate();
  if (!(config_.initial_b > 0.0) || !std::isfinite(config_.initial_b))
    throw std::invalid_argument("initial_b must be positive and finite");
  b_ = config_.initial_b;
  t0_ = config_.params.t0;
  for (UserProfile& p : profiles) {
    std::sort(p.keywords.begin(), p.keywords.end());
    p.keywords.erase(std::unique(p.keywords.begin(), p.keywords.end()),
                     p.keywords.end());
    profiles_[p.user] = std::move(p.keywords);
  }
  ladders_.resize(queries_.size());
  SetEntry root;
  for (std::size_t q = 0; q < queries_.size(); ++q)
    root.queries.push_back(static_cast<QueryId>(q));
  sets_.emplace(std::vector<UserId>{}, std::move(root));
}

const std::vector<QueryId>& ReferenceEngine::related(UserId u) const {
  auto it = related_memo_.find(u);
  if (it != related_memo_.end()) return it->second;
  static const std::vector<std::string> kNoProfile;
  const std::vector<std::string>* profile = &kNoProfile;
  if (auto pit = profiles_.find(u); pit != profiles_.end())
    profile = &pit->second;
  return related_memo_.emplace(u, related_queries(*profile, queries_))
      .first->second;
}

double ReferenceEngine::recompute_user_influence(UserId u) const {
  auto it = out_.find(u);
  if (it == out_.end()) return 0.0;
  std::vector<std::pair<UserId, double>> row(it->second.begin(),
                                             it->second.end());
  std::sort(row.begin(), row.end());
  double total = 0.0;
  for (const auto& [v, w] : row) total += w;
  return total;
}

double ReferenceEngine::recompute_marginal(UserId u,
                                           std::span<const UserId> s) const {
  auto it = out_.find(u);
  if (it == out_.end()) return 0.0;
  // Same addends in the same (ascending target) order as the engine under
  // test, so accepted influences agree bitwise, not just within tolerance.
  std::vector<std::pair<UserId, double>> row(it->second.begin(),
                                             it->second.end());
  std::sort(row.begin(), row.end());
  double gain = 0.0;
  for (const auto& [v, w] : row) {
    double covered = 0.0;
    for (UserId member : s) {
      auto mit = out_.find(member);
      if (mit == out_.end()) continue;
      auto vit = mit->second.find(v);
      if (vit != mit->second.end() && vit->second > covered)
        covered = vit->second;
    }
    if (w > covered) gain += w - covered;
  }
  return gain;
}

double ReferenceEngine::recompute_max_influence() const {
  std::vector<UserId> users;
  users.reserve(out_.size());
  for (const auto& [u, row] : out_) users.push_back(u);
  std::sort(users.begin(), users.end());
  double best = 0.0;
  for (UserId u : users) {
    const double f = recompute_user_influence(u);
    if (f > best) best = f;
  }
  return best;
}

double ReferenceEngine::ladder_point(std::int64_t index) const {
  return b_ * std::pow(1.0 + config_.params.epsilon,
                       static_cast<double>(index));
}

std::pair<std::int64_t, std::int64_t> ReferenceEngine::ref_index_range(
    double m) const {
  if (m <= 0.0) return {1, 0};
  const double top = 2.0 * static_cast<double>(config_.params.k) * m;
  const double step = std::log1p(config_.params.epsilon);

  auto lo = static_cast<std::int64_t>(std::floor(std::log(m / b_) / step));
  int guard = 0;
  while (ladder_point(lo) > m) {
    --lo;
    if (++guard > kMaxLadderScan)
      throw std::logic_error("ref_index_range: lo scan diverged");
  }
  while (ladder_point(lo) <= m) {
    ++lo;
    if (++guard > kMaxLadderScan)
      throw std::logic_error("ref_index_range: lo scan diverged");
  }

  auto hi = static_cast<std::int64_t>(std::floor(std::log(top / b_) / step));
  guard = 0;
  while (ladder_point(hi) <= top) {
    ++hi;
    if (++guard > kMaxLadderScan)
      throw std::logic_error("ref_index_range: hi scan diverged");
  }
  while (hi >= lo && ladder_point(hi) > top) {
    --hi;
    if (++guard > kMaxLadderScan)
      throw std::logic_error("ref_index_range: hi scan diverged");
  }
  return {lo, hi};
}

std::int64_t ReferenceEngine::ref_shift_exponent(double b_scaled) const {
  if (!(b_scaled > 0.0) || !std::isfinite(b_scaled))
    throw std::invalid_argument("ref_shift_exponent: base must be positive");
  const double step = std::log1p(config_.params.epsilon);
  const double log_b = std::log(b_scaled);
  const auto j0 = static_cast<std::int64_t>(std::floor(-log_b / step));
  const std::int64_t j1 = j0 + 1;
  const double d0 = std::fabs(log_b + static_cast<double>(j0) * step);
  const double d1 = std::fabs(log_b + static_cast<double>(j1) * step);
  if (d0 < d1) return j0;
  if (d1 < d0) return j1;
  return std::llabs(j0) <= std::llabs(j1) ? j0 : j1;
}

void ReferenceEngine::add_ref(const std::vector<UserId>& s) {
  auto it = sets_.find(s);
  if (it == sets_.end())
    throw std::logic_error("add_ref: candidate set entry missing");
  ++it->second.refs;
}

void ReferenceEngine::drop_ref(const std::vector<UserId>& s,
                               bool erase_if_dead) {
  auto it = sets_.find(s);
  if (it == sets_.end() || it->second.refs <= 0)
    throw std::logic_error("drop_ref: candidate set entry missing or dead");
  --it->second.refs;
  // Erasure is deferred for sets emptied by a relink: the engine under test
  // clears such paths only after all insertions of the action.
  if (erase_if_dead && it->second.refs == 0 && !it->first.empty())
    sets_.erase(it);
}

void ReferenceEngine::refresh_ladder(QueryId q, double new_m) {
  RefLadder& ladder = ladders_[q];
  if (new_m < ladder.m)
    throw std::logic_error("refresh_ladder: m must not decrease");
  if (new_m == ladder.m) return;
  ladder.m = new_m;
  retile(ladder);
}

void ReferenceEngine::retile(RefLadder& ladder) {
  const auto [lo, hi] = ref_index_range(ladder.m);
  for (auto it = ladder.ests.begin(); it != ladder.ests.end();) {
    if (it->first < lo || it->first > hi) {
      drop_ref(it->second.set, /*erase_if_dead=*/true);
      ++counters_.estimations_expired;
      it = ladder.ests.erase(it);
    } else {
      ++it;
    }
  }
  for (std::int64_t i = lo; i <= hi; ++i) {
    if (ladder.ests.count(i)) continue;
    RefEst est;
    est.index = i;
    est.value = ladder_point(i);
    add_ref(est.set);  // fresh estimations start at the empty set
    ++counters_.estimations_created;
    ladder.ests.emplace(i, std::move(est));
  }
}

void ReferenceEngine::rebase(Timestamp t_cur) {
  if (t_cur < t0_)
    throw std::invalid_argument("rebase: clock behind the rebase origin");
  const double d =
      std::exp(-2.0 * config_.params.lambda * static_cast<double>(t_cur - t0_));
  ++counters_.rebases;

  if (d == 0.0) {
    // Everything decayed below the representable range: reset.
    out_.clear();
    b_ = 1.0;
    for (auto& ladder : ladders_) {
      ladder.m = 0.0;
      for (auto& [i, est] : ladder.ests) {
        drop_ref(est.set, /*erase_if_dead=*/true);
        ++counters_.estimations_expired;
      }
      ladder.ests.clear();
    }
    t0_ = t_cur;
    return;
  }

  const double b_scaled = b_ * d;
  const std::int64_t j = ref_shift_exponent(b_scaled);
  if (std::fabs(static_cast<double>(j)) * std::log1p(config_.params.epsilon) <=
      600.0) {
    b_ = b_scaled *
         std::pow(1.0 + config_.params.epsilon, static_cast<double>(j));
  } else {
    b_ = std::exp(std::log(b_scaled) +
                  static_cast<double>(j) * std::log1p(config_.params.epsilon));
  }

  if (d != 1.0) {
    for (auto it = out_.begin(); it != out_.end();) {
      auto& row = it->second;
      for (auto jt = row.begin(); jt != row.end();) {
        jt->second *= d;
        if (jt->second == 0.0)
          jt = row.erase(jt);
        else
          ++jt;
      }
      if (row.empty())
        it = out_.erase(it);
      else
        ++it;
    }
  }
  for (auto& [s, entry] : sets_) entry.f *= d;

  for (auto& ladder : ladders_) {
    const double new_m = ladder.m * d;
    if (!(new_m >= std::numeric_limits<double>::min())) {
      ladder.m = 0.0;
      for (auto& [i, est] : ladder.ests) {
        drop_ref(est.set, /*erase_if_dead=*/true);
        ++counters_.estimations_expired;
      }
      ladder.ests.clear();
      continue;
    }
    ladder.m = new_m;
    if (j != 0) {
      std::map<std::int64_t, RefEst> shifted;
      for (auto& [i, est] : ladder.ests) {
        est.index = i - j;
        shifted.emplace(i - j, std::move(est));
      }
      ladder.ests = std::move(shifted);
    }
    for (auto& [i, est] : ladder.ests) est.value = ladder_point(i);
    retile(ladder);
  }
  t0_ = t_cur;
}

void ReferenceEngine::process_action(const Action& a, Timestamp t_cur) {
  ++counters_.actions;
  if (a.influencer == a.influencee)
    throw std::invalid_argument(
        "process_action: self-influence action must be rejected at ingestion");
  if (config_.mode == RefMode::kEager && t_cur > t0_) rebase(t_cur);

  auto w = raw_weight(a, config_.params.lambda, t0_);
  if (!w) {
    rebase(t_cur);
    w = raw_weight(a, config_.params.lambda, t0_);
    if (!w)
      throw std::runtime_error(
          "process_action: raw weight overflows even after rebasing");
  }
  if (*w == 0.0) {
    ++counters_.dropped_underflow;
    return;
  }
  double& slot = out_[a.influencer][a.influencee];
  if (!(*w > slot)) {
    ++counters_.skipped_no_increase;
    return;
  }
  slot = *w;

  const auto& q_ur = related(a.influencer);
  if (q_ur.empty()) return;

  const double f_ur = recompute_user_influence(a.influencer);
  for (QueryId q : q_ur)
    refresh_ladder(q, std::max(ladders_[q].m, f_ur));

  const std::size_t k = config_.params.k;
  for (QueryId q : q_ur) {
    for (auto& [index, est] : ladders_[q].ests) {
      ++counters_.marginal_evals;
      const double gain = recompute_marginal(a.influencer, est.set);
      if (est.set.size() >= k) continue;
      if (std::binary_search(est.set.begin(), est.set.end(), a.influencer))
        continue;  // re-adding a member is a no-op
      const SetEntry& source = sets_.at(est.set);
      const double threshold = (0.5 * est.value - source.f) /
                               static_cast<double>(k - est.set.size());
      if (!(gain >= threshold)) continue;
      ++counters_.accepts;

      std::vector<UserId> target = est.set;
      target.insert(
          std::upper_bound(target.begin(), target.end(), a.influencer),
          a.influencer);
      auto [it, inserted] = sets_.try_emplace(std::move(target));
      // (Re)written on every accept. Sources never contain the influencer
      // and targets always do, so within one action no entry is both: every
      // accept from the same source repeats the identical value, matching
      // the engine's once-per-source memo bitwise. Refreshing an existing
      // target keeps its stored influence from lagging behind the live
      // coverage once members re-arrive with stronger edges.
      it->second.f = source.f + gain;
      it->second.queries = intersect_ids(source.queries, q_ur);
      ++it->second.refs;
      drop_ref(est.set, /*erase_if_dead=*/false);
      est.set = it->first;
    }
  }

  // The clear sweep: sets emptied by relinks die once all insertions ran.
  for (auto it = sets_.begin(); it != sets_.end();) {
    if (it->second.refs == 0 && !it->first.empty())
      it = sets_.erase(it);
    else
      ++it;
  }
}

std::vector<ResultRow> ReferenceEngine::emit(Timestamp t_cur) {
  if (config_.mode == RefMode::kEager) {
    if (t_cur > t0_) rebase(t_cur);
  } else if (recompute_max_influence() >= config_.params.tau_f) {
    rebase(t_cur);
  }
  ++counters_.emissions;

  if (t_cur < t0_)
    throw std::invalid_argument("emit: clock behind the rebase origin");
  const double decay =
      std::exp(-2.0 * config_.params.lambda * static_cast<double>(t_cur - t0_));

  std::vector<const std::pair<const std::vector<UserId>, SetEntry>*> best(
      queries_.size(), nullptr);
  for (const auto& entry : sets_) {
    for (QueryId q : entry.second.queries) {
      if (!best[q] || better_set(entry.first, entry.second.f, best[q]->first,
                                 best[q]->second.f))
        best[q] = &entry;
    }
  }
  std::vector<ResultRow> rows;
  for (std::size_t q = 0; q < queries_.size(); ++q) {
    ResultRow row;
    row.timestamp = t_cur;
    row.k = config_.params.k;
    if (best[q]) {
      row.users = best[q]->first;
      row.influence = best[q]->second.f * decay;
    }
    for (SubscriptionId sub : queries_[q].subscribers) {
      row.subscription = sub;
      rows.push_back(row);
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const ResultRow& a, const ResultRow& b) {
              return a.subscription < b.subscription;
            });
  return rows;
}

std::vector<Engine::Assignment> ReferenceEngine::estimation_assignments()
    const {
  std::vector<Engine::Assignment> out;
  for (std::size_t q = 0; q < ladders_.size(); ++q) {
    for (const auto& [index, est] : ladders_[q].ests) {
      Engine::Assignment a;
      a.query = static_cast<QueryId>(q);
      a.index = index;
      a.set = est.set;
      out.push_back(std::move(a));
    }
  }
  return out;
}

std::string ReferenceEngine::debug_dump() const {
  std::map<std::vector<UserId>, std::vector<double>> linked;
  for (const auto& ladder : ladders_)
    for (const auto& [index, est] : ladder.ests)
      linked[est.set].push_back(est.value);

  std::string out;
  for (const auto& [set, entry] : sets_) {  // already in ascending set order
    out += "S=";
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(set[i]);
    }
    out += " f=" + fmt_double(entry.f) + " Q=";
    for (std::size_t i = 0; i < entry.queries.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(entry.queries[i]);
    }
    out += " E=";
    auto it = linked.find(set);
    if (it != linked.end()) {
      std::sort(it->second.begin(), it->second.end());
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        if (i) out += ',';
        out += fmt_double(it->second[i]);
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace infsub::oracle
