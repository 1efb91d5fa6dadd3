#include "infsub/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace infsub {

std::vector<Query> build_queries(std::span<const Subscription> subs) {
  std::map<std::vector<std::string>, std::vector<SubscriptionId>> grouped;
  for (const Subscription& s : subs) {
    if (s.keywords.empty())
      throw std::invalid_argument("subscription " + std::to_string(s.id) +
                                  " has an empty keyword set");
    std::vector<std::string> kw = s.keywords;
    std::sort(kw.begin(), kw.end());
    kw.erase(std::unique(kw.begin(), kw.end()), kw.end());
    grouped[std::move(kw)].push_back(s.id);
  }
  std::vector<Query> queries;
  queries.reserve(grouped.size());
  for (auto& [kw, ids] : grouped) {
    std::sort(ids.begin(), ids.end());
    queries.push_back(Query{kw, std::move(ids)});
  }
  return queries;
}

std::vector<QueryId> related_queries(const std::vector<std::string>& profile,
                                     std::span<const Query> queries) {
  std::vector<QueryId> out;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (std::includes(profile.begin(), profile.end(),
                      queries[q].keywords.begin(), queries[q].keywords.end()))
      out.push_back(static_cast<QueryId>(q));
  }
  return out;
}

std::vector<QueryId> Engine::all_query_ids(std::size_t n) {
  std::vector<QueryId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<QueryId>(i);
  return ids;
}

Engine::Engine(EngineConfig config, std::vector<UserProfile> profiles,
               std::span<const Subscription> subscriptions)
    : config_(config),
      queries_(build_queries(subscriptions)),
      shift_{config.initial_b, config.params.t0},
      tree_(all_query_ids(queries_.size())) {
  config_.params.validate();
  if (!(config_.initial_b > 0.0) || !std::isfinite(config_.initial_b))
    throw std::invalid_argument("initial_b must be positive and finite");
  for (UserProfile& p : profiles) {
    std::sort(p.keywords.begin(), p.keywords.end());
    p.keywords.erase(std::unique(p.keywords.begin(), p.keywords.end()),
                     p.keywords.end());
    profiles_[p.user] = std::move(p.keywords);
  }
  ladders_.reserve(queries_.size());
  for (std::size_t q = 0; q < queries_.size(); ++q)
    ladders_.emplace_back(static_cast<QueryId>(q));
}

const std::vector<QueryId>& Engine::related_query_ids(UserId u) const {
  auto it = related_memo_.find(u);
  if (it != related_memo_.end()) return it->second;
  static const std::vector<std::string> kNoProfile;
  const std::vector<std::string>* profile = &kNoProfile;
  if (auto pit = profiles_.find(u); pit != profiles_.end())
    profile = &pit->second;
  return related_memo_.emplace(u, related_queries(*profile, queries_))
      .first->second;
}

std::vector<SubscriptionId> Engine::related_subscriptions(UserId u) const {
  std::vector<SubscriptionId> out;
  for (QueryId q : related_query_ids(u))
    out.insert(out.end(), queries_[q].subscribers.begin(),
               queries_[q].subscribers.end());
  std::sort(out.begin(), out.end());
  return out;
}

void Engine::process_action(const Action& a, Timestamp t_cur) {
  ++counters_.actions;
  ++seq_;
  if (a.influencer == a.influencee)
    throw std::invalid_argument(
        "process_action: self-influence action must be rejected at ingestion");

  // Step 1: fold the action into the edge store.
  auto w = raw_weight(a, config_.params.lambda, shift_.t0);
  if (!w) {
    // The base frame fell too far behind the clock: rebase and retry once.
    time_decay_now(t_cur);
    w = raw_weight(a, config_.params.lambda, shift_.t0);
    if (!w)
      throw std::runtime_error(
          "process_action: raw weight overflows even after rebasing");
  }
  if (*w == 0.0) {
    // Underflowed below the representable range; it can never matter again.
    ++counters_.dropped_underflow;
    return;
  }
  const auto update = edges_.update_edge(a.influencer, a.influencee, *w);
  if (!update.increased) {
    ++counters_.skipped_no_increase;
    return;
  }
  const auto& q_ur = related_query_ids(a.influencer);
  if (q_ur.empty()) return;  // edge kept, but nobody subscribes to u_r

  // Step 2: raise the per-query ceilings and re-tile their ladders.
  const double f_ur = edges_.user_influence(a.influencer);
  for (QueryId q : q_ur)
    refresh_ladder(q, std::max(ladders_[q].m(), f_ur));

  // Step 3: one marginal per surviving path, then the sieve decisions.
  auto visited = tree_.dfs_marginals(
      a.influencer, q_ur, edges_, config_.params.k, config_.pruning,
      [this](UserId u) -> const std::vector<QueryId>& {
        return related_query_ids(u);
      },
      seq_);
  PrefixTree::ModifyMemo memo;
  for (const auto& v : visited) {
    PathPayload* pl = v.node->payload.get();
    if (pl->set.size() >= config_.params.k) continue;
    if (std::binary_search(pl->set.begin(), pl->set.end(), a.influencer))
      continue;  // re-adding a member is a no-op
    const auto snapshot = pl->ests;  // modify edits the live list
    for (Estimation* est : snapshot) {
      if (!std::binary_search(q_ur.begin(), q_ur.end(), est->owner)) continue;
      if (sieve_accept(v.gain, est->value, pl->influence, pl->set.size(),
                       config_.params.k)) {
        tree_.modify(a.influencer, v.node, est, memo, q_ur, seq_);
        ++counters_.accepts;
      }
    }
  }
  tree_.clear_pass(visited);
}

void Engine::refresh_ladder(QueryId q, double new_m) {
  std::vector<Estimation*> created;
  std::vector<std::unique_ptr<Estimation>> expired;
  ladders_[q].refresh(new_m, shift_, config_.params.epsilon, config_.params.k,
                      created, expired);
  for (auto& est : expired) tree_.release_estimation(est.get());
  for (Estimation* est : created) tree_.link_to_root(est);
  counters_.estimations_created += created.size();
  counters_.estimations_expired += expired.size();
}

bool Engine::maybe_time_decay(Timestamp t_cur) {
  if (edges_.max_user_influence() >= config_.params.tau_f) {
    time_decay_now(t_cur);
    return true;
  }
  return false;
}

void Engine::time_decay_now(Timestamp t_cur) {
  const auto result =
      time_decay(t_cur, shift_, config_.params, edges_, ladders_, tree_);
  counters_.estimations_created += result.created;
  counters_.estimations_expired += result.expired;
  ++counters_.rebases;
}

std::vector<ResultRow> Engine::emit(Timestamp t_cur) {
  maybe_time_decay(t_cur);
  ++counters_.emissions;
  return push_results(t_cur);
}

namespace {

// Higher influence wins; ties prefer the smaller, then lexicographically
// smaller set.
bool better_payload(const PathPayload& a, const PathPayload& b) {
  if (a.influence != b.influence) return a.influence > b.influence;
  if (a.set.size() != b.set.size()) return a.set.size() < b.set.size();
  return a.set < b.set;
}

}  // namespace

std::vector<ResultRow> Engine::push_results(Timestamp t_cur) const {
  const double decay =
      current_decay_factor(t_cur, config_.params.lambda, shift_.t0);
  std::vector<const PathPayload*> best(queries_.size(), nullptr);
  // The root (empty set, influence 0) participates in the argmax; it is the
  // natural fallback for queries with no linked candidate set and wins
  // zero-influence ties by its size.
  tree_.for_each_payload([&](const TreeNode&, const PathPayload& pl) {
    for (QueryId q : pl.queries)
      if (!best[q] || better_payload(pl, *best[q])) best[q] = &pl;
  });
  std::vector<ResultRow> rows;
  for (std::size_t q = 0; q < queries_.size(); ++q) {
    ResultRow row;
    row.timestamp = t_cur;
    row.k = config_.params.k;
    if (best[q]) {
      row.users = best[q]->set;
      row.influence = best[q]->influence * decay;
    }
    for (SubscriptionId sub : queries_[q].subscribers) {
      row.subscription = sub;
      rows.push_back(row);
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a,
                                         const ResultRow& b) {
    return a.subscription < b.subscription;
  });
  return rows;
}

const RunCounters& Engine::counters() const {
  const TreeCounters& tc = tree_.counters();
  counters_.marginal_evals = tc.marginal_evals;
  counters_.prune_user_match = tc.prune_user_match;
  counters_.prune_query_disjoint = tc.prune_query_disjoint;
  counters_.prune_threshold = tc.prune_threshold;
  return counters_;
}

std::vector<Engine::Assignment> Engine::estimation_assignments() const {
  std::vector<Assignment> out;
  for (std::size_t q = 0; q < ladders_.size(); ++q) {
    for (const auto& [index, est] : ladders_[q].estimations()) {
      Assignment a;
      a.query = static_cast<QueryId>(q);
      a.index = index;
      if (est->node && est->node->payload) a.set = est->node->payload->set;
      out.push_back(std::move(a));
    }
  }
  return out;
}

}  // namespace infsub
