#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "infsub/influence_model.hpp"
#include "infsub/prefix_tree.hpp"
#include "infsub/sieve_core.hpp"
#include "infsub/types.hpp"

namespace infsub {

struct UserProfile {
  UserId user = 0;
  std::vector<std::string> keywords;  // sorted, unique
};

struct Subscription {
  SubscriptionId id = 0;
  std::vector<std::string> keywords;  // sorted, unique, nonempty
};

// Deduplicated keyword set: subscriptions with identical keywords share one
// internal query and therefore one ladder.
struct Query {
  std::vector<std::string> keywords;
  std::vector<SubscriptionId> subscribers;  // external ids, ascending
};

// Canonicalizes subscriptions into internal queries. Deterministic: queries
// are ordered by keyword set.
std::vector<Query> build_queries(std::span<const Subscription> subs);

// Ascending internal ids of the queries whose keywords are all in `profile`
// (non-strict inclusion; an exact match counts).
std::vector<QueryId> related_queries(const std::vector<std::string>& profile,
                                     std::span<const Query> queries);

struct ResultRow {
  SubscriptionId subscription = 0;
  Timestamp timestamp = 0;
  std::size_t k = 0;
  std::vector<UserId> users;
  double influence = 0.0;  // decayed to the emission clock
};

struct RunCounters {
  std::uint64_t actions = 0;
  std::uint64_t skipped_no_increase = 0;
  std::uint64_t dropped_underflow = 0;
  std::uint64_t marginal_evals = 0;
  std::uint64_t prune_user_match = 0;
  std::uint64_t prune_query_disjoint = 0;
  std::uint64_t prune_threshold = 0;
  std::uint64_t accepts = 0;
  std::uint64_t estimations_created = 0;
  std::uint64_t estimations_expired = 0;
  std::uint64_t rebases = 0;
  std::uint64_t emissions = 0;
};

// Common surface of the production engine and the reference engines so one
// driver can run any of them over a stream.
class StreamEngine {
 public:
  virtual ~StreamEngine() = default;
  // t_cur is the stream clock: the max timestamp seen so far (monotone).
  virtual void process_action(const Action& a, Timestamp t_cur) = 0;
  // Runs the rebase check, then reports the current best set per
  // subscription. Rows come back sorted by subscription id.
  virtual std::vector<ResultRow> emit(Timestamp t_cur) = 0;
  virtual const RunCounters& counters() const = 0;
};

struct EngineConfig {
  DecayParams params;
  PruneFlags pruning;
  double initial_b = 1.0;
};

// Streaming maintenance of the top-k influencer set of every subscription,
// sharing candidate sets across queries through one prefix tree.
class Engine : public StreamEngine {
 public:
  Engine(EngineConfig config, std::vector<UserProfile> profiles,
         std::span<const Subscription> subscriptions);

  void process_action(const Action& a, Timestamp t_cur) override;
  std::vector<ResultRow> emit(Timestamp t_cur) override;
  // Engine-level counters merged with the tree's own instrumentation.
  const RunCounters& counters() const override;

  // Rebases now when the max raw influence has reached tau_f; true if fired.
  bool maybe_time_decay(Timestamp t_cur);
  // Unconditional rebase to t_cur.
  void time_decay_now(Timestamp t_cur);

  // Current best set per subscription without the rebase check.
  std::vector<ResultRow> push_results(Timestamp t_cur) const;

  // External ids subscribed to keyword sets contained in u's profile.
  std::vector<SubscriptionId> related_subscriptions(UserId u) const;
  const std::vector<QueryId>& related_query_ids(UserId u) const;

  // (query, ladder index) -> candidate set, for cross-engine audits.
  struct Assignment {
    QueryId query = 0;
    std::int64_t index = 0;
    std::vector<UserId> set;
  };
  std::vector<Assignment> estimation_assignments() const;

  const EdgeStore& edges() const { return edges_; }
  const PrefixTree& tree() const { return tree_; }
  PrefixTree& tree() { return tree_; }
  const ShiftState& shift() const { return shift_; }
  const DecayParams& params() const { return config_.params; }
  const std::vector<Query>& queries() const { return queries_; }
  const EstimationLadder& ladder(QueryId q) const { return ladders_[q]; }

 private:
  void refresh_ladder(QueryId q, double new_m);
  static std::vector<QueryId> all_query_ids(std::size_t n);

  EngineConfig config_;
  std::vector<Query> queries_;
  std::unordered_map<UserId, std::vector<std::string>> profiles_;
  mutable std::unordered_map<UserId, std::vector<QueryId>> related_memo_;
  EdgeStore edges_;
  std::vector<EstimationLadder> ladders_;
  ShiftState shift_;
  PrefixTree tree_;
  mutable RunCounters counters_;
  std::uint64_t seq_ = 0;
};

}  // namespace infsub
