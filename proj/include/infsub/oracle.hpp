#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "infsub/engine.hpp"
#include "infsub/types.hpp"

// Reference implementations used to cross-check the production engine. They
// deliberately share no code with the prefix tree or the ladder bookkeeping:
// candidate sets live per estimation, influences are recomputed from scratch,
// and only the raw-weight formula is common ground.
namespace infsub::oracle {

// Exact edge state: the max of (t_e + t_r) per edge is an integer, so the
// decayed weight exp(lambda * (sum - 2*t_cur)) carries no accumulated
// floating-point error regardless of how many rebases the engine under test
// performed.
class ExactEdgeMap {
 public:
  void ingest(const Action& a);
  double weight(UserId u_r, UserId u_e, double lambda, Timestamp t_cur) const;
  // f(S) at t_cur: sum over targets of the best member weight.
  double coverage(std::span<const UserId> s, double lambda,
                  Timestamp t_cur) const;
  std::vector<UserId> influencers() const;  // ascending

 private:
  std::unordered_map<UserId, std::unordered_map<UserId, std::int64_t>> ts_sum_;
};

struct ScoredSet {
  std::vector<UserId> users;  // ascending
  double value = 0.0;
};

// True optimum over all subsets of `pool` of size <= k, by full enumeration.
// Guarded to |pool| <= 20. Ties resolve to the smaller, then
// lexicographically smaller set.
ScoredSet exhaustive_opt(std::span<const UserId> pool, std::size_t k,
                         const ExactEdgeMap& edges, double lambda,
                         Timestamp t_cur);

// Classic greedy baseline ((1 - 1/e) quality on monotone submodular
// objectives). Ties pick the smallest user id; stops early on zero gain.
ScoredSet greedy(std::span<const UserId> pool, std::size_t k,
                 const ExactEdgeMap& edges, double lambda, Timestamp t_cur);

enum class RefMode {
  kLazy,   // rebases only when the max raw influence reaches tau_f
  kEager,  // rebases at every stream-clock change
};

struct RefConfig {
  DecayParams params;
  RefMode mode = RefMode::kLazy;
  double initial_b = 1.0;
};

// Sieve streaming run independently per query: no tree, no pruning, no
// incremental caching. Slow and obvious on purpose.
class ReferenceEngine : public StreamEngine {
 public:
  ReferenceEngine(RefConfig config, std::vector<UserProfile> profiles,
                  std::span<const Subscription> subscriptions);

  void process_action(const Action& a, Timestamp t_cur) override;
  std::vector<ResultRow> emit(Timestamp t_cur) override;
  const RunCounters& counters() const override { return counters_; }

  std::vector<Engine::Assignment> estimation_assignments() const;
  const std::vector<Query>& queries() const { return queries_; }

  // Same payload line format as PrefixTree::debug_dump, derived from the
  // per-estimation candidate sets. The empty set is always listed, like the
  // tree's root.
  std::string debug_dump() const;

 private:
  struct RefEst {
    std::int64_t index = 0;
    double value = 0.0;
    std::vector<UserId> set;  // key into sets_
  };
  struct RefLadder {
    double m = 0.0;
    std::map<std::int64_t, RefEst> ests;
  };
  // Influence bookkeeping is keyed by candidate set, shared across every
  // estimation (and query) holding that set: f is (re)written whenever an
  // estimation relinks into the set — f(source) plus the fresh marginal —
  // exactly like the engine under test. Entries die when the last estimation
  // leaves; move-emptied entries linger until the end of the action (erasure
  // runs after all insertions). The empty set is permanent.
  struct SetEntry {
    double f = 0.0;
    std::vector<QueryId> queries;
    int refs = 0;
  };

  void rebase(Timestamp t_cur);
  void refresh_ladder(QueryId q, double new_m);
  void retile(RefLadder& ladder);
  void add_ref(const std::vector<UserId>& s);
  void drop_ref(const std::vector<UserId>& s, bool erase_if_dead);
  double recompute_user_influence(UserId u) const;
  double recompute_marginal(UserId u, std::span<const UserId> s) const;
  double recompute_max_influence() const;
  std::int64_t ref_shift_exponent(double b_scaled) const;
  std::pair<std::int64_t, std::int64_t> ref_index_range(double m) const;
  double ladder_point(std::int64_t index) const;
  const std::vector<QueryId>& related(UserId u) const;

  std::map<std::vector<UserId>, SetEntry> sets_;

  RefConfig config_;
  std::vector<Query> queries_;
  std::unordered_map<UserId, std::vector<std::string>> profiles_;
  mutable std::unordered_map<UserId, std::vector<QueryId>> related_memo_;
  std::unordered_map<UserId, std::unordered_map<UserId, double>> out_;
  std::vector<RefLadder> ladders_;
  double b_ = 1.0;
  Timestamp t0_ = 0;
  RunCounters counters_;
};

}  // namespace infsub::oracle
