#pragma once

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "infsub/influence_model.hpp"
#include "infsub/sieve_core.hpp"
#include "infsub/types.hpp"

namespace infsub {

// Cached state of one candidate set. Present on a node exactly while at least
// one estimation holds that set (the root's empty set is the one structural
// exception: it always keeps a payload).
struct PathPayload {
  std::vector<UserId> set;        // the path's users, ascending
  double influence = 0.0;         // f(S), base-time frame
  double marg = 0.0;              // delta(u_r | S) of the in-flight action
  std::uint64_t marg_seq = 0;     // action sequence the cached marginal belongs to
  std::vector<QueryId> queries;   // Q_S: queries every member is related to
  std::vector<Estimation*> ests;  // estimations currently holding S
};

class TreeNode {
 public:
  UserId user = -1;  // sentinel at the root
  TreeNode* parent = nullptr;
  std::map<UserId, std::unique_ptr<TreeNode>> children;  // ordered by user id
  TreeNode* next_same_user = nullptr;  // occurrence chain of `user`
  std::unique_ptr<PathPayload> payload;
  // Smallest estimation value linked anywhere in this subtree (self included);
  // +inf when the subtree holds no estimation.
  double e_min_subtree = std::numeric_limits<double>::infinity();
};

struct PruneFlags {
  bool user_match = true;     // skip subtrees rooted at the arriving user
  bool query_disjoint = true; // stop when Q_S no longer meets Q_{u_r}
  bool threshold = false;     // bound-based subtree skip (see dfs_marginals)
};

struct TreeCounters {
  std::uint64_t marginal_evals = 0;
  std::uint64_t prune_user_match = 0;
  std::uint64_t prune_query_disjoint = 0;
  std::uint64_t prune_threshold = 0;
  std::uint64_t paths_created = 0;
  std::uint64_t paths_erased = 0;
};

// Candidate sets of all live estimations, stored once each as root->leaf
// paths over ascending user ids. Single writer; one action-update transaction
// mutates it at a time.
class PrefixTree {
 public:
  // Looks up Q_u of a user during descent.
  using QueryLookup = std::function<const std::vector<QueryId>&(UserId)>;

  explicit PrefixTree(std::vector<QueryId> all_queries);

  TreeNode* root() { return root_.get(); }
  const TreeNode* root() const { return root_.get(); }

  // Node for the set `s` (ascending), creating the missing suffix as a fresh
  // branch. Created nodes are hollow; payload creation is modify's job.
  TreeNode* find_path(std::span<const UserId> s);

  struct Visited {
    TreeNode* node = nullptr;
    double gain = 0.0;
  };

  // Computes delta(u_r | S) once per surviving payload path, top-down, and
  // stamps it into the payload's marg cache under `seq`. Pruning:
  //  - user_match: a child node whose user is u_r is skipped together with
  //    its subtree (every path through it already contains u_r);
  //  - query_disjoint: descent stops when the running intersection of Q_S
  //    with Q_{u_r} becomes empty (no estimation below can accept u_r);
  //  - threshold: at a payload node with |S| < k the whole subtree is skipped
  //    when f(u_r) < (e_min_subtree/2 - f(S)) / (k - |S|), f(u_r) being an
  //    upper bound of every later marginal.
  // Returns the visited payload nodes in DFS order.
  std::vector<Visited> dfs_marginals(UserId u_r,
                                     const std::vector<QueryId>& q_ur,
                                     const EdgeStore& edges, std::size_t k,
                                     const PruneFlags& flags,
                                     const QueryLookup& queries_of,
                                     std::uint64_t seq);

  using ModifyMemo = std::unordered_map<const TreeNode*, TreeNode*>;

  // Moves `est` from its current path S (== source's payload) to S + u_r,
  // creating that path if needed. The first move from a given source within
  // this action (re)writes the target payload: f(S') = f(S) + marg and
  // Q(S') = Q(S) & q_ur — also when S' already existed, which refreshes a
  // stored influence that member re-arrivals have left behind. `memo` skips
  // repeated searches (and rewrites) from the same source within one action.
  void modify(UserId u_r, TreeNode* source, Estimation* est, ModifyMemo& memo,
              const std::vector<QueryId>& q_ur, std::uint64_t seq);

  // Post-insertion sweep: every visited path left without estimations drops
  // its payload, and leaf branches are erased upward until a node that still
  // has a payload, has other children, or is the root.
  void clear_pass(const std::vector<Visited>& visited);

  // Links an estimation to the root (empty set).
  void link_to_root(Estimation* est);

  // Unlinks an estimation from its path and immediately applies the clear
  // rule there (used when a ladder expires an estimation mid-action).
  void release_estimation(Estimation* est);

  // Rebase support: scales every payload influence (and stale marg cache) by
  // d, then recomputes the subtree minima from the refreshed estimation
  // values.
  void apply_decay(double d);
  void recompute_emin_all();

  // One line per payload, lexicographically sorted by S:
  //   S=<ids> f=<influence> Q=<query ids> E=<estimation values ascending>
  std::string debug_dump() const;

  template <typename F>
  void for_each_payload(F&& f) const {
    for_each_payload_impl(root_.get(), f);
  }

  const TreeNode* user_index_head(UserId u) const;
  std::size_t node_count() const { return node_count_; }

  TreeCounters& counters() { return counters_; }
  const TreeCounters& counters() const { return counters_; }

 private:
  struct CoverSlot {
    UserId v = 0;
    double w_ur = 0.0;   // f(u_r -> v)
    double cover = 0.0;  // f(S -> v) along the current DFS path
  };

  void dfs_visit(TreeNode* node, UserId u_r, double f_ur,
                 std::vector<QueryId>& active, std::vector<CoverSlot>& slots,
                 const EdgeStore& edges, std::size_t k, const PruneFlags& flags,
                 const QueryLookup& queries_of, std::uint64_t seq,
                 std::vector<Visited>& out);

  void link(Estimation* est, TreeNode* node);
  void unlink(Estimation* est);
  void clear_from(TreeNode* node);
  void refresh_emin_upward(TreeNode* node);
  static double own_emin(const TreeNode* node);
  double recompute_emin(TreeNode* node);

  void index_insert(TreeNode* node);
  void index_remove(TreeNode* node);

  template <typename F>
  void for_each_payload_impl(const TreeNode* node, F& f) const {
    if (node->payload) f(*node, *node->payload);
    for (const auto& [user, child] : node->children)
      for_each_payload_impl(child.get(), f);
  }

  std::unique_ptr<TreeNode> root_;
  std::unordered_map<UserId, TreeNode*> user_index_;
  TreeCounters counters_;
  std::size_t node_count_ = 1;
};

}  // namespace infsub
