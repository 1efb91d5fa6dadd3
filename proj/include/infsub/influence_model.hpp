#pragma once

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "infsub/types.hpp"

namespace infsub {

// Weight of an action in the base-time frame t0:
//   exp(lambda * (t_e + t_r - 2*t0))
// The true (decayed) weight at any later clock t is this value times
// current_decay_factor(t), so stored weights never need touching as the
// clock advances. Returns nullopt when the exponent exceeds kMaxRawExponent
// (caller must rebase to a newer t0 and retry).
std::optional<double> raw_weight(const Action& a, double lambda, Timestamp t0);

// exp(-2*lambda*(t_cur - t0)). Throws std::invalid_argument if t_cur < t0.
double current_decay_factor(Timestamp t_cur, double lambda, Timestamp t0);

// Per-influencer coverage weights, max-merged over actions and kept in the
// shared base-time frame. Single writer; readers see a consistent snapshot
// between update calls.
class EdgeStore {
 public:
  struct UpdateResult {
    double weight = 0.0;   // stored weight after the merge
    bool increased = false;
  };

  // Max-merge of w into edge u_r -> u_e. Throws on self-influence or w <= 0.
  UpdateResult update_edge(UserId u_r, UserId u_e, double w);

  // f(u_r -> u_e); 0 when the edge is absent.
  double edge_weight(UserId u_r, UserId u_e) const;

  // f(u): cached sum of u's edge weights; 0 for unknown users.
  double user_influence(UserId u) const;

  // max_u f(u) over all users; exact (totals only grow between rebases).
  double max_user_influence() const { return max_total_; }

  // f(S) = sum_v max_{u in S} f(u -> v). Unknown users contribute zero.
  double set_influence(std::span<const UserId> s) const;

  // delta(u | S) = f(S + u) - f(S), computed without materializing the union.
  double marginal_gain(UserId u, std::span<const UserId> s) const;

  // Multiplies every edge weight by d (0 < d <= 1) and refreshes totals.
  // Entries whose scaled weight underflows to exactly 0.0 are dropped; they
  // can never affect a result again.
  void rebase_all(double d);

  // u's outgoing weights, or nullptr if u has none.
  const std::unordered_map<UserId, double>* influence_set(UserId u) const;

  std::size_t edge_count() const;
  std::size_t user_count() const { return out_.size(); }
  void clear();

 private:
  std::unordered_map<UserId, std::unordered_map<UserId, double>> out_;
  std::unordered_map<UserId, double> total_;
  double max_total_ = 0.0;
};

}  // namespace infsub
