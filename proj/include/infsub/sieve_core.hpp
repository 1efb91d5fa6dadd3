#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "infsub/influence_model.hpp"
#include "infsub/types.hpp"

namespace infsub {

class TreeNode;
class PrefixTree;
class EstimationLadder;

// One guess of the optimum. Its threshold is b * (1+eps)^index where b is the
// shared shift base; the double is cached and refreshed whenever b moves.
struct Estimation {
  std::int64_t index = 0;
  double value = 0.0;
  QueryId owner = 0;
  TreeNode* node = nullptr;  // path currently holding this estimation's set
};

// Shared base of the threshold ladder plus the rebase origin. b starts at 1
// and is renormalized toward 1 on every rebase.
struct ShiftState {
  double b = 1.0;
  Timestamp t0 = 0;
};

inline double ladder_value(double b, double eps, std::int64_t index) {
  return b * std::pow(1.0 + eps, static_cast<double>(index));
}

// Indices i with m < b*(1+eps)^i <= 2*k*m, as [lo, hi]; lo > hi when empty
// (in particular when m == 0).
std::pair<std::int64_t, std::int64_t> ladder_index_range(double b, double m,
                                                         std::size_t k,
                                                         double eps);

// Threshold values of ladder_index_range, ascending. Convenience for tests
// and the reporting path.
std::vector<double> ladder_range(double b, double m, std::size_t k, double eps);

// Acceptance test of sieve streaming: delta >= (e/2 - f_s) / (k - size_s).
// Throws std::logic_error when size_s >= k (callers must guard).
bool sieve_accept(double delta, double e, double f_s, std::size_t size_s,
                  std::size_t k);

// Integer j making b*(1+eps)^j closest to 1 (in log distance); ties resolve
// toward the smaller |j|.
std::int64_t choose_shift_exponent(double b, double eps);

// Longest stretch without any rebase before a top-k set of weight m decays
// below the detection floor: (1 / (2*lambda)) * ln(2*k*m / tau_d).
double horizon_bound(double m, std::size_t k, double lambda, double tau_d);

// Threshold ladder of one query. Owns its estimations; linking the candidate
// sets to tree paths is the caller's job (refresh hands back what it created
// and expired so the caller can splice the tree).
class EstimationLadder {
 public:
  explicit EstimationLadder(QueryId owner) : owner_(owner) {}

  double m() const { return m_; }
  QueryId owner() const { return owner_; }
  std::size_t size() const { return ests_.size(); }

  const std::map<std::int64_t, std::unique_ptr<Estimation>>& estimations()
      const {
    return ests_;
  }

  // Raises m to new_m (throws std::logic_error if new_m < m). Expired
  // estimations (value <= new_m) are moved into `expired` still carrying
  // their path links; missing thresholds in (new_m, 2*k*new_m] are created
  // unlinked and appended to `created`. Bitwise-equal new_m is a no-op.
  void refresh(double new_m, const ShiftState& shift, double eps,
               std::size_t k, std::vector<Estimation*>& created,
               std::vector<std::unique_ptr<Estimation>>& expired);

  // Rebase step: m *= d, every index shifts by -j, cached values are refreshed
  // from the already-updated shift base, then the range is re-tiled (both
  // expiry and creation may occur at the floating-point fringes). A decay that
  // underflows m out of the normal range empties the ladder (m = 0, dormant).
  void apply_decay(double d, std::int64_t j, const ShiftState& shift,
                   double eps, std::size_t k, std::vector<Estimation*>& created,
                   std::vector<std::unique_ptr<Estimation>>& expired);

 private:
  void retile(const ShiftState& shift, double eps, std::size_t k,
              std::vector<Estimation*>& created,
              std::vector<std::unique_ptr<Estimation>>& expired);

  QueryId owner_;
  double m_ = 0.0;
  std::map<std::int64_t, std::unique_ptr<Estimation>> ests_;
};

struct TimeDecayResult {
  double d = 1.0;          // decay factor applied to the whole state
  std::int64_t shift = 0;  // index shift used to renormalize b
  std::size_t created = 0;  // estimations created by the fringe re-tile
  std::size_t expired = 0;  // estimations expired by it
};

// Rebases every store to the new origin t_cur: edge weights, ladder ranges,
// estimation thresholds and path influences all scale by the same factor
// d = exp(-2*lambda*(t_cur - t0)), so no comparison anywhere changes in exact
// arithmetic. Estimation-to-path links survive; estimations created or
// expired by the fringe re-tile are spliced into the tree here.
TimeDecayResult time_decay(Timestamp t_cur, ShiftState& shift,
                           const DecayParams& params, EdgeStore& edges,
                           std::vector<EstimationLadder>& ladders,
                           PrefixTree& tree);

}  // namespace infsub
