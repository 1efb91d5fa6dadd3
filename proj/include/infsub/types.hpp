#pragma once

#include <cstddef>
#include <cstdint>

namespace infsub {

using UserId = std::int64_t;
using SubscriptionId = std::int64_t;  // external id as it appears in input files
using QueryId = std::int32_t;         // internal id of a deduplicated keyword set
using Timestamp = std::int64_t;

// One influence event: `influencee` reacted at t_e to something
// `influencer` posted at t_r.
struct Action {
  UserId influencer = 0;
  UserId influencee = 0;
  Timestamp t_r = 0;
  Timestamp t_e = 0;
};

// exp() arguments above this bound risk overflowing double once weights are
// summed per influencer; raw_weight reports them so callers can rebase first.
inline constexpr double kMaxRawExponent = 700.0;

struct DecayParams {
  double lambda = 0.1;   // decay constant per time unit
  double epsilon = 0.1;  // sieve approximation parameter
  std::size_t k = 50;    // result set size
  double tau_f = 1e18;   // rebase trigger on the max raw user influence
  double tau_d = 1e-9;   // detection floor (diagnostics only)
  Timestamp t0 = 0;      // initial base timestamp (rebase origin)

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

}  // namespace infsub
