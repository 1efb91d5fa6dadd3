#include "infsub/sieve_core.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "infsub/prefix_tree.hpp"

namespace infsub {

namespace {

constexpr int kMaxLadderScan = 256;

}  // namespace

std::pair<std::int64_t, std::int64_t> ladder_index_range(double b, double m,
                                                         std::size_t k,
                                                         double eps) {
  if (!(b > 0.0) || !std::isfinite(b))
    throw std::invalid_argument("ladder_index_range: b must be positive");
  if (m <= 0.0) return {1, 0};
  const double top = 2.0 * static_cast<double>(k) * m;
  const double step = std::log1p(eps);

  // Smallest index with value > m.
  auto lo = static_cast<std::int64_t>(std::floor(std::log(m / b) / step));
  int guard = 0;
  while (ladder_value(b, eps, lo) > m) {
    --lo;
    if (++guard > kMaxLadderScan)
      throw std::logic_error("ladder_index_range: lo scan diverged");
  }
  while (ladder_value(b, eps, lo) <= m) {
    ++lo;
    if (++guard > kMaxLadderScan)
      throw std::logic_error("ladder_index_range: lo scan diverged");
  }

  // Largest index with value <= top.
  auto hi = static_cast<std::int64_t>(std::floor(std::log(top / b) / step));
  guard = 0;
  while (ladder_value(b, eps, hi) <= top) {
    ++hi;
    if (++guard > kMaxLadderScan)
      throw std::logic_error("ladder_index_range: hi scan diverged");
  }
  while (hi >= lo && ladder_value(b, eps, hi) > top) {
    --hi;
    if (++guard > kMaxLadderScan)
      throw std::logic_error("ladder_index_range: hi scan diverged");
  }
  return {lo, hi};
}

std::vector<double> ladder_range(double b, double m, std::size_t k,
                                 double eps) {
  auto [lo, hi] = ladder_index_range(b, m, k, eps);
  std::vector<double> out;
  for (std::int64_t i = lo; i <= hi; ++i)
    out.push_back(ladder_value(b, eps, i));
  return out;
}

bool sieve_accept(double delta, double e, double f_s, std::size_t size_s,
                  std::size_t k) {
  if (size_s >= k)
    throw std::logic_error("sieve_accept: candidate set already full");
  const double threshold = (0.5 * e - f_s) / static_cast<double>(k - size_s);
  return delta >= threshold;
}

std::int64_t choose_shift_exponent(double b, double eps) {
  if (!(b > 0.0) || !std::isfinite(b))
    throw std::invalid_argument("choose_shift_exponent: b must be positive");
  const double step = std::log1p(eps);
  const double log_b = std::log(b);
  const auto j0 = static_cast<std::int64_t>(std::floor(-log_b / step));
  const std::int64_t j1 = j0 + 1;
  const double d0 = std::fabs(log_b + static_cast<double>(j0) * step);
  const double d1 = std::fabs(log_b + static_cast<double>(j1) * step);
  if (d0 < d1) return j0;
  if (d1 < d0) return j1;
  return std::llabs(j0) <= std::llabs(j1) ? j0 : j1;  // tie: smaller |j|
}

double horizon_bound(double m, std::size_t k, double lambda, double tau_d) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("horizon_bound: lambda must be > 0");
  if (!(m > 0.0)) throw std::invalid_argument("horizon_bound: m must be > 0");
  if (!(tau_d > 0.0))
    throw std::invalid_argument("horizon_bound: tau_d must be > 0");
  return std::log(2.0 * static_cast<double>(k) * m / tau_d) / (2.0 * lambda);
}

void EstimationLadder::refresh(double new_m, const ShiftState& shift,
                               double eps, std::size_t k,
                               std::vector<Estimation*>& created,
                               std::vector<std::unique_ptr<Estimation>>& expired) {
  if (new_m < m_)
    throw std::logic_error("refresh: m must not decrease within one frame");
  if (new_m == m_) return;
  m_ = new_m;
  retile(shift, eps, k, created, expired);
}

void EstimationLadder::apply_decay(double d, std::int64_t j,
                                   const ShiftState& shift, double eps,
                                   std::size_t k,
                                   std::vector<Estimation*>& created,
                                   std::vector<std::unique_ptr<Estimation>>& expired) {
  const double new_m = m_ * d;
  if (!(new_m >= std::numeric_limits<double>::min())) {
    // Everything decayed out of the representable range: go dormant until a
    // new action raises m again.
    m_ = 0.0;
    for (auto& [i, est] : ests_) expired.push_back(std::move(est));
    ests_.clear();
    return;
  }
  m_ = new_m;
  if (j != 0) {
    std::map<std::int64_t, std::unique_ptr<Estimation>> shifted;
    for (auto& [i, est] : ests_) {
      est->index = i - j;
      shifted.emplace(i - j, std::move(est));
    }
    ests_ = std::move(shifted);
  }
  for (auto& [i, est] : ests_) est->value = ladder_value(shift.b, eps, i);
  retile(shift, eps, k, created, expired);
}

void EstimationLadder::retile(const ShiftState& shift, double eps,
                              std::size_t k, std::vector<Estimation*>& created,
                              std::vector<std::unique_ptr<Estimation>>& expired) {
  const auto [lo, hi] = ladder_index_range(shift.b, m_, k, eps);
  for (auto it = ests_.begin(); it != ests_.end();) {
    if (it->first < lo || it->first > hi) {
      expired.push_back(std::move(it->second));
      it = ests_.erase(it);
    } else {
      ++it;
    }
  }
  for (std::int64_t i = lo; i <= hi; ++i) {
    if (ests_.count(i)) continue;
    auto est = std::make_unique<Estimation>();
    est->index = i;
    est->value = ladder_value(shift.b, eps, i);
    est->owner = owner_;
    created.push_back(est.get());
    ests_.emplace(i, std::move(est));
  }
}

TimeDecayResult time_decay(Timestamp t_cur, ShiftState& shift,
                           const DecayParams& params, EdgeStore& edges,
                           std::vector<EstimationLadder>& ladders,
                           PrefixTree& tree) {
  const double d = current_decay_factor(t_cur, params.lambda, shift.t0);
  TimeDecayResult result{d, 0};

  std::vector<Estimation*> created;
  std::vector<std::unique_ptr<Estimation>> expired;

  if (d == 0.0) {
    // The whole state decayed below the representable range: reset.
    edges.clear();
    shift.b = 1.0;
    for (auto& ladder : ladders)
      ladder.apply_decay(0.0, 0, shift, params.epsilon, params.k, created,
                         expired);
  } else {
    const double b_scaled = shift.b * d;
    const std::int64_t j = choose_shift_exponent(b_scaled, params.epsilon);
    result.shift = j;
    // pow(1+eps, j) itself must stay finite; huge shifts renormalize in logs.
    if (std::fabs(static_cast<double>(j)) * std::log1p(params.epsilon) <=
        600.0) {
      shift.b =
          b_scaled * std::pow(1.0 + params.epsilon, static_cast<double>(j));
    } else {
      shift.b = std::exp(std::log(b_scaled) +
                         static_cast<double>(j) * std::log1p(params.epsilon));
    }
    if (d != 1.0) edges.rebase_all(d);
    for (auto& ladder : ladders)
      ladder.apply_decay(d, j, shift, params.epsilon, params.k, created,
                         expired);
  }

  for (auto& est : expired) tree.release_estimation(est.get());
  for (auto* est : created) tree.link_to_root(est);
  tree.apply_decay(d);
  tree.recompute_emin_all();
  shift.t0 = t_cur;
  result.created = created.size();
  result.expired = expired.size();
  return result;
}

}  // namespace infsub
