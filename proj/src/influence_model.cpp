#include "infsub/influence_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace infsub {

void DecayParams::validate() const {
  // lambda = 0 is allowed: it turns decay off, which the base-shift
  // neutrality checks rely on.
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("lambda must be finite and >= 0");
  if (!(epsilon > 0.0) || !(epsilon < 0.5))
    throw std::invalid_argument("epsilon must be in (0, 0.5)");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(tau_f > 1.0)) throw std::invalid_argument("tau_f must be > 1");
  if (!(tau_d > 0.0) || !(tau_d < 1.0))
    throw std::invalid_argument("tau_d must be in (0, 1)");
}

std::optional<double> raw_weight(const Action& a, double lambda,
                                 Timestamp t0) {
  const double exponent =
      lambda * (static_cast<double>(a.t_e) + static_cast<double>(a.t_r) -
                2.0 * static_cast<double>(t0));
  if (exponent > kMaxRawExponent) return std::nullopt;
  return std::exp(exponent);
}

double current_decay_factor(Timestamp t_cur, double lambda, Timestamp t0) {
  if (t_cur < t0)
    throw std::invalid_argument(
        "current_decay_factor: clock behind the rebase origin (t_cur=" +
        std::to_string(t_cur) + ", t0=" + std::to_string(t0) + ")");
  return std::exp(-2.0 * lambda * static_cast<double>(t_cur - t0));
}

EdgeStore::UpdateResult EdgeStore::update_edge(UserId u_r, UserId u_e,
                                               double w) {
  if (u_r == u_e)
    throw std::invalid_argument("update_edge: self-influence action");
  if (!(w > 0.0))
    throw std::invalid_argument("update_edge: weight must be positive");

  auto& row = out_[u_r];
  auto [it, inserted] = row.try_emplace(u_e, w);
  double& total = total_[u_r];
  if (inserted) {
    total += w;
  } else if (w > it->second) {
    total += w - it->second;
    it->second = w;
  } else {
    return {it->second, false};
  }
  if (total > max_total_) max_total_ = total;
  return {it->second, true};
}

double EdgeStore::edge_weight(UserId u_r, UserId u_e) const {
  auto it = out_.find(u_r);
  if (it == out_.end()) return 0.0;
  auto jt = it->second.find(u_e);
  return jt == it->second.end() ? 0.0 : jt->second;
}

double EdgeStore::user_influence(UserId u) const {
  auto it = total_.find(u);
  return it == total_.end() ? 0.0 : it->second;
}

double EdgeStore::set_influence(std::span<const UserId> s) const {
  if (s.size() == 1) return user_influence(s.front());
  std::unordered_map<UserId, double> best;
  for (UserId u : s) {
    auto it = out_.find(u);
    if (it == out_.end()) continue;
    for (const auto& [v, w] : it->second) {
      auto [jt, inserted] = best.try_emplace(v, w);
      if (!inserted && w > jt->second) jt->second = w;
    }
  }
  double sum = 0.0;
  for (const auto& [v, w] : best) sum += w;
  return sum;
}

double EdgeStore::marginal_gain(UserId u, std::span<const UserId> s) const {
  auto it = out_.find(u);
  if (it == out_.end()) return 0.0;
  for (UserId member : s)
    if (member == u) return 0.0;
  double gain = 0.0;
  for (const auto& [v, w] : it->second) {
    double covered = 0.0;
    for (UserId member : s) {
      double c = edge_weight(member, v);
      if (c > covered) covered = c;
    }
    if (w > covered) gain += w - covered;
  }
  return gain;
}

void EdgeStore::rebase_all(double d) {
  if (!(d > 0.0) || d > 1.0)
    throw std::invalid_argument("rebase_all: factor must be in (0, 1]");
  max_total_ = 0.0;
  for (auto it = out_.begin(); it != out_.end();) {
    auto& row = it->second;
    double total = 0.0;
    for (auto jt = row.begin(); jt != row.end();) {
      jt->second *= d;
      if (jt->second == 0.0) {
        jt = row.erase(jt);
      } else {
        total += jt->second;
        ++jt;
      }
    }
    if (row.empty()) {
      total_.erase(it->first);
      it = out_.erase(it);
    } else {
      total_[it->first] = total;
      if (total > max_total_) max_total_ = total;
      ++it;
    }
  }
}

const std::unordered_map<UserId, double>* EdgeStore::influence_set(
    UserId u) const {
  auto it = out_.find(u);
  return it == out_.end() ? nullptr : &it->second;
}

std::size_t EdgeStore::edge_count() const {
  std::size_t n = 0;
  for (const auto& [u, row] : out_) n += row.size();
  return n;
}

void EdgeStore::clear() {
  out_.clear();
  total_.clear();
  max_total_ = 0.0;
}

}  // namespace infsub
