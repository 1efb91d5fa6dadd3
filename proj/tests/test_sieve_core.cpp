#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "infsub/prefix_tree.hpp"
#include "infsub/sieve_core.hpp"
#include "test_util.hpp"

using namespace infsub;
using testutil::rel_diff;

TEST_CASE("threshold ladder covers (m, 2km] with powers of 1+eps") {
  SUBCASE("b=1, m=1, k=2, eps=0.5 enumerates (1, 4]") {
    auto values = ladder_range(1.0, 1.0, 2, 0.5);
    REQUIRE(values.size() == 3);
    CHECK(values[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(values[1] == doctest::Approx(2.25).epsilon(1e-12));
    CHECK(values[2] == doctest::Approx(3.375).epsilon(1e-12));
  }
  SUBCASE("k=1 shrinks the interval to (1, 2]") {
    auto values = ladder_range(1.0, 1.0, 1, 0.5);
    REQUIRE(values.size() == 1);
    CHECK(values[0] == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("consecutive values keep the geometric ratio") {
    auto values = ladder_range(0.73, 2.6, 4, 0.3);
    REQUIRE(values.size() >= 2);
    for (std::size_t i = 1; i < values.size(); ++i)
      CHECK(values[i] / values[i - 1] ==
            doctest::Approx(1.3).epsilon(1e-12));
  }
  SUBCASE("m = 0 yields an empty ladder") {
    CHECK(ladder_range(1.0, 0.0, 3, 0.1).empty());
    auto [lo, hi] = ladder_index_range(1.0, 0.0, 3, 0.1);
    CHECK(lo > hi);
  }
  SUBCASE("index range is tight on random inputs") {
    std::mt19937_64 rng(4711);
    std::uniform_real_distribution<double> base(0.02, 50.0);
    std::uniform_real_distribution<double> mval(1e-6, 1e6);
    for (int trial = 0; trial < 200; ++trial) {
      const double b = base(rng);
      const double m = mval(rng);
      const double eps = (trial % 2) ? 0.1 : 0.5;
      const std::size_t k = 1 + trial % 5;
      auto [lo, hi] = ladder_index_range(b, m, k, eps);
      REQUIRE(lo <= hi);  // 2km >= 2m > m guarantees a nonempty ladder
      CHECK(ladder_value(b, eps, lo) > m);
      CHECK(ladder_value(b, eps, lo - 1) <= m);
      CHECK(ladder_value(b, eps, hi) <= 2.0 * k * m);
      CHECK(ladder_value(b, eps, hi + 1) > 2.0 * k * m);
    }
  }
}

TEST_CASE("sieve acceptance threshold") {
  SUBCASE("worked example: e=10, f_S=2, k=5, |S|=1 gives threshold 0.75") {
    CHECK(sieve_accept(0.8, 10.0, 2.0, 1, 5));
    CHECK(sieve_accept(0.75, 10.0, 2.0, 1, 5));  // >= is inclusive
    CHECK(!sieve_accept(0.74, 10.0, 2.0, 1, 5));
  }
  SUBCASE("a set already past e/2 accepts any nonnegative gain") {
    CHECK(sieve_accept(0.0, 10.0, 5.0, 3, 5));
    CHECK(sieve_accept(0.0, 10.0, 7.5, 3, 5));
  }
  SUBCASE("full sets must never be consulted") {
    CHECK_THROWS_AS(sieve_accept(1.0, 10.0, 2.0, 5, 5), std::logic_error);
    CHECK_THROWS_AS(sieve_accept(1.0, 10.0, 2.0, 6, 5), std::logic_error);
  }
}

TEST_CASE("ladder refresh expires low thresholds and tiles new ones") {
  EstimationLadder ladder(0);
  ShiftState shift;  // b = 1
  const double eps = 0.5;
  const std::size_t k = 2;
  std::vector<Estimation*> created;
  std::vector<std::unique_ptr<Estimation>> expired;

  ladder.refresh(1.0, shift, eps, k, created, expired);
  REQUIRE(ladder.size() == 3);
  CHECK(created.size() == 3);
  CHECK(expired.empty());

  SUBCASE("same m is a no-op") {
    created.clear();
    ladder.refresh(1.0, shift, eps, k, created, expired);
    CHECK(created.empty());
    CHECK(expired.empty());
    CHECK(ladder.size() == 3);
  }
  SUBCASE("m: 1 -> 2 expires 1.5 and creates 5.0625, 7.59375") {
    created.clear();
    ladder.refresh(2.0, shift, eps, k, created, expired);
    REQUIRE(expired.size() == 1);
    CHECK(expired[0]->value == doctest::Approx(1.5).epsilon(1e-12));
    REQUIRE(created.size() == 2);
    CHECK(created[0]->value == doctest::Approx(5.0625).epsilon(1e-12));
    CHECK(created[1]->value == doctest::Approx(7.59375).epsilon(1e-12));

    std::vector<double> values;
    for (const auto& [i, est] : ladder.estimations())
      values.push_back(est->value);
    auto want = ladder_range(1.0, 2.0, k, eps);
    REQUIRE(values.size() == want.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      CHECK(values[i] == want[i]);
  }
  SUBCASE("lowering m without a rebase is a contract violation") {
    CHECK_THROWS_AS(ladder.refresh(0.5, shift, eps, k, created, expired),
                    std::logic_error);
  }
  SUBCASE("random refresh sequences always tile (m, 2km] exactly") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> bump(1.0, 3.0);
    double m = 1.0;
    for (int step = 0; step < 30; ++step) {
      m *= bump(rng);
      created.clear();
      ladder.refresh(m, shift, eps, k, created, expired);
      auto want = ladder_range(shift.b, m, k, eps);
      REQUIRE(ladder.size() == want.size());
      std::size_t idx = 0;
      for (const auto& [i, est] : ladder.estimations()) {
        CHECK(est->value == want[idx]);
        CHECK(est->owner == 0);
        ++idx;
      }
    }
  }
}

TEST_CASE("shift exponent renormalizes the base toward one") {
  CHECK(choose_shift_exponent(1.0, 0.1) == 0);
  CHECK(choose_shift_exponent(1.0, 0.5) == 0);
  // 0.37 * 1.1^10 = 0.9597... beats 0.37 * 1.1^11 = 1.0557...
  CHECK(choose_shift_exponent(0.37, 0.1) == 10);

  SUBCASE("result stays within half a ladder step of one") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> base(0.001, 1000.0);
    for (int trial = 0; trial < 300; ++trial) {
      const double b = base(rng);
      const double eps = (trial % 2) ? 0.1 : 0.5;
      const std::int64_t j = choose_shift_exponent(b, eps);
      const double renormed = std::log(b) + double(j) * std::log1p(eps);
      CHECK(std::fabs(renormed) <= 0.5 * std::log1p(eps) + 1e-9);
    }
  }
}

TEST_CASE("horizon bound diagnostic") {
  CHECK(horizon_bound(1.0, 5, 0.1, 1e-6) ==
        doctest::Approx(5.0 * std::log(1e7)).epsilon(1e-12));
  CHECK(horizon_bound(1.0, 5, 0.1, 1e-6) == doctest::Approx(80.59).epsilon(1e-4));
  CHECK(horizon_bound(0.5, 1, 0.3, 1.0) == 0.0);  // 2km == tau_d
  // Doubling the floor shortens the horizon by ln(2)/(2*lambda).
  const double lambda = 0.25;
  CHECK(horizon_bound(3.0, 4, lambda, 1e-6) -
            horizon_bound(3.0, 4, lambda, 2e-6) ==
        doctest::Approx(std::log(2.0) / (2.0 * lambda)).epsilon(1e-12));
}

namespace {

// Minimal harness around the free time_decay: one query, one ladder, the
// tree and edge store it rebases. Builds the state "path {1} holds every
// estimation, f = f(1)" that a first action produces.
struct DecayRig {
  DecayParams params;
  ShiftState shift;
  EdgeStore edges;
  std::vector<EstimationLadder> ladders;
  PrefixTree tree{std::vector<QueryId>{0}};
  std::vector<QueryId> all{0};

  explicit DecayRig(double lambda, double eps, std::size_t k) {
    params.lambda = lambda;
    params.epsilon = eps;
    params.k = k;
    ladders.emplace_back(0);
  }

  const std::vector<QueryId>& queries_of(UserId) const { return all; }

  // Feeds edges u_r -> each of vs with weight w, refreshes the ladder and
  // moves every accepting estimation to the path {u_r}.
  void first_action(UserId u_r, const std::vector<UserId>& vs, double w) {
    for (UserId v : vs) edges.update_edge(u_r, v, w);
    std::vector<Estimation*> created;
    std::vector<std::unique_ptr<Estimation>> expired;
    ladders[0].refresh(edges.user_influence(u_r), shift, params.epsilon,
                       params.k, created, expired);
    REQUIRE(expired.empty());
    for (auto* est : created) tree.link_to_root(est);

    PruneFlags flags;
    auto lookup = [this](UserId u) -> const std::vector<QueryId>& {
      return queries_of(u);
    };
    auto visited = tree.dfs_marginals(u_r, all, edges, params.k, flags,
                                      lookup, /*seq=*/1);
    REQUIRE(visited.size() == 1);  // only the root carries a payload so far
    PrefixTree::ModifyMemo memo;
    for (auto* est : created) {
      if (sieve_accept(visited[0].gain, est->value,
                       visited[0].node->payload->influence, 0, params.k))
        tree.modify(u_r, visited[0].node, est, memo, all, /*seq=*/1);
    }
    tree.clear_pass(visited);
  }

  TimeDecayResult decay(Timestamp t_cur) {
    return time_decay(t_cur, shift, params, edges, ladders, tree);
  }

  double path_influence(const std::vector<UserId>& s) const {
    double f = -1.0;
    tree.for_each_payload([&](const TreeNode&, const PathPayload& pl) {
      if (pl.set == s) f = pl.influence;
    });
    return f;
  }
};

}  // namespace

TEST_CASE("time decay rebases edges, ladders and tree coherently") {
  DecayRig rig(/*lambda=*/0.1, /*eps=*/0.5, /*k=*/2);
  // f(1) = 2.0 via two unit edges; ladder (2, 8] = {2.25, 3.375, 5.0625,
  // 7.59375}; every estimation accepts the first user.
  rig.first_action(1, {2, 3}, 1.0);
  REQUIRE(rig.ladders[0].size() == 4);
  REQUIRE(rig.path_influence({1}) == 2.0);

  SUBCASE("t_cur equal to the origin leaves the state bitwise unchanged") {
    auto before = rig.tree.debug_dump();
    auto result = rig.decay(0);
    CHECK(result.d == 1.0);
    CHECK(result.shift == 0);
    CHECK(result.created == 0);
    CHECK(result.expired == 0);
    CHECK(rig.shift.b == 1.0);
    CHECK(rig.tree.debug_dump() == before);
    CHECK(rig.edges.edge_weight(1, 2) == 1.0);
  }

  SUBCASE("five time units at lambda=0.1 scale everything by exp(-1)") {
    auto result = rig.decay(5);
    const double d = std::exp(-1.0);
    CHECK(result.d == doctest::Approx(d).epsilon(1e-12));
    CHECK(rig.shift.t0 == 5);

    // b*d = 0.3679 renormalizes with j = 2: 0.3679 * 1.5^2 = 0.8277.
    CHECK(result.shift == 2);
    CHECK(rig.shift.b == doctest::Approx(d * 2.25).epsilon(1e-12));

    // The path influence decayed from 2.0 to ~0.735759.
    CHECK(rig.path_influence({1}) ==
          doctest::Approx(0.7357588823428847).epsilon(1e-12));
    CHECK(rig.edges.edge_weight(1, 2) == doctest::Approx(d).epsilon(1e-12));
    CHECK(rig.edges.user_influence(1) ==
          doctest::Approx(2.0 * d).epsilon(1e-12));

    // The scaled ladder still tiles (m*d, 2k*m*d]; no fringe churn here.
    CHECK(result.created == 0);
    CHECK(result.expired == 0);
    CHECK(rig.ladders[0].m() == doctest::Approx(2.0 * d).epsilon(1e-12));
    auto want = ladder_range(rig.shift.b, rig.ladders[0].m(), 2, 0.5);
    REQUIRE(rig.ladders[0].size() == want.size());
    std::size_t idx = 0;
    for (const auto& [i, est] : rig.ladders[0].estimations()) {
      CHECK(est->value == want[idx]);
      CHECK(est->node != nullptr);  // links survived the rebase
      ++idx;
    }

    // Comparisons are preserved: the estimation-to-path assignment did not
    // move, every estimation still sits on {1}.
    for (const auto& [i, est] : rig.ladders[0].estimations())
      CHECK(est->node->payload->set == std::vector<UserId>{1});
  }

  SUBCASE("clock running backwards is rejected") {
    rig.decay(5);
    CHECK_THROWS_AS(rig.decay(4), std::invalid_argument);
  }
}

TEST_CASE("time decay underflow paths") {
  SUBCASE("m*d below the normal range empties the ladder") {
    DecayRig rig(/*lambda=*/0.5, /*eps=*/0.5, /*k=*/2);
    rig.first_action(1, {2, 3}, 1.0);
    // d = exp(-710) is subnormal but nonzero; m*d falls out of range.
    auto result = rig.decay(710);
    CHECK(result.d > 0.0);
    CHECK(rig.ladders[0].m() == 0.0);
    CHECK(rig.ladders[0].size() == 0);
    CHECK(result.expired == 4);
    // Every estimation released its path: the tree is back to the root.
    std::size_t payloads = 0;
    rig.tree.for_each_payload(
        [&](const TreeNode&, const PathPayload&) { ++payloads; });
    CHECK(payloads == 1);
    CHECK(rig.tree.node_count() == 1);
  }

  SUBCASE("d == 0 resets the whole state") {
    DecayRig rig(/*lambda=*/0.5, /*eps=*/0.5, /*k=*/2);
    rig.first_action(1, {2, 3}, 1.0);
    auto result = rig.decay(1600);  // exp(-1600) underflows to zero
    CHECK(result.d == 0.0);
    CHECK(rig.shift.b == 1.0);
    CHECK(rig.shift.t0 == 1600);
    CHECK(rig.edges.edge_count() == 0);
    CHECK(rig.ladders[0].size() == 0);
    CHECK(rig.tree.node_count() == 1);
  }
}

TEST_CASE("decay then refresh equals refreshing in the new frame") {
  // Rebase transparency at the ladder level: scaling m and b by d then
  // raising m to a new value lands on the same thresholds (within rounding)
  // as a ladder built directly in the new frame.
  DecayRig rig(/*lambda=*/0.1, /*eps=*/0.3, /*k=*/3);
  rig.first_action(1, {2, 3, 4}, 1.0);  // m = 3
  rig.decay(7);

  std::vector<Estimation*> created;
  std::vector<std::unique_ptr<Estimation>> expired;
  const double new_m = rig.ladders[0].m() * 2.5;
  rig.ladders[0].refresh(new_m, rig.shift, 0.3, 3, created, expired);
  for (auto* est : created) rig.tree.link_to_root(est);

  auto want = ladder_range(rig.shift.b, new_m, 3, 0.3);
  REQUIRE(rig.ladders[0].size() == want.size());
  std::size_t idx = 0;
  for (const auto& [i, est] : rig.ladders[0].estimations())
    CHECK(est->value == want[idx++]);
}
