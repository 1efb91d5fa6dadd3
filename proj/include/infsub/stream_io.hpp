#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "infsub/engine.hpp"
#include "infsub/types.hpp"

namespace infsub {

// Input line formats (one JSON object per line):
//   action:       {"ue":7,"te":100,"ur":3,"tr":98}
//   profile:      {"user":3,"kw":["a","b"]}
//   subscription: {"q":1,"kw":["a"]}

template <typename T>
struct LoadResult {
  std::vector<T> items;
  std::uint64_t skipped = 0;  // malformed or rejected lines
};

// Actions in file order. Malformed lines and self-influence actions are
// skipped with a warning on `warnings` (when given) and counted.
LoadResult<Action> load_actions(std::istream& in,
                                std::ostream* warnings = nullptr);
LoadResult<Action> load_actions_file(const std::string& path,
                                     std::ostream* warnings = nullptr);

// Duplicate user ids: last one wins (warned + counted).
LoadResult<UserProfile> load_profiles(std::istream& in,
                                      std::ostream* warnings = nullptr);
LoadResult<UserProfile> load_profiles_file(const std::string& path,
                                           std::ostream* warnings = nullptr);

// Duplicate subscription ids: last one wins. Empty keyword lists are
// rejected (warned + counted).
LoadResult<Subscription> load_subscriptions(std::istream& in,
                                            std::ostream* warnings = nullptr);
LoadResult<Subscription> load_subscriptions_file(
    const std::string& path, std::ostream* warnings = nullptr);

// Round-trip writers for the line formats above.
std::string action_to_json(const Action& a);
std::string profile_to_json(const UserProfile& p);
std::string subscription_to_json(const Subscription& s);

struct EmitCadence {
  std::uint64_t every = 1000;    // emit after every N actions (0 = never)
  bool on_ts_change = false;     // also emit whenever the clock advances
};

// Drives an engine over the stream: maintains the clock (max timestamp seen),
// fires emissions per the cadence, and emits once more at end-of-stream
// unless the final action already fired one. An empty stream yields no rows.
// Returns all emitted rows in order.
std::vector<ResultRow> run_stream(StreamEngine& engine,
                                  std::span<const Action> actions,
                                  const EmitCadence& cadence,
                                  Timestamp initial_clock = 0);

// CSV with header "subscription,timestamp,k,users,influence"; users are
// ';'-joined, influence prints with 9 significant digits.
std::string results_to_csv(std::span<const ResultRow> rows);
std::string format_influence(double v);

struct RunConfig {
  std::string actions_path;
  std::string profiles_path;
  std::string subscriptions_path;
  std::string output_path;
  DecayParams params;
  EmitCadence cadence;
  // Defaults to off: the threshold prune can skip subtrees whose deeper
  // paths would still accept (their thresholds shrink as sets fill), which
  // changes results. See the prefix-tree tests for a concrete stream.
  bool pruning3 = false;
  std::string engine = "prefix";  // prefix | naive | eager

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct RunStats {
  std::uint64_t actions_processed = 0;
  std::uint64_t lines_skipped = 0;
  std::uint64_t emissions = 0;
  RunCounters counters;
  double seconds = 0.0;
  double actions_per_second = 0.0;
};

// Full pipeline: load inputs, run the selected engine, write the CSV and a
// "<output>.stats.json" sidecar. Returns the stats. Throws on contract or
// I/O failures.
RunStats run(const RunConfig& config, std::ostream* warnings = nullptr);

}  // namespace infsub
