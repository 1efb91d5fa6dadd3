#include "infsub/stream_io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "infsub/oracle.hpp"

namespace infsub {

namespace {

using ordered_json = nlohmann::ordered_json;

void warn(std::ostream* warnings, const std::string& what, std::size_t line_no,
          const std::string& detail) {
  if (warnings)
    *warnings << "warning: " << what << " line " << line_no << ": " << detail
              << '\n';
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

// Parses one line; returns a discarded value on syntax errors instead of
// throwing, so loaders can count and continue.
ordered_json parse_line(const std::string& line) {
  return ordered_json::parse(line, nullptr, /*allow_exceptions=*/false);
}

bool get_int(const ordered_json& j, const char* field, std::int64_t& out) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_number_integer()) return false;
  out = it->get<std::int64_t>();
  return true;
}

bool get_keywords(const ordered_json& j, std::vector<std::string>& out) {
  auto it = j.find("kw");
  if (it == j.end() || !it->is_array()) return false;
  out.clear();
  for (const auto& item : *it) {
    if (!item.is_string()) return false;
    out.push_back(item.get<std::string>());
  }
  return true;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open input file: " + path);
  return in;
}

}  // namespace

LoadResult<Action> load_actions(std::istream& in, std::ostream* warnings) {
  LoadResult<Action> result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const ordered_json j = parse_line(line);
    std::int64_t ue = 0, te = 0, ur = 0, tr = 0;
    if (j.is_discarded() || !j.is_object() || !get_int(j, "ue", ue) ||
        !get_int(j, "te", te) || !get_int(j, "ur", ur) ||
        !get_int(j, "tr", tr)) {
      ++result.skipped;
      warn(warnings, "malformed action", line_no, line);
      continue;
    }
    if (ue == ur) {
      ++result.skipped;
      warn(warnings, "self-influence action", line_no, line);
      continue;
    }
    result.items.push_back(Action{ur, ue, tr, te});
  }
  return result;
}

LoadResult<UserProfile> load_profiles(std::istream& in,
                                      std::ostream* warnings) {
  LoadResult<UserProfile> result;
  std::unordered_map<UserId, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const ordered_json j = parse_line(line);
    std::int64_t user = 0;
    std::vector<std::string> kw;
    if (j.is_discarded() || !j.is_object() || !get_int(j, "user", user) ||
        !get_keywords(j, kw)) {
      ++result.skipped;
      warn(warnings, "malformed profile", line_no, line);
      continue;
    }
    auto [it, inserted] = seen.try_emplace(user, result.items.size());
    if (inserted) {
      result.items.push_back(UserProfile{user, std::move(kw)});
    } else {
      result.items[it->second].keywords = std::move(kw);  // last one wins
      ++result.skipped;
      warn(warnings, "duplicate profile replaces the earlier one", line_no,
           line);
    }
  }
  return result;
}

LoadResult<Subscription> load_subscriptions(std::istream& in,
                                            std::ostream* warnings) {
  LoadResult<Subscription> result;
  std::unordered_map<SubscriptionId, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const ordered_json j = parse_line(line);
    std::int64_t id = 0;
    std::vector<std::string> kw;
    if (j.is_discarded() || !j.is_object() || !get_int(j, "q", id) ||
        !get_keywords(j, kw)) {
      ++result.skipped;
      warn(warnings, "malformed subscription", line_no, line);
      continue;
    }
    if (kw.empty()) {
      ++result.skipped;
      warn(warnings, "subscription with empty keyword set rejected", line_no,
           line);
      continue;
    }
    auto [it, inserted] = seen.try_emplace(id, result.items.size());
    if (inserted) {
      result.items.push_back(Subscription{id, std::move(kw)});
    } else {
      result.items[it->second].keywords = std::move(kw);  // last one wins
      ++result.skipped;
      warn(warnings, "duplicate subscription replaces the earlier one",
           line_no, line);
    }
  }
  return result;
}

LoadResult<Action> load_actions_file(const std::string& path,
                                     std::ostream* warnings) {
  auto in = open_or_throw(path);
  return load_actions(in, warnings);
}

LoadResult<UserProfile> load_profiles_file(const std::string& path,
                                           std::ostream* warnings) {
  auto in = open_or_throw(path);
  return load_profiles(in, warnings);
}

LoadResult<Subscription> load_subscriptions_file(const std::string& path,
                                                 std::ostream* warnings) {
  auto in = open_or_throw(path);
  return load_subscriptions(in, warnings);
}

std::string action_to_json(const Action& a) {
  ordered_json j;
  j["ue"] = a.influencee;
  j["te"] = a.t_e;
  j["ur"] = a.influencer;
  j["tr"] = a.t_r;
  return j.dump();
}

std::string profile_to_json(const UserProfile& p) {
  ordered_json j;
  j["user"] = p.user;
  j["kw"] = p.keywords;
  return j.dump();
}

std::string subscription_to_json(const Subscription& s) {
  ordered_json j;
  j["q"] = s.id;
  j["kw"] = s.keywords;
  return j.dump();
}

std::vector<ResultRow> run_stream(StreamEngine& engine,
                                  std::span<const Action> actions,
                                  const EmitCadence& cadence,
                                  Timestamp initial_clock) {
  std::vector<ResultRow> out;
  if (actions.empty()) return out;  // nothing happened, nothing to report

  Timestamp clock = initial_clock;
  std::uint64_t since_emit = 0;
  bool emitted_at_clock_end = false;
  for (const Action& a : actions) {
    const Timestamp t = std::max(a.t_e, a.t_r);
    const bool advanced = t > clock;
    if (advanced) clock = t;
    engine.process_action(a, clock);
    ++since_emit;
    emitted_at_clock_end = false;
    const bool fire = (cadence.every != 0 && since_emit >= cadence.every) ||
                      (cadence.on_ts_change && advanced);
    if (fire) {
      auto rows = engine.emit(clock);
      out.insert(out.end(), rows.begin(), rows.end());
      since_emit = 0;
      emitted_at_clock_end = true;
    }
  }
  if (!emitted_at_clock_end) {
    auto rows = engine.emit(clock);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::string format_influence(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string results_to_csv(std::span<const ResultRow> rows) {
  std::string out = "subscription,timestamp,k,users,influence\n";
  for (const ResultRow& row : rows) {
    out += std::to_string(row.subscription);
    out += ',';
    out += std::to_string(row.timestamp);
    out += ',';
    out += std::to_string(row.k);
    out += ',';
    for (std::size_t i = 0; i < row.users.size(); ++i) {
      if (i) out += ';';
      out += std::to_string(row.users[i]);
    }
    out += ',';
    out += format_influence(row.influence);
    out += '\n';
  }
  return out;
}

void RunConfig::validate() const {
  params.validate();
  if (actions_path.empty())
    throw std::invalid_argument("actions_path must be set");
  if (output_path.empty())
    throw std::invalid_argument("output_path must be set");
  if (engine != "prefix" && engine != "naive" && engine != "eager")
    throw std::invalid_argument(
        "engine must be one of prefix, naive, eager (got '" + engine + "')");
}

RunStats run(const RunConfig& config, std::ostream* warnings) {
  config.validate();

  auto actions = load_actions_file(config.actions_path, warnings);
  LoadResult<UserProfile> profiles;
  if (!config.profiles_path.empty())
    profiles = load_profiles_file(config.profiles_path, warnings);
  LoadResult<Subscription> subscriptions;
  if (!config.subscriptions_path.empty())
    subscriptions = load_subscriptions_file(config.subscriptions_path,
                                            warnings);
  if (subscriptions.items.empty() && warnings)
    *warnings << "warning: no subscriptions loaded; every emission will be "
                 "empty\n";

  std::unique_ptr<StreamEngine> engine;
  if (config.engine == "prefix") {
    EngineConfig ec;
    ec.params = config.params;
    ec.pruning.threshold = config.pruning3;
    engine = std::make_unique<Engine>(ec, std::move(profiles.items),
                                      subscriptions.items);
  } else {
    oracle::RefConfig rc;
    rc.params = config.params;
    rc.mode = config.engine == "eager" ? oracle::RefMode::kEager
                                       : oracle::RefMode::kLazy;
    engine = std::make_unique<oracle::ReferenceEngine>(
        rc, std::move(profiles.items), subscriptions.items);
  }

  const auto start = std::chrono::steady_clock::now();
  const auto rows = run_stream(*engine, actions.items, config.cadence);
  const auto stop = std::chrono::steady_clock::now();

  std::ofstream csv(config.output_path);
  if (!csv)
    throw std::runtime_error("cannot open output file: " + config.output_path);
  csv << results_to_csv(rows);
  csv.close();
  if (!csv)
    throw std::runtime_error("failed writing output file: " +
                             config.output_path);

  RunStats stats;
  stats.counters = engine->counters();
  stats.actions_processed = stats.counters.actions;
  stats.lines_skipped =
      actions.skipped + profiles.skipped + subscriptions.skipped;
  stats.emissions = stats.counters.emissions;
  stats.seconds = std::chrono::duration<double>(stop - start).count();
  stats.actions_per_second =
      stats.seconds > 0.0 ? static_cast<double>(stats.actions_processed) /
                                stats.seconds
                          : 0.0;

  ordered_json j;
  j["engine"] = config.engine;
  j["actions_processed"] = stats.actions_processed;
  j["lines_skipped"] = stats.lines_skipped;
  j["emissions"] = stats.emissions;
  j["result_rows"] = rows.size();
  j["marginal_evals"] = stats.counters.marginal_evals;
  j["prune_user_match"] = stats.counters.prune_user_match;
  j["prune_query_disjoint"] = stats.counters.prune_query_disjoint;
  j["prune_threshold"] = stats.counters.prune_threshold;
  j["accepts"] = stats.counters.accepts;
  j["estimations_created"] = stats.counters.estimations_created;
  j["estimations_expired"] = stats.counters.estimations_expired;
  j["skipped_no_increase"] = stats.counters.skipped_no_increase;
  j["dropped_underflow"] = stats.counters.dropped_underflow;
  j["rebases"] = stats.counters.rebases;
  j["seconds"] = stats.seconds;
  j["actions_per_second"] = stats.actions_per_second;
  std::ofstream stats_out(config.output_path + ".stats.json");
  if (!stats_out)
    throw std::runtime_error("cannot open stats file: " + config.output_path +
                             ".stats.json");
  stats_out << j.dump(2) << '\n';

  return stats;
}

}  // namespace infsub
