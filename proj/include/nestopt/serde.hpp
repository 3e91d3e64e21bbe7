#pragma once

#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "nestopt/env.hpp"
#include "nestopt/report.hpp"
#include "nestopt/search.hpp"

namespace nestopt {

using json = nlohmann::json;

inline void to_json(json& j, const EvalResult& r) {
  j = json{{"gflops", r.gflops},
           {"runtime_ns", r.runtime_ns},
           {"flops", r.flops},
           {"backend", backend_name(r.backend)}};
}

inline void from_json(const json& j, EvalResult& r) {
  j.at("gflops").get_to(r.gflops);
  j.at("runtime_ns").get_to(r.runtime_ns);
  j.at("flops").get_to(r.flops);
  r.backend = j.at("backend").get<std::string>() == "timed" ? BackendKind::timed
                                                            : BackendKind::costmodel;
}

inline void to_json(json& j, const TracePoint& t) {
  j = json::array({t.step, t.best_gflops, t.time_s});
}

inline void from_json(const json& j, TracePoint& t) {
  t.step = j.at(0).get<int>();
  t.best_gflops = j.at(1).get<double>();
  t.time_s = j.at(2).get<double>();
}

inline json actions_to_json(const std::vector<Action>& actions) {
  json arr = json::array();
  for (Action a : actions) arr.push_back(action_name(a));
  return arr;
}

inline std::vector<Action> actions_from_json(const json& arr) {
  std::vector<Action> out;
  for (const auto& name : arr) {
    auto a = action_from_name(name.get<std::string>());
    if (!a) throw std::runtime_error("unknown action '" + name.get<std::string>() + "'");
    out.push_back(*a);
  }
  return out;
}

inline void to_json(json& j, const SearchResult& r) {
  j = json{{"best_actions", actions_to_json(r.best_actions)},
           {"best_gflops", r.best_gflops},
           {"best_key", r.best_key},
           {"nodes_expanded", r.nodes_expanded},
           {"evals", r.evals},
           {"cache_hits", r.cache_hits},
           {"wall_time_s", r.wall_time_s},
           {"per_step_trace", r.per_step_trace}};
}

inline void from_json(const json& j, SearchResult& r) {
  r.best_actions = actions_from_json(j.at("best_actions"));
  j.at("best_gflops").get_to(r.best_gflops);
  j.at("best_key").get_to(r.best_key);
  j.at("nodes_expanded").get_to(r.nodes_expanded);
  j.at("evals").get_to(r.evals);
  j.at("cache_hits").get_to(r.cache_hits);
  j.at("wall_time_s").get_to(r.wall_time_s);
  r.per_step_trace = j.at("per_step_trace").get<std::vector<TracePoint>>();
}

inline void to_json(json& j, const MethodResult& r) {
  j = json{{"benchmark", r.benchmark},
           {"method", r.method},
           {"backend", r.backend},
           {"best_gflops", r.best_gflops},
           {"initial_gflops", r.initial_gflops},
           {"wall_time_s", r.wall_time_s},
           {"evals", r.evals},
           {"cache_hits", r.cache_hits},
           {"nodes_expanded", r.nodes_expanded},
           {"best_actions", actions_to_json(r.best_actions)},
           {"per_step_trace", r.per_step_trace}};
}

inline void from_json(const json& j, MethodResult& r) {
  j.at("benchmark").get_to(r.benchmark);
  j.at("method").get_to(r.method);
  j.at("backend").get_to(r.backend);
  j.at("best_gflops").get_to(r.best_gflops);
  j.at("initial_gflops").get_to(r.initial_gflops);
  j.at("wall_time_s").get_to(r.wall_time_s);
  j.at("evals").get_to(r.evals);
  j.at("cache_hits").get_to(r.cache_hits);
  j.at("nodes_expanded").get_to(r.nodes_expanded);
  r.best_actions = actions_from_json(j.at("best_actions"));
  r.per_step_trace = j.at("per_step_trace").get<std::vector<TracePoint>>();
}

inline void to_json(json& j, const Transition& t) {
  j = json{{"obs", t.obs},
           {"action", action_name(t.action)},
           {"reward", t.reward},
           {"next_obs", t.next_obs},
           {"done", t.done},
           {"info",
            json{{"applied", t.info.applied},
                 {"changed", t.info.changed},
                 {"gflops", t.info.gflops},
                 {"key", t.info.key},
                 {"next_legal", t.info.next_legal}}}};
}

inline void from_json(const json& j, Transition& t) {
  j.at("obs").get_to(t.obs);
  auto a = action_from_name(j.at("action").get<std::string>());
  if (!a) throw std::runtime_error("unknown action in transition");
  t.action = *a;
  j.at("reward").get_to(t.reward);
  j.at("next_obs").get_to(t.next_obs);
  j.at("done").get_to(t.done);
  const json& info = j.at("info");
  info.at("applied").get_to(t.info.applied);
  info.at("changed").get_to(t.info.changed);
  info.at("gflops").get_to(t.info.gflops);
  info.at("key").get_to(t.info.key);
  info.at("next_legal").get_to(t.info.next_legal);
}

/// Transition streams are JSON-lines, one transition per line, for offline
/// replay seeding.
inline void write_transitions_jsonl(std::ostream& os, std::span<const Transition> transitions) {
  for (const auto& t : transitions) {
    os << json(t).dump() << '\n';
  }
}

inline std::vector<Transition> read_transitions_jsonl(std::istream& is) {
  std::vector<Transition> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(json::parse(line).get<Transition>());
  }
  return out;
}

}  // namespace nestopt
