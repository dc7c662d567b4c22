#include "ctree/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace ctree::io {

namespace {

// Parse "kind/instance" back into a TaskSpec; nullopt for foreign task ids.
std::optional<TaskSpec> parse_task_id(const std::string& id) {
  const auto slash = id.find('/');
  if (slash == std::string::npos) return std::nullopt;
  try {
    TaskSpec t;
    t.env_kind = env_kind_from_string(id.substr(0, slash));
    std::size_t used = 0;
    t.instance_id = std::stoi(id.substr(slash + 1), &used);
    if (used != id.size() - slash - 1) return std::nullopt;
    return t;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

template <typename T>
T field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ParseError(line, fmt::format("missing field '{}'", key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(line, fmt::format("field '{}': {}", key, e.what()));
  }
}

json context_json(const Context& c) {
  json j = {{"context_id", to_hex(c.context_id)}, {"depth", c.depth}};
  if (!c.features.empty()) j["features"] = c.features;
  return j;
}

Context context_from(const json& j) {
  Context c;
  c.context_id = from_hex(j.at("context_id").get<std::string>());
  c.depth = j.at("depth").get<int>();
  if (j.contains("features")) c.features = j.at("features").get<std::string>();
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// trajectories

json trajectory_to_json(const GroupSample& group, const Trajectory& traj) {
  json steps = json::array();
  for (const auto& s : traj.steps) {
    steps.push_back({{"t", s.step.t},
                     {"context_id", to_hex(s.step.context.context_id)},
                     {"decision_id", s.step.decision.decision_id},
                     {"decision_label", s.step.decision.label},
                     {"state_modifying", s.step.decision.state_modifying},
                     {"observation", s.step.observation},
                     {"logp_old", s.logp_old}});
  }
  return {{"task_id", group.task_id()},
          {"traj_index", traj.traj_index},
          {"reward", traj.reward},
          {"final_context_id", to_hex(traj.final_context.context_id)},
          {"steps", std::move(steps)}};
}

std::string trajectories_to_jsonl(const GroupSample& group) {
  std::string out;
  for (const auto& t : group.trajectories) {
    out += trajectory_to_json(group, t).dump();
    out += '\n';
  }
  return out;
}

void write_trajectories_jsonl(const std::filesystem::path& path, const GroupSample& group) {
  write_file(path, trajectories_to_jsonl(group));
}

GroupSample parse_trajectories_jsonl(const std::string& text) {
  GroupSample group;
  std::map<int, Decision> vocab;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::string> task_id;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "expected a JSON object");
    const auto tid = field<std::string>(j, "task_id", lineno);
    if (task_id && *task_id != tid) {
      throw SchemaError(fmt::format("line {}: task_id '{}' differs from '{}'", lineno, tid, *task_id));
    }
    task_id = tid;

    Trajectory traj;
    traj.traj_index = field<int>(j, "traj_index", lineno);
    traj.reward = field<double>(j, "reward", lineno);
    if (!j.contains("steps") || !j["steps"].is_array()) throw ParseError(lineno, "missing array 'steps'");
    for (const auto& s : j["steps"]) {
      SampledStep st;
      st.step.t = field<int>(s, "t", lineno);
      if (st.step.t != static_cast<int>(traj.steps.size())) {
        throw SchemaError(fmt::format("line {}: step indices must run 0, 1, 2, ...", lineno));
      }
      try {
        st.step.context.context_id = from_hex(field<std::string>(s, "context_id", lineno));
      } catch (const SchemaError& e) {
        throw ParseError(lineno, e.what());
      }
      st.step.context.depth = st.step.t;
      st.step.decision.decision_id = field<int>(s, "decision_id", lineno);
      st.step.decision.label = field<std::string>(s, "decision_label", lineno);
      st.step.decision.state_modifying = field<bool>(s, "state_modifying", lineno);
      st.step.observation = field<std::string>(s, "observation", lineno);
      if (s.contains("logp_old")) st.logp_old = field<double>(s, "logp_old", lineno);

      auto [it, inserted] = vocab.emplace(st.step.decision.decision_id, st.step.decision);
      if (!inserted && !(it->second == st.step.decision)) {
        throw SchemaError(fmt::format("line {}: decision {} is '{}'/{} here but '{}'/{} earlier", lineno,
                                      st.step.decision.decision_id, st.step.decision.label,
                                      st.step.decision.state_modifying, it->second.label, it->second.state_modifying));
      }
      traj.steps.push_back(std::move(st));
    }
    if (traj.steps.empty()) throw SchemaError(fmt::format("line {}: trajectory has no steps", lineno));
    traj.final_context.depth = traj.length();
    if (j.contains("final_context_id")) {
      try {
        traj.final_context.context_id = from_hex(field<std::string>(j, "final_context_id", lineno));
      } catch (const SchemaError& e) {
        throw ParseError(lineno, e.what());
      }
    } else {
      // Transitions are deterministic, so (last context, last decision)
      // identifies the state reached.
      const auto& last = traj.steps.back().step;
      traj.final_context.context_id =
          fnv1a(fmt::format("{}/{}", to_hex(last.context.context_id), last.decision.decision_id));
    }
    group.trajectories.push_back(std::move(traj));
  }
  if (group.trajectories.empty()) throw EmptyGroup("trajectory file contains no trajectories");

  std::sort(group.trajectories.begin(), group.trajectories.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.traj_index < b.traj_index; });
  for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
    if (group.trajectories[i].traj_index != static_cast<int>(i)) {
      throw SchemaError("traj_index values must be exactly 0..M-1");
    }
  }
  if (auto task = parse_task_id(*task_id)) {
    group.task = *task;
  } else {
    group.external_task_id = *task_id;
  }
  update_reward_stats(group);
  return group;
}

GroupSample read_trajectories_jsonl(const std::filesystem::path& path) { return parse_trajectories_jsonl(read_file(path)); }

IngestResult ingest_tree_text(const std::string& jsonl_text) {
  IngestResult r;
  r.group = parse_trajectories_jsonl(jsonl_text);
  r.tree = build_tree(r.group, nullptr, kDefaultEpsKl, KlMode::context_equality());
  return r;
}

IngestResult ingest_tree(const std::filesystem::path& jsonl_path) { return ingest_tree_text(read_file(jsonl_path)); }

// ---------------------------------------------------------------------------
// trees

json tree_to_json(const CognitiveTree& tree, const ValuationResult* valuation) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    json members = json::array();
    for (const auto& m : n.member_steps) members.push_back({m.traj_index, m.t});
    json member_contexts = json::array();
    for (auto c : n.member_contexts) member_contexts.push_back(to_hex(c));
    json node = {{"node_id", n.node_id},
                 {"depth", n.depth},
                 {"parent", tree.parent[static_cast<std::size_t>(n.node_id)]},
                 {"decision_id", n.decision_into_node.decision_id},
                 {"decision_label", n.decision_into_node.label},
                 {"state_modifying", n.decision_into_node.state_modifying},
                 {"k", n.k()},
                 {"traj_set", n.traj_set},
                 {"members", std::move(members)},
                 {"context", context_json(n.representative_context)},
                 {"member_contexts", std::move(member_contexts)},
                 {"observation", n.observation},
                 {"modifying_history", n.modifying_history},
                 {"terminating", n.terminating}};
    if (valuation) {
      node["q_value"] = valuation->q[static_cast<std::size_t>(n.node_id)];
      node["advantage"] = valuation->advantage[static_cast<std::size_t>(n.node_id)];
    }
    nodes.push_back(std::move(node));
  }
  json edges = json::array();
  for (const auto& e : tree.edges) {
    edges.push_back({{"parent", e.parent}, {"child", e.child}, {"weight", e.weight}, {"traversal_set", e.traversal_set}});
  }
  json j = {{"task_id", tree.task_id},
            {"policy_snapshot_id", tree.policy_snapshot_id},
            {"rewards", tree.rewards},
            {"lengths", tree.lengths},
            {"nodes", std::move(nodes)},
            {"edges", std::move(edges)}};
  if (valuation) {
    j["gamma"] = valuation->gamma;
    j["divergence"] = divergence_to_json(valuation->divergence);
  }
  return j;
}

LoadedTree tree_from_json(const json& j) {
  LoadedTree out;
  auto& tree = out.tree;
  try {
    tree.task_id = j.at("task_id").get<std::string>();
    tree.policy_snapshot_id = j.at("policy_snapshot_id").get<std::string>();
    tree.rewards = j.at("rewards").get<std::vector<double>>();
    tree.lengths = j.at("lengths").get<std::vector<int>>();
    for (int len : tree.lengths) tree.step_nodes.emplace_back(static_cast<std::size_t>(len), -1);
    bool has_q = false;
    std::vector<double> q, adv;
    for (const auto& jn : j.at("nodes")) {
      TreeNode n;
      n.node_id = jn.at("node_id").get<int>();
      if (n.node_id != static_cast<int>(tree.nodes.size())) throw SchemaError("tree nodes must be listed in id order");
      n.depth = jn.at("depth").get<int>();
      n.decision_into_node = {jn.at("decision_id").get<int>(), jn.at("decision_label").get<std::string>(),
                              jn.at("state_modifying").get<bool>()};
      n.traj_set = jn.at("traj_set").get<std::vector<int>>();
      for (const auto& m : jn.at("members")) {
        n.member_steps.push_back({m.at(0).get<int>(), m.at(1).get<int>()});
        tree.step_nodes.at(m.at(0).get<std::size_t>()).at(m.at(1).get<std::size_t>()) = n.node_id;
      }
      n.representative_context = context_from(jn.at("context"));
      for (const auto& c : jn.at("member_contexts")) n.member_contexts.push_back(from_hex(c.get<std::string>()));
      n.observation = jn.at("observation").get<std::string>();
      n.modifying_history = jn.at("modifying_history").get<std::vector<int>>();
      n.terminating = jn.at("terminating").get<std::vector<int>>();
      if (jn.contains("q_value")) {
        has_q = true;
        q.push_back(jn.at("q_value").get<double>());
        adv.push_back(jn.at("advantage").get<double>());
      }
      tree.parent.push_back(jn.at("parent").get<int>());
      tree.nodes.push_back(std::move(n));
    }
    tree.child_edges.assign(tree.nodes.size(), {});
    for (const auto& je : j.at("edges")) {
      TreeEdge e;
      e.parent = je.at("parent").get<int>();
      e.child = je.at("child").get<int>();
      e.weight = je.at("weight").get<double>();
      e.traversal_set = je.at("traversal_set").get<std::vector<int>>();
      tree.child_edges.at(static_cast<std::size_t>(e.parent)).push_back(static_cast<int>(tree.edges.size()));
      tree.edges.push_back(std::move(e));
    }
    if (has_q) {
      if (q.size() != tree.nodes.size()) throw SchemaError("q_value must be present on every node or none");
      out.q = std::move(q);
      out.advantage = std::move(adv);
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed tree JSON: ") + e.what());
  }
  return out;
}

std::string tree_to_dot(const json& tree_json) {
  std::string out = "digraph cognitive_tree {\n  node [shape=box];\n";
  try {
    for (const auto& n : tree_json.at("nodes")) {
      const std::string q = n.contains("q_value") ? fmt::format("{:.3f}", n.at("q_value").get<double>()) : "?";
      out += fmt::format("  n{} [label=\"d{}:{} k={} Q={}\"];\n", n.at("node_id").get<int>(), n.at("depth").get<int>(),
                         n.at("decision_label").get<std::string>(), n.at("k").get<int>(), q);
    }
    for (const auto& e : tree_json.at("edges")) {
      out += fmt::format("  n{} -> n{} [label=\"{:.3f}\"];\n", e.at("parent").get<int>(), e.at("child").get<int>(),
                         e.at("weight").get<double>());
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed tree JSON: ") + e.what());
  }
  out += "}\n";
  return out;
}

json divergence_to_json(const std::vector<DivergencePoint>& divergence) {
  json arr = json::array();
  for (const auto& d : divergence) {
    arr.push_back({{"node_id", d.node}, {"spread", d.spread}, {"v_plus", d.best_child}, {"v_minus", d.worst_child},
                   {"t_div", d.t_div}});
  }
  return arr;
}

// ---------------------------------------------------------------------------
// grafts

json graft_to_json(const GraftTuple& t) {
  return {{"context_id", to_hex(t.context.context_id)},
          {"context_depth", t.context.depth},
          {"task_id", t.task.task_id()},
          {"z_rect_id", t.z_rect.decision_id},
          {"z_rect_label", t.z_rect.label},
          {"z_neg_id", t.z_neg.decision_id},
          {"z_neg_label", t.z_neg.label},
          {"t_div", t.t_div},
          {"source_node", t.source_node},
          {"spread", t.spread},
          {"rationale", t.rationale},
          {"iteration", t.iteration}};
}

GraftTuple graft_from_json(const json& j) {
  GraftTuple t;
  t.context.context_id = from_hex(j.at("context_id").get<std::string>());
  t.context.depth = j.value("context_depth", 0);
  if (auto task = parse_task_id(j.value("task_id", std::string{}))) t.task = *task;
  t.z_rect.decision_id = j.at("z_rect_id").get<int>();
  t.z_rect.label = j.at("z_rect_label").get<std::string>();
  t.z_neg.decision_id = j.at("z_neg_id").get<int>();
  t.z_neg.label = j.value("z_neg_label", std::string{});
  t.t_div = j.at("t_div").get<int>();
  t.source_node = j.value("source_node", 0);
  t.spread = j.at("spread").get<double>();
  t.rationale = j.at("rationale").get<std::string>();
  t.iteration = j.at("iteration").get<int>();
  return t;
}

std::string grafts_to_jsonl(const std::vector<GraftTuple>& tuples) {
  std::string out;
  for (const auto& t : tuples) {
    out += graft_to_json(t).dump();
    out += '\n';
  }
  return out;
}

std::vector<GraftTuple> parse_grafts_jsonl(const std::string& text) {
  std::vector<GraftTuple> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(graft_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints

json checkpoint_to_json(const PolicyParams& policy, int iteration) {
  json logits = json::object();
  for (const auto& [id, row] : policy.logits) logits[to_hex(id)] = row;
  return {{"env_kind", to_string(policy.env_kind)},
          {"vocab_size", policy.vocab_size},
          {"iteration", iteration},
          {"default_logit", policy.default_logit},
          {"logits", std::move(logits)}};
}

PolicyParams checkpoint_from_json(const json& j, int* iteration) {
  try {
    PolicyParams p(env_kind_from_string(j.at("env_kind").get<std::string>()), j.at("vocab_size").get<int>());
    p.default_logit = j.at("default_logit").get<double>();
    for (const auto& [key, row] : j.at("logits").items()) {
      auto v = row.get<std::vector<double>>();
      if (static_cast<int>(v.size()) != p.vocab_size) {
        throw SchemaError(fmt::format("checkpoint row {} has {} logits, expected {}", key, v.size(), p.vocab_size));
      }
      p.logits[from_hex(key)] = std::move(v);
    }
    if (iteration) *iteration = j.at("iteration").get<int>();
    return p;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const PolicyParams& policy, int iteration) {
  write_file(path, checkpoint_to_json(policy, iteration).dump(1) + "\n");
}

PolicyParams read_checkpoint(const std::filesystem::path& path, int* iteration) {
  return checkpoint_from_json(read_json(path), iteration);
}

// ---------------------------------------------------------------------------
// metrics

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "iteration",      "success_rate",    "mean_reward",     "loss_grpo",         "loss_surgical",
      "mean_value_spread", "n_divergent",  "graft_count",     "anchor_reuse",      "merge_ratio",
      "wall_ms_rollout", "wall_ms_tree",   "wall_ms_valuation", "wall_ms_graft",   "wall_ms_update"};
  return cols;
}

std::string metrics_header() {
  std::string out;
  for (const auto& c : metrics_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

namespace {

std::string deterministic_fields(const MetricsRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{}", r.iteration, r.success_rate, r.mean_reward, r.loss_grpo,
                     r.loss_surgical, r.mean_value_spread, r.n_divergent, r.graft_count, r.anchor_reuse, r.merge_ratio);
}

}  // namespace

std::string metrics_row_csv(const MetricsRow& r) {
  return deterministic_fields(r) + fmt::format(",{:.3f},{:.3f},{:.3f},{:.3f},{:.3f}", r.wall_ms_rollout, r.wall_ms_tree,
                                               r.wall_ms_valuation, r.wall_ms_graft, r.wall_ms_update);
}

// ---------------------------------------------------------------------------
// digests

std::string digest(const std::string& canonical) { return to_hex(fnv1a(canonical)); }

std::string tree_digest(const CognitiveTree& tree, const ValuationResult* valuation) {
  return digest(tree_to_json(tree, valuation).dump());
}

std::string checkpoint_digest(const PolicyParams& policy) { return digest(checkpoint_to_json(policy, 0).dump()); }

std::string trajectories_digest(const GroupSample& group) { return digest(trajectories_to_jsonl(group)); }

std::string grafts_digest(const std::vector<GraftTuple>& tuples) { return digest(grafts_to_jsonl(tuples)); }

std::string metrics_digest(const std::vector<MetricsRow>& rows) {
  std::string all;
  for (const auto& r : rows) all += deterministic_fields(r) + "\n";
  return digest(all);
}

// ---------------------------------------------------------------------------
// files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace ctree::io
