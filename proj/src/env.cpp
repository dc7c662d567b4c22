#include "ctree/env.hpp"

#include <algorithm>
#include <bit>

#include <fmt/format.h>

namespace ctree {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::SokobanMini:
      return "sokoban";
    case EnvKind::SynthBranch:
      return "synthbranch";
  }
  return "unknown";
}

EnvKind env_kind_from_string(const std::string& s) {
  if (s == "sokoban" || s == "SokobanMini") return EnvKind::SokobanMini;
  if (s == "synthbranch" || s == "SynthBranch") return EnvKind::SynthBranch;
  throw ConfigError("unknown env kind '" + s + "'");
}

std::string TaskSpec::task_id() const {
  return fmt::format("{}/{}", to_string(env_kind), instance_id);
}

Context Environment::make_context(std::vector<int> state, int depth) const {
  std::string features = fmt::format("{}/i{}/s{}", to_string(task_.env_kind), task_.instance_id, task_.seed);
  if (task_.env_kind == EnvKind::SynthBranch) features += fmt::format("/v{}", task_.synth_vocab);
  features += fmt::format("/t{}", depth);
  for (int x : state) features += fmt::format("/{}", x);
  Context c;
  c.context_id = fnv1a(features);
  c.features = std::move(features);
  c.depth = depth;
  c.state = std::move(state);
  return c;
}

void Environment::check_step(const Context& context, const Decision& decision) const {
  const auto& vocab = vocabulary();
  if (decision.decision_id < 0 || decision.decision_id >= static_cast<int>(vocab.size())) {
    throw InvalidDecision(fmt::format("decision id {} outside vocabulary of size {}", decision.decision_id,
                                      vocab.size()));
  }
  if (context.state.empty()) throw InvalidDecision("context carries no replayable state");
  if (is_terminal(context)) throw EpisodeFinished("step on terminal context " + to_hex(context.context_id));
}

std::vector<Decision> decision_vocabulary(EnvKind kind, int synth_vocab) {
  std::vector<Decision> out;
  if (kind == EnvKind::SokobanMini) {
    out = {{0, "move-up", true}, {1, "move-down", true}, {2, "move-left", true}, {3, "move-right", true},
           {4, "wait", false}};
    return out;
  }
  if (synth_vocab < 3 || synth_vocab > 18) throw ConfigError("synth vocabulary size must be in [3, 18]");
  const int items = synth_vocab - 2;
  for (int i = 0; i < items; ++i) {
    out.push_back({i, fmt::format("pick-{}", static_cast<char>('a' + i)), true});
  }
  out.push_back({items, "think", false});
  out.push_back({items + 1, "inspect", false});
  return out;
}

// ---------------------------------------------------------------------------
// SynthBranch

bool SynthInstance::succeeds(std::uint32_t mask) const {
  return std::find(success_sets.begin(), success_sets.end(), mask) != success_sets.end();
}

SynthInstance synth_instance(const TaskSpec& task) {
  if (task.instance_id < 0 || task.instance_id >= kSynthInstanceCount) {
    throw InstanceNotFound(fmt::format("synthbranch instance {} not in [0, {})", task.instance_id,
                                       kSynthInstanceCount));
  }
  SynthInstance inst;
  inst.items = task.synth_vocab - 2;
  const std::uint64_t h = derive_seed(task.seed, 0x5b, static_cast<std::uint64_t>(task.instance_id));
  inst.depth = std::min(inst.items, 2 + static_cast<int>(h % 2));

  std::vector<std::uint32_t> candidates;
  for (std::uint32_t m = 0; m < (1u << inst.items); ++m) {
    if (std::popcount(m) == inst.depth) candidates.push_back(m);
  }
  for (std::uint32_t m : candidates) {
    if (splitmix64(h ^ (0x100000000ull + m)) % 3 == 0) inst.success_sets.push_back(m);
  }
  if (inst.success_sets.empty()) inst.success_sets.push_back(candidates.front());
  if (inst.success_sets.size() == candidates.size() && candidates.size() > 1) inst.success_sets.pop_back();
  return inst;
}

namespace {

class SynthBranchEnv final : public Environment {
 public:
  explicit SynthBranchEnv(const TaskSpec& task)
      : Environment(task), inst_(synth_instance(task)), vocab_(decision_vocabulary(EnvKind::SynthBranch, task.synth_vocab)) {}

  // state = [mask of held items]
  Context reset() const override { return make_context({0}, 0); }

  bool is_terminal(const Context& c) const override {
    const auto mask = static_cast<std::uint32_t>(c.state.at(0));
    return std::popcount(mask) >= inst_.depth || c.depth >= task().max_steps;
  }

  StepResult step(const Context& c, const Decision& d) const override {
    check_step(c, d);
    auto mask = static_cast<std::uint32_t>(c.state.at(0));
    const auto& label = vocab_[static_cast<std::size_t>(d.decision_id)].label;
    StepResult r;
    if (d.decision_id < inst_.items) {
      const std::uint32_t bit = 1u << d.decision_id;
      r.observation = (mask & bit) ? fmt::format("already holding {}", label.substr(5)) : fmt::format("picked {}", label.substr(5));
      mask |= bit;
    } else if (label == "think") {
      r.observation = "thought";
    } else {
      r.observation = fmt::format("holding {} of {}", std::popcount(mask), inst_.depth);
    }
    r.next = make_context({static_cast<int>(mask)}, c.depth + 1);
    r.terminal = is_terminal(r.next);
    if (r.terminal) {
      const bool complete = std::popcount(mask) >= inst_.depth;
      r.reward = (complete && inst_.succeeds(mask)) ? 1.0 : 0.0;
      r.observation += r.reward > 0.0 ? "; task solved" : (complete ? "; wrong collection" : "; out of steps");
    }
    return r;
  }

  const std::vector<Decision>& vocabulary() const override { return vocab_; }

 private:
  SynthInstance inst_;
  std::vector<Decision> vocab_;
};

// ---------------------------------------------------------------------------
// SokobanMini

const std::vector<std::vector<std::string>>& sokoban_levels() {
  static const std::vector<std::vector<std::string>> levels = {
      {"#####",
       "#@$.#",
       "#####"},
      {"######",
       "#@ $.#",
       "#    #",
       "######"},
      {"#####",
       "#.  #",
       "#   #",
       "#$  #",
       "#@  #",
       "#####"},
      {"######",
       "#@$ .#",
       "# $ .#",
       "#    #",
       "######"},
      {"######",
       "#  . #",
       "# $  #",
       "#  @ #",
       "#    #",
       "######"},
      {"######",
       "#.$ @#",
       "#    #",
       "# $. #",
       "######"},
  };
  return levels;
}

class SokobanEnv final : public Environment {
 public:
  explicit SokobanEnv(const TaskSpec& task) : Environment(task), vocab_(decision_vocabulary(EnvKind::SokobanMini)) {
    const auto& rows = sokoban_layout(task.instance_id);
    height_ = static_cast<int>(rows.size());
    width_ = static_cast<int>(rows.front().size());
    walls_.assign(static_cast<std::size_t>(width_ * height_), false);
    targets_.assign(walls_.size(), false);
    for (int r = 0; r < height_; ++r) {
      for (int c = 0; c < width_; ++c) {
        const char ch = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        const int p = r * width_ + c;
        if (ch == '#') walls_[static_cast<std::size_t>(p)] = true;
        if (ch == '.' || ch == '*' || ch == '+') targets_[static_cast<std::size_t>(p)] = true;
        if (ch == '@' || ch == '+') player0_ = p;
        if (ch == '$' || ch == '*') boxes0_.push_back(p);
      }
    }
  }

  // state = [player, box_0, box_1, ...] with boxes sorted.
  Context reset() const override {
    std::vector<int> s{player0_};
    s.insert(s.end(), boxes0_.begin(), boxes0_.end());
    return make_context(std::move(s), 0);
  }

  bool solved(const std::vector<int>& s) const {
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (!targets_[static_cast<std::size_t>(s[i])]) return false;
    }
    return true;
  }

  bool is_terminal(const Context& c) const override { return solved(c.state) || c.depth >= task().max_steps; }

  StepResult step(const Context& c, const Decision& d) const override {
    check_step(c, d);
    static constexpr int kDr[] = {-1, 1, 0, 0};
    static constexpr int kDc[] = {0, 0, -1, 1};
    static constexpr const char* kDir[] = {"up", "down", "left", "right"};
    std::vector<int> s = c.state;
    StepResult r;
    if (d.decision_id == 4) {
      r.observation = "waited";
    } else {
      const int k = d.decision_id;
      const int pr = s[0] / width_, pc = s[0] % width_;
      const int next = (pr + kDr[k]) * width_ + (pc + kDc[k]);
      auto box = std::find(s.begin() + 1, s.end(), next);
      if (walls_[static_cast<std::size_t>(next)]) {
        r.observation = fmt::format("bumped wall {}", kDir[k]);
      } else if (box != s.end()) {
        const int beyond = (pr + 2 * kDr[k]) * width_ + (pc + 2 * kDc[k]);
        const bool blocked = walls_[static_cast<std::size_t>(beyond)] ||
                             std::find(s.begin() + 1, s.end(), beyond) != s.end();
        if (blocked) {
          r.observation = fmt::format("box blocked {}", kDir[k]);
        } else {
          *box = beyond;
          s[0] = next;
          std::sort(s.begin() + 1, s.end());
          r.observation = fmt::format("pushed box {}", kDir[k]);
        }
      } else {
        s[0] = next;
        r.observation = fmt::format("moved {}", kDir[k]);
      }
    }
    const bool done = solved(s);
    r.next = make_context(std::move(s), c.depth + 1);
    r.terminal = is_terminal(r.next);
    if (r.terminal) {
      r.reward = done ? 1.0 : 0.0;
      r.observation += done ? "; all boxes on targets" : "; out of steps";
    }
    return r;
  }

  const std::vector<Decision>& vocabulary() const override { return vocab_; }

 private:
  std::vector<Decision> vocab_;
  int width_ = 0;
  int height_ = 0;
  std::vector<bool> walls_;
  std::vector<bool> targets_;
  int player0_ = 0;
  std::vector<int> boxes0_;
};

}  // namespace

int sokoban_instance_count() { return static_cast<int>(sokoban_levels().size()); }

std::vector<std::string> sokoban_layout(int instance_id) {
  if (instance_id < 0 || instance_id >= sokoban_instance_count()) {
    throw InstanceNotFound(fmt::format("sokoban instance {} not in [0, {})", instance_id, sokoban_instance_count()));
  }
  return sokoban_levels()[static_cast<std::size_t>(instance_id)];
}

std::unique_ptr<Environment> make_environment(const TaskSpec& task) {
  if (task.max_steps < 1) throw ConfigError("max_steps must be at least 1");
  switch (task.env_kind) {
    case EnvKind::SokobanMini:
      return std::make_unique<SokobanEnv>(task);
    case EnvKind::SynthBranch:
      return std::make_unique<SynthBranchEnv>(task);
  }
  throw ConfigError("unknown env kind");
}

}  // namespace ctree
