#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ctree/common.hpp"

namespace ctree {

enum class EnvKind { SokobanMini, SynthBranch };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& s);

inline constexpr int kDefaultSynthVocab = 6;
inline constexpr int kSynthInstanceCount = 64;

struct TaskSpec {
  EnvKind env_kind = EnvKind::SynthBranch;
  int instance_id = 0;
  int max_steps = 20;
  // Seeds instance generation. The run seed is separate so that the same task
  // set is shared across runs.
  std::uint64_t seed = 0;
  int synth_vocab = kDefaultSynthVocab;

  std::string task_id() const;
};

using ContextId = std::uint64_t;

// An environment state. `features` is the canonical serialization and
// `context_id` its hash; `state` is the decoded form the transition function
// reads. Contexts ingested from external logs carry only the id.
struct Context {
  ContextId context_id = 0;
  std::string features;
  int depth = 0;
  std::vector<int> state;

  friend bool operator==(const Context& a, const Context& b) {
    return a.context_id == b.context_id && a.depth == b.depth;
  }
};

struct Decision {
  int decision_id = 0;
  std::string label;
  bool state_modifying = false;

  friend bool operator==(const Decision&, const Decision&) = default;
};

struct Step {
  int t = 0;
  Context context;
  Decision decision;
  std::string observation;
};

struct StepResult {
  std::string observation;
  Context next;
  bool terminal = false;
  double reward = 0.0;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual Context reset() const = 0;
  // Pure transition. Throws InvalidDecision or EpisodeFinished.
  virtual StepResult step(const Context& context, const Decision& decision) const = 0;
  virtual bool is_terminal(const Context& context) const = 0;
  virtual const std::vector<Decision>& vocabulary() const = 0;

  const TaskSpec& task() const { return task_; }

 protected:
  explicit Environment(TaskSpec task) : task_(task) {}
  Context make_context(std::vector<int> state, int depth) const;
  void check_step(const Context& context, const Decision& decision) const;

 private:
  TaskSpec task_;
};

// Throws InstanceNotFound when the instance id is outside the generated set.
std::unique_ptr<Environment> make_environment(const TaskSpec& task);

inline Context reset(const TaskSpec& task) { return make_environment(task)->reset(); }

std::vector<Decision> decision_vocabulary(EnvKind kind, int synth_vocab = kDefaultSynthVocab);

int sokoban_instance_count();

// SynthBranch: items are collected into a set (re-picking an item is a no-op),
// so the context is determined by the set of state-modifying decisions taken.
// The episode ends once `depth` distinct items are held; the final set is
// rewarded 1 when it belongs to the instance's success family.
struct SynthInstance {
  int items = 0;
  int depth = 0;
  std::vector<std::uint32_t> success_sets;  // bitmasks over items

  bool succeeds(std::uint32_t mask) const;
};

SynthInstance synth_instance(const TaskSpec& task);

// Grid layout of a SokobanMini level, one string per row.
std::vector<std::string> sokoban_layout(int instance_id);

}  // namespace ctree
