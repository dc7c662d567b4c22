#include "ctree/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "ctree/io.hpp"

namespace ctree {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, v));
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: expected an unsigned integer, got '{}'", key, v));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::string kl_mode_name(KlMode::Kind k) { return k == KlMode::Kind::MonteCarlo ? "mc" : "exact"; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string num(double d) { return fmt::format("{}", d); }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"env", [](RunConfig& c, const std::string& v) { c.train.env_kind = env_kind_from_string(v); },
       [](const RunConfig& c) { return to_string(c.train.env_kind); }},
      {"instance_first", [](RunConfig& c, const std::string& v) { c.train.instance_first = static_cast<int>(parse_int("instance_first", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.instance_first); }},
      {"instance_last", [](RunConfig& c, const std::string& v) { c.train.instance_last = static_cast<int>(parse_int("instance_last", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.instance_last); }},
      {"instance_seed", [](RunConfig& c, const std::string& v) { c.train.instance_seed = parse_u64("instance_seed", v); },
       [](const RunConfig& c) { return std::to_string(c.train.instance_seed); }},
      {"synth_vocab", [](RunConfig& c, const std::string& v) { c.train.synth_vocab = static_cast<int>(parse_int("synth_vocab", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.synth_vocab); }},
      {"max_steps", [](RunConfig& c, const std::string& v) { c.train.max_steps = static_cast<int>(parse_int("max_steps", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.max_steps); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"backend", [](RunConfig& c, const std::string& v) { c.train.backend = backend_from_string(v); },
       [](const RunConfig& c) { return to_string(c.train.backend); }},
      {"kl_mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "exact") c.train.kl_kind = KlMode::Kind::Exact;
         else if (v == "mc") c.train.kl_kind = KlMode::Kind::MonteCarlo;
         else throw ConfigError("kl_mode: expected exact or mc, got '" + v + "'");
       },
       [](const RunConfig& c) { return kl_mode_name(c.train.kl_kind); }},
      {"rectifier", [](RunConfig& c, const std::string& v) { c.train.rectifier = rectifier_mode_from_string(v); },
       [](const RunConfig& c) { return to_string(c.train.rectifier); }},
      {"graft_cap", [](RunConfig& c, const std::string& v) { c.train.graft_cap = static_cast<std::size_t>(parse_u64("graft_cap", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.graft_cap); }},
      {"lambda", [](RunConfig& c, const std::string& v) { c.train.hybrid.lambda = parse_double("lambda", v); },
       [](const RunConfig& c) { return num(c.train.hybrid.lambda); }},
      {"beta", [](RunConfig& c, const std::string& v) { c.train.hybrid.beta = parse_double("beta", v); },
       [](const RunConfig& c) { return num(c.train.hybrid.beta); }},
      {"clip_eps", [](RunConfig& c, const std::string& v) { c.train.hybrid.clip_eps = parse_double("clip_eps", v); },
       [](const RunConfig& c) { return num(c.train.hybrid.clip_eps); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.train.hybrid.lr = parse_double("lr", v); },
       [](const RunConfig& c) { return num(c.train.hybrid.lr); }},
      {"alpha_ema", [](RunConfig& c, const std::string& v) { c.train.hybrid.alpha_ema = parse_double("alpha_ema", v); },
       [](const RunConfig& c) { return num(c.train.hybrid.alpha_ema); }},
      {"gamma", [](RunConfig& c, const std::string& v) { c.train.hybrid.gamma = parse_double("gamma", v); },
       [](const RunConfig& c) { return num(c.train.hybrid.gamma); }},
      {"delta", [](RunConfig& c, const std::string& v) { c.train.hybrid.delta = parse_double("delta", v); },
       [](const RunConfig& c) { return num(c.train.hybrid.delta); }},
      {"eps_kl", [](RunConfig& c, const std::string& v) { c.train.hybrid.eps_kl = parse_double("eps_kl", v); },
       [](const RunConfig& c) { return num(c.train.hybrid.eps_kl); }},
      {"m", [](RunConfig& c, const std::string& v) { c.train.hybrid.group_size = static_cast<int>(parse_int("m", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.hybrid.group_size); }},
      {"k", [](RunConfig& c, const std::string& v) { c.train.hybrid.mc_samples = static_cast<int>(parse_int("k", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.hybrid.mc_samples); }},
      {"iterations", [](RunConfig& c, const std::string& v) { c.train.hybrid.iterations = static_cast<int>(parse_int("iterations", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.hybrid.iterations); }},
      {"batch_tasks", [](RunConfig& c, const std::string& v) { c.train.hybrid.batch_tasks = static_cast<int>(parse_int("batch_tasks", v)); },
       [](const RunConfig& c) { return std::to_string(c.train.hybrid.batch_tasks); }},
      {"out", [](RunConfig& c, const std::string& v) { c.out = v; }, [](const RunConfig& c) { return c.out; }},
      {"checkpoint_every", [](RunConfig& c, const std::string& v) { c.checkpoint_every = static_cast<int>(parse_int("checkpoint_every", v)); },
       [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }},
      {"export_trees", [](RunConfig& c, const std::string& v) { c.export_trees = parse_bool("export_trees", v); },
       [](const RunConfig& c) { return std::string(c.export_trees ? "true" : "false"); }},
      {"export_dot", [](RunConfig& c, const std::string& v) { c.export_dot = parse_bool("export_dot", v); },
       [](const RunConfig& c) { return std::string(c.export_dot ? "true" : "false"); }},
      {"export_grafts", [](RunConfig& c, const std::string& v) { c.export_grafts = parse_bool("export_grafts", v); },
       [](const RunConfig& c) { return std::string(c.export_grafts ? "true" : "false"); }},
  };
  return f;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected 'key = value'", lineno));
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const Error& e) {
      throw ConfigError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_env_overrides(RunConfig& config) {
  for (const auto& key : config_keys()) {
    std::string var = "CTREE_" + key;
    std::transform(var.begin(), var.end(), var.begin(), [](unsigned char c) { return std::toupper(c); });
    if (const char* v = std::getenv(var.c_str())) {
      try {
        set_config_value(config, key, v);
      } catch (const ConfigError& e) {
        throw ConfigError(var + ": " + e.what());
      }
    }
  }
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

void validate(const RunConfig& c) {
  const auto& h = c.train.hybrid;
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(h.lambda >= 0.0, "lambda must be >= 0");
  require(h.beta > 0.0, "beta must be > 0");
  require(h.clip_eps > 0.0 && h.clip_eps < 1.0, "clip_eps must be in (0, 1)");
  require(h.lr > 0.0, "lr must be > 0");
  require(h.alpha_ema >= 0.0 && h.alpha_ema <= 1.0, "alpha_ema must be in [0, 1]");
  require(h.gamma > 0.0 && h.gamma <= 1.0, "gamma must be in (0, 1]");
  require(h.delta > 0.0, "delta must be > 0");
  require(h.eps_kl > 0.0, "eps_kl must be > 0");
  require(h.group_size >= 2, "m must be >= 2");
  require(h.mc_samples >= 1, "k must be >= 1");
  require(h.iterations >= 0, "iterations must be >= 0");
  require(h.batch_tasks >= 1, "batch_tasks must be >= 1");
  require(c.train.max_steps >= 1, "max_steps must be >= 1");
  require(c.train.instance_first <= c.train.instance_last, "instance_first must be <= instance_last");
  require(c.train.graft_cap >= 1, "graft_cap must be >= 1");
  require(c.checkpoint_every >= 0, "checkpoint_every must be >= 0");
  // Surfaces InstanceNotFound / vocabulary errors before training starts.
  for (const auto& t : c.train.tasks()) {
    try {
      make_environment(t);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
}

}  // namespace ctree
