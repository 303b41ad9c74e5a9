#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "rkhs_rl/bench.hpp"
#include "rkhs_rl/errors.hpp"

namespace rkhs_rl::bench {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

template <class Int>
Int to_int(const std::string& v) {
  Int out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw std::invalid_argument("not an integer");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("not a boolean");
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(item));
  return out;
}

Preset to_preset(const std::string& v) {
  if (v == "desk") return Preset::desk;
  if (v == "paper") return Preset::paper;
  throw std::invalid_argument("preset must be desk or paper");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

struct Field {
  const char* key;
  Setter set;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"scenario", [](RunConfig& c, const std::string& v) { c.scenario = to_int<int>(v); }},
      {"preset", [](RunConfig& c, const std::string& v) { c.preset = to_preset(v); }},
      {"L", [](RunConfig& c, const std::string& v) { c.L = to_int<int>(v); }},
      {"n_iters", [](RunConfig& c, const std::string& v) { c.n_iters = to_int<long>(v); }},
      {"n_trials", [](RunConfig& c, const std::string& v) { c.n_trials = to_int<int>(v); }},
      {"change_at", [](RunConfig& c, const std::string& v) { c.change_at = to_int<long>(v); }},
      {"scenario1_noise", [](RunConfig& c, const std::string& v) { c.scenario1_noise = v; }},
      {"scenario2_order", [](RunConfig& c, const std::string& v) { c.scenario2_order = v; }},
      {"stable_alpha", [](RunConfig& c, const std::string& v) { c.stable.alpha = to_double(v); }},
      {"stable_beta", [](RunConfig& c, const std::string& v) { c.stable.beta = to_double(v); }},
      {"stable_scale", [](RunConfig& c, const std::string& v) { c.stable.scale = to_double(v); }},
      {"sparse_prob", [](RunConfig& c, const std::string& v) { c.sparse.prob = to_double(v); }},
      {"sparse_lo", [](RunConfig& c, const std::string& v) { c.sparse.lo = to_double(v); }},
      {"sparse_hi", [](RunConfig& c, const std::string& v) { c.sparse.hi = to_double(v); }},
      {"sparse_snr_db", [](RunConfig& c, const std::string& v) { c.sparse.snr_db = to_double(v); }},
      {"rho", [](RunConfig& c, const std::string& v) { c.rho = to_double(v); }},
      {"M_av", [](RunConfig& c, const std::string& v) { c.M_av = to_int<int>(v); }},
      {"varpi", [](RunConfig& c, const std::string& v) { c.varpi = to_double(v); }},
      {"agent_alphas", [](RunConfig& c, const std::string& v) { c.agent_alphas = to_doubles(v); }},
      {"eta", [](RunConfig& c, const std::string& v) { c.eta = to_double(v); }},
      {"sigma", [](RunConfig& c, const std::string& v) { c.sigma = to_double(v); }},
      {"delta_S", [](RunConfig& c, const std::string& v) { c.delta_S = to_double(v); }},
      {"delta_Z", [](RunConfig& c, const std::string& v) { c.delta_Z = to_double(v); }},
      {"N_p", [](RunConfig& c, const std::string& v) { c.N_p = to_int<long>(v); }},
      {"D_RFF", [](RunConfig& c, const std::string& v) { c.D_RFF = to_int<int>(v); }},
      {"bandwidth", [](RunConfig& c, const std::string& v) { c.bandwidth = to_double(v); }},
      {"action_grid", [](RunConfig& c, const std::string& v) { c.action_grid = to_doubles(v); }},
      {"buffer_cap", [](RunConfig& c, const std::string& v) { c.buffer_cap = to_int<long>(v); }},
      {"replay", [](RunConfig& c, const std::string& v) { c.replay = to_bool(v); }},
      {"methods", [](RunConfig& c, const std::string& v) { c.methods = split_list(v); }},
      {"mixed_p1", [](RunConfig& c, const std::string& v) { c.mixed_p1 = to_double(v); }},
      {"mixed_p2", [](RunConfig& c, const std::string& v) { c.mixed_p2 = to_double(v); }},
      {"mixed_weight", [](RunConfig& c, const std::string& v) { c.mixed_weight = to_double(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_int<std::uint64_t>(v); }},
      {"jobs", [](RunConfig& c, const std::string& v) { c.jobs = to_int<int>(v); }},
      {"plot_every", [](RunConfig& c, const std::string& v) { c.plot_every = to_int<long>(v); }},
      {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

struct Line {
  int number;
  std::string key;
  std::string value;
};

[[noreturn]] void fail_line(const Line& l, const std::string& why) {
  std::ostringstream os;
  os << "config line " << l.number << " (" << l.key << "): " << why;
  throw InvalidInput(os.str());
}

void apply(RunConfig& cfg, const Line& l) {
  const auto& table = fields();
  const auto it = std::find_if(table.begin(), table.end(),
                               [&](const Field& f) { return l.key == f.key; });
  if (it == table.end()) fail_line(l, "unknown key");
  try {
    it->set(cfg, l.value);
  } catch (const std::invalid_argument& e) {
    fail_line(l, std::string("bad value '") + l.value + "': " + e.what());
  } catch (const std::out_of_range&) {
    fail_line(l, "value out of range");
  }
}

}  // namespace

RunConfig RunConfig::desk(int scenario) {
  RunConfig c;
  c.scenario = scenario;
  return c;
}

RunConfig RunConfig::paper(int scenario) {
  RunConfig c;
  c.scenario = scenario;
  c.preset = Preset::paper;
  c.L = 100;
  c.n_iters = 50000;
  c.n_trials = 100;
  c.change_at = 20000;
  c.D_RFF = 500;
  c.agent_alphas = {0.9, 0.75, 0.0};
  return c;
}

void RunConfig::validate() const {
  if (scenario != 1 && scenario != 2) throw InvalidInput("RunConfig: scenario must be 1 or 2");
  if (L < 1) throw InvalidInput("RunConfig: L must be >= 1");
  if (n_iters < 1) throw InvalidInput("RunConfig: n_iters must be >= 1");
  if (n_trials < 1) throw InvalidInput("RunConfig: n_trials must be >= 1");
  if (change_at != -1 && (change_at <= 0 || change_at >= n_iters)) {
    throw InvalidInput("RunConfig: change_at must lie in (0, n_iters) or be -1");
  }
  if (scenario1_noise != "alpha_stable" && scenario1_noise != "sparse") {
    throw InvalidInput("RunConfig: scenario1_noise must be alpha_stable or sparse");
  }
  if (scenario2_order != "stable_to_sparse" && scenario2_order != "sparse_to_stable") {
    throw InvalidInput("RunConfig: scenario2_order must be stable_to_sparse or sparse_to_stable");
  }
  env::validate(env::NoiseModel{stable});
  env::validate(env::NoiseModel{sparse});
  if (!(rho > 0.0)) throw InvalidInput("RunConfig: rho must be positive");
  if (M_av < 1) throw InvalidInput("RunConfig: M_av must be >= 1");
  if (!(varpi > 0.0 && varpi < 1.0)) throw InvalidInput("RunConfig: varpi must lie in (0, 1)");
  if (D_RFF < 1) throw InvalidInput("RunConfig: D_RFF must be >= 1");
  if (buffer_cap < 0) throw InvalidInput("RunConfig: buffer_cap must be >= 0");
  if (jobs < 1) throw InvalidInput("RunConfig: jobs must be >= 1");
  if (plot_every < 0) throw InvalidInput("RunConfig: plot_every must be >= 0");
  if (methods.empty()) throw InvalidInput("RunConfig: no methods selected");
  for (const auto& m : methods) {
    if (m != "agent" && m != "fixed_p" && m != "random_p" && m != "mixed_norm") {
      throw InvalidInput("RunConfig: unknown method '" + m + "'");
    }
  }
  if (std::find(methods.begin(), methods.end(), "agent") != methods.end()) {
    if (agent_alphas.empty()) throw InvalidInput("RunConfig: agent_alphas is empty");
    for (double a : agent_alphas) agent_config(a).validate();
  } else {
    agent_config(0.0).validate();
  }
  for (double p : {mixed_p1, mixed_p2}) {
    if (!(p >= 1.0 && p <= 2.0)) throw InvalidInput("RunConfig: mixed-norm exponents must lie in [1, 2]");
  }
  if (!(mixed_weight >= 0.0 && mixed_weight <= 1.0)) {
    throw InvalidInput("RunConfig: mixed_weight must lie in [0, 1]");
  }
}

env::StreamSpec RunConfig::stream_spec() const {
  env::StreamSpec s;
  s.filter_len = L;
  s.n_iters = n_iters;
  if (scenario == 1) {
    if (scenario1_noise == "sparse") {
      s.noise.push_back({0, sparse});
    } else {
      s.noise.push_back({0, stable});
    }
    s.system_change = change_at;
  } else {
    const bool stable_first = scenario2_order == "stable_to_sparse";
    s.noise.push_back({0, stable_first ? env::NoiseModel{stable} : env::NoiseModel{sparse}});
    if (change_at > 0) {
      s.noise.push_back({change_at, stable_first ? env::NoiseModel{sparse} : env::NoiseModel{stable}});
    }
    s.system_change = -1;
  }
  return s;
}

env::FilterParams RunConfig::filter_params() const { return {rho, M_av, varpi}; }

agent::AgentConfig RunConfig::agent_config(double alpha) const {
  agent::AgentConfig a;
  a.alpha = alpha;
  a.eta = eta;
  a.sigma = sigma;
  a.delta_S = delta_S;
  a.delta_Z = delta_Z;
  a.improvement_period = N_p;
  a.action_grid = action_grid;
  a.buffer_cap = static_cast<std::size_t>(buffer_cap);
  a.replay = replay;
  a.bandwidth = bandwidth;
  return a;
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::vector<Line> lines;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      std::ostringstream os;
      os << "config line " << number << ": expected key = value";
      throw InvalidInput(os.str());
    }
    lines.push_back({number, trim(body.substr(0, eq)), trim(body.substr(eq + 1))});
  }

  // A preset or scenario in the file selects the defaults the other keys
  // override, wherever it appears.
  RunConfig probe = base;
  bool rebase = false;
  for (const auto& l : lines) {
    if (l.key == "preset" || l.key == "scenario") {
      apply(probe, l);
      rebase = true;
    }
  }
  RunConfig cfg = base;
  if (rebase) {
    cfg = probe.preset == Preset::paper ? RunConfig::paper(probe.scenario)
                                        : RunConfig::desk(probe.scenario);
  }
  for (const auto& l : lines) apply(cfg, l);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  return parse_config(in, std::move(base));
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.emplace_back(f.key);
    return k;
  }();
  return keys;
}

}  // namespace rkhs_rl::bench
