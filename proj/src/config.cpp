#include "mtc/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mtc/common.hpp"
#include "mtc/models.hpp"

namespace mtc {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': not a number: '" + v + "'");
  }
}

long long parse_ll(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': not an integer: '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  long long x = parse_ll(key, v);
  if (x < -2147483648LL || x > 2147483647LL)
    throw DataError("config key '" + key + "': out of int range: '" + v + "'");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config key '" + key + "': not a boolean (true/false/1/0): '" + v + "'");
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw DataError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, val);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str());
}

void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "env") cfg.env_id = value;
  else if (key == "algo") cfg.algo = value;
  else if (key == "steps") cfg.steps = parse_ll(key, value);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_ll(key, value));
  else if (key == "out") cfg.out_dir = value;
  else if (key == "gamma") cfg.gamma = parse_double(key, value);
  else if (key == "init_steps") cfg.init_steps = parse_ll(key, value);
  else if (key == "batch") cfg.batch = parse_int(key, value);
  else if (key == "actor_update_freq") cfg.actor_update_freq = parse_int(key, value);
  else if (key == "target_update_freq") cfg.target_update_freq = parse_int(key, value);
  else if (key == "tau") cfg.tau = parse_double(key, value);
  else if (key == "init_temperature") cfg.init_temperature = parse_double(key, value);
  else if (key == "actor_lr") cfg.actor_lr = parse_double(key, value);
  else if (key == "critic_lr") cfg.critic_lr = parse_double(key, value);
  else if (key == "temp_lr") cfg.temp_lr = parse_double(key, value);
  else if (key == "alpha_lr") cfg.alpha_lr = parse_double(key, value);
  else if (key == "ip") cfg.ip = parse_double(key, value);
  else if (key == "m") cfg.m = parse_double(key, value);
  else if (key == "history") cfg.history = parse_int(key, value);
  else if (key == "alpha_init") cfg.alpha_init = parse_double(key, value);
  else if (key == "buffer_capacity") cfg.buffer_capacity = parse_ll(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_ll(key, value);
  else if (key == "eval_episodes") cfg.eval_episodes = parse_int(key, value);
  else if (key == "target_entropy") {
    if (value == "auto") cfg.target_entropy = std::numeric_limits<double>::quiet_NaN();
    else cfg.target_entropy = parse_double(key, value);
  } else if (key == "dynamics_output_norm") cfg.dynamics_output_norm = value;
  else if (key == "grad_clip") cfg.grad_clip = parse_double(key, value);
  else if (key == "z_dim") cfg.z_dim = parse_int(key, value);
  else if (key == "width") cfg.width = parse_int(key, value);
  else if (key == "gru_hidden") cfg.gru_hidden = parse_int(key, value);
  else if (key == "gru_out") cfg.gru_out = parse_int(key, value);
  else if (key == "regularizer_enabled") cfg.regularizer_enabled = parse_bool(key, value);
  else if (key == "resume") cfg.resume = parse_bool(key, value);
  else throw DataError("unknown config key: '" + key + "'");
}

void validate_config(const TrainConfig& cfg) {
  auto bad = [](const std::string& what) { throw UsageError("invalid config: " + what); };
  algo_from_string(cfg.algo);  // throws on unknown algo
  if (cfg.steps < 0) bad("steps must be >= 0");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) bad("gamma must be in (0, 1]");
  if (cfg.init_steps < 0) bad("init_steps must be >= 0");
  if (cfg.batch <= 0) bad("batch must be positive");
  if (cfg.actor_update_freq <= 0) bad("actor_update_freq must be positive");
  if (cfg.target_update_freq <= 0) bad("target_update_freq must be positive");
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) bad("tau must be in (0, 1]");
  if (!(cfg.init_temperature > 0.0)) bad("init_temperature must be positive");
  if (!(cfg.actor_lr > 0.0)) bad("actor_lr must be positive");
  if (!(cfg.critic_lr > 0.0)) bad("critic_lr must be positive");
  if (!(cfg.temp_lr > 0.0)) bad("temp_lr must be positive");
  if (!(cfg.alpha_lr > 0.0)) bad("alpha_lr must be positive");
  if (!(cfg.m >= 0.0 && cfg.m <= 1.0)) bad("m must be in [0, 1]");
  if (cfg.history < 1) bad("history must be >= 1");
  if (!(cfg.alpha_init >= 0.0)) bad("alpha_init must be >= 0");
  if (cfg.buffer_capacity < 1) bad("buffer_capacity must be >= 1");
  if (cfg.eval_every <= 0) bad("eval_every must be positive");
  if (cfg.eval_episodes < 0) bad("eval_episodes must be >= 0");
  if (cfg.dynamics_output_norm != "layer_norm" && cfg.dynamics_output_norm != "none")
    bad("dynamics_output_norm must be layer_norm or none");
  if (cfg.grad_clip < 0.0) bad("grad_clip must be >= 0");
  if (cfg.z_dim <= 0) bad("z_dim must be positive");
  if (cfg.width <= 0) bad("width must be positive");
  if (cfg.gru_hidden <= 0) bad("gru_hidden must be positive");
  if (cfg.gru_out <= 0) bad("gru_out must be positive");
}

double resolved_target_entropy(const TrainConfig& cfg, int act_dim) {
  if (std::isnan(cfg.target_entropy)) return -static_cast<double>(act_dim);
  return cfg.target_entropy;
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<std::pair<std::string, std::string>> manifest_entries(const TrainConfig& cfg) {
  Algo algo = algo_from_string(cfg.algo);
  std::vector<std::pair<std::string, std::string>> e;
  auto put = [&](const std::string& k, const std::string& v) { e.emplace_back(k, v); };
  auto putd = [&](const std::string& k, double v) { put(k, format_g17(v)); };
  auto puti = [&](const std::string& k, long long v) { put(k, std::to_string(v)); };
  put("code_version", kCodeVersion);
  put("env", cfg.env_id);
  put("algo", cfg.algo);
  puti("steps", cfg.steps);
  puti("seed", static_cast<long long>(cfg.seed));
  put("out", cfg.out_dir);
  putd("gamma", cfg.gamma);
  puti("init_steps", cfg.init_steps);
  puti("batch", cfg.batch);
  puti("actor_update_freq", cfg.actor_update_freq);
  puti("target_update_freq", cfg.target_update_freq);
  putd("tau", cfg.tau);
  putd("init_temperature", cfg.init_temperature);
  putd("actor_lr", cfg.actor_lr);
  putd("critic_lr", cfg.critic_lr);
  putd("temp_lr", cfg.temp_lr);
  putd("alpha_lr", cfg.alpha_lr);
  putd("ip", cfg.ip);
  putd("m", cfg.m);
  puti("history", cfg.history);
  putd("alpha_init", cfg.alpha_init);
  puti("buffer_capacity", cfg.buffer_capacity);
  puti("eval_every", cfg.eval_every);
  puti("eval_episodes", cfg.eval_episodes);
  put("target_entropy",
      std::isnan(cfg.target_entropy) ? std::string("auto") : format_g17(cfg.target_entropy));
  put("dynamics_output_norm", cfg.dynamics_output_norm);
  putd("grad_clip", cfg.grad_clip);
  puti("z_dim", cfg.z_dim);
  puti("width", cfg.width);
  puti("gru_hidden", cfg.gru_hidden);
  puti("gru_out", cfg.gru_out);
  put("regularizer_enabled", cfg.regularizer_enabled ? "true" : "false");
  put("resume", cfg.resume ? "true" : "false");
  // Derived bookkeeping: the effective action-bound weight is zero whenever
  // the action pathway is absent, and module presence is recorded so a reader
  // can see which predictors a run instantiated.
  const bool act_path = (algo == Algo::mtc) && cfg.regularizer_enabled;
  const bool reg = (algo != Algo::sac) && cfg.regularizer_enabled;
  putd("m_effective", act_path ? cfg.m : 0.0);
  put("regularizer_active", reg ? "true" : "false");
  put("has_encoder", algo != Algo::sac ? "true" : "false");
  put("has_history_dynamics",
      (algo == Algo::mtc || algo == Algo::mtc_noa) ? "true" : "false");
  put("has_one_step_dynamics", algo == Algo::rpc ? "true" : "false");
  put("has_action_predictor", algo == Algo::mtc ? "true" : "false");
  return e;
}

}  // namespace mtc
