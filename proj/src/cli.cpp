#include "mtc/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mtc/checkpoint.hpp"
#include "mtc/common.hpp"
#include "mtc/compress.hpp"
#include "mtc/config.hpp"
#include "mtc/env.hpp"
#include "mtc/eval.hpp"
#include "mtc/gaussian_tc.hpp"
#include "mtc/lockfile.hpp"
#include "mtc/models.hpp"
#include "mtc/trainer.hpp"

namespace mtc {

namespace fs = std::filesystem;

namespace {

using Entries = std::vector<std::pair<std::string, std::string>>;

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm g{};
  gmtime_r(&now, &g);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &g);
  return buf;
}

// Every command leaves a manifest beside its outputs: resolved inputs, the
// code version, and — isolated on the final line so re-runs differ in exactly
// one line — the wall-clock timestamp.
void write_manifest(const std::string& path, const Entries& entries) {
  std::ofstream f(path, std::ios::trunc);
  require(static_cast<bool>(f), "cannot write manifest: " + path);
  for (const auto& [k, v] : entries) f << k << "=" << v << "\n";
  f << "timestamp=" << utc_timestamp() << "\n";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  require(static_cast<bool>(f), "cannot write: " + path);
  f << text;
  require(static_cast<bool>(f), "write failed: " + path);
}

ModelSet load_models(const std::string& ckpt_path) {
  ckpt::Map map = ckpt::load(ckpt_path);
  ModelConfig mc = ModelSet::config_from_checkpoint(map);
  ModelSet M(mc, 0);  // seed is irrelevant: every parameter is overwritten
  M.load(map);
  return M;
}

std::string join(const std::vector<std::string>& xs, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

template <typename T>
std::string join_nums(const std::vector<T>& xs) {
  std::vector<std::string> parts;
  parts.reserve(xs.size());
  for (const T& x : xs) {
    if constexpr (std::is_floating_point_v<T>)
      parts.push_back(format_g9(x));
    else
      parts.push_back(std::to_string(x));
  }
  return join(parts, ",");
}

std::vector<double> default_levels(const std::string& kind) {
  if (kind == "obs") return {0.02, 0.04, 0.06, 0.08, 0.1};
  if (kind == "act") return {0.1, 0.2, 0.3, 0.4, 0.5};
  if (kind == "mass") return {0.25, 0.5, 0.75, 1.25, 1.5, 1.75};
  if (kind == "distract") return {1, 2, 4, 8};
  throw UsageError("unknown noise kind '" + kind + "' (valid: obs, act, mass, distract)");
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string env, algo, config_path, out;
  long long steps = 0;
  uint64_t seed = 0;
  double ip = 0, m = 0;
  int history = 0;
  // which flags were actually given (CLI values override config-file values)
  bool has_algo = false, has_steps = false, has_seed = false, has_ip = false,
       has_m = false, has_history = false;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config_path.empty())
    for (const auto& [k, v] : parse_kv_file(a.config_path)) apply_kv(cfg, k, v);
  cfg.env_id = a.env;
  cfg.out_dir = a.out;
  if (a.has_algo) cfg.algo = a.algo;
  if (a.has_steps) cfg.steps = a.steps;
  if (a.has_seed) cfg.seed = a.seed;
  if (a.has_ip) cfg.ip = a.ip;
  if (a.has_m) cfg.m = a.m;
  if (a.has_history) cfg.history = a.history;
  validate_config(cfg);
  Trainer trainer(cfg);
  trainer.run();
  std::cout << "trained " << cfg.algo << " on " << cfg.env_id << " for " << cfg.steps
            << " steps -> " << cfg.out_dir << "\n";
  return 0;
}

// ---- eval-robustness --------------------------------------------------------

struct RobustArgs {
  std::string ckpt, env, kind, out;
  std::vector<double> levels;  // empty -> kind-specific default grid
  std::vector<uint64_t> seeds = {1};
  int episodes = 30;
};

int cmd_eval_robustness(const RobustArgs& a) {
  if (a.episodes < 0) throw UsageError("--episodes must be >= 0");
  if (a.seeds.empty()) throw UsageError("--seeds must be non-empty");
  std::vector<double> levels = a.levels.empty() ? default_levels(a.kind) : a.levels;
  fs::create_directories(a.out);
  DirLock lock(a.out + "/lock");

  ModelSet M = load_models(a.ckpt);
  const std::string method = to_string(M.cfg.algo);
  std::vector<SweepCell> cells =
      robustness_sweep(M, a.env, a.kind, levels, a.seeds, a.episodes);

  std::ostringstream csv;
  csv << "method,task,kind,level,seed,mean_return,ci90,episodes\n";
  for (const SweepCell& c : cells) {
    csv << method << ',' << a.env << ',' << c.kind << ',' << format_g9(c.level) << ','
        << c.seed << ',' << format_g9(c.mean_return) << ',' << format_g9(c.ci90) << ','
        << c.episodes << "\n";
  }
  write_text(a.out + "/robustness.csv", csv.str());

  write_manifest(a.out + "/manifest.txt",
                 {{"command", "eval-robustness"},
                  {"ckpt", a.ckpt},
                  {"env", a.env},
                  {"method", method},
                  {"noise_kind", a.kind},
                  {"levels", join_nums(levels)},
                  {"seeds", join_nums(a.seeds)},
                  {"episodes", std::to_string(a.episodes)},
                  {"code_version", kCodeVersion}});
  for (const SweepCell& c : cells)
    std::cout << a.kind << " level=" << format_g9(c.level) << " seed=" << c.seed
              << " mean_return=" << format_g9(c.mean_return) << " ci90=" << format_g9(c.ci90)
              << "\n";
  return 0;
}

// ---- eval-compress ----------------------------------------------------------

struct CompressArgs {
  std::string ckpt, env, out;
  int episodes = 30;
  uint64_t seed = 1;
};

// Rolls out deterministic evaluation episodes, stores each trajectory both as
// rounded canonical text (the compression input) and as a full-precision
// binary dump, and records the per-episode compressed byte counts.
int cmd_eval_compress(const CompressArgs& a) {
  if (a.episodes < 0) throw UsageError("--episodes must be >= 0");
  fs::create_directories(a.out);
  DirLock lock(a.out + "/lock");
  fs::create_directories(a.out + "/trajectories");

  ModelSet M = load_models(a.ckpt);
  const std::string method = to_string(M.cfg.algo);
  std::unique_ptr<Env> env = make_env(a.env, a.seed, "eval");

  std::ostringstream csv;
  csv << "method,task,episode,steps,episode_return,raw_bytes,compressed_bytes\n";
  std::vector<double> sizes;
  for (int i = 0; i < a.episodes; ++i) {
    Trajectory t = rollout_episode(*env, M);
    std::string text = trajectory_text(t);
    size_t zipped = block_compressed_size(text);
    write_file(a.out + "/trajectories/ep" + std::to_string(i) + ".txt", text);
    write_file(a.out + "/trajectories/ep" + std::to_string(i) + ".bin",
               trajectory_binary(t));
    csv << method << ',' << a.env << ',' << i << ',' << t.steps << ','
        << format_g9(t.ret) << ',' << text.size() << ',' << zipped << "\n";
    sizes.push_back(static_cast<double>(zipped));
  }
  write_text(a.out + "/compress.csv", csv.str());

  MeanCi mc = mean_ci90(sizes);
  write_manifest(a.out + "/manifest.txt",
                 {{"command", "eval-compress"},
                  {"ckpt", a.ckpt},
                  {"env", a.env},
                  {"method", method},
                  {"episodes", std::to_string(a.episodes)},
                  {"seed", std::to_string(a.seed)},
                  {"compressor", kDefaultCompressor},
                  {"code_version", kCodeVersion}});
  std::cout << "mean_compressed_bytes=" << format_g9(mc.mean) << " ci90=" << format_g9(mc.ci90)
            << " episodes=" << a.episodes << "\n";
  return 0;
}

// ---- eval-predict -----------------------------------------------------------

struct PredictArgs {
  std::string ckpt, env, out;
  std::vector<int> horizons = {3, 5, 8, 10};
  int episodes = 30;
  uint64_t seed = 1;
};

int cmd_eval_predict(const PredictArgs& a) {
  if (a.episodes < 2)
    throw UsageError("--episodes must be >= 2 (the held-out split needs at least one trajectory)");
  if (a.horizons.empty()) throw UsageError("--t must be non-empty");
  for (int t : a.horizons)
    if (t < 1) throw UsageError("--t values must be >= 1");
  fs::create_directories(a.out);
  DirLock lock(a.out + "/lock");
  fs::create_directories(a.out + "/trajectories");

  ModelSet M = load_models(a.ckpt);
  const std::string method = to_string(M.cfg.algo);
  std::unique_ptr<Env> env = make_env(a.env, a.seed, "eval");

  std::vector<Trajectory> data;
  long long min_steps = -1;
  for (int i = 0; i < a.episodes; ++i) {
    data.push_back(rollout_episode(*env, M));
    const Trajectory& t = data.back();
    min_steps = min_steps < 0 ? t.steps : std::min(min_steps, t.steps);
    write_file(a.out + "/trajectories/ep" + std::to_string(i) + ".txt", trajectory_text(t));
    write_file(a.out + "/trajectories/ep" + std::to_string(i) + ".bin", trajectory_binary(t));
  }
  for (int t : a.horizons)
    if (t >= min_steps)
      throw UsageError("--t " + std::to_string(t) + " is not smaller than the trajectory length " +
                       std::to_string(min_steps));

  std::ostringstream csv;
  csv << "method,task,t,nll,episodes\n";
  for (int t : a.horizons) {
    double nll = t_step_prediction_nll(data, t, a.seed);
    csv << method << ',' << a.env << ',' << t << ',' << format_g9(nll) << ',' << a.episodes
        << "\n";
    std::cout << "t=" << t << " nll=" << format_g9(nll) << "\n";
  }
  write_text(a.out + "/predict.csv", csv.str());

  write_manifest(a.out + "/manifest.txt",
                 {{"command", "eval-predict"},
                  {"ckpt", a.ckpt},
                  {"env", a.env},
                  {"method", method},
                  {"t", join_nums(a.horizons)},
                  {"episodes", std::to_string(a.episodes)},
                  {"seed", std::to_string(a.seed)},
                  {"code_version", kCodeVersion}});
  return 0;
}

// ---- tc-oracle --------------------------------------------------------------

struct OracleArgs {
  double rho = 0.0;
  int n = 8;
  long long samples = 1000000;
  uint64_t seed = 1;
  std::string out;
};

// Validates the Monte-Carlo lower-bound estimator against the closed-form
// total correlation of a stationary AR(1) Gaussian chain.
int cmd_tc_oracle(const OracleArgs& a) {
  if (!(a.rho > -1.0 && a.rho < 1.0)) throw UsageError("--rho must lie in (-1, 1)");
  if (a.n < 2) throw UsageError("--n must be >= 2");
  if (a.samples < 1) throw UsageError("--samples must be >= 1");
  fs::create_directories(a.out);
  DirLock lock(a.out + "/lock");

  double tc = ar1_tc_exact(a.n, a.rho);
  RngStream rng(a.seed, "oracle/mc");
  McEstimate est = ar1_bound_mc(a.n, a.rho, ar1_exact_conditionals(a.n, a.rho), a.samples, rng);

  std::ostringstream csv;
  csv << "rho,n,samples,tc_analytic,bound_estimate,bound_se\n";
  csv << format_g17(a.rho) << ',' << a.n << ',' << a.samples << ',' << format_g17(tc) << ','
      << format_g17(est.mean) << ',' << format_g17(est.se) << "\n";
  write_text(a.out + "/oracle.csv", csv.str());

  write_manifest(a.out + "/manifest.txt",
                 {{"command", "tc-oracle"},
                  {"rho", format_g17(a.rho)},
                  {"n", std::to_string(a.n)},
                  {"samples", std::to_string(a.samples)},
                  {"seed", std::to_string(a.seed)},
                  {"code_version", kCodeVersion}});
  std::cout << "tc_analytic=" << format_g9(tc) << "\n";
  std::cout << "bound_estimate=" << format_g9(est.mean) << "\n";
  std::cout << "bound_se=" << format_g9(est.se) << "\n";
  return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  bool normalize = false;
  std::string out;
};

struct ReportRow {
  std::string method, task, kind;
  double level = 0;
  uint64_t seed = 0;
  double mean_return = 0, ci90 = 0;
  int episodes = 0;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double_field(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed numeric field '" + s + "' in " + where);
  }
}

std::vector<ReportRow> read_result_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read input: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("empty input: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expect = "method,task,kind,level,seed,mean_return,ci90,episodes";
  if (line != expect)
    throw DataError("unexpected header in " + path + " (expected '" + expect + "')");
  std::vector<ReportRow> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> c = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (c.size() != 8) throw DataError("expected 8 fields in " + where);
    ReportRow r;
    r.method = c[0];
    r.task = c[1];
    r.kind = c[2];
    r.level = parse_double_field(c[3], where);
    r.seed = static_cast<uint64_t>(parse_double_field(c[4], where));
    r.mean_return = parse_double_field(c[5], where);
    r.ci90 = parse_double_field(c[6], where);
    r.episodes = static_cast<int>(parse_double_field(c[7], where));
    rows.push_back(std::move(r));
  }
  return rows;
}

// Merges per-run result tables and attaches a per-method score to every row:
// the method's mean return within its (task, kind, level) group, optionally
// normalized so the best method in the group scores 1.0.
int cmd_report(const ReportArgs& a) {
  if (a.inputs.empty()) throw UsageError("--inputs must list at least one result CSV");
  fs::create_directories(a.out);
  DirLock lock(a.out + "/lock");

  std::vector<ReportRow> rows;
  for (const std::string& p : a.inputs) {
    std::vector<ReportRow> part = read_result_csv(p);
    rows.insert(rows.end(), part.begin(), part.end());
  }

  auto group_key = [](const ReportRow& r) { return r.task + "\x1f" + r.kind + "\x1f" + format_g9(r.level); };
  // First-appearance order for groups and for methods within a group keeps the
  // output independent of map iteration order.
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::string>> method_order;
  std::map<std::string, std::map<std::string, std::vector<double>>> returns;
  for (const ReportRow& r : rows) {
    std::string g = group_key(r);
    if (!returns.count(g)) group_order.push_back(g);
    auto& per_method = returns[g];
    if (!per_method.count(r.method)) method_order[g].push_back(r.method);
    per_method[r.method].push_back(r.mean_return);
  }

  std::map<std::string, std::map<std::string, double>> score;
  for (const std::string& g : group_order) {
    std::vector<double> means;
    for (const std::string& m : method_order[g]) {
      const std::vector<double>& xs = returns[g][m];
      double s = 0;
      for (double x : xs) s += x;
      means.push_back(s / static_cast<double>(xs.size()));
    }
    std::vector<double> scores = a.normalize ? normalize_scores(means) : means;
    for (size_t i = 0; i < means.size(); ++i) score[g][method_order[g][i]] = scores[i];
  }

  std::ostringstream csv;
  csv << "method,task,kind,level,seed,mean_return,ci90,normalized_score\n";
  for (const ReportRow& r : rows) {
    csv << r.method << ',' << r.task << ',' << r.kind << ',' << format_g9(r.level) << ','
        << r.seed << ',' << format_g9(r.mean_return) << ',' << format_g9(r.ci90) << ','
        << format_g9(score[group_key(r)][r.method]) << "\n";
  }
  write_text(a.out + "/report.csv", csv.str());

  write_manifest(a.out + "/manifest.txt",
                 {{"command", "report"},
                  {"inputs", join(a.inputs, ";")},
                  {"normalize", a.normalize ? "true" : "false"},
                  {"rows", std::to_string(rows.size())},
                  {"code_version", kCodeVersion}});
  std::cout << "report rows=" << rows.size() << " groups=" << group_order.size() << " -> "
            << a.out << "/report.csv\n";
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"total-correlation regularized actor-critic: training, evaluation and oracles",
               "mtc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kCodeVersion));

  // train ---------------------------------------------------------------
  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "train an agent and write run artifacts");
  train->add_option("--env", tr.env, "environment id")
      ->required()
      ->check(CLI::IsMember(env_ids()));
  CLI::Option* o_algo =
      train->add_option("--algo", tr.algo, "algorithm variant")
          ->check(CLI::IsMember({"mtc", "mtc-noa", "rpc", "sac"}));
  CLI::Option* o_steps = train->add_option("--steps", tr.steps, "environment steps");
  CLI::Option* o_seed = train->add_option("--seed", tr.seed, "master seed");
  CLI::Option* o_ip = train->add_option("--ip", tr.ip, "information constraint level I_p");
  CLI::Option* o_m = train->add_option("--m", tr.m, "state/action bound mixing weight");
  CLI::Option* o_hist = train->add_option("--history", tr.history, "window length H");
  train->add_option("--config", tr.config_path, "key=value config file (flags override it)")
      ->check(CLI::ExistingFile);
  train->add_option("--out", tr.out, "output directory")->required();
  train->callback([&] {
    tr.has_algo = o_algo->count() > 0;
    tr.has_steps = o_steps->count() > 0;
    tr.has_seed = o_seed->count() > 0;
    tr.has_ip = o_ip->count() > 0;
    tr.has_m = o_m->count() > 0;
    tr.has_history = o_hist->count() > 0;
    cmd_train(tr);
  });

  // eval-robustness -------------------------------------------------------
  RobustArgs rb;
  CLI::App* robust =
      app.add_subcommand("eval-robustness", "sweep a perturbation grid over a checkpoint");
  robust->add_option("--ckpt", rb.ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  robust->add_option("--env", rb.env, "environment id")
      ->required()
      ->check(CLI::IsMember(env_ids()));
  robust->add_option("--noise-kind", rb.kind, "perturbation kind")
      ->required()
      ->check(CLI::IsMember({"obs", "act", "mass", "distract"}));
  robust->add_option("--levels", rb.levels, "perturbation levels (default: kind-specific grid)")
      ->delimiter(',');
  robust->add_option("--seeds", rb.seeds, "evaluation seeds (default: 1)")->delimiter(',');
  robust->add_option("--episodes", rb.episodes, "episodes per cell (default: 30)");
  robust->add_option("--out", rb.out, "output directory")->required();
  robust->callback([&] { cmd_eval_robustness(rb); });

  // eval-compress -----------------------------------------------------------
  CompressArgs cp;
  CLI::App* compress =
      app.add_subcommand("eval-compress", "measure compressed trajectory sizes of a checkpoint");
  compress->add_option("--ckpt", cp.ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  compress->add_option("--env", cp.env, "environment id")
      ->required()
      ->check(CLI::IsMember(env_ids()));
  compress->add_option("--episodes", cp.episodes, "episodes (default: 30)");
  compress->add_option("--seed", cp.seed, "evaluation seed (default: 1)");
  compress->add_option("--out", cp.out, "output directory")->required();
  compress->callback([&] { cmd_eval_compress(cp); });

  // eval-predict -------------------------------------------------------------
  PredictArgs pd;
  CLI::App* predict = app.add_subcommand(
      "eval-predict", "fit t-step action predictors and report held-out NLL");
  predict->add_option("--ckpt", pd.ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  predict->add_option("--env", pd.env, "environment id")
      ->required()
      ->check(CLI::IsMember(env_ids()));
  predict->add_option("--t", pd.horizons, "prediction offsets (default: 3,5,8,10)")
      ->delimiter(',');
  predict->add_option("--episodes", pd.episodes, "episodes (default: 30)");
  predict->add_option("--seed", pd.seed, "evaluation seed (default: 1)");
  predict->add_option("--out", pd.out, "output directory")->required();
  predict->callback([&] { cmd_eval_predict(pd); });

  // tc-oracle ------------------------------------------------------------------
  OracleArgs oa;
  CLI::App* oracle = app.add_subcommand(
      "tc-oracle", "check the Monte-Carlo bound against the analytic AR(1) total correlation");
  oracle->add_option("--rho", oa.rho, "AR(1) correlation in (-1, 1)")->required();
  oracle->add_option("--n", oa.n, "chain length (default: 8)");
  oracle->add_option("--samples", oa.samples, "Monte-Carlo sample chains (default: 1000000)");
  oracle->add_option("--seed", oa.seed, "sampling seed (default: 1)");
  oracle->add_option("--out", oa.out, "output directory")->required();
  oracle->callback([&] { cmd_tc_oracle(oa); });

  // report -----------------------------------------------------------------------
  ReportArgs rp;
  CLI::App* report =
      app.add_subcommand("report", "merge result CSVs and attach per-method scores");
  report->add_option("--inputs", rp.inputs, "result CSV files")->required();
  report->add_flag("--normalize", rp.normalize, "scale scores so the best method gets 1.0");
  report->add_option("--out", rp.out, "output directory")->required();
  report->callback([&] { cmd_report(rp); });

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::usage);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  }
  return 0;
}

}  // namespace mtc
