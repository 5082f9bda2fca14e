// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "oracles.hpp"
#include "sme/sme.hpp"

namespace fs = std::filesystem;
using namespace sme;

namespace {

// Tolerances.
constexpr double ks_family_alpha = 0.01;
constexpr double mass_tolerance = 1e-10;
constexpr double lipschitz_slack = 1e-9;
constexpr double collapse_floor = 0.2;
constexpr double orthogonality_tolerance = 1e-9;
constexpr double bias_tolerance = 1e-12;
constexpr double center_tilde_target = 0.75;
constexpr double center_tilde_tolerance = 0.01;
constexpr double center_reward_target = 0.115;
constexpr double center_reward_tolerance = 0.015;
constexpr double table_tolerance = 0.05;
constexpr double analytic_tolerance = 0.03;
constexpr double acceptance_rate_tolerance = 0.02;
constexpr double measure_seconds = 5.0;
constexpr double table_seconds = 120.0;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EnvConfig default_cfg() {
  EnvConfig cfg;
  cfg.master_seed = 1;
  return cfg;
}

double largest_singular_value(const Matrix& w) {
  // power iteration on W^T W
  const std::size_t n = w.cols();
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < 5000; ++it) {
    std::vector<double> wv(w.rows(), 0.0), next(n, 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) wv[i] += w(i, j) * v[j];
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < w.rows(); ++i) next[j] += w(i, j) * wv[i];
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (auto& x : next) x /= norm;
    const bool done = std::abs(norm - lambda) <= 1e-14 * norm;
    lambda = norm;
    v = std::move(next);
    if (done) break;
  }
  return std::sqrt(lambda);
}

void measure_preservation() {
  const auto t0 = std::chrono::steady_clock::now();
  const Environment env(default_cfg());
  RandomStream rs(1, 1001);
  std::vector<double> a(4);
  for (auto& v : a) v = rs.uniform();
  const std::size_t n = 100000;
  std::vector<std::vector<double>> cols(8, std::vector<double>(n));
  std::vector<double> s(8), out(8);
  for (std::size_t k = 0; k < n; ++k) {
    for (auto& v : s) v = rs.uniform();
    step_transition(env.kernel(), s, a, std::span<double>(out));
    for (std::size_t j = 0; j < 8; ++j) cols[j][k] = out[j];
  }
  double worst = 0.0;
  for (const auto& c : cols) worst = std::max(worst, oracle::ks_distance(c));
  const double crit = std::sqrt(-0.5 * std::log(ks_family_alpha / 8.0 / 2.0)) / std::sqrt(static_cast<double>(n));
  const double secs = seconds_since(t0);
  report("measure_preservation", worst < crit && secs < measure_seconds,
         fmt("max KS %.5f < %.5f, %.2f s < %.0f s", worst, crit, secs, measure_seconds));
}

void action_mass() {
  const Environment env(default_cfg());
  const auto& w = env.kernel().weights;
  RandomStream rs(1, 1002);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    std::vector<double> a(4);
    double l1 = 0.0;
    for (auto& v : a) l1 += (v = rs.uniform());
    double projected = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double x = 0.0;
      for (std::size_t i = 0; i < w.rows(); ++i) x += a[i] * w(i, j);
      projected += std::abs(x);
    }
    worst = std::max(worst, std::abs(projected - l1));
  }
  report("action_mass", worst <= mass_tolerance, fmt("max | ||aW||_1 - ||a||_1 | = %.3g <= %.0e", worst, mass_tolerance));
}

void variance_bounds() {
  int checked = 0, bad = 0;
  for (int ns : {1, 4, 8, 16}) {
    for (int na : {1, 4, 8, 16}) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        EnvConfig cfg;
        cfg.n_state = ns;
        cfg.n_action = na;
        cfg.master_seed = seed;
        const auto k = init_kernel(cfg);
        double fro = 0.0;
        for (double x : k.weights.data()) fro += x * x;
        const double v = fro / 12.0;
        const double lo = na / (12.0 * ns) - 1e-15;
        const double hi = na / 12.0 + 1e-15;
        ++checked;
        if (!(v >= lo && v <= hi)) ++bad;
      }
    }
  }
  report("variance_bounds", bad == 0, fmt("%.0f of %.0f kernels inside [N_a/(12N_s), N_a/12]", checked - bad, checked));
}

// Independent uniform pairs against 2 max(1, ||W||_2).
void lipschitz() {
  const Environment env(default_cfg());
  const auto& k = env.kernel();
  const double bound = 2.0 * std::max(1.0, largest_singular_value(k.weights)) + lipschitz_slack;
  RandomStream rs(1, 1004);
  double worst = 0.0;
  std::vector<double> s1(8), s2(8), a1(4), a2(4), o1(8), o2(8);
  for (int p = 0; p < 100000; ++p) {
    for (auto& v : s1) v = rs.uniform();
    for (auto& v : s2) v = rs.uniform();
    for (auto& v : a1) v = rs.uniform();
    for (auto& v : a2) v = rs.uniform();
    step_transition(k, s1, a1, std::span<double>(o1));
    step_transition(k, s2, a2, std::span<double>(o2));
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < 8; ++j) num += (o1[j] - o2[j]) * (o1[j] - o2[j]);
    for (std::size_t j = 0; j < 8; ++j) den += (s1[j] - s2[j]) * (s1[j] - s2[j]);
    for (std::size_t i = 0; i < 4; ++i) den += (a1[i] - a2[i]) * (a1[i] - a2[i]);
    if (den > 0.0) worst = std::max(worst, std::sqrt(num / den));
  }
  const double sigma = largest_singular_value(k.weights);
  report("lipschitz", worst <= bound,
         fmt("max ratio %.4f <= %.4f over 1e5 pairs (2 sqrt(1 + ||W||^2) = %.4f)", worst, bound,
             2.0 * std::sqrt(1.0 + sigma * sigma)));
}

void non_collapse() {
  double worst = 1.0;
  int worst_ns = 0, worst_depth = 0;
  std::uint32_t point = 0;
  for (int ns : {1, 2, 4, 8, 16}) {
    for (int depth : {1, 5, 10, 50}) {
      EnvConfig cfg = default_cfg();
      cfg.n_state = ns;
      cfg.policy_complexity = depth;
      auto ps = derive_stream(cfg.master_seed, StreamId::policy_weights);
      const auto policy = build_policy(cfg, ps);
      RandomStream rs(1, 1100 + point++);
      std::vector<RunningStats> st(4);
      std::vector<double> s(static_cast<std::size_t>(ns));
      for (int k = 0; k < 10000; ++k) {
        for (auto& v : s) v = rs.uniform();
        const auto a = optimal_action(policy, s);
        for (std::size_t j = 0; j < 4; ++j) st[j].push(a[j]);
      }
      for (const auto& x : st) {
        if (x.stddev() < worst) {
          worst = x.stddev();
          worst_ns = ns;
          worst_depth = depth;
        }
      }
    }
  }
  report("dun_non_collapse", worst > collapse_floor,
         fmt("min action std %.4f > %.1f (at N_s=%.0f, depth=%.0f)", worst, collapse_floor, worst_ns, worst_depth));
}

void layer_math() {
  double orth = 0.0, bias = 0.0;
  for (int ns : {1, 2, 4, 8, 16}) {
    for (int na : {1, 4, 8, 16}) {
      for (int depth : {1, 5}) {
        EnvConfig cfg = default_cfg();
        cfg.n_state = ns;
        cfg.n_action = na;
        cfg.policy_complexity = depth;
        auto ps = derive_stream(cfg.master_seed, StreamId::policy_weights);
        for (const auto& layer : build_policy(cfg, ps).layers) {
          const auto& w = layer.weights;
          for (std::size_t r = 0; r < w.rows(); ++r) {
            double sum = 0.0;
            for (double x : w.row(r)) sum += x;
            bias = std::max(bias, std::abs(layer.bias[r] + 0.5 * sum));
          }
          if (w.rows() > w.cols()) continue;
          for (std::size_t i = 0; i < w.rows(); ++i) {
            for (std::size_t j = 0; j < w.rows(); ++j) {
              double g = 0.0;
              for (std::size_t c = 0; c < w.cols(); ++c) g += w(i, c) * w(j, c);
              orth = std::max(orth, std::abs(g - (i == j ? 12.0 : 0.0)));
            }
          }
        }
      }
    }
  }
  report("layer_math", orth <= orthogonality_tolerance && bias <= bias_tolerance,
         fmt("max |WW^T - 12I| %.2g <= %.0e, max |b + 0.5 W1| %.2g <= %.0e", orth, orthogonality_tolerance, bias,
             bias_tolerance));
}

void optimal_return() {
  Environment env(default_cfg());
  const auto summary = rollout(env, optimal_agent(env), 5);
  bool ok = true;
  for (const auto& ep : summary.episodes) ok = ok && ep.total_return == 100.0 && ep.length == 100;
  report("optimal_agent_return", ok, fmt("5 episodes, mean return %.12g (each must be exactly 100)", summary.mean_return));
}

void trivial_policy() {
  Environment env(default_cfg());
  const auto summary = rollout(env, constant_agent(4, 0.5), 200);
  const bool tilde_ok = std::abs(summary.mean_tilde_r - center_tilde_target) <= center_tilde_tolerance;
  const bool reward_ok = std::abs(summary.mean_step_reward - center_reward_target) <= center_reward_tolerance;
  report("trivial_policy_statistics", tilde_ok && reward_ok,
         fmt("mean tilde_r %.4f (0.75 +- 0.01), mean step reward %.4f (0.115 +- 0.015)", summary.mean_tilde_r,
             summary.mean_step_reward));
}

void behavior_table() {
  struct Cell {
    double nu;
    int depth;
    double table;
  };
  const std::vector<Cell> cells{{0.0, 1, 1.000},  {0.0, 10, 1.000},  {0.0, 50, 1.000},  {0.1, 1, 0.982},
                                {0.1, 10, 0.979}, {0.1, 50, 0.983},  {0.25, 1, 0.957}, {0.25, 10, 0.960},
                                {0.25, 50, 0.958}, {0.5, 1, 0.901},  {0.5, 10, 0.916}, {0.5, 50, 0.918},
                                {1.0, 1, 0.836},  {1.0, 10, 0.817},  {1.0, 50, 0.840}};
  const auto t0 = std::chrono::steady_clock::now();
  double worst_table = 0.0, worst_analytic = 0.0;
  std::string worst_cell;
  for (const auto& c : cells) {
    EnvConfig cfg = default_cfg();
    cfg.policy_complexity = c.depth;
    const Environment env(cfg);
    BehaviorPolicy bp(env, c.nu);
    const auto m = collect_dataset(env, bp, 50000, [](const TransitionRecord&) {});
    const double dt = std::abs(m.mean_tilde_r - c.table);
    const double da = std::abs(m.mean_tilde_r - oracle::behavior_similarity(c.nu));
    if (dt > worst_table) {
      worst_table = dt;
      worst_cell = fmt("nu=%.2f C=%.0f mean %.4f", c.nu, c.depth, m.mean_tilde_r);
    }
    worst_analytic = std::max(worst_analytic, da);
  }
  const double secs = seconds_since(t0);
  report("behavior_policy_table", worst_table <= table_tolerance && worst_analytic <= analytic_tolerance &&
                                      secs < table_seconds,
         fmt("max |mean - table| %.4f <= 0.05, max |mean - (1 - nu/6)| %.4f <= 0.03, %.1f s < %.0f s", worst_table,
             worst_analytic, secs, table_seconds) +
             " [" + worst_cell + "]");
}

void ood_partition() {
  const ShellPartition partition;
  RandomStream rs(1, 1010);
  std::vector<double> s(8);
  int bad = 0;
  for (int k = 0; k < 100000; ++k) {
    for (auto& v : s) v = -0.5 + 2.0 * rs.uniform();
    const double e = 2.0 * [&] {
      double m = 0.0;
      for (double v : s) m = std::max(m, std::abs(v - 0.5));
      return m;
    }() - 1.0;
    int hits = 0;
    for (std::size_t c = 0; c < partition.category_count(); ++c) {
      const bool in = c == 0 ? e <= 0.0 : (e > partition.eps_low(c) && e <= partition.eps_high(c));
      if (in && partition.category_of(s) != c) ++bad;
      hits += in;
    }
    if (hits != 1) ++bad;
  }
  RandomStream shell(1, 1011);
  const double rate = sample_shell(shell, 0.4, 0.6, 8, 50000).acceptance_rate();
  const double expected = oracle::shell_acceptance(0.4, 0.6, 8);
  report("ood_partition", bad == 0 && std::abs(rate - expected) <= acceptance_rate_tolerance,
         fmt("%.0f misassigned of 1e5; acceptance %.4f vs %.4f +- 0.02", bad, rate, expected));
}

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" SME_CLI_PATH "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "sme_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> steps{
      "gen --seed 1 --complexity 5 --out env.json",
      "rollout --env env.json --policy noise:0.5 --episodes 20 --out rollout.csv",
      "eval --env env.json --policy center --n-per-shell 5000 --out eval.csv",
      "dataset --env env.json --nu 0.25 --n 20000 --out data",
  };
  bool ran = true;
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    for (const auto& step : steps) ran = ran && run_cli(root / run, step) == 0;
  }
  int files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    ++files;
    const auto other = root / "b" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
  }
  report("determinism", ran && files > 0 && differing == 0,
         fmt("%.0f output files compared, %.0f differ", files, differing) + (ran ? "" : " (a command failed)"));
}

}  // namespace

int main() {
  measure_preservation();
  action_mass();
  variance_bounds();
  lipschitz();
  non_collapse();
  layer_math();
  optimal_return();
  trivial_policy();
  behavior_table();
  ood_partition();
  determinism();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
