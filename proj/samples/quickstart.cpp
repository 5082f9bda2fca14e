// Builds the default environment, plays one episode with pi*, then one with a
// constant agent, and prints what happened.
#include <cstdio>

#include "sme/sme.hpp"

int main() {
  sme::EnvConfig cfg;
  cfg.master_seed = 1;
  sme::Environment env(cfg);

  auto play = [&](const sme::PolicyFn& agent, const char* name) {
    auto obs = env.reset(0);
    double total = 0.0;
    int steps = 0;
    while (true) {
      auto step = env.step(agent(obs));
      total += step.reward;
      ++steps;
      obs = step.observation;
      if (step.terminated || step.truncated) break;
    }
    std::printf("%-10s return %.3f over %d steps\n", name, total, steps);
  };

  play(sme::optimal_agent(env), "optimal");
  play(sme::constant_agent(env.action_dim(), 0.5), "center");

  const auto results = sme::verify_environment(env, sme::VerifyBudget{10000, 1000, 10000, 10000, 1000, 0, 4});
  std::printf("%s", sme::check_report_table(results).c_str());
  return 0;
}
