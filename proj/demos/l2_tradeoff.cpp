// Two-type market: efficiency and spike risk of the four scheduling strategies
// as the flexible arrival rate grows. Prints a CSV table to stdout.
//
//   demo_l2_tradeoff [horizon]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "oligo/l2_analysis.hpp"
#include "oligo/l2_closed_form.hpp"
#include "oligo/mc_simulator.hpp"

using namespace oligo;

int main(int argc, char** argv) {
  const long long horizon = argc > 1 ? std::atoll(argv[1]) : 200000;
  std::printf("q,strategy,a,b,efficiency,var_u,q95,q95_se\n");
  for (double q : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const MarketParamsL2 p{q, q, 15, 15, 4, 4};
    const auto [naive, none] = baseline_strategies();
    const std::pair<const char*, LinearStrategyL2> rows[] = {
        {"none", none}, {"naive", naive}, {"nc", mpe_strategy(p)}, {"coop", coop_strategy(p)}};
    for (const auto& [name, s] : rows) {
      SimConfig c;
      c.horizon = horizon;
      c.seed = 42;
      c.quantile_levels = {0.95};
      const auto st = simulate_l2(s, p, c);
      const auto m = stationary_moments(s, p);
      const auto& q95 = st.quantiles.at(0.95);
      std::printf("%.1f,%s,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f\n", q, name, s.a, s.b, efficiency(s, p), m.var_u(),
                  q95.value, q95.se);
    }
  }
}
