// H2 tradeoff surface for L types: synthesized front points next to the
// boundedly rational heuristic class. Prints CSV to stdout.
//
//   demo_pareto_front [L] [threads]

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "oligo/lti_core.hpp"
#include "oligo/pareto_synthesis.hpp"

using namespace oligo;

int main(int argc, char** argv) {
  const int L = argc > 1 ? std::atoi(argv[1]) : 3;
  const auto ss = build_state_space(L);

  std::vector<OutputWeights> grid;
  for (double s : {0.3, 1.0, 3.0, 10.0})
    for (int k = 0; k < 6; ++k) {
      const double th = 0.1 + 1.37 * k / 5.0;
      grid.push_back(OutputWeights::normalized(std::cos(th), std::sin(th), s));
    }
  SynthesisConfig cfg;
  cfg.threads = argc > 2 ? std::atoi(argv[2]) : 1;
  const auto front = trace_front(grid, ss, cfg);
  for (const auto& w : front.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  std::printf("source,param,z1sq,z2sq,z3sq\n");
  for (const auto& p : front.points)
    std::printf("front,%.4f,%.10g,%.10g,%.10g\n", p.weights.alpha3, p.report.z1sq, p.report.z2sq, p.report.z3sq);
  for (int k = 0; k <= 10; ++k) {
    const double delta = 0.05 * k;
    const auto r = h2_norms(make_f_br(delta, ss), ss);
    std::printf("f_br,%.2f,%.10g,%.10g,%.10g\n", delta, r.z1sq, r.z2sq, r.z3sq);
  }
}
