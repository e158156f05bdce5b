// OpenMP kernels against their serial references: shortest-path tree
// preparation and whole simulations (trip building fans out per vehicle).

#include <omp.h>

#include <chrono>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "poolsim/scenario.hpp"

using namespace poolsim;

namespace {

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const std::string& kernel, double serial, double parallel, bool same) {
  std::cout << kernel << ',' << omp_get_max_threads() << ',' << serial << ',' << parallel << ','
            << (parallel > 0 ? serial / parallel : 0.0) << ',' << (same ? "yes" : "no") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs OpenMP kernel timings"};
  int grid = 40, reps = 3, capacity = 4, fleet = 100;
  std::string config = "configs/grid20.json";
  app.add_option("--grid", grid, "Side of the square grid used for tree preparation");
  app.add_option("--reps", reps, "Repetitions; the fastest is reported");
  app.add_option("--config", config, "Scenario for the simulation kernel");
  app.add_option("--capacity", capacity);
  app.add_option("--fleet", fleet);
  CLI11_PARSE(app, argc, argv);

  std::cout << "kernel,threads,serial_s,parallel_s,speedup,identical\n";

  GridSpec g;
  g.rows = g.cols = grid;
  RoadNetwork net = make_grid(g, NetworkDefaults{});
  std::vector<NodeIndex> all(net.node_count());
  std::iota(all.begin(), all.end(), NodeIndex{0});
  bool same = true;
  const double ts = best_of(reps, [&] {
    TravelTimes tt(net);
    tt.prepare_serial(all);
  });
  const double tp = best_of(reps, [&] {
    TravelTimes tt(net);
    tt.prepare(all);
  });
  {
    TravelTimes a(net), b(net);
    a.prepare_serial(all);
    b.prepare(all);
    for (NodeIndex s = 0; s < static_cast<NodeIndex>(all.size()); s += 7)
      for (NodeIndex t = 0; t < static_cast<NodeIndex>(all.size()); t += 13)
        same = same && a.time(s, t) == b.time(s, t) && a.next_edge(s, t) == b.next_edge(s, t);
  }
  row("prepare_trees_" + std::to_string(grid) + "x" + std::to_string(grid), ts, tp, same);

  ScenarioConfig c = load_config_file(config);
  PreparedScenario p = prepare_scenario(c);
  SimConfig sc = sim_config(c, fleet, capacity);
  std::string d_serial, d_parallel;
  sc.parallel = false;
  const double ss = best_of(reps, [&] { d_serial = event_log_digest(run_simulation(p.net, p.requests, sc)); });
  sc.parallel = true;
  const double sp = best_of(reps, [&] { d_parallel = event_log_digest(run_simulation(p.net, p.requests, sc)); });
  row("simulation_" + c.name + "_cap" + std::to_string(capacity), ss, sp, d_serial == d_parallel);
  return 0;
}
