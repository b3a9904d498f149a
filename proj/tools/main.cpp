#include "inspectsim/metrics.hpp"
#include "inspectsim/scenario.hpp"
#include "inspectsim/simulator.hpp"
#include "inspectsim/svg.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace inspectsim;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitSchema = 2;
constexpr int kExitRuntime = 3;

void print_error_json(const std::string& kind, const nlohmann::json& detail) {
  nlohmann::json j = detail;
  j["error"] = kind;
  std::cerr << j.dump() << "\n";
}

Scenario load_from_manifest(const std::string& scenario_path, const std::string& figure) {
  if (!scenario_path.empty()) return load_scenario_file(scenario_path);
  const auto& bundled = bundled_scenarios();
  auto it = bundled.find(figure);
  if (it == bundled.end()) {
    throw SchemaError("figure", "unknown figure tag '" + figure + "'");
  }
  return load_scenario(it->second, figure);
}

int thread_budget(int trials) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int budget = static_cast<int>(hw);
  if (const char* env = std::getenv("INSPECT_SIM_THREADS")) {
    try {
      budget = std::max(1, std::stoi(env));
    } catch (...) {
      budget = 1;
    }
  }
  return std::min(budget, std::max(trials, 1));
}

std::vector<double> column(const Trace& trace, double TraceRow::* member) {
  std::vector<double> out;
  out.reserve(trace.rows.size());
  for (const auto& r : trace.rows) out.push_back(r.*member);
  return out;
}

std::vector<double> times(const Trace& trace) { return column(trace, &TraceRow::t); }

void emit_plots(const fs::path& dir, const Trace& trace, bool closed_loop) {
  const auto t = times(trace);
  write_svg_plot((dir / "e_n.svg").string(), "plane normal error", "t [s]", "e_n [rad]",
                 {{"e_n", t, column(trace, &TraceRow::e_n)}});
  write_svg_plot((dir / "e_d.svg").string(), "plane depth error", "t [s]", "e_d [m]",
                 {{"global", t, column(trace, &TraceRow::e_d_global)},
                  {"camera", t, column(trace, &TraceRow::e_d_cam)}});
  if (!closed_loop) return;
  auto vec_component = [&](Vec3 TraceRow::* member, int axis) {
    std::vector<double> out;
    out.reserve(trace.rows.size());
    for (const auto& r : trace.rows) out.push_back((r.*member)[axis]);
    return out;
  };
  write_svg_plot((dir / "tracking_error.svg").string(), "tracking error", "t [s]", "e",
                 {{"separation [m]", t, vec_component(&TraceRow::e, 0)},
                  {"sweep [m]", t, vec_component(&TraceRow::e, 1)},
                  {"velocity [m/s]", t, vec_component(&TraceRow::e, 2)}});
  write_svg_plot((dir / "velocity.svg").string(), "platform velocity", "t [s]", "v [m/s]",
                 {{"vx", t, vec_component(&TraceRow::v, 0)},
                  {"vy", t, vec_component(&TraceRow::v, 1)},
                  {"vz", t, vec_component(&TraceRow::v, 2)}});
  write_svg_plot((dir / "control.svg").string(), "control input", "t [s]", "u [m/s^2]",
                 {{"ux", t, vec_component(&TraceRow::u, 0)},
                  {"uy", t, vec_component(&TraceRow::u, 1)},
                  {"uz", t, vec_component(&TraceRow::u, 2)}});
}

int cmd_run(const std::string& scenario_path, const std::string& figure, const std::string& out,
            std::optional<std::uint64_t> seed_override) {
  Scenario sc = load_from_manifest(scenario_path, figure);
  const std::uint64_t noise_seed = seed_override.value_or(sc.seed);
  fs::create_directories(out);
  const Trace trace = run_with_seed(sc, noise_seed);
  write_trace_csv((fs::path(out) / "trace.csv").string(), trace);
  const RunSummary summary = summarize(trace, sc.metrics);
  write_file_atomic((fs::path(out) / "metrics.json").string(),
                    summary_to_json(summary, sc.name, noise_seed));
  emit_plots(out, trace, sc.mode == RunMode::ClosedLoop);
  std::cout << "run: " << sc.name << " -> " << out << " (" << trace.rows.size() << " ticks)\n";
  return kExitOk;
}

int cmd_validate(const std::string& scenario_path, const std::string& figure) {
  const Scenario sc = load_from_manifest(scenario_path, figure);
  std::cout << "valid: " << sc.name << " (" << sc.planes.size() << " planes, "
            << sc.tick_count() << " ticks)\n";
  return kExitOk;
}

int cmd_sweep(const std::string& scenario_path, const std::string& figure, const std::string& axis,
              const std::vector<double>& values, const std::string& out) {
  if (values.size() < 2) {
    throw SchemaError("values", "sweep requires at least two values");
  }
  Scenario base = load_from_manifest(scenario_path, figure);
  fs::create_directories(out);

  std::vector<double> ttt;
  std::ostringstream combined;
  combined << axis << ",time_to_threshold_s\n";
  for (double value : values) {
    Scenario sc = base;
    if (axis == "velocity") {
      const double speed = sc.x0.v.norm();
      if (!(speed > 0.0)) throw SchemaError("platform.velocity", "sweep base velocity is zero");
      sc.x0.v = sc.x0.v / speed * value;
    } else if (axis == "features") {
      const int count = static_cast<int>(std::llround(value));
      if (count < 1) throw SchemaError("values", "feature counts must be >= 1");
      for (auto& ps : sc.planes) ps.feature_count = count;
    } else {
      throw SchemaError("axis", "expected \"velocity\" or \"features\"");
    }
    const Trace trace = run(sc);
    const RunSummary summary = summarize(trace, sc.metrics);
    std::ostringstream tag;
    tag << axis << "_" << value;
    write_trace_csv((fs::path(out) / ("trace_" + tag.str() + ".csv")).string(), trace);
    write_file_atomic((fs::path(out) / ("metrics_" + tag.str() + ".json")).string(),
                      summary_to_json(summary, sc.name + ":" + tag.str(), sc.seed));
    combined << value << ',' << summary.time_to_threshold << '\n';
    ttt.push_back(summary.time_to_threshold);
  }
  write_file_atomic((fs::path(out) / "sweep.csv").string(), combined.str());

  bool ordered = true;
  for (std::size_t i = 1; i < ttt.size(); ++i) {
    const bool ok = axis == "velocity" ? ttt[i] < ttt[i - 1] : ttt[i] <= ttt[i - 1];
    if (std::isnan(ttt[i]) || std::isnan(ttt[i - 1]) || !ok) ordered = false;
  }
  std::cout << "sweep " << axis << ": time-to-threshold";
  for (double v : ttt) std::cout << ' ' << v;
  std::cout << (ordered ? " (ordering holds)" : " (ordering VIOLATED)") << "\n";
  return kExitOk;
}

struct TrialOutcome {
  RunSummary adaptive;
  RunSummary ekf;
  std::vector<double> e_n_adaptive, e_d_adaptive, e_n_ekf, e_d_ekf;
};

int cmd_compare(const std::string& scenario_path, const std::string& figure, int trials,
                const std::string& out, std::optional<std::uint64_t> seed_override) {
  if (trials < 1) throw SchemaError("trials", "must be >= 1");
  Scenario base = load_from_manifest(scenario_path, figure);
  const std::uint64_t base_seed = seed_override.value_or(base.seed);
  fs::create_directories(out);

  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(trials));
  std::vector<std::string> failures(static_cast<std::size_t>(trials));
  auto run_trial = [&](int trial) {
    try {
      const std::uint64_t seed = mix_seed(base_seed, static_cast<std::uint64_t>(trial));
      Scenario sc = base;
      sc.estimator = EstimatorKind::Adaptive;
      const Trace ta = run_with_seed(sc, seed);
      sc.estimator = EstimatorKind::Ekf;
      const Trace te = run_with_seed(sc, seed);
      TrialOutcome& o = outcomes[static_cast<std::size_t>(trial)];
      o.adaptive = summarize(ta, sc.metrics);
      o.ekf = summarize(te, sc.metrics);
      const bool cam = sc.metrics.d_error_in_camera_frame;
      o.e_n_adaptive = column(ta, &TraceRow::e_n);
      o.e_d_adaptive = column(ta, cam ? &TraceRow::e_d_cam : &TraceRow::e_d_global);
      o.e_n_ekf = column(te, &TraceRow::e_n);
      o.e_d_ekf = column(te, cam ? &TraceRow::e_d_cam : &TraceRow::e_d_global);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(trial)] = e.what();
    }
  };

  const int workers = thread_budget(trials);
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < trials; i = next.fetch_add(1)) run_trial(i);
    });
  }
  for (auto& th : pool) th.join();
  for (int i = 0; i < trials; ++i) {
    if (!failures[static_cast<std::size_t>(i)].empty()) {
      throw SimError("trial " + std::to_string(i) + ": " + failures[static_cast<std::size_t>(i)],
                     -1);
    }
  }

  // Pointwise mean curves and mean time-to-threshold (capped at duration
  // for runs that never reach it).
  const std::size_t n_ticks = outcomes.front().e_n_adaptive.size();
  std::vector<double> t(n_ticks);
  for (std::size_t i = 0; i < n_ticks; ++i) t[i] = static_cast<double>(i) * base.dt();
  auto mean_curve = [&](std::vector<double> TrialOutcome::* member) {
    std::vector<double> mean(n_ticks, 0.0);
    for (const auto& o : outcomes) {
      const auto& curve = o.*member;
      for (std::size_t i = 0; i < n_ticks; ++i) mean[i] += curve[i];
    }
    for (double& v : mean) v /= trials;
    return mean;
  };
  const auto men_a = mean_curve(&TrialOutcome::e_n_adaptive);
  const auto med_a = mean_curve(&TrialOutcome::e_d_adaptive);
  const auto men_e = mean_curve(&TrialOutcome::e_n_ekf);
  const auto med_e = mean_curve(&TrialOutcome::e_d_ekf);

  auto mean_ttt = [&](RunSummary TrialOutcome::* member) {
    double sum = 0.0;
    for (const auto& o : outcomes) {
      const double v = (o.*member).time_to_threshold;
      sum += std::isnan(v) ? base.duration : v;
    }
    return sum / trials;
  };
  const double ttt_adaptive = mean_ttt(&TrialOutcome::adaptive);
  const double ttt_ekf = mean_ttt(&TrialOutcome::ekf);

  std::ostringstream csv;
  csv << "t,e_n_observer,e_d_observer,e_n_ekf,e_d_ekf\n";
  for (std::size_t i = 0; i < n_ticks; ++i) {
    csv << t[i] << ',' << men_a[i] << ',' << med_a[i] << ',' << men_e[i] << ',' << med_e[i] << '\n';
  }
  write_file_atomic((fs::path(out) / "compare.csv").string(), csv.str());
  write_svg_plot((fs::path(out) / "compare_e_n.svg").string(), "mean normal error", "t [s]",
                 "e_n [rad]", {{"observer", t, men_a}, {"ekf", t, men_e}});
  write_svg_plot((fs::path(out) / "compare_e_d.svg").string(), "mean depth error", "t [s]",
                 "e_d [m]", {{"observer", t, med_a}, {"ekf", t, med_e}});

  nlohmann::json j;
  j["trials"] = trials;
  j["mean_time_to_threshold_s"]["observer"] = ttt_adaptive;
  j["mean_time_to_threshold_s"]["ekf"] = ttt_ekf;
  j["first_to_threshold"] = ttt_adaptive < ttt_ekf ? "observer" : "ekf";
  write_file_atomic((fs::path(out) / "compare.json").string(), j.dump(2) + "\n");
  std::cout << "compare: observer " << ttt_adaptive << " s vs ekf " << ttt_ekf
            << " s (first: " << j["first_to_threshold"].get<std::string>() << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plane-pose observer and plane-following simulator"};
  app.require_subcommand(1);

  std::string scenario_path, figure, out = "out", axis = "velocity";
  std::vector<double> values;
  int trials = 20;
  std::int64_t seed_raw = -1;

  auto add_source = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "scenario file path");
    cmd->add_option("--figure", figure, "bundled figure tag (fig3|fig4|fig5|fig6-9|compare)");
  };

  CLI::App* c_run = app.add_subcommand("run", "run a scenario and write trace, metrics and plots");
  add_source(c_run);
  c_run->add_option("--out", out, "output directory");
  c_run->add_option("--seed", seed_raw, "noise seed override");

  CLI::App* c_sweep = app.add_subcommand("sweep", "run a scenario across an axis of values");
  add_source(c_sweep);
  c_sweep->add_option("--axis", axis, "velocity | features");
  c_sweep->add_option("--values", values, "axis values")->delimiter(',');
  c_sweep->add_option("--out", out, "output directory");

  CLI::App* c_compare = app.add_subcommand("compare", "observer vs EKF Monte-Carlo comparison");
  add_source(c_compare);
  c_compare->add_option("--trials", trials, "number of seeded trials");
  c_compare->add_option("--out", out, "output directory");
  c_compare->add_option("--seed", seed_raw, "base seed override");

  CLI::App* c_validate = app.add_subcommand("validate", "validate a scenario file");
  add_source(c_validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::optional<std::uint64_t> seed_override;
  if (seed_raw >= 0) seed_override = static_cast<std::uint64_t>(seed_raw);

  try {
    if (scenario_path.empty() && figure.empty()) {
      throw SchemaError("scenario", "either --scenario or --figure is required");
    }
    if (c_run->parsed()) return cmd_run(scenario_path, figure, out, seed_override);
    if (c_sweep->parsed()) return cmd_sweep(scenario_path, figure, axis, values, out);
    if (c_compare->parsed()) return cmd_compare(scenario_path, figure, trials, out, seed_override);
    if (c_validate->parsed()) return cmd_validate(scenario_path, figure);
  } catch (const SchemaError& e) {
    print_error_json("schema", {{"field", e.field}, {"message", e.what()}});
    return kExitSchema;
  } catch (const SimError& e) {
    print_error_json("runtime", {{"tick", e.tick}, {"message", e.what()}});
    return kExitRuntime;
  } catch (const std::exception& e) {
    print_error_json("internal", {{"message", e.what()}});
    return 1;
  }
  return kExitOk;
}
