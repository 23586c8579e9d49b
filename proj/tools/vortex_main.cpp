// Batch front-end: scenario execution, verification, restart, and parameter
// sweeps over run directories produced by `vortex run`.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vortex/vortex.hpp"

namespace fs = std::filesystem;
using namespace vortex;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitInconclusive = 2;

Scenario load_scenario_file(const fs::path& path) {
    std::ifstream file(path);
    if (!file) throw InvalidInput("cannot open scenario file: " + path.string());
    std::stringstream buffer;
    buffer << file.rdbuf();
    return scenario_from_text(buffer.str());
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir) {
    const Scenario sc = load_scenario_file(scenario_path);
    const RunOutcome outcome = run_scenario(sc, out_dir);
    std::cout << "run complete: " << outcome.manifest.snapshot_count << " snapshots, t = "
              << outcome.manifest.last_time << ", wall clock "
              << outcome.manifest.wall_clock_s << " s\n";
    std::cout << "fingerprint " << outcome.manifest.fingerprint_hex << "\n";
    if (outcome.build.mass_outside_fraction > 1e-6)
        std::cout << "note: mass fraction outside the domain box: "
                  << outcome.build.mass_outside_fraction << "\n";
    return kExitOk;
}

struct CheckRow {
    std::string id;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string note;
};

void write_report(const fs::path& run_dir, const std::string& scenario_name,
                  const std::vector<CheckRow>& rows) {
    std::ofstream out(run_dir / "report.csv", std::ios::trunc);
    out << "# schema: " << kReportSchema << "\n";
    out << "check_id,scenario,value,tolerance,pass\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.id << "," << scenario_name << "," << r.value << "," << r.tolerance << ","
            << (r.pass ? "true" : "false") << "\n";
}

int cmd_verify(const std::string& run_dir_arg, std::vector<std::string> checks) {
    const fs::path run_dir = run_dir_arg;
    if (!fs::exists(run_dir / "manifest.tomlish")) {
        std::cerr << "inconclusive: no manifest in " << run_dir << "\n";
        return kExitInconclusive;
    }
    Manifest manifest;
    TrajectoryBundle bundle;
    try {
        manifest = read_manifest(run_dir);
        bundle = load_bundle(run_dir);
        // Refuse cross-fingerprint comparisons: the snapshots must belong to
        // the manifest's scenario and code version.
        const auto snaps = list_snapshots(run_dir);
        const SnapshotData first = read_snapshot(snaps.front().second);
        if (digest_hex(first.fingerprint) != manifest.fingerprint_hex)
            throw InvalidInput("snapshot fingerprints do not match the manifest");
    } catch (const std::exception& e) {
        std::cerr << "inconclusive: " << e.what() << "\n";
        return kExitInconclusive;
    }
    const Scenario& sc = manifest.scenario;
    const std::string scenario_name = "run:" + run_dir.filename().string();

    if (checks.empty()) {
        std::cout << "warning: empty check list; nothing verified\n";
        write_report(run_dir, scenario_name, {});
        return kExitOk;
    }
    if (checks.size() == 1 && checks[0] == "all")
        checks = {"mass", "lq", "marginal", "residual", "drift", "flow"};

    std::vector<CheckRow> rows;
    bool velocities_ready = false;
    auto ensure_velocities = [&]() {
        if (!velocities_ready) {
            rebuild_velocities(bundle, sc);
            velocities_ready = true;
        }
    };

    for (const std::string& check : checks) {
        CheckRow row;
        row.id = check;
        try {
            if (check == "mass") {
                const double mass0 = [&] {
                    ParticleEnsemble e = marginal(bundle, bundle.snapshot_times.front());
                    return total_circulation(e);
                }();
                double worst = 0.0;
                for (double t : bundle.snapshot_times) {
                    const ParticleEnsemble e = marginal(bundle, t);
                    worst = std::max(worst, std::abs(total_circulation(e) - mass0));
                }
                row.value = worst;
                row.tolerance = 0.0;
                row.pass = worst == 0.0;
            } else if (check == "lq") {
                std::vector<double> times;
                const std::size_t n = bundle.snapshot_count();
                const std::size_t step = std::max<std::size_t>(1, (n - 1) / 4);
                for (std::size_t k = 0; k < n; k += step) times.push_back(bundle.snapshot_times[k]);
                if (times.back() != bundle.snapshot_times.back())
                    times.push_back(bundle.snapshot_times.back());
                const std::vector<double> orders = {1.0, 2.0, 4.0};
                const ConservationReport rep = conservation_report(
                    bundle, times, orders, sc.diagnostics.deposit_padding,
                    sc.diagnostics.deposit_spacing);
                double worst = 0.0;
                for (const auto& r : rep.rows)
                    for (double d : r.lq_drift) worst = std::max(worst, d);
                row.value = worst;
                row.tolerance = 0.02;
                row.pass = worst <= row.tolerance && rep.total_sign_violations == 0;
            } else if (check == "marginal") {
                // Re-integrate the scenario and compare every stored snapshot
                // digest against the live state the integrator holds.
                std::size_t mismatches = 0;
                std::string first_bad;
                auto live_check = [&](std::size_t index, double, const ParticleEnsemble& state,
                                      const std::vector<Vec2>&) {
                    for (std::size_t k = 0; k < bundle.snapshot_count(); ++k) {
                        if (std::abs(bundle.snapshot_times[k] - state.time) >
                            1e-12 * std::max(1.0, state.time))
                            continue;
                        if (ensemble_digest(state) != bundle.state_digests[k]) {
                            ++mismatches;
                            if (first_bad.empty())
                                first_bad = "snapshot index " + std::to_string(index);
                        }
                    }
                };
                const ParticleEnsemble initial = build_scenario_ensemble(sc);
                integrate_from(initial, sc, live_check);
                row.value = static_cast<double>(mismatches);
                row.tolerance = 0.0;
                row.pass = mismatches == 0;
                row.note = first_bad;
            } else if (check == "residual") {
                ensure_velocities();
                const double t = std::min(1.0, bundle.snapshot_times.back());
                double worst = 0.0;
                for (int i = 0; i < 5; ++i) {
                    const double angle = 2.0 * std::numbers::pi * i / 5.0;
                    const TestFunction phi = TestFunction::gaussian(
                        {0.4 * std::cos(angle), 0.4 * std::sin(angle)}, 0.5 + 0.1 * i);
                    worst = std::max(worst, weak_residual(bundle, phi, t).normalized);
                }
                row.value = worst;
                row.tolerance = 1e-4;
                row.pass = worst <= row.tolerance;
            } else if (check == "drift") {
                ensure_velocities();
                double worst = 0.0;
                bool finite = true;
                for (std::size_t k = 0; k < bundle.snapshot_count(); ++k) {
                    const ParticleEnsemble e = marginal(bundle, bundle.snapshot_times[k]);
                    const double d = drift_integrability(e, bundle.velocities[k]);
                    finite = finite && std::isfinite(d);
                    worst = std::max(worst, d);
                }
                row.value = worst;
                row.tolerance = std::numeric_limits<double>::infinity();
                row.pass = finite;
            } else if (check == "flow") {
                const double total = bundle.snapshot_times.back();
                const std::size_t half = (bundle.snapshot_count() - 1) / 2;
                if (half == 0 || total <= 0.0) {
                    row.pass = true;
                    row.note = "run too short to split";
                } else {
                    const double s = bundle.snapshot_times[half];
                    const FlowPropertyReport rep = flow_property_check(sc, s, total - s);
                    row.value = rep.max_discrepancy;
                    row.tolerance = 0.0;
                    row.pass = rep.pass;
                }
            } else {
                std::cerr << "unknown check '" << check << "'\n";
                return kExitFail;
            }
        } catch (const std::exception& e) {
            row.pass = false;
            row.note = e.what();
        }
        rows.push_back(row);
    }

    write_report(run_dir, scenario_name, rows);
    bool all_pass = true;
    for (const auto& r : rows) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.id << "  value=" << r.value
                  << " tolerance=" << r.tolerance;
        if (!r.note.empty()) std::cout << "  (" << r.note << ")";
        std::cout << "\n";
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitFail;
}

int cmd_resume(const std::string& run_dir, double extend_to) {
    const RunOutcome outcome = resume_run(run_dir, extend_to);
    std::cout << "resumed to t = " << outcome.manifest.last_time << ", "
              << outcome.manifest.snapshot_count << " snapshots total\n";
    return kExitOk;
}

int cmd_sweep(const std::string& scenario_path, const std::string& out_dir,
              const std::vector<double>& dts, const std::vector<long>& counts,
              const std::vector<double>& thetas) {
    const Scenario base = load_scenario_file(scenario_path);
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "sweep.csv", std::ios::trunc);
    csv << "# schema: vortex-sweep-v1\n";
    csv << "dt,particle_count,opening_angle,snapshots,wall_clock_s,mass_drift,l2_drift\n";
    csv.precision(17);

    const std::vector<double> dt_list = dts.empty() ? std::vector<double>{base.dt} : dts;
    const std::vector<long> count_list =
        counts.empty() ? std::vector<long>{base.particle_target} : counts;
    const std::vector<double> theta_list =
        thetas.empty() ? std::vector<double>{base.opening_angle} : thetas;

    std::cout << "dt          N         theta   snapshots  wall[s]     mass_drift   l2_drift\n";
    int index = 0;
    for (double dt : dt_list) {
        for (long n : count_list) {
            for (double theta : theta_list) {
                Scenario sc = base;
                sc.dt = dt;
                sc.particle_target = n;
                sc.opening_angle = theta;
                const fs::path dir = fs::path(out_dir) / ("case_" + std::to_string(index++));
                const RunOutcome outcome = run_scenario(sc, dir);
                const TrajectoryBundle& b = outcome.bundle;

                const ParticleEnsemble e0 = marginal(b, b.snapshot_times.front());
                const ParticleEnsemble e1 = marginal(b, b.snapshot_times.back());
                const double mass_drift =
                    std::abs(total_circulation(e1) - total_circulation(e0));
                const GridField skeleton = grid_for_ensemble(e0, sc.diagnostics.deposit_padding,
                                                             sc.diagnostics.deposit_spacing);
                const double l2_0 = lp_norm(deposit(e0, skeleton).field, 2.0);
                const double l2_1 = lp_norm(deposit(e1, skeleton).field, 2.0);
                const double l2_drift = l2_0 > 0.0 ? std::abs(l2_1 - l2_0) / l2_0 : 0.0;

                csv << dt << "," << n << "," << theta << "," << b.snapshot_count() << ","
                    << outcome.manifest.wall_clock_s << "," << mass_drift << "," << l2_drift
                    << "\n";
                std::printf("%-11g %-9ld %-7g %-10zu %-11.3f %-12.3e %-10.3e\n", dt, n, theta,
                            b.snapshot_count(), outcome.manifest.wall_clock_s, mass_drift,
                            l2_drift);
            }
        }
    }
    std::cout << "sweep table written to " << (fs::path(out_dir) / "sweep.csv") << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lagrangian vortex-particle simulator for the 2D Euler equations"};
    app.require_subcommand(1);

    std::string scenario_path, dir_arg;
    std::vector<std::string> checks;
    double extend_to = 0.0;
    std::vector<double> dts, thetas;
    std::vector<long> counts;

    auto* run = app.add_subcommand("run", "execute a scenario and persist the run");
    run->add_option("scenario", scenario_path, "scenario file (.tomlish)")->required();
    run->add_option("out_dir", dir_arg, "output run directory")->required();

    auto* verify = app.add_subcommand("verify", "check a persisted run");
    verify->add_option("run_dir", dir_arg, "run directory")->required();
    verify->add_option("--checks", checks,
                       "checks to run: mass lq marginal residual drift flow (or 'all')");

    auto* resume = app.add_subcommand("resume", "extend a persisted run to a later end time");
    resume->add_option("run_dir", dir_arg, "run directory")->required();
    resume->add_option("--extend-to", extend_to, "new end time")->required();

    auto* sweep = app.add_subcommand("sweep", "Cartesian parameter sweep");
    sweep->add_option("scenario", scenario_path, "scenario file (.tomlish)")->required();
    sweep->add_option("out_dir", dir_arg, "output directory")->required();
    sweep->add_option("--dt", dts, "time steps to sweep");
    sweep->add_option("--particles", counts, "particle counts to sweep");
    sweep->add_option("--theta", thetas, "opening angles to sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(scenario_path, dir_arg);
        if (verify->parsed()) return cmd_verify(dir_arg, checks);
        if (resume->parsed()) return cmd_resume(dir_arg, extend_to);
        if (sweep->parsed()) return cmd_sweep(scenario_path, dir_arg, dts, counts, thetas);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFail;
    } catch (const ConfigMismatchError& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return kExitFail;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFail;
    }
    return kExitFail;
}
