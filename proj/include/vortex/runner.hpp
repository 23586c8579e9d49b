#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vortex/biot_savart.hpp"
#include "vortex/core.hpp"
#include "vortex/digest.hpp"
#include "vortex/errors.hpp"
#include "vortex/field_ops.hpp"
#include "vortex/scenario.hpp"
#include "vortex/snapshot_io.hpp"
#include "vortex/transport.hpp"
#include "vortex/version.hpp"

namespace vortex {

namespace fs = std::filesystem;

inline constexpr const char* kDiagnosticsSchema = "vortex-diagnostics-v1";
inline constexpr const char* kReportSchema = "vortex-report-v1";

/// Fingerprint keying (scenario, code version). Stored in every snapshot
/// header and in the manifest; resume and verify refuse to mix fingerprints.
inline StateDigest scenario_fingerprint(const Scenario& sc) {
    return sha256(canonical_config_string(sc) + "code_version=" + kVersion + "\n");
}

inline std::string snapshot_filename(std::size_t lattice_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "snapshot_%06zu.vxs", lattice_index);
    return buf;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct Manifest {
    Scenario scenario;
    std::string fingerprint_hex;
    std::string code_version;
    std::size_t snapshot_count = 0;
    double last_time = 0.0;
    double wall_clock_s = 0.0;
    std::string status = "ok";  // ok | running | blow-up
    std::string lineage = "none";
};

inline void write_manifest(const fs::path& run_dir, const Manifest& m) {
    std::ostringstream out;
    out << "[manifest]\n";
    out << "format = 1\n";
    out << "code_version = " << m.code_version << "\n";
    out << "fingerprint = " << m.fingerprint_hex << "\n";
    out << "snapshot_count = " << m.snapshot_count << "\n";
    out << "last_time = " << detail::format_double(m.last_time) << "\n";
    out << "wall_clock_s = " << detail::format_double(m.wall_clock_s) << "\n";
    out << "status = " << m.status << "\n";
    out << "lineage = " << m.lineage << "\n\n";
    out << serialize_scenario(m.scenario);
    std::ofstream file(run_dir / "manifest.tomlish", std::ios::trunc);
    if (!file) throw InvalidInput("cannot write manifest in " + run_dir.string());
    file << out.str();
}

inline Manifest read_manifest(const fs::path& run_dir) {
    const fs::path path = run_dir / "manifest.tomlish";
    std::ifstream file(path);
    if (!file) throw InvalidInput("missing manifest: " + path.string());
    std::stringstream buffer;
    buffer << file.rdbuf();
    const KvDocument doc = parse_kv_text(buffer.str());

    Manifest m;
    const KvSection* ms = doc.section("manifest");
    if (ms == nullptr) throw InvalidInput("manifest has no [manifest] section: " + path.string());
    for (const auto& e : ms->entries) {
        if (e.key == "code_version") m.code_version = e.value;
        else if (e.key == "fingerprint") m.fingerprint_hex = e.value;
        else if (e.key == "snapshot_count") m.snapshot_count = detail::parse_long(e);
        else if (e.key == "last_time") m.last_time = detail::parse_double(e);
        else if (e.key == "wall_clock_s") m.wall_clock_s = detail::parse_double(e);
        else if (e.key == "status") m.status = e.value;
        else if (e.key == "lineage") m.lineage = e.value;
    }
    KvDocument scenario_doc;
    for (const auto& s : doc.sections)
        if (s.name != "manifest") scenario_doc.sections.push_back(s);
    m.scenario = scenario_from_document(scenario_doc);
    return m;
}

// ---------------------------------------------------------------------------
// Diagnostics CSV
// ---------------------------------------------------------------------------

/// Appends per-snapshot diagnostics rows. Header is fixed and versioned;
/// disabled diagnostics leave empty cells. Heavy (grid-based) diagnostics run
/// every `stride` snapshots.
class DiagnosticsWriter {
  public:
    DiagnosticsWriter(const fs::path& csv_path, const Scenario& sc, bool append = false)
        : scenario_(sc), start_(std::chrono::steady_clock::now()) {
        const bool fresh = !append || !fs::exists(csv_path);
        file_.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
        if (!file_) throw InvalidInput("cannot open diagnostics csv: " + csv_path.string());
        if (fresh) {
            file_ << "# schema: " << kDiagnosticsSchema << "\n";
            file_ << "time,wall_clock_s,mass,l1,l2,l4,linf,uloc,yudovich,"
                     "drift_integrability,velocity_modulus,tree_depth,tree_nodes\n";
        }
        for (const auto& c : sc.diagnostics.checks) enabled_.insert(c);
    }

    void record(std::size_t snapshot_index, double time, const ParticleEnsemble& state,
                const std::vector<Vec2>& velocities) {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::ostringstream row;
        row.precision(17);
        row << time << "," << wall << ",";
        if (enabled_.count("mass")) row << total_circulation(state);
        row << ",";

        const bool heavy = scenario_.diagnostics.stride > 0 &&
                           snapshot_index % static_cast<std::size_t>(scenario_.diagnostics.stride) ==
                               0;
        std::optional<DepositResult> dep;
        auto deposited = [&]() -> const GridField& {
            if (!dep) {
                const GridField skeleton =
                    grid_for_ensemble(state, scenario_.diagnostics.deposit_padding,
                                      scenario_.diagnostics.deposit_spacing);
                dep = deposit(state, skeleton);
            }
            return dep->field;
        };

        if (heavy && enabled_.count("lp")) {
            row << lp_norm(deposited(), 1.0) << "," << lp_norm(deposited(), 2.0) << ","
                << lp_norm(deposited(), 4.0) << ","
                << lp_norm(deposited(), std::numeric_limits<double>::infinity());
        } else {
            row << ",,,";
        }
        row << ",";
        if (heavy && enabled_.count("uloc"))
            row << uloc_norm(deposited(), scenario_.diagnostics.uloc_p);
        row << ",";
        if (heavy && enabled_.count("yudovich")) {
            const auto grid = default_p_grid(scenario_.diagnostics.yudovich_p_max);
            row << yudovich_norm(deposited(), scenario_.yudovich, grid);
        }
        row << ",";
        if (enabled_.count("drift")) row << drift_integrability(state, velocities);
        row << ",";
        if (heavy && enabled_.count("modulus")) {
            const auto pairs =
                modulus_pair_sample(state, scenario_.diagnostics.modulus_strata,
                                    scenario_.diagnostics.modulus_points);
            row << velocity_modulus(state, pairs, scenario_.yudovich);
        }
        row << ",";
        if (scenario_.summation == SummationMode::Tree && heavy) {
            const Quadtree tree = build_tree(state, scenario_.leaf_capacity);
            row << tree.depth << "," << tree.node_count();
        } else {
            row << ",";
        }
        file_ << row.str() << "\n";
        file_.flush();
    }

  private:
    Scenario scenario_;
    std::ofstream file_;
    std::set<std::string> enabled_;
    std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Run orchestration
// ---------------------------------------------------------------------------

struct RunOutcome {
    TrajectoryBundle bundle;
    fs::path dir;
    Manifest manifest;
    BuildReport build;
};

inline ParticleEnsemble build_scenario_ensemble(const Scenario& sc, BuildReport* report = nullptr) {
    if (sc.initial.kind == InitialKind::GridFile) {
        ParticleEnsemble e = load_initial_from_snapshot(sc.initial.grid_file, sc.blob_radius);
        if (report) {
            *report = BuildReport{};
            report->occupied_cells = e.size();
            report->total_circulation = total_circulation(e);
        }
        return e;
    }
    return build_initial_ensemble(sc, report);
}

/// Executes a scenario and persists everything: snapshots for each recorded
/// time, the diagnostics CSV, and the manifest. On blow-up the snapshots
/// written so far stay on disk and the manifest records the failure before
/// the error is rethrown.
inline RunOutcome run_scenario(const Scenario& sc, const fs::path& out_dir) {
    sc.validate();
    fs::create_directories(out_dir);

    const StateDigest fp = scenario_fingerprint(sc);
    Manifest manifest;
    manifest.scenario = sc;
    manifest.fingerprint_hex = digest_hex(fp);
    manifest.code_version = kVersion;
    manifest.status = "running";
    write_manifest(out_dir, manifest);

    DiagnosticsWriter diagnostics(out_dir / "diagnostics.csv", sc);
    const auto t_start = std::chrono::steady_clock::now();

    RunOutcome outcome;
    outcome.dir = out_dir;
    const ParticleEnsemble initial = build_scenario_ensemble(sc, &outcome.build);

    auto callback = [&](std::size_t index, double time, const ParticleEnsemble& state,
                        const std::vector<Vec2>& velocities) {
        write_snapshot(out_dir / snapshot_filename(index), state, fp);
        diagnostics.record(index, time, state, velocities);
        manifest.snapshot_count += 1;
        manifest.last_time = time;
    };

    try {
        outcome.bundle = integrate_from(initial, sc, callback);
    } catch (const BlowUpError&) {
        manifest.status = "blow-up";
        manifest.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        write_manifest(out_dir, manifest);
        throw;
    }

    manifest.status = "ok";
    manifest.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_manifest(out_dir, manifest);
    outcome.manifest = manifest;
    return outcome;
}

inline std::vector<std::pair<std::size_t, fs::path>> list_snapshots(const fs::path& run_dir) {
    std::vector<std::pair<std::size_t, fs::path>> out;
    if (!fs::is_directory(run_dir)) throw InvalidInput("not a run directory: " + run_dir.string());
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        std::size_t index = 0;
        if (std::sscanf(name.c_str(), "snapshot_%zu.vxs", &index) == 1)
            out.emplace_back(index, entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Rebuilds a trajectory bundle from the snapshots on disk. Fingerprints must
/// all agree; velocities are not stored in snapshot files and stay empty
/// (rebuild them with rebuild_velocities when needed).
inline TrajectoryBundle load_bundle(const fs::path& run_dir) {
    const auto files = list_snapshots(run_dir);
    if (files.empty()) throw InvalidInput("no snapshots in " + run_dir.string());

    TrajectoryBundle bundle;
    StateDigest fp{};
    bool first = true;
    for (const auto& [index, path] : files) {
        SnapshotData data = read_snapshot(path);
        if (first) {
            fp = data.fingerprint;
            bundle.circulations = data.ensemble.circulations;
            bundle.blob_radius = data.ensemble.blob_radius;
            first = false;
        } else if (data.fingerprint != fp) {
            throw InvalidInput("snapshot fingerprint mismatch in " + path.string() +
                               "; refusing to mix runs");
        }
        bundle.snapshot_times.push_back(data.ensemble.time);
        bundle.state_digests.push_back(ensemble_digest(data.ensemble));
        bundle.positions.push_back(std::move(data.ensemble.positions));
    }
    return bundle;
}

/// Recomputes the field velocities at every snapshot with the scenario's
/// summation configuration. Deterministic, so the result equals what the
/// integrator evaluated during the run.
inline void rebuild_velocities(TrajectoryBundle& bundle, const Scenario& sc) {
    if (bundle.has_velocities()) return;
    bundle.velocities.clear();
    for (std::size_t k = 0; k < bundle.snapshot_count(); ++k) {
        const ParticleEnsemble state = marginal(bundle, bundle.snapshot_times[k]);
        bundle.velocities.push_back(
            ensemble_velocities(state, sc.summation, sc.opening_angle, sc.leaf_capacity));
    }
}

/// Continues a persisted run to a later end time. Refuses on configuration
/// drift (field-by-field diff) or fingerprint mismatch; appends snapshots and
/// records lineage in the manifest.
inline RunOutcome resume_run(const fs::path& run_dir, double extend_to,
                             const std::optional<Scenario>& requested = std::nullopt) {
    Manifest manifest = read_manifest(run_dir);

    if (requested) {
        const auto [fields, diff] = config_diff(manifest.scenario, *requested);
        if (!fields.empty()) throw ConfigMismatchError(fields, diff);
    }

    const auto files = list_snapshots(run_dir);
    if (files.empty()) throw InvalidInput("no snapshots to resume in " + run_dir.string());
    const auto& [last_index, last_path] = files.back();
    SnapshotData last = read_snapshot(last_path);

    Scenario extended = manifest.scenario;
    extended.end_time = extend_to;
    extended.validate();
    const StateDigest fp = scenario_fingerprint(extended);
    if (digest_hex(fp) != manifest.fingerprint_hex)
        throw ConfigMismatchError({"fingerprint"},
                                  "  fingerprint: manifest " + manifest.fingerprint_hex + " vs " +
                                      digest_hex(fp));
    if (last.fingerprint != fp)
        throw ConfigMismatchError({"fingerprint"},
                                  "  fingerprint: snapshot file disagrees with scenario");
    if (!(extend_to > last.ensemble.time))
        throw InvalidInput("extend-to time must exceed the last snapshot time " +
                           std::to_string(last.ensemble.time));

    DiagnosticsWriter diagnostics(run_dir / "diagnostics.csv", extended, /*append=*/true);
    const auto t_start = std::chrono::steady_clock::now();

    RunOutcome outcome;
    outcome.dir = run_dir;
    auto callback = [&](std::size_t index, double time, const ParticleEnsemble& state,
                        const std::vector<Vec2>& velocities) {
        if (index == last_index) return;  // starting snapshot already on disk
        write_snapshot(run_dir / snapshot_filename(index), state, fp);
        diagnostics.record(index, time, state, velocities);
        manifest.snapshot_count += 1;
        manifest.last_time = time;
    };

    outcome.bundle = resume(last.ensemble, extended, callback);

    manifest.scenario = extended;
    manifest.status = "ok";
    manifest.lineage = "resumed at t = " + detail::format_double(last.ensemble.time);
    manifest.wall_clock_s +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_manifest(run_dir, manifest);
    outcome.manifest = manifest;
    return outcome;
}

}  // namespace vortex
