#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "vortex/biot_savart.hpp"
#include "vortex/core.hpp"
#include "vortex/digest.hpp"
#include "vortex/errors.hpp"
#include "vortex/scenario.hpp"

namespace vortex {

/// Positions whose magnitude passes this are treated as a blow-up.
inline constexpr double kBlowUpRadius = 1e6;

struct IntegratorConfig {
    double dt = 1e-3;
    Scheme scheme = Scheme::Rk4;
    SummationMode summation = SummationMode::Tree;
    double opening_angle = 0.5;
    int leaf_capacity = 16;
    double snapshot_interval = 1e-2;

    static IntegratorConfig from_scenario(const Scenario& sc) {
        return {sc.dt, sc.scheme, sc.summation, sc.opening_angle, sc.leaf_capacity,
                sc.snapshot_interval};
    }

    std::size_t steps_per_snapshot() const {
        return static_cast<std::size_t>(std::llround(snapshot_interval / dt));
    }

    void validate() const {
        if (!(dt > 0.0)) throw InvalidInput("integrator dt must be positive");
        const double m = snapshot_interval / dt;
        if (!(snapshot_interval > 0.0) || std::abs(m - std::round(m)) > 1e-9 * m ||
            std::round(m) < 1.0)
            throw InvalidInput("snapshot_interval must be a positive integer multiple of dt");
        if (!(opening_angle > 0.0 && opening_angle <= 1.0))
            throw InvalidInput("opening_angle must lie in (0, 1]");
    }
};

namespace detail {

inline std::vector<Vec2> field_velocities(const ParticleEnsemble& ensemble,
                                          const IntegratorConfig& cfg) {
    return ensemble_velocities(ensemble, cfg.summation, cfg.opening_angle, cfg.leaf_capacity);
}

inline void check_finite(const ParticleEnsemble& ensemble, double time) {
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        const Vec2 p = ensemble.positions[i];
        if (!p.is_finite() || std::abs(p.x) > kBlowUpRadius || std::abs(p.y) > kBlowUpRadius)
            throw BlowUpError(i, time);
    }
}

}  // namespace detail

/// One step of the self-consistent system dx_i/dt = sum_j Gamma_j
/// K_delta(x_i - x_j). At every substage the velocities are re-evaluated from
/// the substage positions, so the drift always sees the current empirical
/// measure. Circulations are untouched; time advances by dt. If `k1` is
/// supplied it must equal the field velocities at the input positions (the
/// integrator reuses snapshot evaluations this way).
inline ParticleEnsemble step(const ParticleEnsemble& ensemble, const IntegratorConfig& cfg,
                             const std::vector<Vec2>* k1 = nullptr) {
    if (ensemble.empty()) throw InvalidInput("step: ensemble is empty");
    const std::size_t n = ensemble.size();
    const double dt = cfg.dt;

    ParticleEnsemble next = ensemble;
    const std::vector<Vec2> stage1 = k1 ? *k1 : detail::field_velocities(ensemble, cfg);

    if (cfg.scheme == Scheme::Euler) {
        for (std::size_t i = 0; i < n; ++i) next.positions[i] += dt * stage1[i];
    } else {
        ParticleEnsemble stage = ensemble;
        for (std::size_t i = 0; i < n; ++i)
            stage.positions[i] = ensemble.positions[i] + (dt / 2.0) * stage1[i];
        const std::vector<Vec2> stage2 = detail::field_velocities(stage, cfg);
        for (std::size_t i = 0; i < n; ++i)
            stage.positions[i] = ensemble.positions[i] + (dt / 2.0) * stage2[i];
        const std::vector<Vec2> stage3 = detail::field_velocities(stage, cfg);
        for (std::size_t i = 0; i < n; ++i)
            stage.positions[i] = ensemble.positions[i] + dt * stage3[i];
        const std::vector<Vec2> stage4 = detail::field_velocities(stage, cfg);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 incr = stage1[i] + 2.0 * stage2[i] + 2.0 * stage3[i] + stage4[i];
            next.positions[i] = ensemble.positions[i] + (dt / 6.0) * incr;
        }
    }
    next.time = ensemble.time + dt;
    detail::check_finite(next, next.time);
    return next;
}

/// Called once per recorded snapshot with the live state and the field
/// velocities at it.
using SnapshotCallback =
    std::function<void(std::size_t index, double time, const ParticleEnsemble&,
                       const std::vector<Vec2>& velocities)>;

namespace detail {

/// Core loop shared by integrate and resume. `first_snapshot` is the index of
/// the initial state on the global snapshot lattice; recorded times are
/// reconstructed from lattice indices so a resumed run reproduces the
/// uninterrupted run's times bit-exactly.
inline TrajectoryBundle integrate_snapshots(ParticleEnsemble state, const IntegratorConfig& cfg,
                                            std::size_t first_snapshot, std::size_t n_intervals,
                                            const SnapshotCallback& callback) {
    cfg.validate();
    const std::size_t m = cfg.steps_per_snapshot();
    const double interval = static_cast<double>(m) * cfg.dt;

    TrajectoryBundle bundle;
    bundle.circulations = state.circulations;
    bundle.blob_radius = state.blob_radius;

    auto record = [&](std::size_t lattice_index, const ParticleEnsemble& s,
                      const std::vector<Vec2>& vel) {
        const double t = static_cast<double>(lattice_index) * interval;
        bundle.snapshot_times.push_back(t);
        bundle.positions.push_back(s.positions);
        bundle.velocities.push_back(vel);
        bundle.state_digests.push_back(ensemble_digest(s));
        if (callback) callback(lattice_index, t, s, vel);
    };

    state.time = static_cast<double>(first_snapshot) * interval;
    std::vector<Vec2> vel = field_velocities(state, cfg);
    record(first_snapshot, state, vel);

    for (std::size_t k = 1; k <= n_intervals; ++k) {
        for (std::size_t s = 0; s < m; ++s) {
            state = step(state, cfg, s == 0 ? &vel : nullptr);
            state.time = static_cast<double>(first_snapshot + k - 1) * interval +
                         static_cast<double>(s + 1) * cfg.dt;
        }
        state.time = static_cast<double>(first_snapshot + k) * interval;
        vel = field_velocities(state, cfg);
        record(first_snapshot + k, state, vel);
    }
    return bundle;
}

}  // namespace detail

/// Runs a scenario from t = 0 starting from a prebuilt initial ensemble
/// (grid-file initial data is loaded by the caller), recording a snapshot
/// every snapshot_interval. positions[0] is the initial ensemble; the result
/// is a deterministic function of its inputs.
inline TrajectoryBundle integrate_from(const ParticleEnsemble& initial, const Scenario& sc,
                                       const SnapshotCallback& callback = {}) {
    sc.validate();
    const IntegratorConfig cfg = IntegratorConfig::from_scenario(sc);
    const std::size_t intervals = sc.total_steps() / cfg.steps_per_snapshot();
    return detail::integrate_snapshots(initial, cfg, 0, intervals, callback);
}

/// Builds the scenario's initial ensemble and integrates it to the end time.
inline TrajectoryBundle integrate(const Scenario& sc, const SnapshotCallback& callback = {}) {
    const ParticleEnsemble initial = build_initial_ensemble(sc);
    return integrate_from(initial, sc, callback);
}

/// Continues integration from a snapshot, treating it as a fresh initial
/// datum. The concatenation of the original run up to the snapshot and this
/// continuation is bit-identical to an uninterrupted run with the same
/// configuration; that is the discrete flow property, and the acceptance
/// suite gates on it. Throws ConfigMismatchError if the snapshot's blob
/// radius disagrees with the scenario, or if the snapshot time is off the
/// snapshot lattice.
inline TrajectoryBundle resume(const ParticleEnsemble& snapshot, const Scenario& sc,
                               const SnapshotCallback& callback = {}) {
    sc.validate();
    const IntegratorConfig cfg = IntegratorConfig::from_scenario(sc);

    double expected_delta = resolved_blob_radius(sc);
    if (expected_delta <= 0.0) expected_delta = snapshot.blob_radius;  // indeterminate: trust the snapshot
    if (snapshot.blob_radius != expected_delta) {
        std::ostringstream diff;
        diff << "  blob_radius: snapshot " << snapshot.blob_radius << " vs scenario "
             << expected_delta;
        throw ConfigMismatchError({"blob_radius"}, diff.str());
    }

    const double interval = static_cast<double>(cfg.steps_per_snapshot()) * cfg.dt;
    const double lattice = snapshot.time / interval;
    if (std::abs(lattice - std::round(lattice)) > 1e-9 * std::max(1.0, lattice))
        throw InvalidInput("resume: snapshot time is not on the snapshot lattice");
    const std::size_t first = static_cast<std::size_t>(std::llround(lattice));

    const std::size_t total_intervals = sc.total_steps() / cfg.steps_per_snapshot();
    if (total_intervals < first)
        throw InvalidInput("resume: scenario end_time lies before the snapshot time");
    return detail::integrate_snapshots(snapshot, cfg, first, total_intervals - first, callback);
}

/// Field-by-field comparison of the integrator-relevant configuration of two
/// scenarios: dt, blob radius, scheme, summation mode, opening angle. Returns
/// the names of mismatched fields plus a printable diff.
inline std::pair<std::vector<std::string>, std::string> config_diff(const Scenario& a,
                                                                    const Scenario& b) {
    std::vector<std::string> fields;
    std::ostringstream diff;
    auto mismatch = [&](const std::string& name, const std::string& va, const std::string& vb) {
        fields.push_back(name);
        diff << "  " << name << ": " << va << " vs " << vb << "\n";
    };
    if (a.dt != b.dt)
        mismatch("dt", detail::format_double(a.dt), detail::format_double(b.dt));
    if (a.blob_radius != b.blob_radius)
        mismatch("blob_radius", detail::format_double(a.blob_radius),
                 detail::format_double(b.blob_radius));
    if (a.scheme != b.scheme)
        mismatch("scheme", a.scheme == Scheme::Rk4 ? "rk4" : "euler",
                 b.scheme == Scheme::Rk4 ? "rk4" : "euler");
    if (a.summation != b.summation)
        mismatch("summation_mode", a.summation == SummationMode::Tree ? "tree" : "direct",
                 b.summation == SummationMode::Tree ? "tree" : "direct");
    if (a.opening_angle != b.opening_angle)
        mismatch("opening_angle", detail::format_double(a.opening_angle),
                 detail::format_double(b.opening_angle));
    return {fields, diff.str()};
}

}  // namespace vortex
