#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vortex/core.hpp"
#include "vortex/errors.hpp"
#include "vortex/field_ops.hpp"
#include "vortex/kahan.hpp"
#include "vortex/transport.hpp"

namespace vortex {

// ---------------------------------------------------------------------------
// Test functions (smooth, compactly supported or rapidly decaying, with
// closed-form gradients)
// ---------------------------------------------------------------------------

struct TestFunction {
    enum class Kind { GaussianBump, PolynomialBump, CoordinateCutoff };

    Kind kind = Kind::GaussianBump;
    Vec2 center{0.0, 0.0};
    double scale = 1.0;      // sigma (bumps) or inner radius R0 (cutoff)
    double amplitude = 1.0;  // bumps only
    double outer = 2.0;      // cutoff outer radius R1 > R0

    static TestFunction gaussian(Vec2 center, double sigma, double amplitude = 1.0) {
        return {Kind::GaussianBump, center, sigma, amplitude, 0.0};
    }
    static TestFunction polynomial(Vec2 center, double sigma, double amplitude = 1.0) {
        return {Kind::PolynomialBump, center, sigma, amplitude, 0.0};
    }
    /// Smooth cutoff: exactly 1 on |x - c| <= r0, exactly 0 beyond r1.
    static TestFunction cutoff(Vec2 center, double r0, double r1) {
        return {Kind::CoordinateCutoff, center, r0, 1.0, r1};
    }

    double operator()(Vec2 x) const {
        const Vec2 d = x - center;
        switch (kind) {
            case Kind::GaussianBump:
                return amplitude * std::exp(-d.norm_sq() / (2.0 * scale * scale));
            case Kind::PolynomialBump:
                return amplitude * d.x * std::exp(-d.norm_sq() / (2.0 * scale * scale));
            case Kind::CoordinateCutoff: {
                const double r = d.norm();
                if (r <= scale) return 1.0;
                if (r >= outer) return 0.0;
                const double t = (r - scale) / (outer - scale);
                const double fa = std::exp(-1.0 / (1.0 - t));
                const double fb = std::exp(-1.0 / t);
                return fa / (fa + fb);
            }
        }
        return 0.0;
    }

    Vec2 gradient(Vec2 x) const {
        const Vec2 d = x - center;
        switch (kind) {
            case Kind::GaussianBump: {
                const double s2 = scale * scale;
                const double g = amplitude * std::exp(-d.norm_sq() / (2.0 * s2));
                return {-g * d.x / s2, -g * d.y / s2};
            }
            case Kind::PolynomialBump: {
                const double s2 = scale * scale;
                const double g = std::exp(-d.norm_sq() / (2.0 * s2));
                return {amplitude * g * (1.0 - d.x * d.x / s2),
                        amplitude * g * (-d.x * d.y / s2)};
            }
            case Kind::CoordinateCutoff: {
                const double r = d.norm();
                if (r <= scale || r >= outer || r == 0.0) return {0.0, 0.0};
                const double w = outer - scale;
                const double t = (r - scale) / w;
                const double u = 1.0 - t;
                const double fa = std::exp(-1.0 / u);
                const double fb = std::exp(-1.0 / t);
                const double dfa = -fa / (u * u);  // d fa / dt
                const double dfb = fb / (t * t);   // d fb / dt
                const double denom = fa + fb;
                const double dq_dt = (dfa * denom - fa * (dfa + dfb)) / (denom * denom);
                const double dq_dr = dq_dt / w;
                return {dq_dr * d.x / r, dq_dr * d.y / r};
            }
        }
        return {0.0, 0.0};
    }

    double sup_abs() const {
        switch (kind) {
            case Kind::GaussianBump:
                return std::abs(amplitude);
            case Kind::PolynomialBump:
                return std::abs(amplitude) * scale * std::exp(-0.5);
            case Kind::CoordinateCutoff:
                return 1.0;
        }
        return 0.0;
    }
};

// ---------------------------------------------------------------------------
// Weak-solution residual
// ---------------------------------------------------------------------------

struct WeakResidual {
    double normalized = 0.0;  // |R| / (sum |Gamma| * sup |phi|)
    double raw = 0.0;
    double richardson = 0.0;  // normalized trapezoid-error estimate
    bool coarse_warning = false;
};

/// Particle-quadrature residual of the weak-formulation identity at snapshot
/// time t:
///   R = sum_i G_i phi(x_i(t)) - sum_i G_i phi(x_i(0))
///       - int_0^t sum_i G_i grad phi(x_i(s)) . v_i(s) ds,
/// with the time integral by the trapezoid rule over stored snapshots and
/// velocities taken from the integrator's own snapshot evaluations. The
/// Richardson field estimates the trapezoid error by comparing against the
/// double-spacing rule; coarse_warning is set when that estimate alone
/// exceeds `tolerance`, i.e. the snapshot spacing is too coarse for the
/// residual to be judged at that tolerance.
inline WeakResidual weak_residual(const TrajectoryBundle& bundle, const TestFunction& phi,
                                  double t, double tolerance = 1e-4) {
    if (!bundle.has_velocities())
        throw InvalidInput("weak_residual: bundle carries no snapshot velocities");
    const std::size_t kt = bundle.snapshot_index(t);
    const std::size_t n = bundle.particle_count();

    auto pairing = [&](std::size_t k) {
        KahanSum s;
        for (std::size_t i = 0; i < n; ++i)
            s.add(bundle.circulations[i] * phi(bundle.positions[k][i]));
        return s.value();
    };
    auto flux = [&](std::size_t k) {
        KahanSum s;
        for (std::size_t i = 0; i < n; ++i)
            s.add(bundle.circulations[i] *
                  phi.gradient(bundle.positions[k][i]).dot(bundle.velocities[k][i]));
        return s.value();
    };

    std::vector<double> g(kt + 1);
    for (std::size_t k = 0; k <= kt; ++k) g[k] = flux(k);

    auto trapezoid = [&](std::size_t stride) {
        KahanSum s;
        std::size_t prev = 0;
        for (std::size_t k = stride; k <= kt; k += stride) {
            const double dt = bundle.snapshot_times[k] - bundle.snapshot_times[prev];
            s.add(0.5 * dt * (g[prev] + g[k]));
            prev = k;
        }
        if (prev != kt) {
            const double dt = bundle.snapshot_times[kt] - bundle.snapshot_times[prev];
            s.add(0.5 * dt * (g[prev] + g[kt]));
        }
        return s.value();
    };

    const double integral = trapezoid(1);
    const double raw = pairing(kt) - pairing(0) - integral;

    KahanSum abs_gamma;
    for (double gi : bundle.circulations) abs_gamma.add(std::abs(gi));
    const double norm = abs_gamma.value() * phi.sup_abs();

    WeakResidual out;
    out.raw = raw;
    out.normalized = norm > 0.0 ? std::abs(raw) / norm : std::abs(raw);
    if (kt >= 2) {
        const double coarse = trapezoid(2);
        out.richardson = std::abs(integral - coarse) / 3.0 / std::max(norm, 1e-300);
        out.coarse_warning = out.richardson > tolerance;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Conservation report
// ---------------------------------------------------------------------------

struct ConservationRow {
    double time = 0.0;
    double mass = 0.0;
    std::size_t sign_violations = 0;
    std::vector<double> lq_drift;  // relative, per requested order
};

struct ConservationReport {
    std::vector<double> lq_orders;
    std::vector<ConservationRow> rows;
    bool mass_exact = true;       // every mass equals the t=0 mass bit-exactly
    std::size_t total_sign_violations = 0;
};

/// Per-time conservation audit: exact mass, circulation sign flips against
/// t = 0, and deposited-L^q drifts on a grid fixed at t = 0 so that times are
/// comparable.
inline ConservationReport conservation_report(const TrajectoryBundle& bundle,
                                              std::span<const double> times,
                                              std::span<const double> lq_orders,
                                              double grid_padding = 0.25,
                                              double grid_spacing = 0.0) {
    ConservationReport report;
    report.lq_orders.assign(lq_orders.begin(), lq_orders.end());

    const ParticleEnsemble initial = marginal(bundle, bundle.snapshot_times.front());
    const GridField skeleton = grid_for_ensemble(initial, grid_padding, grid_spacing);
    const DepositResult base = deposit(initial, skeleton);
    std::vector<double> base_norms;
    base_norms.reserve(lq_orders.size());
    for (double q : lq_orders) base_norms.push_back(lp_norm(base.field, q));
    const double mass0 = total_circulation(initial);

    for (double t : times) {
        const ParticleEnsemble state = marginal(bundle, t);
        ConservationRow row;
        row.time = state.time;
        row.mass = total_circulation(state);
        if (row.mass != mass0) report.mass_exact = false;
        for (std::size_t i = 0; i < state.size(); ++i) {
            const double a = initial.circulations[i], b = state.circulations[i];
            if ((a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0)) ++row.sign_violations;
        }
        report.total_sign_violations += row.sign_violations;
        const DepositResult dep = deposit(state, skeleton);
        for (std::size_t qi = 0; qi < lq_orders.size(); ++qi) {
            const double nq = lp_norm(dep.field, lq_orders[qi]);
            row.lq_drift.push_back(base_norms[qi] > 0.0
                                       ? std::abs(nq - base_norms[qi]) / base_norms[qi]
                                       : std::abs(nq));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Flow property
// ---------------------------------------------------------------------------

struct FlowPropertyReport {
    double split_time = 0.0;
    double end_time = 0.0;
    double max_discrepancy = 0.0;  // passes iff exactly 0.0
    bool pass = false;
};

/// Splits the run at time s: integrates 0 -> s, resumes the final snapshot to
/// s + t, and compares against the uninterrupted 0 -> s + t run. The discrete
/// flow property demands bit-exact agreement, so the report passes only at
/// discrepancy 0.0.
inline FlowPropertyReport flow_property_check(const Scenario& scenario, double s, double t) {
    Scenario full = scenario;
    full.end_time = s + t;
    full.validate();

    const TrajectoryBundle whole = integrate(full);

    Scenario head = scenario;
    head.end_time = s;
    const TrajectoryBundle first = integrate(head);
    const ParticleEnsemble mid = marginal(first, s);
    const TrajectoryBundle tail = resume(mid, full);

    const std::vector<Vec2>& a = whole.positions.back();
    const std::vector<Vec2>& b = tail.positions.back();
    FlowPropertyReport report;
    report.split_time = s;
    report.end_time = s + t;
    if (a.size() != b.size()) {
        report.max_discrepancy = std::numeric_limits<double>::infinity();
        return report;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max({worst, std::abs(a[i].x - b[i].x), std::abs(a[i].y - b[i].y)});
    report.max_discrepancy = worst;
    report.pass = worst == 0.0;
    return report;
}

// ---------------------------------------------------------------------------
// Marginal identity
// ---------------------------------------------------------------------------

struct MarginalIdentityReport {
    bool pass = false;
    bool inconclusive = false;
    std::string detail;
    std::optional<std::size_t> mismatch_index;
    double mismatch_magnitude = 0.0;
};

/// Checks that the bundle's marginal at time t reproduces the state the
/// integrator held at that time: the recomputed state digest must equal the
/// digest persisted during integration, and, when a reference ensemble is
/// supplied (live state or a snapshot file), positions and circulations must
/// agree elementwise and both states must deposit to identical grids.
inline MarginalIdentityReport marginal_identity_check(const TrajectoryBundle& bundle, double t,
                                                      const ParticleEnsemble* reference = nullptr) {
    MarginalIdentityReport report;
    const std::size_t k = bundle.snapshot_index(t);
    const ParticleEnsemble state = marginal(bundle, t);

    if (bundle.state_digests.size() != bundle.snapshot_count()) {
        report.inconclusive = true;
        report.detail = "no persisted state digests; cannot conclude";
        return report;
    }
    if (ensemble_digest(state) != bundle.state_digests[k]) {
        report.detail = "state digest mismatch at t = " + std::to_string(state.time);
        if (reference != nullptr && reference->size() == state.size()) {
            double worst = 0.0;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < state.size(); ++i) {
                const double d =
                    std::max(std::abs(state.positions[i].x - reference->positions[i].x),
                             std::max(std::abs(state.positions[i].y - reference->positions[i].y),
                                      std::abs(state.circulations[i] - reference->circulations[i])));
                if (d > worst) {
                    worst = d;
                    worst_i = i;
                }
            }
            report.mismatch_index = worst_i;
            report.mismatch_magnitude = worst;
            report.detail += "; worst particle " + std::to_string(worst_i) + " deviates by " +
                             std::to_string(worst);
        }
        return report;
    }

    if (reference != nullptr) {
        if (reference->size() != state.size()) {
            report.detail = "reference particle count differs";
            return report;
        }
        for (std::size_t i = 0; i < state.size(); ++i) {
            if (state.positions[i] == reference->positions[i] &&
                state.circulations[i] == reference->circulations[i])
                continue;
            report.mismatch_index = i;
            report.mismatch_magnitude =
                std::max(std::abs(state.positions[i].x - reference->positions[i].x),
                         std::max(std::abs(state.positions[i].y - reference->positions[i].y),
                                  std::abs(state.circulations[i] - reference->circulations[i])));
            report.detail = "particle " + std::to_string(i) + " deviates by " +
                            std::to_string(report.mismatch_magnitude);
            return report;
        }
        const GridField skeleton = grid_for_ensemble(state, 0.25);
        const DepositResult a = deposit(state, skeleton);
        const DepositResult b = deposit(*reference, skeleton);
        for (std::size_t c = 0; c < a.field.values.size(); ++c) {
            if (a.field.values[c] != b.field.values[c]) {
                report.detail = "deposited fields differ at cell " + std::to_string(c);
                return report;
            }
        }
    }
    report.pass = true;
    report.detail = "marginal reproduces integrator state";
    return report;
}

// ---------------------------------------------------------------------------
// Closed-form oracles
// ---------------------------------------------------------------------------

/// Exact trajectories for the point-vortex families with closed-form motion:
/// two equal vortices (rigid rotation at Gamma / (pi d^2) about the
/// midpoint), two opposite vortices (translation at Gamma / (2 pi d)), and N
/// equal vortices on a regular polygon (rigid rotation at
/// Gamma (N-1) / (4 pi R^2) about the centroid).
inline std::vector<Vec2> point_vortex_oracle(std::span<const Particle> config, double t) {
    const std::size_t n = config.size();
    if (n < 2) throw InvalidInput("point_vortex_oracle: need at least two vortices");

    auto rotate_about = [&](Vec2 center, double omega) {
        const double c = std::cos(omega * t), s = std::sin(omega * t);
        std::vector<Vec2> out;
        out.reserve(n);
        for (const Particle& p : config) {
            const Vec2 d = p.position - center;
            out.push_back({center.x + c * d.x - s * d.y, center.y + s * d.x + c * d.y});
        }
        return out;
    };

    constexpr double tol = 1e-9;
    if (n == 2) {
        const double g0 = config[0].circulation, g1 = config[1].circulation;
        const Vec2 sep = config[0].position - config[1].position;
        const double d = sep.norm();
        if (d == 0.0) throw InvalidInput("point_vortex_oracle: coincident vortices");
        if (std::abs(g0 - g1) <= tol * std::abs(g0)) {
            const Vec2 mid = (config[0].position + config[1].position) * 0.5;
            const double omega = g0 / (std::numbers::pi * d * d);
            return rotate_about(mid, omega);
        }
        if (std::abs(g0 + g1) <= tol * std::abs(g0)) {
            // Both vortices move with the same velocity g1 * K(x0 - x1).
            const Vec2 u = sep.perp() * (-g0 / (kTwoPi * d * d));
            return {config[0].position + t * u, config[1].position + t * u};
        }
        throw InvalidInput("point_vortex_oracle: unsupported two-vortex configuration");
    }

    const double g = config[0].circulation;
    Vec2 centroid{0.0, 0.0};
    for (const Particle& p : config) {
        if (std::abs(p.circulation - g) > tol * std::abs(g))
            throw InvalidInput("point_vortex_oracle: polygon family needs equal circulations");
        centroid += p.position;
    }
    centroid = centroid / static_cast<double>(n);
    const double radius = (config[0].position - centroid).norm();
    if (radius == 0.0) throw InvalidInput("point_vortex_oracle: degenerate polygon");
    std::vector<double> angles;
    for (const Particle& p : config) {
        const Vec2 d = p.position - centroid;
        if (std::abs(d.norm() - radius) > tol * radius)
            throw InvalidInput("point_vortex_oracle: vortices are not on a common circle");
        angles.push_back(std::atan2(d.y, d.x));
    }
    std::sort(angles.begin(), angles.end());
    const double gap = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t i = 0; i + 1 < angles.size(); ++i)
        if (std::abs(angles[i + 1] - angles[i] - gap) > 1e-6)
            throw InvalidInput("point_vortex_oracle: vortices are not equally spaced");

    const double omega =
        g * static_cast<double>(n - 1) / (4.0 * std::numbers::pi * radius * radius);
    return rotate_about(centroid, omega);
}

/// Steady Rankine vortex: tangential speed of the patch of radius a with
/// level w0, at distance r from the center. Inside the patch the fluid
/// rotates rigidly; outside the speed decays like a point vortex.
inline double rankine_oracle(double r, double a, double w0) {
    if (!(r >= 0.0)) throw InvalidInput("rankine_oracle: r must be nonnegative");
    if (!(a > 0.0)) throw InvalidInput("rankine_oracle: patch radius must be positive");
    if (r <= a) return w0 * r / 2.0;
    return w0 * a * a / (2.0 * r);
}

}  // namespace vortex
