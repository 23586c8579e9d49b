#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vortex/errors.hpp"
#include "vortex/kahan.hpp"
#include "vortex/vec2.hpp"

namespace vortex {

enum class Scheme { Rk4, Euler };
enum class SummationMode { Direct, Tree };

/// A point vortex / vortex blob: position plus the circulation it carries
/// (the cell-integrated vorticity, Gamma_i).
struct Particle {
    Vec2 position;
    double circulation = 0.0;
};

/// Weighted point discretization of the vorticity measure at one instant.
/// Stored as structure-of-arrays; particle identity is the index and is
/// preserved by every operation in the library (transport moves positions,
/// never reorders, never touches circulations).
struct ParticleEnsemble {
    std::vector<Vec2> positions;
    std::vector<double> circulations;
    double blob_radius = 0.0;  // delta, fixed over the whole run
    double time = 0.0;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }

    Particle particle(std::size_t i) const { return {positions[i], circulations[i]}; }

    void push_back(const Particle& p) {
        positions.push_back(p.position);
        circulations.push_back(p.circulation);
    }

    void validate() const {
        if (!(blob_radius > 0.0)) throw InvalidInput("ensemble blob_radius must be positive");
        if (!(time >= 0.0) || !std::isfinite(time))
            throw InvalidInput("ensemble time must be finite and nonnegative");
        if (positions.size() != circulations.size())
            throw InvalidInput("ensemble positions/circulations length mismatch");
        for (std::size_t i = 0; i < positions.size(); ++i) {
            if (!positions[i].is_finite())
                throw InvalidInput("non-finite particle position at index " + std::to_string(i));
            if (!std::isfinite(circulations[i]))
                throw InvalidInput("non-finite circulation at index " + std::to_string(i));
        }
    }
};

/// Exact sum of all circulations. Compensated so that the value is stable to
/// the last few ulps regardless of ensemble size.
inline double total_circulation(const ParticleEnsemble& ensemble) {
    return kahan_total(ensemble.circulations);
}

/// Uniform grid of vorticity density values. origin is the center of cell
/// (0, 0); values are row-major, index iy * nx + ix.
struct GridField {
    Vec2 origin;
    double spacing = 0.0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<double> values;

    static GridField zeros(Vec2 origin, double spacing, std::size_t nx, std::size_t ny) {
        if (!(spacing > 0.0)) throw InvalidInput("grid spacing must be positive");
        if (nx == 0 || ny == 0) throw InvalidInput("grid must have at least one cell");
        GridField g;
        g.origin = origin;
        g.spacing = spacing;
        g.nx = nx;
        g.ny = ny;
        g.values.assign(nx * ny, 0.0);
        return g;
    }

    std::size_t cell_count() const { return nx * ny; }
    double& at(std::size_t ix, std::size_t iy) { return values[iy * nx + ix]; }
    double at(std::size_t ix, std::size_t iy) const { return values[iy * nx + ix]; }
    Vec2 cell_center(std::size_t ix, std::size_t iy) const {
        return {origin.x + static_cast<double>(ix) * spacing,
                origin.y + static_cast<double>(iy) * spacing};
    }

    /// h^2 * sum(values), the grid approximation of the integral.
    double integral() const {
        KahanSum s;
        for (double v : values) s.add(v);
        return spacing * spacing * s.value();
    }
};

/// Snapshot fingerprint: 32 bytes identifying an ensemble state bit-exactly.
using StateDigest = std::array<std::uint8_t, 32>;

/// Recorded particle paths at snapshot times: the discrete stand-in for a
/// path-space measure whose time marginals are the transported ensembles.
/// Circulations are constant along paths; velocities (when kept) are the
/// integrator's own evaluations at the snapshot instants.
struct TrajectoryBundle {
    std::vector<double> snapshot_times;           // increasing, starts at initial time
    std::vector<std::vector<Vec2>> positions;     // one entry per snapshot
    std::vector<std::vector<Vec2>> velocities;    // optional; empty or parallel to positions
    std::vector<StateDigest> state_digests;       // one per snapshot
    std::vector<double> circulations;
    double blob_radius = 0.0;

    std::size_t snapshot_count() const { return snapshot_times.size(); }
    std::size_t particle_count() const { return circulations.size(); }
    bool has_velocities() const { return velocities.size() == snapshot_times.size(); }

    /// Index of the stored snapshot at time t (exact or within one part in
    /// 1e12 of the snapshot spacing); otherwise throws a lookup error naming
    /// the nearest stored times below/above.
    std::size_t snapshot_index(double t) const {
        const double span = snapshot_times.empty()
                                ? 0.0
                                : std::max(1.0, std::abs(snapshot_times.back()));
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < snapshot_times.size(); ++k) {
            const double d = std::abs(snapshot_times[k] - t);
            if (d < best) {
                best = d;
                best_k = k;
            }
        }
        if (!snapshot_times.empty() && best <= 1e-12 * span) return best_k;

        std::vector<double> nearest;
        double below = -std::numeric_limits<double>::infinity();
        double above = std::numeric_limits<double>::infinity();
        bool have_below = false, have_above = false;
        for (double s : snapshot_times) {
            if (s <= t && s > below) {
                below = s;
                have_below = true;
            }
            if (s >= t && s < above) {
                above = s;
                have_above = true;
            }
        }
        std::ostringstream msg;
        msg << "time " << t << " is not a stored snapshot; nearest stored times: {";
        bool first = true;
        if (have_below) {
            msg << below;
            nearest.push_back(below);
            first = false;
        }
        if (have_above) {
            if (!first) msg << ", ";
            msg << above;
            nearest.push_back(above);
        }
        msg << "}";
        throw SnapshotLookupError(t, std::move(nearest), msg.str());
    }
};

/// Time marginal of the trajectory bundle: the ensemble whose positions are
/// the recorded paths evaluated at snapshot time t, carrying the (constant)
/// circulations. This is the pushforward of the recorded path measure under
/// evaluation at t.
inline ParticleEnsemble marginal(const TrajectoryBundle& bundle, double t) {
    const std::size_t k = bundle.snapshot_index(t);
    ParticleEnsemble ensemble;
    ensemble.positions = bundle.positions[k];
    ensemble.circulations = bundle.circulations;
    ensemble.blob_radius = bundle.blob_radius;
    ensemble.time = bundle.snapshot_times[k];
    return ensemble;
}

/// Growth profile Theta(p) for p >= 1, defining the admissible growth of
/// L^p norms. Shipped families:
///   constant:  Theta(p) = scale
///   log:       Theta(p) = scale * log(e + p)
///   loglog:    Theta(p) = scale * log(e + p) * log(e + log(e + p))
///   power:     Theta(p) = scale * p^alpha
/// The first three satisfy the divergence condition int_1^inf dp/(p Theta(p))
/// = inf; the power family with alpha > 0 does not and is shipped as a
/// negative control.
struct YudovichProfile {
    enum class Kind { Constant, Log, LogLog, Power };

    Kind kind = Kind::Constant;
    double scale = 1.0;
    double alpha = 1.0;  // power family only

    double theta(double p) const {
        if (p < 1.0) throw InvalidInput("Theta is defined for p >= 1");
        switch (kind) {
            case Kind::Constant:
                return scale;
            case Kind::Log:
                return scale * std::log(std::exp(1.0) + p);
            case Kind::LogLog: {
                const double l = std::log(std::exp(1.0) + p);
                return scale * l * std::log(std::exp(1.0) + l);
            }
            case Kind::Power:
                return scale * std::pow(p, alpha);
        }
        return scale;
    }

    void validate() const {
        if (!(scale > 0.0)) throw InvalidInput("Yudovich profile scale must be positive");
        if (kind == Kind::Power && !(alpha >= 0.0))
            throw InvalidInput("power profile exponent must be nonnegative");
    }

    std::string name() const {
        switch (kind) {
            case Kind::Constant:
                return "constant";
            case Kind::Log:
                return "log";
            case Kind::LogLog:
                return "loglog";
            case Kind::Power:
                return "power";
        }
        return "constant";
    }
};

}  // namespace vortex
