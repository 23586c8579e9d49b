#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vortex/biot_savart.hpp"
#include "vortex/core.hpp"
#include "vortex/errors.hpp"
#include "vortex/kahan.hpp"
#include "vortex/parallel.hpp"

namespace vortex {

// ---------------------------------------------------------------------------
// Particle-to-grid deposition
// ---------------------------------------------------------------------------

struct DepositResult {
    GridField field;
    double clipped_mass = 0.0;        // total circulation minus captured grid mass
    std::size_t outside_particles = 0;  // particles not covered by the grid
    bool grid_covers_ensemble = true;
};

/// Grid skeleton sized to the ensemble: bounding box padded on all sides,
/// spacing defaulting to half the blob radius.
inline GridField grid_for_ensemble(const ParticleEnsemble& ensemble, double padding,
                                   double spacing = 0.0) {
    if (ensemble.empty()) throw InvalidInput("grid_for_ensemble: ensemble is empty");
    if (spacing <= 0.0) spacing = ensemble.blob_radius / 2.0;
    if (!(spacing > 0.0)) throw InvalidInput("grid_for_ensemble: spacing must be positive");
    double min_x = ensemble.positions[0].x, max_x = min_x;
    double min_y = ensemble.positions[0].y, max_y = min_y;
    for (const Vec2& p : ensemble.positions) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const std::size_t nx =
        1 + static_cast<std::size_t>(std::ceil((max_x - min_x + 2.0 * padding) / spacing));
    const std::size_t ny =
        1 + static_cast<std::size_t>(std::ceil((max_y - min_y + 2.0 * padding) / spacing));
    return GridField::zeros({min_x - padding, min_y - padding}, spacing, nx, ny);
}

/// Smooths the ensemble onto the grid: w_h(c) = sum_i Gamma_i psi_delta(c -
/// x_i), evaluated at cell centers, with psi_delta the unit-mass blob density
/// matched to kernel_blob. The clipped mass is the circulation the grid did
/// not capture (tails outside the box plus midpoint-quadrature defect); by
/// construction h^2 * sum(values) + clipped = total circulation to summation
/// accuracy.
inline DepositResult deposit(const ParticleEnsemble& ensemble, const GridField& skeleton) {
    if (!(skeleton.spacing > 0.0) || skeleton.cell_count() == 0)
        throw InvalidInput("deposit: degenerate grid");
    DepositResult result;
    result.field = GridField::zeros(skeleton.origin, skeleton.spacing, skeleton.nx, skeleton.ny);
    GridField& grid = result.field;

    const std::size_t n = ensemble.size();
    const double delta = ensemble.blob_radius;
    const double d2 = delta * delta;
    const double scale = d2 / std::numbers::pi;

    const double h = grid.spacing;
    const double lo_x = grid.origin.x - h / 2.0;
    const double hi_x = grid.origin.x + (static_cast<double>(grid.nx) - 0.5) * h;
    const double lo_y = grid.origin.y - h / 2.0;
    const double hi_y = grid.origin.y + (static_cast<double>(grid.ny) - 0.5) * h;
    for (const Vec2& p : ensemble.positions) {
        if (p.x < lo_x || p.x > hi_x || p.y < lo_y || p.y > hi_y) ++result.outside_particles;
    }
    result.grid_covers_ensemble = result.outside_particles == 0;

    std::vector<double> px(n), py(n), pg(n);
    for (std::size_t i = 0; i < n; ++i) {
        px[i] = ensemble.positions[i].x;
        py[i] = ensemble.positions[i].y;
        pg[i] = ensemble.circulations[i];
    }

    parallel_for(grid.ny, [&](std::size_t row_begin, std::size_t row_end) {
        for (std::size_t iy = row_begin; iy < row_end; ++iy) {
            const double cy = grid.origin.y + static_cast<double>(iy) * h;
            double* row = grid.values.data() + iy * grid.nx;
            for (std::size_t ix = 0; ix < grid.nx; ++ix) {
                const double cx = grid.origin.x + static_cast<double>(ix) * h;
                double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                for (std::size_t j = 0; j < n; ++j) {
                    const double dx = cx - px[j];
                    const double dy = cy - py[j];
                    const double s = dx * dx + dy * dy + d2;
                    acc += pg[j] / (s * s);
                }
                row[ix] = acc * scale;
            }
        }
    });

    result.clipped_mass = total_circulation(ensemble) - grid.integral();
    return result;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// Grid L^q norm: (h^2 sum |v|^q)^(1/q), max |v| for q = inf. Computed in
/// max-normalized form so large q neither overflows nor underflows.
inline double lp_norm(const GridField& field, double q) {
    if (!(q >= 1.0)) throw InvalidInput("lp_norm: q must be >= 1 (or inf)");
    double max_abs = 0.0;
    for (double v : field.values) max_abs = std::max(max_abs, std::abs(v));
    if (std::isinf(q) || max_abs == 0.0) return max_abs;
    KahanSum s;
    for (double v : field.values) s.add(std::pow(std::abs(v) / max_abs, q));
    return max_abs * std::pow(field.spacing * field.spacing * s.value(), 1.0 / q);
}

/// Uniformly-localized L^p norm: the maximum over unit balls centered at the
/// grid's own cell centers of the ball-restricted L^p norm. A lattice
/// relaxation of the continuum supremum over all centers; the mismatch is at
/// most one cell shift of the ball.
inline double uloc_norm(const GridField& field, double p) {
    if (!(p >= 1.0)) throw InvalidInput("uloc_norm: p must be >= 1");
    double max_abs = 0.0;
    for (double v : field.values) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs == 0.0) return 0.0;

    const std::size_t nx = field.nx, ny = field.ny;
    const double h = field.spacing;
    // Row-wise prefix sums of (|v|/max)^p.
    std::vector<double> prefix((nx + 1) * ny);
    for (std::size_t iy = 0; iy < ny; ++iy) {
        double run = 0.0;
        prefix[iy * (nx + 1)] = 0.0;
        for (std::size_t ix = 0; ix < nx; ++ix) {
            run += std::pow(std::abs(field.at(ix, iy)) / max_abs, p);
            prefix[iy * (nx + 1) + ix + 1] = run;
        }
    }

    const long reach = static_cast<long>(std::floor(1.0 / h));
    double best = 0.0;
    for (std::size_t cy = 0; cy < ny; ++cy) {
        for (std::size_t cx = 0; cx < nx; ++cx) {
            double window = 0.0;
            const long y0 = std::max<long>(0, static_cast<long>(cy) - reach);
            const long y1 = std::min<long>(static_cast<long>(ny) - 1, static_cast<long>(cy) + reach);
            for (long iy = y0; iy <= y1; ++iy) {
                const double dy = static_cast<double>(iy - static_cast<long>(cy)) * h;
                const double span = 1.0 - dy * dy;
                if (span < 0.0) continue;
                const long half = static_cast<long>(std::floor(std::sqrt(span) / h));
                const long x0 = std::max<long>(0, static_cast<long>(cx) - half);
                const long x1 =
                    std::min<long>(static_cast<long>(nx) - 1, static_cast<long>(cx) + half);
                if (x1 < x0) continue;
                const double* row = prefix.data() + static_cast<std::size_t>(iy) * (nx + 1);
                window += row[x1 + 1] - row[x0];
            }
            best = std::max(best, window);
        }
    }
    return max_abs * std::pow(h * h * best, 1.0 / p);
}

/// Geometric p grid {1, 2, 4, ..., p_max} used for the Yudovich supremum.
inline std::vector<double> default_p_grid(double p_max = 1024.0) {
    std::vector<double> grid;
    for (double p = 1.0; p <= p_max * (1.0 + 1e-12); p *= 2.0) grid.push_back(p);
    return grid;
}

/// Yudovich norm relaxation: max over the p grid of ||f||_{L^p} / Theta(p).
/// A lower bound for the continuum supremum over p >= 1.
inline double yudovich_norm(const GridField& field, const YudovichProfile& profile,
                            std::span<const double> p_grid) {
    if (p_grid.empty()) throw InvalidInput("yudovich_norm: empty p grid");
    double best = 0.0;
    for (double p : p_grid) best = std::max(best, lp_norm(field, p) / profile.theta(p));
    return best;
}

// ---------------------------------------------------------------------------
// Modulus of continuity and the Osgood integral
// ---------------------------------------------------------------------------

inline constexpr double kPhiKnot = 0.1353352832366127;  // e^-2

/// phi_Theta(r): 0 at r = 0, r (1 - log r) Theta(1 - log r) on (0, e^-2],
/// constant at its e^-2 value beyond.
inline double phi_theta(double r, const YudovichProfile& profile) {
    if (!(r >= 0.0)) throw InvalidInput("phi_theta: r must be nonnegative");
    if (r == 0.0) return 0.0;
    const double knot = kPhiKnot;
    const double rr = std::min(r, knot);
    const double u = 1.0 - std::log(rr);
    return rr * u * profile.theta(u);
}

/// Largest positive second difference of phi_Theta on a dense r grid over
/// [0, e^-2]; <= 0 (up to roundoff) means the sampled profile is concave.
/// Reported, not enforced.
inline double phi_theta_concavity_defect(const YudovichProfile& profile, std::size_t samples = 4096) {
    const double h = kPhiKnot / static_cast<double>(samples + 1);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 <= samples; ++i) {
        const double r = static_cast<double>(i) * h;
        const double second =
            phi_theta(r + h, profile) - 2.0 * phi_theta(r, profile) + phi_theta(r - h, profile);
        worst = std::max(worst, second / (h * h));
    }
    return worst;
}

struct QuadratureResult {
    double value = 0.0;
    double achieved_tol = 0.0;
    bool converged = true;
};

namespace detail {

inline void adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                             double fm, double fb, double whole, double tol, int depth,
                             QuadratureResult& out) {
    const double m = (a + b) / 2.0;
    const double lm = (a + m) / 2.0, rm = (m + b) / 2.0;
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double err = (left + right - whole) / 15.0;
    if (depth <= 0) {
        out.value += left + right + err;
        out.achieved_tol = std::max(out.achieved_tol, std::abs(err));
        out.converged = out.converged && std::abs(err) <= tol;
        return;
    }
    if (std::abs(err) <= tol) {
        out.value += left + right + err;
        out.achieved_tol = std::max(out.achieved_tol, std::abs(err));
        return;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, out);
    adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, out);
}

/// Adaptive Simpson over [a, b] split into geometrically growing panels from
/// the left endpoint (where the integrands here are largest).
inline QuadratureResult panel_quadrature(const std::function<double(double)>& f, double a, double b,
                                         double rel_tol) {
    QuadratureResult out;
    KahanSum total;
    double left = a;
    double width = (b - a) * 1e-6;
    int guard = 0;
    while (left < b && guard++ < 128) {
        const double right = std::min(b, left + width);
        QuadratureResult piece;
        const double fa = f(left), fb = f(right), fm = f((left + right) / 2.0);
        const double whole = (right - left) / 6.0 * (fa + 4.0 * fm + fb);
        adaptive_simpson(f, left, right, fa, fm, fb, whole,
                         std::max(std::abs(whole), 1e-300) * rel_tol, 40, piece);
        total.add(piece.value);
        out.achieved_tol = std::max(out.achieved_tol, piece.achieved_tol);
        out.converged = out.converged && piece.converged;
        left = right;
        width *= 2.0;
    }
    out.value = total.value();
    return out;
}

}  // namespace detail

/// int_eps^{e^-2} dr / phi_Theta(r), adaptive Simpson with panels doubling
/// away from eps (the integrand peaks there), relative tolerance 1e-6.
/// Divergence of this integral as eps -> 0 is the Osgood condition.
inline double osgood_integral(const YudovichProfile& profile, double eps) {
    if (!(eps > 0.0 && eps < kPhiKnot))
        throw InvalidInput("osgood_integral: eps must lie in (0, e^-2)");
    auto f = [&profile](double r) { return 1.0 / phi_theta(r, profile); };
    const QuadratureResult q = detail::panel_quadrature(f, eps, kPhiKnot, 1e-6);
    if (!q.converged)
        throw std::runtime_error("osgood_integral: quadrature did not converge; achieved " +
                                 std::to_string(q.achieved_tol));
    return q.value;
}

/// Same integral parameterized by L = -log eps, computed in the substituted
/// variable u = 1 - log r:  int_3^{1+L} du / (u Theta(u)). Handles L far
/// beyond the reach of representable eps (e.g. L = 1000) and doubles as the
/// growth-condition integral int dp / (p Theta(p)) on [3, 1+L].
inline double osgood_integral_log(const YudovichProfile& profile, double neg_log_eps) {
    if (!(neg_log_eps > 2.0))
        throw InvalidInput("osgood_integral_log: -log(eps) must exceed 2");
    auto f = [&profile](double u) { return 1.0 / (u * profile.theta(u)); };
    const QuadratureResult q = detail::panel_quadrature(f, 3.0, 1.0 + neg_log_eps, 1e-8);
    if (!q.converged)
        throw std::runtime_error("osgood_integral_log: quadrature did not converge; achieved " +
                                 std::to_string(q.achieved_tol));
    return q.value;
}

// ---------------------------------------------------------------------------
// Velocity modulus of continuity
// ---------------------------------------------------------------------------

struct PointPair {
    Vec2 a;
    Vec2 b;
};

namespace detail {

inline double halton(std::size_t index, unsigned base) {
    double f = 1.0, r = 0.0;
    std::size_t i = index + 1;
    while (i > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

}  // namespace detail

/// Deterministic pair sample for the modulus estimate: separations are
/// log-uniform over [delta, 1] across `strata`, base points follow a Halton
/// (2,3) sequence over the particle bounding box, directions rotate by the
/// golden angle. Documented scheme; no RNG state.
inline std::vector<PointPair> modulus_pair_sample(const ParticleEnsemble& ensemble, int strata,
                                                  int points_per_stratum) {
    if (ensemble.empty()) throw InvalidInput("modulus_pair_sample: ensemble is empty");
    if (strata < 1 || points_per_stratum < 1)
        throw InvalidInput("modulus_pair_sample: strata and points must be positive");
    double min_x = ensemble.positions[0].x, max_x = min_x;
    double min_y = ensemble.positions[0].y, max_y = min_y;
    for (const Vec2& p : ensemble.positions) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double width = std::max(max_x - min_x, 1e-12);
    const double height = std::max(max_y - min_y, 1e-12);

    const double r_min = std::min(ensemble.blob_radius, 0.5);
    const double r_max = 1.0;
    const double log_lo = std::log(r_min), log_hi = std::log(r_max);

    constexpr double golden_angle = 2.399963229728653;  // 2 pi (1 - 1/phi)
    std::vector<PointPair> pairs;
    pairs.reserve(static_cast<std::size_t>(strata) * points_per_stratum);
    std::size_t seq = 0;
    for (int s = 0; s < strata; ++s) {
        const double frac = strata == 1 ? 0.0 : static_cast<double>(s) / (strata - 1);
        const double r = std::exp(log_lo + frac * (log_hi - log_lo));
        for (int m = 0; m < points_per_stratum; ++m, ++seq) {
            const Vec2 base{min_x + width * detail::halton(seq, 2),
                            min_y + height * detail::halton(seq, 3)};
            const double angle = golden_angle * static_cast<double>(seq);
            const Vec2 offset{r * std::cos(angle), r * std::sin(angle)};
            pairs.push_back({base, base + offset});
        }
    }
    return pairs;
}

/// Empirical C_b^{phi_Theta} norm estimate of the induced velocity field:
/// max sampled |v| plus the sampled modulus seminorm
/// max |v(x) - v(y)| / phi_Theta(|x - y|). A lower bound of the continuum
/// norm; refine the sample for tighter estimates.
inline double velocity_modulus(const ParticleEnsemble& ensemble,
                               std::span<const PointPair> pairs,
                               const YudovichProfile& profile) {
    if (pairs.empty()) throw InvalidInput("velocity_modulus: empty pair sample");
    std::vector<Vec2> points;
    points.reserve(2 * pairs.size());
    for (const PointPair& p : pairs) {
        if ((p.a - p.b).norm_sq() == 0.0)
            throw InvalidInput("velocity_modulus: pair with zero separation");
        points.push_back(p.a);
        points.push_back(p.b);
    }
    const std::vector<Vec2> vel = velocity_direct(points, ensemble);
    double sup = 0.0, semi = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const Vec2 va = vel[2 * k], vb = vel[2 * k + 1];
        sup = std::max({sup, va.norm(), vb.norm()});
        const double gap = (va - vb).norm();
        const double spread = phi_theta((pairs[k].a - pairs[k].b).norm(), profile);
        semi = std::max(semi, gap / spread);
    }
    return sup + semi;
}

// ---------------------------------------------------------------------------
// Drift integrability
// ---------------------------------------------------------------------------

/// Particle quadrature of the drift-integrability integrand at fixed time:
/// sum_i |Gamma_i| |v(x_i)| / (1 + |x_i|), using the supplied velocities.
inline double drift_integrability(const ParticleEnsemble& ensemble,
                                  std::span<const Vec2> velocities) {
    if (velocities.size() != ensemble.size())
        throw InvalidInput("drift_integrability: velocity count mismatch");
    KahanSum s;
    for (std::size_t i = 0; i < ensemble.size(); ++i)
        s.add(std::abs(ensemble.circulations[i]) * velocities[i].norm() /
              (1.0 + ensemble.positions[i].norm()));
    return s.value();
}

/// Convenience overload evaluating the self-induced velocities directly.
inline double drift_integrability(const ParticleEnsemble& ensemble) {
    const std::vector<Vec2> vel = velocity_direct(ensemble.positions, ensemble);
    return drift_integrability(ensemble, vel);
}

}  // namespace vortex
