#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "vortex/parallel.hpp"
#include "vortex/transport.hpp"

using namespace vortex;

namespace {

Scenario pair_scenario(double d, double gamma, double end_time, double dt = 1e-3) {
    Scenario sc;
    sc.initial.kind = InitialKind::PointVortices;
    sc.initial.vortices = {{{d / 2.0, 0.0}, gamma}, {{-d / 2.0, 0.0}, gamma}};
    sc.blob_radius = 1e-8;
    sc.summation = SummationMode::Direct;
    sc.dt = dt;
    sc.snapshot_interval = end_time > 0.0 ? end_time : dt;
    sc.end_time = end_time;
    return sc;
}

Scenario small_rankine(long n, double end_time, double dt, double snapshot_interval) {
    Scenario sc;
    sc.box_min = {-1.1, -1.1};
    sc.box_max = {1.1, 1.1};
    sc.particle_target = n;
    sc.dt = dt;
    sc.snapshot_interval = snapshot_interval;
    sc.end_time = end_time;
    sc.summation = SummationMode::Tree;
    sc.opening_angle = 0.5;
    return sc;
}

}  // namespace

TEST_CASE("a lone particle never moves") {
    ParticleEnsemble e;
    e.blob_radius = 0.01;
    e.push_back({{0.4, -0.7}, 3.0});
    IntegratorConfig cfg;
    cfg.dt = 0.1;
    const ParticleEnsemble next = step(e, cfg);
    REQUIRE(next.positions[0] == Vec2{0.4, -0.7});
    REQUIRE(next.time == 0.1);
}

TEST_CASE("euler step is the explicit update") {
    ParticleEnsemble e;
    e.blob_radius = 1e-8;
    e.push_back({{0.5, 0.0}, 1.0});
    e.push_back({{-0.5, 0.0}, 1.0});
    IntegratorConfig cfg;
    cfg.dt = 0.01;
    cfg.scheme = Scheme::Euler;
    cfg.summation = SummationMode::Direct;
    const std::vector<Vec2> v = velocity_direct(e.positions, e);
    const ParticleEnsemble next = step(e, cfg);
    for (std::size_t i = 0; i < e.size(); ++i) {
        REQUIRE(next.positions[i].x == e.positions[i].x + cfg.dt * v[i].x);
        REQUIRE(next.positions[i].y == e.positions[i].y + cfg.dt * v[i].y);
    }
}

TEST_CASE("equal vortex pair rotates at Gamma / (pi d^2)") {
    // d = 1, Gamma = 1: one revolution takes 2 pi^2. Run a fifth of it.
    const double omega_ref = 1.0 / std::numbers::pi;
    const double T = 2.0 * std::numbers::pi * std::numbers::pi / 5.0;
    Scenario sc = pair_scenario(1.0, 1.0, 0.0, 1e-3);
    sc.end_time = std::round(T / sc.dt) * sc.dt;  // keep T on the step lattice
    sc.snapshot_interval = sc.end_time;
    const TrajectoryBundle bundle = integrate(sc);

    const Vec2 p = bundle.positions.back()[0];
    const double angle = std::atan2(p.y, p.x);  // started at angle 0, radius 1/2
    const double omega_sim = angle / sc.end_time;
    REQUIRE_THAT(omega_sim, Catch::Matchers::WithinRel(omega_ref, 1e-4));
    REQUIRE_THAT(p.norm(), Catch::Matchers::WithinRel(0.5, 1e-6));

    // Independent route: adaptive RK45 on the two-body system.
    const auto reference = oracle::integrate_point_vortices(
        {{1.0, 0.5, 0.0}, {1.0, -0.5, 0.0}}, sc.end_time, 1e-13);
    REQUIRE_THAT(p.x, Catch::Matchers::WithinAbs(reference[0].x, 1e-8));
    REQUIRE_THAT(p.y, Catch::Matchers::WithinAbs(reference[0].y, 1e-8));
}

TEST_CASE("co-rotating triangle keeps its shape for one revolution") {
    const double radius = 1.0;
    const double gamma = 1.5;
    // Rigid rotation at Gamma (N - 1) / (4 pi R^2).
    const double omega = gamma * 2.0 / (4.0 * std::numbers::pi * radius * radius);
    Scenario sc;
    sc.initial.kind = InitialKind::PointVortices;
    for (int k = 0; k < 3; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 3.0;
        sc.initial.vortices.push_back({{radius * std::cos(a), radius * std::sin(a)}, gamma});
    }
    sc.blob_radius = 1e-8;
    sc.summation = SummationMode::Direct;
    sc.dt = 1e-3;
    const double period = 2.0 * std::numbers::pi / omega;
    sc.end_time = std::round(period / sc.dt) * sc.dt;
    sc.snapshot_interval = sc.end_time;

    const TrajectoryBundle bundle = integrate(sc);
    const double angle = omega * sc.end_time;
    for (int k = 0; k < 3; ++k) {
        const Vec2 start = sc.initial.vortices[k].position;
        const Vec2 expected{std::cos(angle) * start.x - std::sin(angle) * start.y,
                            std::sin(angle) * start.x + std::cos(angle) * start.y};
        const Vec2 finish = bundle.positions.back()[k];
        REQUIRE((finish - expected).norm() / radius <= 1e-6);
        REQUIRE_THAT(finish.norm(), Catch::Matchers::WithinRel(radius, 1e-6));
    }
}

TEST_CASE("rk4 converges at fourth order on the two-body problem") {
    // d = 0.5 so the error sits far above roundoff at T = 10. The exact
    // solution is rigid rotation at Gamma / (pi d^2), machine-accurate as a
    // reference (the adaptive oracle's accumulated tolerance would mask the
    // finest errors here).
    const double T = 10.0;
    const double omega = 1.0 / (std::numbers::pi * 0.25);

    std::vector<double> errors;
    for (double dt : {8e-3, 4e-3, 2e-3, 1e-3}) {
        Scenario sc = pair_scenario(0.5, 1.0, 0.0, dt);
        sc.end_time = std::round(T / dt) * dt;
        sc.snapshot_interval = sc.end_time;
        const TrajectoryBundle bundle = integrate(sc);
        const Vec2 p = bundle.positions.back()[0];
        const double angle = omega * sc.end_time;
        const Vec2 exact{0.25 * std::cos(angle), 0.25 * std::sin(angle)};
        errors.push_back(std::hypot(p.x - exact.x, p.y - exact.y));
    }
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
        const double ratio = errors[i] / errors[i + 1];
        REQUIRE(ratio > 16.0 * 0.75);
        REQUIRE(ratio < 16.0 * 1.25);
    }
    const double slope = std::log2(errors.front() / errors.back()) / 3.0;
    REQUIRE(slope >= 3.7);
}

TEST_CASE("center of vorticity is conserved along the flow") {
    Scenario sc = pair_scenario(1.0, 1.0, 1.0, 1e-3);
    sc.snapshot_interval = 0.5;
    const TrajectoryBundle bundle = integrate(sc);
    auto center = [&](const std::vector<Vec2>& pos) {
        KahanSum2 weighted;
        KahanSum total;
        for (std::size_t i = 0; i < pos.size(); ++i) {
            weighted.add(bundle.circulations[i] * pos[i]);
            total.add(bundle.circulations[i]);
        }
        return weighted.value() / total.value();
    };
    const Vec2 c0 = center(bundle.positions.front());
    const Vec2 c1 = center(bundle.positions.back());
    REQUIRE((c1 - c0).norm() <= 1e-10);  // per unit time on the unit-scale pair
}

TEST_CASE("circulations are never mutated by transport") {
    Scenario sc = small_rankine(500, 0.1, 1e-2, 5e-2);
    const ParticleEnsemble initial = build_initial_ensemble(sc);
    const TrajectoryBundle bundle = integrate(sc);
    REQUIRE(bundle.circulations == initial.circulations);
}

TEST_CASE("split-and-resume reproduces the uninterrupted run bit-exactly") {
    const Scenario sc = small_rankine(900, 0.2, 1e-2, 5e-2);

    for (int workers : {1, 2, 8}) {
        set_worker_count(workers);
        Scenario full = sc;
        const TrajectoryBundle whole = integrate(full);

        Scenario head = sc;
        head.end_time = 0.1;
        const TrajectoryBundle first = integrate(head);
        const ParticleEnsemble mid = marginal(first, 0.1);
        const TrajectoryBundle tail = resume(mid, full);

        REQUIRE(tail.snapshot_times.front() == 0.1);
        REQUIRE(whole.positions.back().size() == tail.positions.back().size());
        for (std::size_t i = 0; i < whole.positions.back().size(); ++i) {
            REQUIRE(whole.positions.back()[i].x == tail.positions.back()[i].x);
            REQUIRE(whole.positions.back()[i].y == tail.positions.back()[i].y);
        }
        // Snapshot times land on the same lattice values bit-exactly.
        REQUIRE(whole.snapshot_times.back() == tail.snapshot_times.back());
    }
    set_worker_count(0);
}

TEST_CASE("resume rejects a mismatched blob radius with a field diff") {
    const Scenario sc = small_rankine(400, 0.1, 1e-2, 5e-2);
    const TrajectoryBundle bundle = integrate(sc);
    ParticleEnsemble mid = marginal(bundle, 0.05);
    mid.blob_radius *= 2.0;
    try {
        resume(mid, sc);
        FAIL("expected ConfigMismatchError");
    } catch (const ConfigMismatchError& e) {
        REQUIRE(e.fields() == std::vector<std::string>{"blob_radius"});
    }
}

TEST_CASE("config_diff lists every integrator-relevant difference") {
    Scenario a = small_rankine(400, 0.1, 1e-2, 5e-2);
    Scenario b = a;
    b.dt = 2e-3;
    b.snapshot_interval = 1e-2;
    b.scheme = Scheme::Euler;
    const auto [fields, diff] = config_diff(a, b);
    REQUIRE(fields == std::vector<std::string>{"dt", "scheme"});
    REQUIRE_THAT(diff, Catch::Matchers::ContainsSubstring("dt"));
    REQUIRE_THAT(diff, Catch::Matchers::ContainsSubstring("euler"));
}

TEST_CASE("resume at the end time yields a single snapshot") {
    const Scenario sc = small_rankine(400, 0.1, 1e-2, 5e-2);
    const TrajectoryBundle bundle = integrate(sc);
    const ParticleEnsemble last = marginal(bundle, 0.1);
    const TrajectoryBundle tail = resume(last, sc);
    REQUIRE(tail.snapshot_count() == 1);
    REQUIRE(tail.snapshot_times[0] == 0.1);
}

TEST_CASE("integration blow-up names the particle and time") {
    Scenario sc;
    sc.initial.kind = InitialKind::PointVortices;
    sc.initial.vortices = {{{1e-7, 0.0}, 1e9}, {{-1e-7, 0.0}, 1e9}};
    sc.blob_radius = 1e-12;
    sc.summation = SummationMode::Direct;
    sc.dt = 1.0;
    sc.snapshot_interval = 1.0;
    sc.end_time = 4.0;
    try {
        integrate(sc);
        FAIL("expected BlowUpError");
    } catch (const BlowUpError& e) {
        REQUIRE(e.particle() < 2);
        REQUIRE(e.time() > 0.0);
        REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("blow-up"));
    }
}

TEST_CASE("T = 0 yields the initial snapshot only") {
    Scenario sc = small_rankine(300, 0.0, 1e-2, 5e-2);
    const TrajectoryBundle bundle = integrate(sc);
    REQUIRE(bundle.snapshot_count() == 1);
    REQUIRE(bundle.snapshot_times[0] == 0.0);
    const ParticleEnsemble initial = build_initial_ensemble(sc);
    REQUIRE(bundle.positions[0] == initial.positions);
}
