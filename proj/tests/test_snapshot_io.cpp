#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "vortex/runner.hpp"
#include "vortex/snapshot_io.hpp"

using namespace vortex;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "vortex_io_test";
    fs::create_directories(dir);
    return dir;
}

bool bits_equal(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

}  // namespace

TEST_CASE("snapshot files round-trip bit-exactly") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> coord(-1e3, 1e3);
    const fs::path path = temp_dir() / "roundtrip.vxs";

    for (int trial = 0; trial < 5; ++trial) {
        ParticleEnsemble e;
        e.blob_radius = 0.01 * (trial + 1);
        e.time = trial * 0.37;
        const std::size_t n = 1 + static_cast<std::size_t>(rng() % 500);
        for (std::size_t i = 0; i < n; ++i) e.push_back({{coord(rng), coord(rng)}, coord(rng)});
        // Values that stress bit-exactness.
        e.positions[0] = {-0.0, 5e-324};
        e.circulations[0] = -1e-308;

        StateDigest fp{};
        for (std::size_t i = 0; i < fp.size(); ++i) fp[i] = static_cast<std::uint8_t>(rng());

        write_snapshot(path, e, fp);
        const SnapshotData back = read_snapshot(path);
        REQUIRE(back.fingerprint == fp);
        REQUIRE(back.ensemble.size() == e.size());
        REQUIRE(bits_equal(back.ensemble.time, e.time));
        REQUIRE(bits_equal(back.ensemble.blob_radius, e.blob_radius));
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(bits_equal(back.ensemble.positions[i].x, e.positions[i].x));
            REQUIRE(bits_equal(back.ensemble.positions[i].y, e.positions[i].y));
            REQUIRE(bits_equal(back.ensemble.circulations[i], e.circulations[i]));
        }
    }
}

TEST_CASE("snapshot reader rejects malformed files") {
    const fs::path dir = temp_dir();
    ParticleEnsemble e;
    e.blob_radius = 0.1;
    e.push_back({{1.0, 2.0}, 3.0});
    const StateDigest fp{};
    const fs::path good = dir / "good.vxs";
    write_snapshot(good, e, fp);

    SECTION("bad magic") {
        const fs::path bad = dir / "bad_magic.vxs";
        fs::copy_file(good, bad, fs::copy_options::overwrite_existing);
        std::fstream f(bad, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("NOPE", 4);
        f.close();
        REQUIRE_THROWS_WITH(read_snapshot(bad), Catch::Matchers::ContainsSubstring("magic"));
    }

    SECTION("wrong version") {
        const fs::path bad = dir / "bad_version.vxs";
        fs::copy_file(good, bad, fs::copy_options::overwrite_existing);
        std::fstream f(bad, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const std::uint32_t v = 999;
        f.write(reinterpret_cast<const char*>(&v), sizeof v);
        f.close();
        REQUIRE_THROWS_WITH(read_snapshot(bad), Catch::Matchers::ContainsSubstring("version"));
    }

    SECTION("truncated body") {
        const fs::path bad = dir / "truncated.vxs";
        std::ifstream src(good, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(src)),
                                std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() - 8);
        std::ofstream dst(bad, std::ios::binary | std::ios::trunc);
        dst.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        dst.close();
        REQUIRE_THROWS_WITH(read_snapshot(bad), Catch::Matchers::ContainsSubstring("truncated"));
    }

    SECTION("trailing bytes") {
        const fs::path bad = dir / "trailing.vxs";
        fs::copy_file(good, bad, fs::copy_options::overwrite_existing);
        std::ofstream f(bad, std::ios::binary | std::ios::app);
        f.write("x", 1);
        f.close();
        REQUIRE_THROWS_WITH(read_snapshot(bad), Catch::Matchers::ContainsSubstring("trailing"));
    }

    SECTION("missing file") {
        REQUIRE_THROWS_AS(read_snapshot(dir / "nope.vxs"), InvalidInput);
    }
}

TEST_CASE("grid-file initial data honors the blob radius override") {
    const fs::path path = temp_dir() / "initial.vxs";
    ParticleEnsemble e;
    e.blob_radius = 0.25;
    e.time = 4.2;
    e.push_back({{0.1, 0.2}, 0.5});
    write_snapshot(path, e, StateDigest{});

    const ParticleEnsemble loaded = load_initial_from_snapshot(path);
    REQUIRE(loaded.time == 0.0);
    REQUIRE(loaded.blob_radius == 0.25);

    const ParticleEnsemble overridden = load_initial_from_snapshot(path, 0.5);
    REQUIRE(overridden.blob_radius == 0.5);
}

TEST_CASE("grid-file initial data runs end to end") {
    // Persist a small ensemble, then use the snapshot as initial data.
    const fs::path dir = temp_dir() / "grid_file_run";
    fs::remove_all(dir);
    fs::create_directories(dir);

    Scenario source;
    source.box_min = {-1.1, -1.1};
    source.box_max = {1.1, 1.1};
    source.particle_target = 400;
    source.end_time = 0.0;
    const ParticleEnsemble seed = build_initial_ensemble(source);
    const fs::path seed_path = dir / "seed.vxs";
    write_snapshot(seed_path, seed, StateDigest{});

    Scenario sc;
    sc.initial.kind = InitialKind::GridFile;
    sc.initial.grid_file = seed_path.string();
    sc.dt = 1e-2;
    sc.snapshot_interval = 5e-2;
    sc.end_time = 0.1;
    sc.summation = SummationMode::Direct;
    const RunOutcome outcome = run_scenario(sc, dir / "out");
    REQUIRE(outcome.bundle.snapshot_count() == 3);
    REQUIRE(outcome.bundle.particle_count() == seed.size());
    REQUIRE(outcome.bundle.positions[0] == seed.positions);
    REQUIRE(total_circulation(marginal(outcome.bundle, 0.1)) == total_circulation(seed));
}

TEST_CASE("blow-up keeps snapshots on disk and marks the manifest") {
    const fs::path dir = temp_dir() / "blowup_run";
    fs::remove_all(dir);

    Scenario sc;
    sc.initial.kind = InitialKind::PointVortices;
    sc.initial.vortices = {{{1e-7, 0.0}, 1e9}, {{-1e-7, 0.0}, 1e9}};
    sc.blob_radius = 1e-12;
    sc.summation = SummationMode::Direct;
    sc.dt = 1.0;
    sc.snapshot_interval = 1.0;
    sc.end_time = 4.0;
    REQUIRE_THROWS_AS(run_scenario(sc, dir), BlowUpError);
    REQUIRE_FALSE(list_snapshots(dir).empty());  // last good snapshot retained
    const Manifest m = read_manifest(dir);
    REQUIRE(m.status == "blow-up");
}

TEST_CASE("manifests round-trip the scenario") {
    const fs::path dir = temp_dir() / "manifest_rt";
    fs::create_directories(dir);
    Manifest m;
    m.scenario.initial.kind = InitialKind::Gaussian;
    m.scenario.particle_target = 777;
    m.scenario.dt = 5e-4;
    m.scenario.snapshot_interval = 5e-3;
    m.scenario.end_time = 0.05;
    m.fingerprint_hex = digest_hex(scenario_fingerprint(m.scenario));
    m.code_version = kVersion;
    m.snapshot_count = 11;
    m.last_time = 0.05;
    m.wall_clock_s = 1.5;
    write_manifest(dir, m);

    const Manifest back = read_manifest(dir);
    REQUIRE(back.fingerprint_hex == m.fingerprint_hex);
    REQUIRE(back.snapshot_count == 11);
    REQUIRE(canonical_config_string(back.scenario) == canonical_config_string(m.scenario));
    REQUIRE(back.scenario.end_time == m.scenario.end_time);
}

TEST_CASE("ensemble digests are order- and value-sensitive") {
    ParticleEnsemble a;
    a.blob_radius = 0.1;
    a.push_back({{1.0, 2.0}, 3.0});
    a.push_back({{4.0, 5.0}, 6.0});
    ParticleEnsemble b = a;
    REQUIRE(ensemble_digest(a) == ensemble_digest(b));

    b.positions[1].x = std::nextafter(b.positions[1].x, 10.0);
    REQUIRE(ensemble_digest(a) != ensemble_digest(b));

    ParticleEnsemble swapped = a;
    std::swap(swapped.positions[0], swapped.positions[1]);
    std::swap(swapped.circulations[0], swapped.circulations[1]);
    REQUIRE(ensemble_digest(a) != ensemble_digest(swapped));
}
