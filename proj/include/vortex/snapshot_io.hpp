#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vortex/core.hpp"
#include "vortex/digest.hpp"
#include "vortex/errors.hpp"
#include "vortex/version.hpp"

namespace vortex {

static_assert(std::endian::native == std::endian::little,
              "snapshot files are little-endian; byte swapping is not implemented");

// Snapshot file layout (all little-endian):
//   0   4 bytes   magic "VXF1"
//   4   u32       format version
//   8   u64       particle count
//  16   f64       time
//  24   f64       blob radius
//  32   32 bytes  config fingerprint (SHA-256 of the canonical config string)
//  64   count * 3 f64: x, y, Gamma per particle, in index order
inline constexpr char kSnapshotMagic[4] = {'V', 'X', 'F', '1'};
inline constexpr std::size_t kSnapshotHeaderBytes = 64;

struct SnapshotData {
    ParticleEnsemble ensemble;
    StateDigest fingerprint{};
};

inline void write_snapshot(const std::filesystem::path& path, const ParticleEnsemble& ensemble,
                           const StateDigest& fingerprint) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot open snapshot file for writing: " + path.string());

    const std::uint64_t count = ensemble.size();
    out.write(kSnapshotMagic, 4);
    const std::uint32_t version = kSnapshotFormatVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(&ensemble.time), sizeof(double));
    out.write(reinterpret_cast<const char*>(&ensemble.blob_radius), sizeof(double));
    out.write(reinterpret_cast<const char*>(fingerprint.data()), fingerprint.size());
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        out.write(reinterpret_cast<const char*>(&ensemble.positions[i].x), sizeof(double));
        out.write(reinterpret_cast<const char*>(&ensemble.positions[i].y), sizeof(double));
        out.write(reinterpret_cast<const char*>(&ensemble.circulations[i]), sizeof(double));
    }
    if (!out) throw std::runtime_error("short write on snapshot file: " + path.string());
}

inline SnapshotData read_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open snapshot file: " + path.string());

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kSnapshotMagic, 4) != 0)
        throw InvalidInput("not a snapshot file (bad magic): " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (!in || version != kSnapshotFormatVersion)
        throw InvalidInput("unsupported snapshot format version " + std::to_string(version) +
                           " in " + path.string());

    SnapshotData data;
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    in.read(reinterpret_cast<char*>(&data.ensemble.time), sizeof(double));
    in.read(reinterpret_cast<char*>(&data.ensemble.blob_radius), sizeof(double));
    in.read(reinterpret_cast<char*>(data.fingerprint.data()), data.fingerprint.size());
    if (!in) throw InvalidInput("truncated snapshot header: " + path.string());

    data.ensemble.positions.resize(count);
    data.ensemble.circulations.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        double triple[3];
        in.read(reinterpret_cast<char*>(triple), sizeof triple);
        if (!in)
            throw InvalidInput("truncated snapshot body at particle " + std::to_string(i) + ": " +
                               path.string());
        data.ensemble.positions[i] = {triple[0], triple[1]};
        data.ensemble.circulations[i] = triple[2];
    }
    char extra;
    if (in.read(&extra, 1))
        throw InvalidInput("trailing bytes after snapshot body: " + path.string());
    return data;
}

/// Loads grid-file initial data: the particles stored in a snapshot file,
/// with time reset to zero. The scenario may override the stored blob
/// radius.
inline ParticleEnsemble load_initial_from_snapshot(const std::filesystem::path& path,
                                                   double blob_radius_override = 0.0) {
    SnapshotData data = read_snapshot(path);
    data.ensemble.time = 0.0;
    if (blob_radius_override > 0.0) data.ensemble.blob_radius = blob_radius_override;
    data.ensemble.validate();
    return data.ensemble;
}

}  // namespace vortex
