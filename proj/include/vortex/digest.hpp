#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "vortex/core.hpp"

namespace vortex {

/// SHA-256 of a byte buffer.
inline StateDigest sha256(const void* data, std::size_t size) {
    StateDigest out{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw std::runtime_error("sha256 digest failed");
    return out;
}

inline StateDigest sha256(const std::string& s) { return sha256(s.data(), s.size()); }

/// Bit-exact identity of an ensemble state: particle count, blob radius,
/// positions, circulations (little-endian doubles, index order). Time is
/// deliberately excluded; two states with identical particle data are the
/// same measure.
inline StateDigest ensemble_digest(const ParticleEnsemble& ensemble) {
    std::vector<std::uint8_t> buf;
    const std::size_t n = ensemble.size();
    buf.reserve(16 + 24 * n);
    auto append = [&buf](const void* p, std::size_t k) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), b, b + k);
    };
    const std::uint64_t count = n;
    append(&count, sizeof count);
    append(&ensemble.blob_radius, sizeof(double));
    for (std::size_t i = 0; i < n; ++i) {
        append(&ensemble.positions[i].x, sizeof(double));
        append(&ensemble.positions[i].y, sizeof(double));
    }
    append(ensemble.circulations.data(), n * sizeof(double));
    return sha256(buf.data(), buf.size());
}

inline std::string digest_hex(const StateDigest& d) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (std::uint8_t b : d) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

}  // namespace vortex
