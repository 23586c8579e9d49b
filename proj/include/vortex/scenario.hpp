#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vortex/core.hpp"
#include "vortex/errors.hpp"

namespace vortex {

// ---------------------------------------------------------------------------
// Flat key = value text with [section] headers and # comments. This is the
// scenario file grammar; the run manifest reuses it. Full grammar is spelled
// out in the README.
// ---------------------------------------------------------------------------

struct KvEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
    std::size_t column = 0;
};

struct KvSection {
    std::string name;
    std::vector<KvEntry> entries;
};

struct KvDocument {
    std::vector<KvSection> sections;

    const KvEntry* find(std::string_view section, std::string_view key) const {
        for (const auto& s : sections) {
            if (s.name != section) continue;
            for (const auto& e : s.entries)
                if (e.key == key) return &e;
        }
        return nullptr;
    }

    const KvSection* section(std::string_view name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline bool valid_identifier(std::string_view s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    return true;
}

}  // namespace detail

inline KvDocument parse_kv_text(std::string_view text) {
    KvDocument doc;
    KvSection* current = nullptr;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                              : eol - pos);
        ++line_no;
        const std::size_t line_start = pos;
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;

        const std::size_t hash = raw.find('#');
        std::string_view content = raw.substr(0, hash == std::string_view::npos ? raw.size() : hash);
        std::string_view stripped = detail::trim(content);
        if (stripped.empty()) continue;

        const std::size_t col0 =
            static_cast<std::size_t>(stripped.data() - text.data()) - line_start + 1;

        if (stripped.front() == '[') {
            if (stripped.back() != ']')
                throw ParseError("section header missing closing ']'", line_no, col0);
            std::string_view name = detail::trim(stripped.substr(1, stripped.size() - 2));
            if (!detail::valid_identifier(name))
                throw ParseError("invalid section name '" + std::string(name) + "'", line_no, col0);
            doc.sections.push_back({std::string(name), {}});
            current = &doc.sections.back();
            continue;
        }

        const std::size_t eq = stripped.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("expected 'key = value'", line_no, col0);
        std::string_view key = detail::trim(stripped.substr(0, eq));
        std::string_view value = detail::trim(stripped.substr(eq + 1));
        if (!detail::valid_identifier(key))
            throw ParseError("invalid key '" + std::string(key) + "'", line_no, col0);
        if (current == nullptr)
            throw ParseError("key '" + std::string(key) + "' appears before any [section]", line_no,
                             col0);
        for (const auto& e : current->entries)
            if (e.key == key)
                throw ParseError("duplicate key '" + std::string(key) + "' in section [" +
                                     current->name + "]",
                                 line_no, col0);
        const std::size_t key_col =
            static_cast<std::size_t>(key.empty() ? col0
                                                 : static_cast<std::size_t>(key.data() - text.data()) -
                                                       line_start + 1);
        current->entries.push_back({std::string(key), std::string(value), line_no, key_col});
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

enum class InitialKind { Rankine, Gaussian, VortexPair, GridFile, PointVortices };

struct InitialData {
    InitialKind kind = InitialKind::Rankine;
    double level = 1.0;       // vorticity amplitude
    double radius = 1.0;      // patch radius (rankine) or sigma (gaussian lobes)
    Vec2 center{0.0, 0.0};
    double separation = 1.0;  // vortex-pair lobe distance
    double second_sign = 1.0; // vortex-pair second lobe sign
    std::string grid_file;
    std::vector<Particle> vortices;

    bool analytic() const {
        return kind == InitialKind::Rankine || kind == InitialKind::Gaussian ||
               kind == InitialKind::VortexPair;
    }
};

struct DiagnosticsConfig {
    std::vector<std::string> checks = {"mass", "drift"};
    int stride = 10;               // heavy diagnostics every `stride` snapshots
    std::vector<double> lp_orders = {1.0, 2.0, 4.0,
                                     std::numeric_limits<double>::infinity()};
    double uloc_p = 2.0;
    double yudovich_p_max = 1024.0;
    int modulus_strata = 16;
    int modulus_points = 8;
    double deposit_spacing = 0.0;  // 0 = auto (blob_radius / 2)
    double deposit_padding = 0.25;
};

struct Scenario {
    InitialData initial;
    Vec2 box_min{-1.1, -1.1};
    Vec2 box_max{1.1, 1.1};
    long particle_target = 10000;
    double blob_radius = 0.0;          // 0 = auto (2h)
    double circulation_cutoff = -1.0;  // <0 = auto (1e-14 * max |Gamma|)
    double dt = 1e-3;
    double end_time = 1.0;
    double snapshot_interval = 1e-2;
    Scheme scheme = Scheme::Rk4;
    SummationMode summation = SummationMode::Tree;
    double opening_angle = 0.5;
    int leaf_capacity = 16;
    DiagnosticsConfig diagnostics;
    YudovichProfile yudovich;

    void validate() const {
        if (!(dt > 0.0)) throw InvalidInput("time_step must be positive");
        if (!(end_time >= 0.0)) throw InvalidInput("end_time must be nonnegative");
        if (particle_target < 1) throw InvalidInput("particle_count must be at least 1");
        if (!(opening_angle > 0.0 && opening_angle <= 1.0))
            throw InvalidInput("opening_angle must lie in (0, 1]");
        if (leaf_capacity < 1) throw InvalidInput("leaf_capacity must be at least 1");
        if (!(box_max.x > box_min.x && box_max.y > box_min.y))
            throw InvalidInput("domain box must have positive extent");
        if (!(snapshot_interval > 0.0)) throw InvalidInput("snapshot_interval must be positive");
        const double m = snapshot_interval / dt;
        if (std::abs(m - std::round(m)) > 1e-9 * m || std::round(m) < 1.0)
            throw InvalidInput("snapshot_interval must be a positive integer multiple of time_step");
        if (end_time > 0.0) {
            const double k = end_time / snapshot_interval;
            if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
                throw InvalidInput("end_time must be an integer multiple of snapshot_interval");
        }
        if (initial.kind == InitialKind::PointVortices) {
            if (initial.vortices.empty())
                throw InvalidInput("point-vortices initial data needs a non-empty vortices list");
            if (!(blob_radius > 0.0))
                throw InvalidInput(
                    "point-vortices initial data requires an explicit blob_radius (auto needs a "
                    "sampling lattice)");
        }
        if (initial.kind == InitialKind::GridFile && initial.grid_file.empty())
            throw InvalidInput("grid-file initial data needs 'file = <path>'");
        yudovich.validate();
    }

    std::size_t steps_per_snapshot() const {
        return static_cast<std::size_t>(std::llround(snapshot_interval / dt));
    }
    std::size_t total_steps() const {
        return static_cast<std::size_t>(std::llround(end_time / dt));
    }
};

// ---------------------------------------------------------------------------
// Field parsing helpers
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_double(const KvEntry& e) {
    const std::string s{trim(e.value)};
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ParseError("expected a number for '" + e.key + "', got '" + e.value + "'", e.line,
                         e.column);
    return v;
}

inline long parse_long(const KvEntry& e) {
    const std::string s{trim(e.value)};
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
        throw ParseError("expected an integer for '" + e.key + "', got '" + e.value + "'", e.line,
                         e.column);
    return v;
}

inline std::vector<double> parse_numbers(const KvEntry& e, bool allow_inf = false) {
    std::vector<double> out;
    std::istringstream in{e.value};
    std::string tok;
    while (in >> tok) {
        if (allow_inf && (tok == "inf" || tok == "Inf")) {
            out.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw ParseError("expected numbers for '" + e.key + "', got token '" + tok + "'",
                             e.line, e.column);
        out.push_back(v);
    }
    if (out.empty())
        throw ParseError("expected at least one number for '" + e.key + "'", e.line, e.column);
    return out;
}

inline Vec2 parse_vec2(const KvEntry& e) {
    const auto v = parse_numbers(e);
    if (v.size() != 2)
        throw ParseError("expected two numbers for '" + e.key + "'", e.line, e.column);
    return {v[0], v[1]};
}

inline std::vector<Particle> parse_vortices(const KvEntry& e) {
    std::vector<Particle> out;
    std::string_view rest = e.value;
    while (!rest.empty()) {
        const std::size_t semi = rest.find(';');
        std::string_view part = trim(rest.substr(0, semi));
        rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
        if (part.empty()) continue;
        std::istringstream in{std::string(part)};
        double g, x, y;
        if (!(in >> g >> x >> y))
            throw ParseError("each vortex needs 'gamma x y' (semicolon separated)", e.line,
                             e.column);
        std::string extra;
        if (in >> extra)
            throw ParseError("trailing token '" + extra + "' in vortex entry", e.line, e.column);
        out.push_back({{x, y}, g});
    }
    if (out.empty()) throw ParseError("empty vortices list", e.line, e.column);
    return out;
}

inline void check_known_keys(const KvSection& section, const std::set<std::string>& known) {
    for (const auto& e : section.entries)
        if (!known.contains(e.key))
            throw ParseError("unknown key '" + e.key + "' in section [" + section.name + "]",
                             e.line, e.column);
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

}  // namespace detail

inline Scenario scenario_from_document(const KvDocument& doc) {
    Scenario sc;

    static const std::set<std::string> known_sections = {"initial", "domain", "numerics",
                                                         "diagnostics", "yudovich"};
    for (const auto& s : doc.sections)
        if (!known_sections.contains(s.name))
            throw ParseError("unknown section [" + s.name + "]",
                             s.entries.empty() ? 0 : s.entries.front().line, 1);

    if (const KvSection* s = doc.section("initial")) {
        detail::check_known_keys(*s, {"kind", "level", "radius", "center", "separation",
                                      "second_sign", "file", "vortices"});
        for (const auto& e : s->entries) {
            if (e.key == "kind") {
                if (e.value == "rankine")
                    sc.initial.kind = InitialKind::Rankine;
                else if (e.value == "gaussian")
                    sc.initial.kind = InitialKind::Gaussian;
                else if (e.value == "vortex-pair")
                    sc.initial.kind = InitialKind::VortexPair;
                else if (e.value == "grid-file")
                    sc.initial.kind = InitialKind::GridFile;
                else if (e.value == "point-vortices")
                    sc.initial.kind = InitialKind::PointVortices;
                else
                    throw ParseError("unknown initial kind '" + e.value + "'", e.line, e.column);
            } else if (e.key == "level")
                sc.initial.level = detail::parse_double(e);
            else if (e.key == "radius")
                sc.initial.radius = detail::parse_double(e);
            else if (e.key == "center")
                sc.initial.center = detail::parse_vec2(e);
            else if (e.key == "separation")
                sc.initial.separation = detail::parse_double(e);
            else if (e.key == "second_sign")
                sc.initial.second_sign = detail::parse_double(e);
            else if (e.key == "file")
                sc.initial.grid_file = e.value;
            else if (e.key == "vortices")
                sc.initial.vortices = detail::parse_vortices(e);
        }
    }

    if (const KvSection* s = doc.section("domain")) {
        detail::check_known_keys(*s, {"min", "max"});
        for (const auto& e : s->entries) {
            if (e.key == "min")
                sc.box_min = detail::parse_vec2(e);
            else if (e.key == "max")
                sc.box_max = detail::parse_vec2(e);
        }
    }

    if (const KvSection* s = doc.section("numerics")) {
        detail::check_known_keys(
            *s, {"particle_count", "blob_radius", "circulation_cutoff", "time_step", "end_time",
                 "snapshot_interval", "scheme", "summation", "opening_angle", "leaf_capacity"});
        for (const auto& e : s->entries) {
            if (e.key == "particle_count")
                sc.particle_target = detail::parse_long(e);
            else if (e.key == "blob_radius")
                sc.blob_radius = (e.value == "auto") ? 0.0 : detail::parse_double(e);
            else if (e.key == "circulation_cutoff")
                sc.circulation_cutoff = (e.value == "auto") ? -1.0 : detail::parse_double(e);
            else if (e.key == "time_step")
                sc.dt = detail::parse_double(e);
            else if (e.key == "end_time")
                sc.end_time = detail::parse_double(e);
            else if (e.key == "snapshot_interval")
                sc.snapshot_interval = detail::parse_double(e);
            else if (e.key == "scheme") {
                if (e.value == "rk4")
                    sc.scheme = Scheme::Rk4;
                else if (e.value == "euler")
                    sc.scheme = Scheme::Euler;
                else
                    throw ParseError("unknown scheme '" + e.value + "'", e.line, e.column);
            } else if (e.key == "summation") {
                if (e.value == "direct")
                    sc.summation = SummationMode::Direct;
                else if (e.value == "tree")
                    sc.summation = SummationMode::Tree;
                else
                    throw ParseError("unknown summation mode '" + e.value + "'", e.line, e.column);
            } else if (e.key == "opening_angle")
                sc.opening_angle = detail::parse_double(e);
            else if (e.key == "leaf_capacity")
                sc.leaf_capacity = static_cast<int>(detail::parse_long(e));
        }
    }

    if (const KvSection* s = doc.section("diagnostics")) {
        detail::check_known_keys(*s, {"checks", "stride", "lp_orders", "uloc_p", "yudovich_p_max",
                                      "modulus_strata", "modulus_points", "deposit_spacing",
                                      "deposit_padding"});
        static const std::set<std::string> known_checks = {"mass",     "drift", "lp",
                                                           "uloc",     "yudovich", "modulus"};
        for (const auto& e : s->entries) {
            if (e.key == "checks") {
                sc.diagnostics.checks.clear();
                std::istringstream in{e.value};
                std::string tok;
                while (in >> tok) {
                    if (!known_checks.contains(tok))
                        throw ParseError("unknown diagnostic check '" + tok + "'", e.line,
                                         e.column);
                    sc.diagnostics.checks.push_back(tok);
                }
            } else if (e.key == "stride")
                sc.diagnostics.stride = static_cast<int>(detail::parse_long(e));
            else if (e.key == "lp_orders")
                sc.diagnostics.lp_orders = detail::parse_numbers(e, /*allow_inf=*/true);
            else if (e.key == "uloc_p")
                sc.diagnostics.uloc_p = detail::parse_double(e);
            else if (e.key == "yudovich_p_max")
                sc.diagnostics.yudovich_p_max = detail::parse_double(e);
            else if (e.key == "modulus_strata")
                sc.diagnostics.modulus_strata = static_cast<int>(detail::parse_long(e));
            else if (e.key == "modulus_points")
                sc.diagnostics.modulus_points = static_cast<int>(detail::parse_long(e));
            else if (e.key == "deposit_spacing")
                sc.diagnostics.deposit_spacing = (e.value == "auto") ? 0.0 : detail::parse_double(e);
            else if (e.key == "deposit_padding")
                sc.diagnostics.deposit_padding = detail::parse_double(e);
        }
    }

    if (const KvSection* s = doc.section("yudovich")) {
        detail::check_known_keys(*s, {"theta", "scale", "alpha"});
        for (const auto& e : s->entries) {
            if (e.key == "theta") {
                if (e.value == "constant")
                    sc.yudovich.kind = YudovichProfile::Kind::Constant;
                else if (e.value == "log")
                    sc.yudovich.kind = YudovichProfile::Kind::Log;
                else if (e.value == "loglog")
                    sc.yudovich.kind = YudovichProfile::Kind::LogLog;
                else if (e.value == "power")
                    sc.yudovich.kind = YudovichProfile::Kind::Power;
                else
                    throw ParseError("unknown theta family '" + e.value + "'", e.line, e.column);
            } else if (e.key == "scale")
                sc.yudovich.scale = detail::parse_double(e);
            else if (e.key == "alpha")
                sc.yudovich.alpha = detail::parse_double(e);
        }
    }

    sc.validate();
    return sc;
}

inline Scenario scenario_from_text(std::string_view text) {
    return scenario_from_document(parse_kv_text(text));
}

inline std::string serialize_scenario(const Scenario& sc) {
    using detail::format_double;
    std::ostringstream out;
    out << "[initial]\n";
    const char* kind = "rankine";
    switch (sc.initial.kind) {
        case InitialKind::Rankine: kind = "rankine"; break;
        case InitialKind::Gaussian: kind = "gaussian"; break;
        case InitialKind::VortexPair: kind = "vortex-pair"; break;
        case InitialKind::GridFile: kind = "grid-file"; break;
        case InitialKind::PointVortices: kind = "point-vortices"; break;
    }
    out << "kind = " << kind << "\n";
    if (sc.initial.analytic()) {
        out << "level = " << format_double(sc.initial.level) << "\n";
        out << "radius = " << format_double(sc.initial.radius) << "\n";
        out << "center = " << format_double(sc.initial.center.x) << " "
            << format_double(sc.initial.center.y) << "\n";
        if (sc.initial.kind == InitialKind::VortexPair) {
            out << "separation = " << format_double(sc.initial.separation) << "\n";
            out << "second_sign = " << format_double(sc.initial.second_sign) << "\n";
        }
    }
    if (sc.initial.kind == InitialKind::GridFile) out << "file = " << sc.initial.grid_file << "\n";
    if (sc.initial.kind == InitialKind::PointVortices) {
        out << "vortices = ";
        for (std::size_t i = 0; i < sc.initial.vortices.size(); ++i) {
            const auto& p = sc.initial.vortices[i];
            if (i) out << "; ";
            out << format_double(p.circulation) << " " << format_double(p.position.x) << " "
                << format_double(p.position.y);
        }
        out << "\n";
    }
    out << "\n[domain]\n";
    out << "min = " << format_double(sc.box_min.x) << " " << format_double(sc.box_min.y) << "\n";
    out << "max = " << format_double(sc.box_max.x) << " " << format_double(sc.box_max.y) << "\n";
    out << "\n[numerics]\n";
    out << "particle_count = " << sc.particle_target << "\n";
    if (sc.blob_radius > 0.0)
        out << "blob_radius = " << format_double(sc.blob_radius) << "\n";
    else
        out << "blob_radius = auto\n";
    if (sc.circulation_cutoff >= 0.0)
        out << "circulation_cutoff = " << format_double(sc.circulation_cutoff) << "\n";
    else
        out << "circulation_cutoff = auto\n";
    out << "time_step = " << format_double(sc.dt) << "\n";
    out << "end_time = " << format_double(sc.end_time) << "\n";
    out << "snapshot_interval = " << format_double(sc.snapshot_interval) << "\n";
    out << "scheme = " << (sc.scheme == Scheme::Rk4 ? "rk4" : "euler") << "\n";
    out << "summation = " << (sc.summation == SummationMode::Tree ? "tree" : "direct") << "\n";
    out << "opening_angle = " << format_double(sc.opening_angle) << "\n";
    out << "leaf_capacity = " << sc.leaf_capacity << "\n";
    out << "\n[diagnostics]\n";
    out << "checks =";
    for (const auto& c : sc.diagnostics.checks) out << " " << c;
    out << "\n";
    out << "stride = " << sc.diagnostics.stride << "\n";
    out << "lp_orders =";
    for (double q : sc.diagnostics.lp_orders) {
        if (std::isinf(q))
            out << " inf";
        else
            out << " " << format_double(q);
    }
    out << "\n";
    out << "uloc_p = " << format_double(sc.diagnostics.uloc_p) << "\n";
    out << "yudovich_p_max = " << format_double(sc.diagnostics.yudovich_p_max) << "\n";
    out << "modulus_strata = " << sc.diagnostics.modulus_strata << "\n";
    out << "modulus_points = " << sc.diagnostics.modulus_points << "\n";
    if (sc.diagnostics.deposit_spacing > 0.0)
        out << "deposit_spacing = " << format_double(sc.diagnostics.deposit_spacing) << "\n";
    else
        out << "deposit_spacing = auto\n";
    out << "deposit_padding = " << format_double(sc.diagnostics.deposit_padding) << "\n";
    out << "\n[yudovich]\n";
    out << "theta = " << sc.yudovich.name() << "\n";
    out << "scale = " << format_double(sc.yudovich.scale) << "\n";
    out << "alpha = " << format_double(sc.yudovich.alpha) << "\n";
    return out.str();
}

/// Canonical description of everything that determines the dynamics and the
/// discretization (not the run duration: resuming to a later end time keeps
/// the same identity). Doubles are rendered in hexfloat so the string is a
/// bit-exact key. Hashed into the snapshot/manifest fingerprint.
inline std::string canonical_config_string(const Scenario& sc) {
    using detail::format_hex;
    std::ostringstream out;
    out << "vortex-config-v1\n";
    out << "initial.kind=" << static_cast<int>(sc.initial.kind) << "\n";
    out << "initial.level=" << format_hex(sc.initial.level) << "\n";
    out << "initial.radius=" << format_hex(sc.initial.radius) << "\n";
    out << "initial.center=" << format_hex(sc.initial.center.x) << ","
        << format_hex(sc.initial.center.y) << "\n";
    out << "initial.separation=" << format_hex(sc.initial.separation) << "\n";
    out << "initial.second_sign=" << format_hex(sc.initial.second_sign) << "\n";
    out << "initial.file=" << sc.initial.grid_file << "\n";
    out << "initial.vortices=";
    for (const auto& p : sc.initial.vortices)
        out << format_hex(p.circulation) << "," << format_hex(p.position.x) << ","
            << format_hex(p.position.y) << ";";
    out << "\n";
    out << "box=" << format_hex(sc.box_min.x) << "," << format_hex(sc.box_min.y) << ","
        << format_hex(sc.box_max.x) << "," << format_hex(sc.box_max.y) << "\n";
    out << "particle_target=" << sc.particle_target << "\n";
    out << "blob_radius=" << format_hex(sc.blob_radius) << "\n";
    out << "circulation_cutoff=" << format_hex(sc.circulation_cutoff) << "\n";
    out << "dt=" << format_hex(sc.dt) << "\n";
    out << "snapshot_interval=" << format_hex(sc.snapshot_interval) << "\n";
    out << "scheme=" << (sc.scheme == Scheme::Rk4 ? "rk4" : "euler") << "\n";
    out << "summation=" << (sc.summation == SummationMode::Tree ? "tree" : "direct") << "\n";
    out << "opening_angle=" << format_hex(sc.opening_angle) << "\n";
    out << "leaf_capacity=" << sc.leaf_capacity << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Initial-data construction
// ---------------------------------------------------------------------------

/// Pointwise initial vorticity of the analytic profiles.
inline double initial_vorticity(const InitialData& init, Vec2 x) {
    switch (init.kind) {
        case InitialKind::Rankine: {
            const Vec2 d = x - init.center;
            return d.norm_sq() <= init.radius * init.radius ? init.level : 0.0;
        }
        case InitialKind::Gaussian: {
            const Vec2 d = x - init.center;
            const double s2 = init.radius * init.radius;
            return init.level * std::exp(-d.norm_sq() / (2.0 * s2));
        }
        case InitialKind::VortexPair: {
            const Vec2 offset{init.separation / 2.0, 0.0};
            const double s2 = init.radius * init.radius;
            const Vec2 d1 = x - (init.center + offset);
            const Vec2 d2 = x - (init.center - offset);
            return init.level * (std::exp(-d1.norm_sq() / (2.0 * s2)) +
                                 init.second_sign * std::exp(-d2.norm_sq() / (2.0 * s2)));
        }
        default:
            throw InvalidInput("initial_vorticity: not an analytic profile");
    }
}

/// Blob radius the scenario resolves to: the explicit setting when given,
/// twice the sampling-lattice spacing for analytic profiles under the auto
/// rule, 0 when indeterminate without the data file (grid-file + auto).
inline double resolved_blob_radius(const Scenario& sc) {
    if (sc.blob_radius > 0.0) return sc.blob_radius;
    if (!sc.initial.analytic()) return 0.0;
    const double width = sc.box_max.x - sc.box_min.x;
    const double height = sc.box_max.y - sc.box_min.y;
    const double h = std::sqrt(width * height / static_cast<double>(sc.particle_target));
    const std::size_t nx =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(width / h)));
    const std::size_t ny =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(height / h)));
    return 2.0 * std::max(width / static_cast<double>(nx), height / static_cast<double>(ny));
}

struct BuildReport {
    double lattice_spacing = 0.0;
    std::size_t lattice_nx = 0;
    std::size_t lattice_ny = 0;
    std::size_t occupied_cells = 0;
    std::size_t dropped_cells = 0;
    double cutoff = 0.0;
    double total_circulation = 0.0;
    double mass_outside_fraction = 0.0;
};

namespace detail {

/// Midpoint quadrature of the analytic profile over an axis-aligned box.
inline double profile_box_mass(const InitialData& init, Vec2 lo, Vec2 hi, std::size_t n) {
    const double hx = (hi.x - lo.x) / static_cast<double>(n);
    const double hy = (hi.y - lo.y) / static_cast<double>(n);
    KahanSum s;
    for (std::size_t j = 0; j < n; ++j) {
        const double y = lo.y + (static_cast<double>(j) + 0.5) * hy;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = lo.x + (static_cast<double>(i) + 0.5) * hx;
            s.add(initial_vorticity(init, {x, y}));
        }
    }
    return s.value() * hx * hy;
}

inline double mass_outside_box(const InitialData& init, Vec2 lo, Vec2 hi) {
    // |mass| over an expanded box minus the domain box, relative to the
    // expanded-box total. Informational (the library requires initial data
    // that is compactly supported or rapidly decaying inside the box). The
    // expanded box is three domain boxes wide with an aligned lattice, so the
    // shared cells cancel exactly and a profile supported inside the box
    // reports exactly zero.
    const Vec2 extent = hi - lo;
    const Vec2 big_lo = lo - extent;
    const Vec2 big_hi = hi + extent;
    const double inside = profile_box_mass(init, lo, hi, 512);
    const double total = profile_box_mass(init, big_lo, big_hi, 3 * 512);
    if (std::abs(total) < 1e-300) return 0.0;
    const double outside = total - inside;
    return std::abs(outside / total);
}

}  // namespace detail

/// Builds the initial particle ensemble from a scenario.
///
/// Analytic profiles are sampled at the centers of a uniform lattice over the
/// domain box (midpoint rule), one particle per cell with Gamma = w0(x) * h^2;
/// cells whose |Gamma| falls below the cutoff are dropped. Point-vortex data
/// passes through as given; grid-file data is loaded by the caller (see
/// snapshot_io.hpp) because the file format lives there.
///
/// Deterministic: the same scenario yields a bit-identical ensemble.
inline ParticleEnsemble build_initial_ensemble(const Scenario& sc, BuildReport* report = nullptr) {
    sc.validate();
    BuildReport rep;

    ParticleEnsemble ensemble;
    ensemble.time = 0.0;

    if (sc.initial.kind == InitialKind::PointVortices) {
        for (const auto& p : sc.initial.vortices) {
            if (!p.position.is_finite() || !std::isfinite(p.circulation))
                throw InvalidInput("non-finite vortex in point-vortices list");
            ensemble.push_back(p);
        }
        ensemble.blob_radius = sc.blob_radius;
        rep.occupied_cells = ensemble.size();
        rep.total_circulation = total_circulation(ensemble);
        if (report) *report = rep;
        ensemble.validate();
        return ensemble;
    }
    if (sc.initial.kind == InitialKind::GridFile)
        throw InvalidInput(
            "grid-file initial data must be loaded via load_initial_from_snapshot (snapshot_io)");

    const double width = sc.box_max.x - sc.box_min.x;
    const double height = sc.box_max.y - sc.box_min.y;
    const double h = std::sqrt(width * height / static_cast<double>(sc.particle_target));
    const std::size_t nx = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(width / h)));
    const std::size_t ny =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(height / h)));
    const double hx = width / static_cast<double>(nx);
    const double hy = height / static_cast<double>(ny);
    const double cell_area = hx * hy;

    std::vector<double> gamma(nx * ny);
    double max_abs = 0.0;
    for (std::size_t j = 0; j < ny; ++j) {
        const double y = sc.box_min.y + (static_cast<double>(j) + 0.5) * hy;
        for (std::size_t i = 0; i < nx; ++i) {
            const double x = sc.box_min.x + (static_cast<double>(i) + 0.5) * hx;
            const double w = initial_vorticity(sc.initial, {x, y});
            if (!std::isfinite(w))
                throw InvalidInput("initial profile produced a non-finite value at (" +
                                   std::to_string(x) + ", " + std::to_string(y) + ")");
            gamma[j * nx + i] = w * cell_area;
            max_abs = std::max(max_abs, std::abs(gamma[j * nx + i]));
        }
    }
    if (max_abs == 0.0) throw InvalidInput("empty ensemble: initial profile vanishes on the box");

    const double cutoff =
        sc.circulation_cutoff >= 0.0 ? sc.circulation_cutoff : 1e-14 * max_abs;

    for (std::size_t j = 0; j < ny; ++j) {
        const double y = sc.box_min.y + (static_cast<double>(j) + 0.5) * hy;
        for (std::size_t i = 0; i < nx; ++i) {
            const double g = gamma[j * nx + i];
            if (std::abs(g) < cutoff || g == 0.0) {
                ++rep.dropped_cells;
                continue;
            }
            const double x = sc.box_min.x + (static_cast<double>(i) + 0.5) * hx;
            ensemble.push_back({{x, y}, g});
        }
    }
    if (ensemble.empty()) throw InvalidInput("empty ensemble: every cell fell below the cutoff");

    ensemble.blob_radius = sc.blob_radius > 0.0 ? sc.blob_radius : 2.0 * std::max(hx, hy);

    rep.lattice_spacing = std::max(hx, hy);
    rep.lattice_nx = nx;
    rep.lattice_ny = ny;
    rep.occupied_cells = ensemble.size();
    rep.cutoff = cutoff;
    rep.total_circulation = total_circulation(ensemble);
    rep.mass_outside_fraction = detail::mass_outside_box(sc.initial, sc.box_min, sc.box_max);
    if (report) *report = rep;

    ensemble.validate();
    return ensemble;
}

}  // namespace vortex
