#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "vortex/core.hpp"
#include "vortex/errors.hpp"
#include "vortex/kahan.hpp"
#include "vortex/parallel.hpp"

namespace vortex {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Singular kernel x_perp / (2 pi |x|^2). Undefined at the origin.
inline Vec2 kernel_exact(Vec2 x) {
    const double r2 = x.norm_sq();
    if (r2 == 0.0) throw std::domain_error("kernel_exact is singular at x = 0");
    const double w = 1.0 / (kTwoPi * r2);
    return {-x.y * w, x.x * w};
}

/// Algebraic blob kernel x_perp / (2 pi (|x|^2 + delta^2)). Smooth everywhere,
/// equal to (0, 0) at the origin, and converging to kernel_exact pointwise as
/// delta -> 0 away from the origin.
inline Vec2 kernel_blob(Vec2 x, double delta) {
    const double w = 1.0 / (kTwoPi * (x.norm_sq() + delta * delta));
    return {-x.y * w, x.x * w};
}

/// Radial density paired with kernel_blob: psi_delta(x) =
/// delta^2 / (pi (|x|^2 + delta^2)^2), normalized to unit mass. A point
/// circulation smoothed by psi_delta induces exactly the kernel_blob field.
inline double blob_density(Vec2 x, double delta) {
    const double s = x.norm_sq() + delta * delta;
    return delta * delta / (std::numbers::pi * s * s);
}

/// Direct O(N M) velocity evaluation v(x) = sum_j Gamma_j K_delta(x - x_j)
/// with per-target compensated accumulation. A target sitting exactly on a
/// particle receives no contribution from it (the blob kernel vanishes at 0).
inline std::vector<Vec2> velocity_direct(std::span<const Vec2> targets,
                                         const ParticleEnsemble& ensemble) {
    const double d2 = ensemble.blob_radius * ensemble.blob_radius;
    const std::size_t n = ensemble.size();
    std::vector<Vec2> out(targets.size());
    parallel_for(targets.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            const Vec2 x = targets[t];
            KahanSum u, v;
            for (std::size_t j = 0; j < n; ++j) {
                const double dx = x.x - ensemble.positions[j].x;
                const double dy = x.y - ensemble.positions[j].y;
                const double w = ensemble.circulations[j] / (dx * dx + dy * dy + d2);
                u.add(-dy * w);
                v.add(dx * w);
            }
            out[t] = {u.value() / kTwoPi, v.value() / kTwoPi};
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Barnes-Hut quadtree
// ---------------------------------------------------------------------------

struct QuadtreeNode {
    Vec2 box_center;
    double half_size = 0.0;
    double monopole = 0.0;  // sum of circulations
    Vec2 centroid;          // expansion center, always inside the node box
    Vec2 dipole;            // sum Gamma_j (x_j - centroid)
    double quad_xx = 0.0;   // sum Gamma_j (x_j - centroid) (x) (x_j - centroid)
    double quad_xy = 0.0;
    double quad_yy = 0.0;
    std::uint32_t begin = 0;  // particle range in tree order
    std::uint32_t end = 0;
    std::int32_t child[4] = {-1, -1, -1, -1};
    bool leaf = true;
};

/// Quadtree over an ensemble with per-node monopole, dipole and quadrupole
/// moments. Particles are re-sorted into contiguous leaf ranges
/// (structure-of-arrays) so leaf sums vectorize; `order[k]` maps tree order
/// back to the original particle index. Construction is deterministic.
struct Quadtree {
    std::vector<QuadtreeNode> nodes;
    std::vector<std::uint32_t> order;
    std::vector<double> px, py, pg;  // particle data in tree order
    double blob_radius = 0.0;
    int depth = 0;

    std::size_t particle_count() const { return order.size(); }
    std::size_t node_count() const { return nodes.size(); }
};

namespace detail {

inline constexpr int kMaxTreeDepth = 48;

struct TreeBuildScratch {
    std::vector<std::uint32_t> order;
    std::vector<double> x, y, g;
};

inline void build_tree_node(Quadtree& tree, std::int32_t node_index, int leaf_capacity, int depth,
                            TreeBuildScratch& scratch) {
    QuadtreeNode& node = tree.nodes[node_index];
    const std::uint32_t begin = node.begin;
    const std::uint32_t end = node.end;
    const std::uint32_t count = end - begin;

    // Moments. Expansion center: circulation-weighted mean when the node has
    // net circulation, |Gamma|-weighted mean otherwise; clamped to the box so
    // a near-cancelling node cannot push its centroid to infinity.
    KahanSum mono_sum;
    double absmono = 0.0, cx = 0.0, cy = 0.0, ax = 0.0, ay = 0.0;
    for (std::uint32_t k = begin; k < end; ++k) {
        const double g = tree.pg[k];
        mono_sum.add(g);
        absmono += std::abs(g);
        cx += g * tree.px[k];
        cy += g * tree.py[k];
        ax += std::abs(g) * tree.px[k];
        ay += std::abs(g) * tree.py[k];
    }
    const double mono = mono_sum.value();
    node.monopole = mono;
    Vec2 centroid = node.box_center;
    if (std::abs(mono) > 1e-12 * absmono && absmono > 0.0)
        centroid = {cx / mono, cy / mono};
    else if (absmono > 0.0)
        centroid = {ax / absmono, ay / absmono};
    const double hs = node.half_size;
    centroid.x = std::clamp(centroid.x, node.box_center.x - hs, node.box_center.x + hs);
    centroid.y = std::clamp(centroid.y, node.box_center.y - hs, node.box_center.y + hs);
    node.centroid = centroid;
    double dx_sum = 0.0, dy_sum = 0.0, qxx = 0.0, qxy = 0.0, qyy = 0.0;
    for (std::uint32_t k = begin; k < end; ++k) {
        const double g = tree.pg[k];
        const double ox = tree.px[k] - centroid.x;
        const double oy = tree.py[k] - centroid.y;
        dx_sum += g * ox;
        dy_sum += g * oy;
        qxx += g * ox * ox;
        qxy += g * ox * oy;
        qyy += g * oy * oy;
    }
    node.dipole = {dx_sum, dy_sum};
    node.quad_xx = qxx;
    node.quad_xy = qxy;
    node.quad_yy = qyy;

    tree.depth = std::max(tree.depth, depth + 1);
    if (count <= static_cast<std::uint32_t>(leaf_capacity) || depth >= kMaxTreeDepth) {
        node.leaf = true;
        return;
    }
    node.leaf = false;

    // Stable 4-way counting partition by quadrant.
    const Vec2 mid = node.box_center;
    std::array<std::uint32_t, 4> counts{0, 0, 0, 0};
    auto quadrant = [&](std::uint32_t k) {
        return (tree.px[k] >= mid.x ? 1 : 0) + (tree.py[k] >= mid.y ? 2 : 0);
    };
    for (std::uint32_t k = begin; k < end; ++k) ++counts[quadrant(k)];
    std::array<std::uint32_t, 4> offsets{0, 0, 0, 0};
    for (int q = 1; q < 4; ++q) offsets[q] = offsets[q - 1] + counts[q - 1];
    auto fill = offsets;
    scratch.order.resize(count);
    scratch.x.resize(count);
    scratch.y.resize(count);
    scratch.g.resize(count);
    for (std::uint32_t k = begin; k < end; ++k) {
        const std::uint32_t slot = fill[quadrant(k)]++;
        scratch.order[slot] = tree.order[k];
        scratch.x[slot] = tree.px[k];
        scratch.y[slot] = tree.py[k];
        scratch.g[slot] = tree.pg[k];
    }
    std::copy(scratch.order.begin(), scratch.order.end(), tree.order.begin() + begin);
    std::copy(scratch.x.begin(), scratch.x.end(), tree.px.begin() + begin);
    std::copy(scratch.y.begin(), scratch.y.end(), tree.py.begin() + begin);
    std::copy(scratch.g.begin(), scratch.g.end(), tree.pg.begin() + begin);

    const double child_hs = hs / 2.0;
    for (int q = 0; q < 4; ++q) {
        if (counts[q] == 0) continue;
        QuadtreeNode child;
        child.box_center = {mid.x + ((q & 1) ? child_hs : -child_hs),
                            mid.y + ((q & 2) ? child_hs : -child_hs)};
        child.half_size = child_hs;
        child.begin = begin + offsets[q];
        child.end = child.begin + counts[q];
        const std::int32_t child_index = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back(child);
        tree.nodes[node_index].child[q] = child_index;
        build_tree_node(tree, child_index, leaf_capacity, depth + 1, scratch);
    }
}

}  // namespace detail

inline Quadtree build_tree(const ParticleEnsemble& ensemble, int leaf_capacity) {
    if (ensemble.empty()) throw InvalidInput("build_tree: ensemble is empty");
    if (leaf_capacity < 1) throw InvalidInput("build_tree: leaf_capacity must be at least 1");

    Quadtree tree;
    tree.blob_radius = ensemble.blob_radius;
    const std::size_t n = ensemble.size();
    tree.order.resize(n);
    tree.px.resize(n);
    tree.py.resize(n);
    tree.pg.resize(n);
    double min_x = ensemble.positions[0].x, max_x = min_x;
    double min_y = ensemble.positions[0].y, max_y = min_y;
    for (std::size_t i = 0; i < n; ++i) {
        tree.order[i] = static_cast<std::uint32_t>(i);
        tree.px[i] = ensemble.positions[i].x;
        tree.py[i] = ensemble.positions[i].y;
        tree.pg[i] = ensemble.circulations[i];
        min_x = std::min(min_x, tree.px[i]);
        max_x = std::max(max_x, tree.px[i]);
        min_y = std::min(min_y, tree.py[i]);
        max_y = std::max(max_y, tree.py[i]);
    }

    QuadtreeNode root;
    root.box_center = {(min_x + max_x) / 2.0, (min_y + max_y) / 2.0};
    root.half_size = std::max({(max_x - min_x) / 2.0, (max_y - min_y) / 2.0, 1e-12}) *
                     (1.0 + 1e-12);
    root.begin = 0;
    root.end = static_cast<std::uint32_t>(n);
    tree.nodes.push_back(root);

    detail::TreeBuildScratch scratch;
    detail::build_tree_node(tree, 0, leaf_capacity, 0, scratch);
    return tree;
}

namespace detail {

/// Single-target Barnes-Hut traversal, accumulating 2 pi v. Deterministic:
/// fixed stack discipline, fixed leaf order, plain accumulation.
inline Vec2 tree_velocity_at(const Quadtree& tree, Vec2 x, double theta, double d2) {
    double u = 0.0, v = 0.0;
    std::array<std::int32_t, 4 * (detail::kMaxTreeDepth + 2)> stack;
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const QuadtreeNode& node = tree.nodes[stack[--top]];
        const double rx = x.x - node.centroid.x;
        const double ry = x.y - node.centroid.y;
        const double dist2 = rx * rx + ry * ry;
        const double size = 2.0 * node.half_size;
        if (!node.leaf && size * size >= theta * theta * dist2) {
            for (int q = 3; q >= 0; --q)
                if (node.child[q] >= 0) stack[top++] = node.child[q];
            continue;
        }
        if (node.leaf) {
            for (std::uint32_t k = node.begin; k < node.end; ++k) {
                const double dx = x.x - tree.px[k];
                const double dy = x.y - tree.py[k];
                const double w = tree.pg[k] / (dx * dx + dy * dy + d2);
                u -= dy * w;
                v += dx * w;
            }
            continue;
        }
        // Monopole + dipole + quadrupole expansion about the node centroid.
        const double s = dist2 + d2;
        const double inv_s = 1.0 / s;
        const double inv_s2 = inv_s * inv_s;
        const double inv_s3 = inv_s2 * inv_s;
        const double m = node.monopole;
        const double dpx = node.dipole.x;
        const double dpy = node.dipole.y;
        const double txx = rx * rx, tyy = ry * ry;
        u += -ry * m * inv_s - (dpx * 2.0 * rx * ry + dpy * (2.0 * tyy - s)) * inv_s2 +
             (node.quad_xx * ry * (s - 4.0 * txx) + 2.0 * node.quad_xy * rx * (s - 4.0 * tyy) +
              node.quad_yy * ry * (3.0 * s - 4.0 * tyy)) *
                 inv_s3;
        v += rx * m * inv_s - (dpx * (s - 2.0 * txx) - dpy * 2.0 * rx * ry) * inv_s2 +
             (node.quad_xx * rx * (4.0 * txx - 3.0 * s) + 2.0 * node.quad_xy * ry * (4.0 * txx - s) +
              node.quad_yy * rx * (4.0 * tyy - s)) *
                 inv_s3;
    }
    return {u / kTwoPi, v / kTwoPi};
}

}  // namespace detail

/// Barnes-Hut velocity evaluation against a prebuilt tree. A node's
/// monopole+dipole+quadrupole expansion is used when (node size) / (distance
/// to its expansion center) < theta; otherwise its children are visited,
/// down to direct leaf sums. delta must match the blob radius of the
/// ensemble the tree was built from.
inline std::vector<Vec2> velocity_tree(std::span<const Vec2> targets, const Quadtree& tree,
                                       double theta, double delta) {
    if (!(theta > 0.0 && theta <= 1.0))
        throw InvalidInput("velocity_tree: opening angle must lie in (0, 1]");
    const double d2 = delta * delta;
    std::vector<Vec2> out(targets.size());
    parallel_for(targets.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t)
            out[t] = detail::tree_velocity_at(tree, targets[t], theta, d2);
    });
    return out;
}

/// Barnes-Hut evaluation at the tree's own particles, blocked by target
/// leaf. Each target leaf traverses the tree once with a conservative
/// acceptance test (the node size over the worst-case distance from the
/// leaf's box to the expansion center), so every target in the block
/// satisfies the per-target criterion a fortiori; the gathered interaction
/// list is then applied to all targets in the block with vectorizable
/// contiguous loops. Accuracy is at least that of velocity_tree at the same
/// opening angle, and results are deterministic for any worker count.
inline std::vector<Vec2> velocity_tree_self(const Quadtree& tree, double theta, double delta) {
    if (!(theta > 0.0 && theta <= 1.0))
        throw InvalidInput("velocity_tree_self: opening angle must lie in (0, 1]");
    const double d2 = delta * delta;
    const std::size_t n = tree.particle_count();
    std::vector<Vec2> out(n);

    std::vector<std::uint32_t> target_leaves;
    for (std::uint32_t i = 0; i < tree.nodes.size(); ++i)
        if (tree.nodes[i].leaf) target_leaves.push_back(i);

    parallel_for(target_leaves.size(), [&](std::size_t block_begin, std::size_t block_end) {
        std::vector<double> ncx, ncy, nm, ndx, ndy, nqxx, nqxy, nqyy;  // accepted node moments
        std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;   // direct source runs
        std::array<std::int32_t, 4 * (detail::kMaxTreeDepth + 2)> stack;

        for (std::size_t b = block_begin; b < block_end; ++b) {
            const QuadtreeNode& target_leaf = tree.nodes[target_leaves[b]];

            // Tight bounding circle of the block's own particles.
            double lo_x = tree.px[target_leaf.begin], hi_x = lo_x;
            double lo_y = tree.py[target_leaf.begin], hi_y = lo_y;
            for (std::uint32_t k = target_leaf.begin; k < target_leaf.end; ++k) {
                lo_x = std::min(lo_x, tree.px[k]);
                hi_x = std::max(hi_x, tree.px[k]);
                lo_y = std::min(lo_y, tree.py[k]);
                hi_y = std::max(hi_y, tree.py[k]);
            }
            const Vec2 tc{(lo_x + hi_x) / 2.0, (lo_y + hi_y) / 2.0};
            const double reach = std::hypot(hi_x - lo_x, hi_y - lo_y) / 2.0;

            ncx.clear(); ncy.clear(); nm.clear(); ndx.clear(); ndy.clear();
            nqxx.clear(); nqxy.clear(); nqyy.clear();
            ranges.clear();

            int top = 0;
            stack[top++] = 0;
            while (top > 0) {
                const QuadtreeNode& node = tree.nodes[stack[--top]];
                const double dx = tc.x - node.centroid.x;
                const double dy = tc.y - node.centroid.y;
                const double dist = std::sqrt(dx * dx + dy * dy) - reach;
                const double size = 2.0 * node.half_size;
                if (!node.leaf && !(dist > 0.0 && size < theta * dist)) {
                    for (int q = 3; q >= 0; --q)
                        if (node.child[q] >= 0) stack[top++] = node.child[q];
                    continue;
                }
                if (node.leaf) {
                    // DFS emits sibling leaves consecutively; merge adjacent
                    // index runs so the direct loops stay long.
                    if (!ranges.empty() && ranges.back().second == node.begin)
                        ranges.back().second = node.end;
                    else
                        ranges.emplace_back(node.begin, node.end);
                } else {
                    ncx.push_back(node.centroid.x);
                    ncy.push_back(node.centroid.y);
                    nm.push_back(node.monopole);
                    ndx.push_back(node.dipole.x);
                    ndy.push_back(node.dipole.y);
                    nqxx.push_back(node.quad_xx);
                    nqxy.push_back(node.quad_xy);
                    nqyy.push_back(node.quad_yy);
                }
            }

            const std::size_t n_nodes = nm.size();
            const double* px = tree.px.data();
            const double* py = tree.py.data();
            const double* pg = tree.pg.data();
            for (std::uint32_t t = target_leaf.begin; t < target_leaf.end; ++t) {
                const double x = px[t];
                const double y = py[t];
                double u = 0.0, v = 0.0;
                for (const auto& [rb, re] : ranges) {
#pragma omp simd reduction(+ : u, v)
                    for (std::uint32_t j = rb; j < re; ++j) {
                        const double dx = x - px[j];
                        const double dy = y - py[j];
                        const double w = pg[j] / (dx * dx + dy * dy + d2);
                        u += -dy * w;
                        v += dx * w;
                    }
                }
#pragma omp simd reduction(+ : u, v)
                for (std::size_t j = 0; j < n_nodes; ++j) {
                    const double rx = x - ncx[j];
                    const double ry = y - ncy[j];
                    const double s = rx * rx + ry * ry + d2;
                    const double inv_s = 1.0 / s;
                    const double inv_s2 = inv_s * inv_s;
                    const double inv_s3 = inv_s2 * inv_s;
                    const double txx = rx * rx, tyy = ry * ry;
                    u += -ry * nm[j] * inv_s -
                         (ndx[j] * 2.0 * rx * ry + ndy[j] * (2.0 * tyy - s)) * inv_s2 +
                         (nqxx[j] * ry * (s - 4.0 * txx) + 2.0 * nqxy[j] * rx * (s - 4.0 * tyy) +
                          nqyy[j] * ry * (3.0 * s - 4.0 * tyy)) *
                             inv_s3;
                    v += rx * nm[j] * inv_s -
                         (ndx[j] * (s - 2.0 * txx) - ndy[j] * 2.0 * rx * ry) * inv_s2 +
                         (nqxx[j] * rx * (4.0 * txx - 3.0 * s) +
                          2.0 * nqxy[j] * ry * (4.0 * txx - s) +
                          nqyy[j] * rx * (4.0 * tyy - s)) *
                             inv_s3;
                }
                out[tree.order[t]] = {u / kTwoPi, v / kTwoPi};
            }
        }
    });
    return out;
}

/// Velocity induced by the ensemble at its own particle positions, choosing
/// the summation backend. This is the right-hand side of the trajectory ODE.
inline std::vector<Vec2> ensemble_velocities(const ParticleEnsemble& ensemble,
                                             SummationMode mode, double theta,
                                             int leaf_capacity) {
    if (mode == SummationMode::Direct)
        return velocity_direct(ensemble.positions, ensemble);
    const Quadtree tree = build_tree(ensemble, leaf_capacity);
    return velocity_tree_self(tree, theta, ensemble.blob_radius);
}

}  // namespace vortex
