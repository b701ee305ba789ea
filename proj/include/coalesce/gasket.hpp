#pragma once

// Exact combinatorics of the level-n Sierpinski gasket graphs.
//
// Coordinates are oblique integer pairs: a vertex (a, b) at level n is the
// plane point a*(2^-n, 0) + b*(2^-n-1, sqrt(3)*2^-n-1). The finite gasket G is
// the window with exponent 0; a window with exponent k covers 2^k G, which is
// the part of the infinite gasket inside the triangle of side 2^k at the origin.

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace coalesce {

struct VertexAddress {
    int level = 0;
    std::int64_t a = 0;
    std::int64_t b = 0;

    auto operator<=>(const VertexAddress&) const = default;

    // Same point expressed at a finer level (target >= level).
    VertexAddress at_level(int target) const;
    double x() const;
    double y() const;
};

// Point on the half-step lattice: (x_half * 2^-n-1, y_units * sqrt(3) * 2^-n-1).
struct PlanePoint {
    int level = 0;
    std::int64_t x_half = 0;
    std::int64_t y_units = 0;

    auto operator<=>(const PlanePoint&) const = default;

    static PlanePoint from(const VertexAddress& v);
    // Finest-needed vertex address; may be one level finer than `level`.
    VertexAddress to_vertex() const;
    double x() const;
    double y() const;
};

// Squared Euclidean distance scaled by 4^(level+1), where both points are
// first brought to the finer of their two levels. Exact integer.
struct ScaledSquaredDistance {
    int level = 0;
    std::int64_t value = 0; // dx_half^2 + 3 dy_units^2
    double to_double() const;
};
ScaledSquaredDistance squared_distance(const VertexAddress& p, const VertexAddress& q);
double euclidean_distance(const VertexAddress& p, const VertexAddress& q);

// Upward n-triangle with lower-left corner `anchor` (anchor.level == level).
struct TriangleId {
    int level = 0;
    VertexAddress anchor;

    auto operator<=>(const TriangleId&) const = default;
    std::array<VertexAddress, 3> corners() const;
};

enum class VertexLabel : std::uint8_t { One = 0, Omega = 1, OmegaSquared = 2 };

// omega^((n1 + 2 n2) mod 3) for the unit-lattice point n1 (1,0) + n2 (1/2, sqrt3/2).
VertexLabel vertex_label(std::int64_t n1, std::int64_t n2);

class GasketGraph {
public:
    static constexpr std::uint64_t kDefaultTriangleBudget = 14'348'907; // 3^15

    int level() const noexcept { return level_; }
    int window_exponent() const noexcept { return window_exponent_; }
    std::size_t vertex_count() const noexcept { return vertices_.size(); }
    std::uint64_t side_hops() const noexcept { return std::uint64_t{1} << (level_ + window_exponent_); }

    const VertexAddress& address(std::uint32_t v) const { return vertices_[v]; }
    std::span<const VertexAddress> vertices() const noexcept { return vertices_; }
    std::uint32_t degree(std::uint32_t v) const { return degree_[v]; }
    std::span<const std::uint32_t> neighbors(std::uint32_t v) const {
        return {neighbors_.data() + 4 * std::size_t{v}, degree_[v]};
    }
    // Four slots per vertex; degree-2 vertices repeat their two neighbors, so a
    // uniform slot is a uniform neighbor.
    std::span<const std::uint32_t> neighbor_slots() const noexcept { return neighbor_slots_; }

    bool contains(const VertexAddress& p) const;
    std::uint32_t index_of(const VertexAddress& p) const; // DomainError if absent
    bool find(const VertexAddress& p, std::uint32_t& out) const;

    // Window corners other than the origin; in the infinite gasket these
    // vertices have degree 4, so walkers must stay away from them.
    std::array<std::uint32_t, 2> far_corners() const;
    std::vector<std::uint32_t> edge_list() const; // flattened (i, j) with i < j

    friend GasketGraph build_gasket_graph(int level, int window_exponent, std::uint64_t triangle_budget);

private:
    int level_ = 0;
    int window_exponent_ = 0;
    std::vector<VertexAddress> vertices_;
    std::vector<std::uint8_t> degree_;
    std::vector<std::uint32_t> neighbors_;
    std::vector<std::uint32_t> neighbor_slots_;
    std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

GasketGraph build_gasket_graph(int level, int window_exponent = 0,
                               std::uint64_t triangle_budget = GasketGraph::kDefaultTriangleBudget);

// True iff (anchor.a, anchor.b) names a level-`level` triangle of the window 2^k G.
bool is_gasket_triangle(const TriangleId& t, int window_exponent);

// All level-m triangles of the window whose closed hull contains p (size 1 or 2),
// sorted by anchor. m may be as coarse as -window_exponent.
std::vector<TriangleId> containing_triangles(const VertexAddress& p, int level, int window_exponent = 0);
std::vector<TriangleId> containing_triangles(const PlanePoint& p, int level, int window_exponent = 0);

// Folding map of the window onto G; result is at p's level.
VertexAddress fold(const VertexAddress& p, int window_exponent);
PlanePoint fold(const PlanePoint& p, int window_exponent);

// Graph-geodesic hop count (units of 2^-level).
std::uint32_t shortest_path_distance(const GasketGraph& g, std::uint32_t u, std::uint32_t v);
std::vector<std::uint32_t> bfs_distances(const GasketGraph& g, std::span<const std::uint32_t> sources);

// Level-b triangles covering A, each point assigned to its smallest-anchor triangle.
std::vector<TriangleId> covering_triangles(std::span<const VertexAddress> points, int level, int window_exponent = 0);

// A 0-triangle plus the adjoining 1-triangles that share exactly one of its corners.
struct ExtendedTriangleRegion {
    TriangleId base;
    std::vector<TriangleId> parts; // base first

    bool contains(const VertexAddress& p) const;
};
ExtendedTriangleRegion extended_triangle(const TriangleId& base, int window_exponent);

nlohmann::json graph_to_json(const GasketGraph& g);

} // namespace coalesce
