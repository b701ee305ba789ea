#include "coalesce/gasket.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "coalesce/errors.hpp"

namespace coalesce {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

std::uint64_t pack(std::int64_t a, std::int64_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

std::int64_t floor_div(std::int64_t a, std::int64_t s) {
    std::int64_t q = a / s;
    if ((a % s != 0) && ((a < 0) != (s < 0))) --q;
    return q;
}

std::uint64_t pow3(int e) {
    std::uint64_t r = 1;
    for (int i = 0; i < e; ++i) {
        if (r > std::numeric_limits<std::uint64_t>::max() / 3) return std::numeric_limits<std::uint64_t>::max();
        r *= 3;
    }
    return r;
}

// Closed-hull containment of p in the upward triangle t.
bool hull_contains(const TriangleId& t, const VertexAddress& p) {
    const int common = std::max(t.level, p.level);
    const VertexAddress q = p.at_level(common);
    const VertexAddress c = t.anchor.at_level(common);
    const std::int64_t side = std::int64_t{1} << (common - t.level);
    const std::int64_t u = q.a - c.a;
    const std::int64_t v = q.b - c.b;
    return u >= 0 && v >= 0 && u + v <= side;
}

// iota: the corner of the unit triangle carrying a given label, in oblique coordinates.
constexpr std::array<std::array<std::int64_t, 2>, 3> kLabelCorner = {{{0, 0}, {1, 0}, {0, 1}}};

} // namespace

VertexAddress VertexAddress::at_level(int target) const {
    if (target < level) throw ContractError("at_level: cannot coarsen a vertex address");
    const int shift = target - level;
    return {target, a << shift, b << shift};
}

double VertexAddress::x() const { return std::ldexp(static_cast<double>(2 * a + b), -(level + 1)); }
double VertexAddress::y() const { return std::ldexp(static_cast<double>(b), -(level + 1)) * kSqrt3; }

PlanePoint PlanePoint::from(const VertexAddress& v) { return {v.level, 2 * v.a + v.b, v.b}; }

VertexAddress PlanePoint::to_vertex() const {
    if (((x_half - y_units) & 1) == 0) return {level, (x_half - y_units) / 2, y_units};
    return {level + 1, x_half - y_units, 2 * y_units};
}

double PlanePoint::x() const { return std::ldexp(static_cast<double>(x_half), -(level + 1)); }
double PlanePoint::y() const { return std::ldexp(static_cast<double>(y_units), -(level + 1)) * kSqrt3; }

double ScaledSquaredDistance::to_double() const {
    return std::ldexp(static_cast<double>(value), -2 * (level + 1));
}

ScaledSquaredDistance squared_distance(const VertexAddress& p, const VertexAddress& q) {
    const int common = std::max(p.level, q.level);
    const PlanePoint pp = PlanePoint::from(p.at_level(common));
    const PlanePoint qq = PlanePoint::from(q.at_level(common));
    const std::int64_t dx = pp.x_half - qq.x_half;
    const std::int64_t dy = pp.y_units - qq.y_units;
    return {common, dx * dx + 3 * dy * dy};
}

double euclidean_distance(const VertexAddress& p, const VertexAddress& q) {
    return std::sqrt(squared_distance(p, q).to_double());
}

std::array<VertexAddress, 3> TriangleId::corners() const {
    return {anchor, VertexAddress{level, anchor.a + 1, anchor.b}, VertexAddress{level, anchor.a, anchor.b + 1}};
}

VertexLabel vertex_label(std::int64_t n1, std::int64_t n2) {
    const std::int64_t e = ((n1 + 2 * n2) % 3 + 3) % 3;
    return static_cast<VertexLabel>(e);
}

bool GasketGraph::contains(const VertexAddress& p) const {
    std::uint32_t idx;
    return find(p, idx);
}

bool GasketGraph::find(const VertexAddress& p, std::uint32_t& out) const {
    if (p.level > level_) return false;
    const VertexAddress q = p.at_level(level_);
    if (q.a < 0 || q.b < 0) return false;
    const auto it = index_.find(pack(q.a, q.b));
    if (it == index_.end()) return false;
    out = it->second;
    return true;
}

std::uint32_t GasketGraph::index_of(const VertexAddress& p) const {
    std::uint32_t idx;
    if (!find(p, idx)) {
        throw DomainError("vertex (" + std::to_string(p.a) + "," + std::to_string(p.b) + ")@" +
                          std::to_string(p.level) + " is not in the level-" + std::to_string(level_) + " graph");
    }
    return idx;
}

std::array<std::uint32_t, 2> GasketGraph::far_corners() const {
    const auto side = static_cast<std::int64_t>(side_hops());
    return {index_of({level_, side, 0}), index_of({level_, 0, side})};
}

std::vector<std::uint32_t> GasketGraph::edge_list() const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t v = 0; v < vertex_count(); ++v) {
        for (std::uint32_t w : neighbors(v)) {
            if (v < w) {
                out.push_back(v);
                out.push_back(w);
            }
        }
    }
    return out;
}

GasketGraph build_gasket_graph(int level, int window_exponent, std::uint64_t triangle_budget) {
    if (level < 0 || window_exponent < 0) throw ContractError("build_gasket_graph: level and window exponent must be >= 0");
    const int depth = level + window_exponent;
    const std::uint64_t triangles = pow3(depth);
    if (depth > 30 || triangles > triangle_budget) {
        throw ResourceError("build_gasket_graph: 3^" + std::to_string(depth) + " = " + std::to_string(triangles) +
                            " triangles exceeds the budget of " + std::to_string(triangle_budget));
    }

    GasketGraph g;
    g.level_ = level;
    g.window_exponent_ = window_exponent;

    // Level-n triangles of 2^k G are the anchors (i, j) with i & j == 0 in depth bits.
    const std::uint64_t full = (std::uint64_t{1} << depth) - 1;
    std::vector<std::array<std::uint64_t, 3>> tri_corners;
    tri_corners.reserve(triangles);
    std::vector<std::uint64_t> keys;
    keys.reserve(3 * triangles);
    for (std::uint64_t i = 0; i <= full; ++i) {
        const std::uint64_t comp = ~i & full;
        std::uint64_t j = 0;
        while (true) {
            const auto ia = static_cast<std::int64_t>(i);
            const auto jb = static_cast<std::int64_t>(j);
            const std::array<std::uint64_t, 3> c = {pack(ia, jb), pack(ia + 1, jb), pack(ia, jb + 1)};
            tri_corners.push_back(c);
            keys.insert(keys.end(), c.begin(), c.end());
            if (j == comp) break;
            j = ((j | ~comp) + 1) & comp;
        }
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    const std::size_t nv = keys.size();
    g.vertices_.resize(nv);
    g.index_.reserve(nv);
    for (std::size_t v = 0; v < nv; ++v) {
        const auto a = static_cast<std::int64_t>(keys[v] >> 32);
        const auto b = static_cast<std::int64_t>(keys[v] & 0xffffffffu);
        g.vertices_[v] = {level, a, b};
        g.index_.emplace(keys[v], static_cast<std::uint32_t>(v));
    }

    g.degree_.assign(nv, 0);
    g.neighbors_.assign(4 * nv, 0);
    auto add_edge = [&](std::uint32_t u, std::uint32_t w) {
        if (g.degree_[u] >= 4 || g.degree_[w] >= 4) throw std::logic_error("gasket vertex degree exceeds 4");
        g.neighbors_[4 * std::size_t{u} + g.degree_[u]++] = w;
        g.neighbors_[4 * std::size_t{w} + g.degree_[w]++] = u;
    };
    for (const auto& c : tri_corners) {
        const std::uint32_t p = g.index_.at(c[0]);
        const std::uint32_t q = g.index_.at(c[1]);
        const std::uint32_t r = g.index_.at(c[2]);
        add_edge(p, q);
        add_edge(p, r);
        add_edge(q, r);
    }

    g.neighbor_slots_.resize(4 * nv);
    for (std::size_t v = 0; v < nv; ++v) {
        auto first = g.neighbors_.begin() + static_cast<std::ptrdiff_t>(4 * v);
        std::sort(first, first + g.degree_[v]);
        for (int s = 0; s < 4; ++s) g.neighbor_slots_[4 * v + s] = g.neighbors_[4 * v + (s % g.degree_[v])];
    }
    return g;
}

bool is_gasket_triangle(const TriangleId& t, int window_exponent) {
    const int depth = t.level + window_exponent;
    if (depth < 0 || depth > 62) return false;
    const std::int64_t i = t.anchor.a;
    const std::int64_t j = t.anchor.b;
    if (i < 0 || j < 0) return false;
    if ((i & j) != 0) return false;
    return (i + j) < (std::int64_t{1} << depth);
}

std::vector<TriangleId> containing_triangles(const VertexAddress& p, int level, int window_exponent) {
    if (level < -window_exponent) throw DomainError("containing_triangles: level is coarser than the window");
    const VertexAddress q = p.level >= level ? p : p.at_level(level);
    const std::int64_t side = std::int64_t{1} << (q.level - level);
    const std::int64_t A = floor_div(q.a, side);
    const std::int64_t B = floor_div(q.b, side);
    std::vector<TriangleId> out;
    for (const auto& [da, db] : {std::pair{0, 0}, std::pair{-1, 0}, std::pair{0, -1}}) {
        const TriangleId t{level, {level, A + da, B + db}};
        if (is_gasket_triangle(t, window_exponent) && hull_contains(t, q)) out.push_back(t);
    }
    if (out.empty()) {
        throw DomainError("point (" + std::to_string(p.a) + "," + std::to_string(p.b) + ")@" + std::to_string(p.level) +
                          " lies in no level-" + std::to_string(level) + " triangle of the window");
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<TriangleId> containing_triangles(const PlanePoint& p, int level, int window_exponent) {
    return containing_triangles(p.to_vertex(), level, window_exponent);
}

VertexAddress fold(const VertexAddress& p, int window_exponent) {
    const VertexAddress q = p.level >= 0 ? p : p.at_level(0);
    const TriangleId t = containing_triangles(q, 0, window_exponent).front();
    const std::int64_t side = std::int64_t{1} << q.level;
    const std::int64_t u = q.a - t.anchor.a * side;
    const std::int64_t v = q.b - t.anchor.b * side;
    const auto base = static_cast<int>(vertex_label(t.anchor.a, t.anchor.b));
    const auto& c1 = kLabelCorner[base];
    const auto& c2 = kLabelCorner[(base + 1) % 3];
    const auto& c3 = kLabelCorner[(base + 2) % 3];
    const std::int64_t w = side - u - v;
    return {q.level, w * c1[0] + u * c2[0] + v * c3[0], w * c1[1] + u * c2[1] + v * c3[1]};
}

PlanePoint fold(const PlanePoint& p, int window_exponent) {
    return PlanePoint::from(fold(p.to_vertex(), window_exponent));
}

std::vector<std::uint32_t> bfs_distances(const GasketGraph& g, std::span<const std::uint32_t> sources) {
    constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> dist(g.vertex_count(), kUnset);
    std::deque<std::uint32_t> queue;
    for (std::uint32_t s : sources) {
        if (dist[s] != 0) {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while (!queue.empty()) {
        const std::uint32_t v = queue.front();
        queue.pop_front();
        for (std::uint32_t w : g.neighbors(v)) {
            if (dist[w] == kUnset) {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    return dist;
}

std::uint32_t shortest_path_distance(const GasketGraph& g, std::uint32_t u, std::uint32_t v) {
    if (u >= g.vertex_count() || v >= g.vertex_count()) throw ContractError("shortest_path_distance: vertex out of range");
    const std::array<std::uint32_t, 1> src{u};
    return bfs_distances(g, src)[v];
}

std::vector<TriangleId> covering_triangles(std::span<const VertexAddress> points, int level, int window_exponent) {
    std::vector<TriangleId> cover;
    cover.reserve(points.size());
    for (const auto& p : points) cover.push_back(containing_triangles(p, level, window_exponent).front());
    std::sort(cover.begin(), cover.end());
    cover.erase(std::unique(cover.begin(), cover.end()), cover.end());
    return cover;
}

bool ExtendedTriangleRegion::contains(const VertexAddress& p) const {
    return std::any_of(parts.begin(), parts.end(), [&](const TriangleId& t) { return hull_contains(t, p); });
}

ExtendedTriangleRegion extended_triangle(const TriangleId& base, int window_exponent) {
    if (base.level != 0) throw ContractError("extended_triangle: base must be a 0-triangle");
    if (!is_gasket_triangle(base, window_exponent)) throw DomainError("extended_triangle: base is not a triangle of the window");
    ExtendedTriangleRegion region{base, {base}};
    for (const auto& corner : base.corners()) {
        for (const auto& t : containing_triangles(corner, 1, window_exponent)) {
            const bool inside = hull_contains(base, t.anchor) && hull_contains(base, {1, t.anchor.a + 1, t.anchor.b}) &&
                                hull_contains(base, {1, t.anchor.a, t.anchor.b + 1});
            if (!inside) region.parts.push_back(t);
        }
    }
    std::sort(region.parts.begin() + 1, region.parts.end());
    region.parts.erase(std::unique(region.parts.begin() + 1, region.parts.end()), region.parts.end());
    return region;
}

nlohmann::json graph_to_json(const GasketGraph& g) {
    nlohmann::json vertices = nlohmann::json::array();
    for (const auto& v : g.vertices()) vertices.push_back({v.a, v.b});
    nlohmann::json edges = nlohmann::json::array();
    const auto flat = g.edge_list();
    for (std::size_t e = 0; e < flat.size(); e += 2) edges.push_back({flat[e], flat[e + 1]});
    return {{"level", g.level()}, {"window_exponent", g.window_exponent()}, {"vertices", vertices}, {"edges", edges}};
}

} // namespace coalesce
