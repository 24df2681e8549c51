#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <vector>

#include "multipass/so3.hpp"

namespace multipass {

/// Geodesic grid on S^2: a subdivided icosahedron with adjacency. Used for
/// dense scans and bottleneck path searches over direction-dependent
/// quantities.
struct SphereGrid {
    std::vector<Vec3> vertices;
    std::vector<std::vector<int>> neighbors;

    static SphereGrid icosphere(int subdivisions) {
        const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
        std::vector<Vec3> verts = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                                   {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                                   {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
        for (auto& v : verts)
            v.normalize();
        std::vector<std::array<int, 3>> faces = {
            {0, 11, 5}, {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
            {1, 5, 9},  {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
            {3, 9, 4},  {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
            {4, 9, 5},  {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

        for (int s = 0; s < subdivisions; ++s) {
            std::map<std::pair<int, int>, int> midpoint;
            auto mid = [&](int a, int b) {
                auto key = std::minmax(a, b);
                auto it = midpoint.find(key);
                if (it != midpoint.end())
                    return it->second;
                Vec3 m = (verts[a] + verts[b]).normalized();
                verts.push_back(m);
                int idx = int(verts.size()) - 1;
                midpoint[key] = idx;
                return idx;
            };
            std::vector<std::array<int, 3>> next;
            next.reserve(faces.size() * 4);
            for (auto [a, b, c] : faces) {
                int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
                next.push_back({a, ab, ca});
                next.push_back({b, bc, ab});
                next.push_back({c, ca, bc});
                next.push_back({ab, bc, ca});
            }
            faces = std::move(next);
        }

        SphereGrid g;
        g.vertices = std::move(verts);
        g.neighbors.assign(g.vertices.size(), {});
        auto link = [&](int a, int b) {
            auto& na = g.neighbors[a];
            if (std::find(na.begin(), na.end(), b) == na.end())
                na.push_back(b);
        };
        for (auto [a, b, c] : faces) {
            link(a, b);
            link(b, a);
            link(b, c);
            link(c, b);
            link(c, a);
            link(a, c);
        }
        return g;
    }

    int nearest(const Vec3& v) const {
        int best = 0;
        double bd = -2.0;
        for (int i = 0; i < int(vertices.size()); ++i) {
            double d = vertices[i].dot(v);
            if (d > bd) {
                bd = d;
                best = i;
            }
        }
        return best;
    }
};

namespace detail {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b)
            return false;
        parent[a] = b;
        return true;
    }
};

} // namespace detail

/// Largest threshold below which the superlevel sets {g > delta} of a vertex
/// function are nonempty and connected on the grid. Vertices are activated in
/// decreasing order of g; whenever the active set has two or more components
/// the corresponding value range is disconnected.
inline double connectivity_threshold(const SphereGrid& grid, const std::vector<double>& g) {
    int n = int(grid.vertices.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return g[a] > g[b]; });

    detail::UnionFind uf(n);
    std::vector<char> active(n, 0);
    int components = 0;
    double bad = std::numeric_limits<double>::infinity();
    for (int step = 0; step < n; ++step) {
        int v = order[step];
        active[v] = 1;
        ++components;
        for (int w : grid.neighbors[v])
            if (active[w] && uf.unite(v, w))
                --components;
        // active = {g >= g[v]}; the range (next value, g[v]) is disconnected
        // whenever more than one component is present.
        if (components >= 2 && step + 1 < n)
            bad = std::min(bad, g[order[step + 1]]);
    }
    double top = g[order[0]];
    return 0.95 * std::min(bad, top);
}

/// Widest (maximin) path between two vertices: maximizes the minimal vertex
/// value of g along the path. Returns the vertex sequence; the achieved
/// bottleneck is the min of g over it.
inline std::vector<int> widest_path(const SphereGrid& grid, const std::vector<double>& g, int from,
                                    int to) {
    int n = int(grid.vertices.size());
    std::vector<double> best(n, -std::numeric_limits<double>::infinity());
    std::vector<int> prev(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item> pq;
    best[from] = g[from];
    pq.push({best[from], from});
    while (!pq.empty()) {
        auto [b, v] = pq.top();
        pq.pop();
        if (b < best[v])
            continue;
        if (v == to)
            break;
        for (int w : grid.neighbors[v]) {
            double nb = std::min(b, g[w]);
            if (nb > best[w]) {
                best[w] = nb;
                prev[w] = v;
                pq.push({nb, w});
            }
        }
    }
    std::vector<int> path;
    if (best[to] == -std::numeric_limits<double>::infinity())
        return path;
    for (int v = to; v != -1; v = prev[v])
        path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
}

} // namespace multipass
