#pragma once

// Test-only oracles, independent of the library implementation paths they
// check.

#include <numeric>
#include <random>
#include <vector>

#include "thermloc/dictionary.hpp"
#include "thermloc/geometry.hpp"

namespace oracles {

using thermloc::MarkerBitGrid;
using thermloc::Mat3;
using thermloc::Pose;
using thermloc::Quat;
using thermloc::Vec2;
using thermloc::Vec3;

// 4x4 homogeneous-matrix pose algebra as a reference for Pose composition.
inline Eigen::Matrix4d pose_matrix(const Pose& p) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = p.rotation.toRotationMatrix();
    m.topRightCorner<3, 1>() = p.translation;
    return m;
}

inline double pose_difference(const Pose& a, const Pose& b, double* rot_angle = nullptr) {
    if (rot_angle) *rot_angle = thermloc::rotation_angle_between(a.rotation, b.rotation);
    return (a.translation - b.translation).norm();
}

inline Pose random_pose(std::mt19937_64& rng, double trans_scale = 2.0) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 3.0);
    Vec3 axis(g(rng), g(rng), g(rng));
    if (axis.norm() < 1e-9) axis = Vec3::UnitX();
    axis.normalize();
    Pose p;
    p.rotation = thermloc::so3_exp(axis * angle(rng));
    p.translation = trans_scale * Vec3(g(rng), g(rng), g(rng));
    return p;
}

// Union-find connectivity oracle for manufacturability: every OFF cell must
// join the virtual border node through 4-neighbor OFF links.
inline bool manufacturable_union_find(const MarkerBitGrid& g) {
    const int n = g.n;
    const int border = n * n;  // virtual node
    std::vector<int> parent(n * n + 1);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            if (g.at(r, c)) continue;
            const int idx = r * n + c;
            if (r == 0 || c == 0 || r == n - 1 || c == n - 1) unite(idx, border);
            if (r + 1 < n && !g.at(r + 1, c)) unite(idx, (r + 1) * n + c);
            if (c + 1 < n && !g.at(r, c + 1)) unite(idx, r * n + c + 1);
        }
    }
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            if (!g.at(r, c) && find(r * n + c) != find(border)) return false;
    return true;
}

// Minimal parser for the cut-outline SVG: extracts (x, y, w, h) of every
// "M x y H x2 V y2 H x Z" path.
struct SvgRect {
    double x, y, w, h;
};

inline std::vector<SvgRect> parse_svg_rect_paths(const std::string& svg) {
    std::vector<SvgRect> rects;
    size_t pos = 0;
    while ((pos = svg.find("d=\"M ", pos)) != std::string::npos) {
        pos += 5;
        const size_t end = svg.find('"', pos);
        const std::string d = svg.substr(pos, end - pos);
        double x, y, x2, y2, x3;
        if (std::sscanf(d.c_str(), "%lf %lf H %lf V %lf H %lf Z", &x, &y, &x2, &y2, &x3) == 5)
            rects.push_back({x, y, x2 - x, y2 - y});
        pos = end;
    }
    return rects;
}

}  // namespace oracles
