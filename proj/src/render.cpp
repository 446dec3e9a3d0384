#include "thermloc/render.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace thermloc {

namespace {

struct PreparedMarker {
    Mat3 R_CM;
    Vec3 t_CM;
    Vec3 normal_C;     // marker +z in camera frame
    double plane_d;    // normal . point-on-plane
    double half_sheet;
    double half_plate;
    double cell;
    double hot_value;
    const MarkerBitGrid* grid;
    int cells_per_side;
    double depth;      // for painter ordering
    int x0, y0, x1, y1;  // clipped pixel bbox, inclusive
    bool visible = false;
};

PreparedMarker prepare(const SceneMarker& m, const CameraIntrinsics& intr,
                       const Pose& T_CW, double background, const RenderOptions& opts) {
    PreparedMarker p;
    const Pose T_CM = compose(T_CW, m.T_WM);
    p.R_CM = T_CM.rotation.toRotationMatrix();
    p.t_CM = T_CM.translation;
    p.normal_C = p.R_CM.col(2);
    p.plane_d = p.normal_C.dot(p.t_CM);
    p.half_sheet = m.spec.side_length / 2.0;
    p.cell = m.spec.side_length / (m.grid.n + 2);
    p.half_plate = p.half_sheet + opts.quiet_zone_cells * p.cell;
    p.hot_value = background + opts.contrast_attenuation * (m.hot_intensity - background);
    p.grid = &m.grid;
    p.cells_per_side = m.grid.n + 2;
    p.depth = p.t_CM.z();

    // front side only: camera must sit on the +z side of the marker plane
    const Vec3 cam_in_marker = -(p.R_CM.transpose() * p.t_CM);
    if (cam_in_marker.z() <= 1e-9) return p;

    double lo_x = 1e30, lo_y = 1e30, hi_x = -1e30, hi_y = -1e30;
    for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
            const Vec3 corner_M(sx * p.half_plate, sy * p.half_plate, 0.0);
            const Vec3 corner_C = p.R_CM * corner_M + p.t_CM;
            if (corner_C.z() <= 1e-6) return p;  // plate crosses the camera plane; skip
            Vec2 px;
            try {
                px = project_camera_point(intr, corner_C);
            } catch (const BehindCamera&) {
                return p;
            }
            lo_x = std::min(lo_x, px.x());
            lo_y = std::min(lo_y, px.y());
            hi_x = std::max(hi_x, px.x());
            hi_y = std::max(hi_y, px.y());
        }
    }
    p.x0 = std::max(0, static_cast<int>(std::floor(lo_x)) - 1);
    p.y0 = std::max(0, static_cast<int>(std::floor(lo_y)) - 1);
    p.x1 = std::min(intr.width - 1, static_cast<int>(std::ceil(hi_x)) + 1);
    p.y1 = std::min(intr.height - 1, static_cast<int>(std::ceil(hi_y)) + 1);
    p.visible = p.x0 <= p.x1 && p.y0 <= p.y1;
    return p;
}

// Surface value at the marker-plane hit point, or nullopt when the ray misses
// the heat plate.
inline bool plate_value(const PreparedMarker& p, double background, const Vec3& ray,
                        double* value) {
    const double denom = p.normal_C.dot(ray);
    if (std::abs(denom) < 1e-12) return false;
    const double s = p.plane_d / denom;
    if (s <= 1e-6) return false;
    const Vec3 local = p.R_CM.transpose() * (s * ray - p.t_CM);
    const double x = local.x(), y = local.y();
    if (std::abs(x) > p.half_plate || std::abs(y) > p.half_plate) return false;
    if (std::abs(x) > p.half_sheet || std::abs(y) > p.half_sheet) {
        *value = p.hot_value;  // exposed heat source around the sheet
        return true;
    }
    const int col = std::min(p.cells_per_side - 1,
                             static_cast<int>((x + p.half_sheet) / p.cell));
    const int row = std::min(p.cells_per_side - 1,
                             static_cast<int>((p.half_sheet - y) / p.cell));
    const int n = p.grid->n;
    if (row == 0 || col == 0 || row == n + 1 || col == n + 1) {
        *value = background;  // material border
        return true;
    }
    *value = p.grid->at(row - 1, col - 1) ? p.hot_value : background;
    return true;
}

}  // namespace

GrayImage render_scene(const std::vector<SceneMarker>& markers, double background,
                       const CameraIntrinsics& intr, const Pose& T_WC,
                       const RenderOptions& opts) {
    intr.validate();
    const Pose T_CW = T_WC.inverse();
    std::vector<float> buf(static_cast<size_t>(intr.width) * intr.height,
                           static_cast<float>(background));

    std::vector<PreparedMarker> prepared;
    for (const auto& m : markers) {
        PreparedMarker p = prepare(m, intr, T_CW, background, opts);
        if (p.visible) prepared.push_back(p);
    }
    // painter's order, far to near
    std::sort(prepared.begin(), prepared.end(),
              [](const PreparedMarker& a, const PreparedMarker& b) { return a.depth > b.depth; });

    const int S = std::max(1, opts.supersample);
    const double inv_s2 = 1.0 / (S * S);
    for (const auto& p : prepared) {
        for (int y = p.y0; y <= p.y1; ++y) {
            for (int x = p.x0; x <= p.x1; ++x) {
                const double current = buf[static_cast<size_t>(y) * intr.width + x];
                double acc = 0.0;
                for (int sy = 0; sy < S; ++sy) {
                    for (int sx = 0; sx < S; ++sx) {
                        const double u = x + (sx + 0.5) / S - 0.5;
                        const double v = y + (sy + 0.5) / S - 0.5;
                        const Vec2 n = pixel_to_normalized(intr, {u, v});
                        double value;
                        if (plate_value(p, background, Vec3(n.x(), n.y(), 1.0), &value))
                            acc += value;
                        else
                            acc += current;
                    }
                }
                buf[static_cast<size_t>(y) * intr.width + x] = static_cast<float>(acc * inv_s2);
            }
        }
    }

    GrayImage img(intr.width, intr.height);
    if (opts.noise_sigma > 0.0) {
        std::mt19937_64 rng(opts.noise_seed);
        std::normal_distribution<double> noise(0.0, opts.noise_sigma);
        for (size_t i = 0; i < buf.size(); ++i) {
            const double v = buf[i] + noise(rng);
            img.pixels[i] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    } else {
        for (size_t i = 0; i < buf.size(); ++i)
            img.pixels[i] = static_cast<uint8_t>(
                std::clamp(std::lround(static_cast<double>(buf[i])), 0L, 255L));
    }
    return img;
}

}  // namespace thermloc
