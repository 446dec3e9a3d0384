#pragma once

#include <cstdint>
#include <vector>

#include "thermloc/dictionary.hpp"
#include "thermloc/geometry.hpp"
#include "thermloc/image.hpp"

namespace thermloc {

// One marker instance in a rendered scene. T_WM places the marker frame
// (x right, y up on the pattern, z outward normal) in the world.
struct SceneMarker {
    MarkerSpec spec;
    MarkerBitGrid grid;
    Pose T_WM;
    double hot_intensity = 200.0;
};

struct RenderOptions {
    double noise_sigma = 0.0;
    double contrast_attenuation = 1.0;  // 0 collapses markers into the background
    uint64_t noise_seed = 0;
    int supersample = 4;                // NxN subsamples per pixel
    // The heat source behind the sheet extends this many cells beyond the
    // sheet edge and shows at hot_intensity, giving the sheet silhouette its
    // contrast (the paper's heaters are larger than the markers).
    double quiet_zone_cells = 1.0;
};

// Thermal-like forward model: cut holes (ON cells) and the exposed heat
// source render hot, the acrylic sheet (OFF cells and border) renders at the
// scene background. Markers behind the camera are simply absent.
GrayImage render_scene(const std::vector<SceneMarker>& markers, double background,
                       const CameraIntrinsics& intr, const Pose& T_WC,
                       const RenderOptions& opts);

}  // namespace thermloc
