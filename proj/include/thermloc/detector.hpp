#pragma once

#include <array>
#include <vector>

#include "thermloc/dictionary.hpp"
#include "thermloc/geometry.hpp"
#include "thermloc/image.hpp"

namespace thermloc {

struct DetectorParams {
    int threshold_window = 15;      // adaptive mean window, pixels
    double threshold_offset = 5.0;  // intensity levels below local mean
    double min_perimeter = 40.0;    // quad perimeter gate, pixels
    double min_side_ratio = 0.3;    // shortest/longest quad side
    double dp_epsilon_rate = 0.04;  // polygon simplification, fraction of perimeter
    double cell_sample_frac = 0.6;  // central fraction of each cell sampled
    double min_cell_contrast = 10.0;  // Otsu class separation gate
    int max_corrections = 2;        // decode budget, <= floor((tau-1)/2)
    bool refine_corners = true;
    double max_refine_shift = 3.0;  // px; larger refinements fall back to coarse
    double min_edge_gradient = 8.0; // gradient floor for refinement samples
};

// A decoded marker. corners are sub-pixel image points in the canonical
// marker-frame order (pattern top-left, top-right, bottom-right, bottom-left,
// i.e. marker-local (-s/2,+s/2), (s/2,+s/2), (s/2,-s/2), (-s/2,-s/2));
// rotation is the pattern orientation in the image quad, degrees in
// {0, 90, 180, 270}.
struct MarkerDetection {
    int id = -1;
    std::array<Vec2, 4> corners;
    int rotation = 0;
    int bit_errors = 0;
};

struct DetectionDiagnostics {
    int components = 0;
    int traced = 0;
    int quads = 0;
    int rejected_border = 0;
    int rejected_contrast = 0;
    int rejected_decode = 0;
    int rejected_nested = 0;
    std::vector<int> duplicate_ids_dropped;
};

std::vector<MarkerDetection> detect(const GrayImage& img, const Dictionary& dict,
                                    const DetectorParams& params,
                                    DetectionDiagnostics* diag = nullptr);

}  // namespace thermloc
