#include "thermloc/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace thermloc {

namespace {

// ---------------------------------------------------------------- threshold

// Binary mask of pixels darker than their local mean by at least `offset`.
std::vector<uint8_t> adaptive_dark_mask(const GrayImage& img, int window, double offset) {
    const int w = img.width, h = img.height;
    std::vector<int64_t> integral(static_cast<size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y) {
        int64_t row = 0;
        for (int x = 0; x < w; ++x) {
            row += img.at(x, y);
            integral[static_cast<size_t>(y + 1) * (w + 1) + x + 1] =
                integral[static_cast<size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    auto box_sum = [&](int x0, int y0, int x1, int y1) {  // inclusive box
        return integral[static_cast<size_t>(y1 + 1) * (w + 1) + x1 + 1] -
               integral[static_cast<size_t>(y0) * (w + 1) + x1 + 1] -
               integral[static_cast<size_t>(y1 + 1) * (w + 1) + x0] +
               integral[static_cast<size_t>(y0) * (w + 1) + x0];
    };
    const int half = window / 2;
    std::vector<uint8_t> mask(static_cast<size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - half), y1 = std::min(h - 1, y + half);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - half), x1 = std::min(w - 1, x + half);
            const double mean =
                static_cast<double>(box_sum(x0, y0, x1, y1)) / ((x1 - x0 + 1) * (y1 - y0 + 1));
            mask[static_cast<size_t>(y) * w + x] = img.at(x, y) < mean - offset;
        }
    }
    return mask;
}

// ------------------------------------------------------ connected components

struct Component {
    int label;
    int size = 0;
    int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;
    int seed_x = 0, seed_y = 0;  // topmost-leftmost pixel
    bool touches_border = false;
};

std::vector<Component> label_components(const std::vector<uint8_t>& mask, int w, int h,
                                        std::vector<int32_t>& labels) {
    labels.assign(static_cast<size_t>(w) * h, 0);
    std::vector<Component> comps;
    std::vector<int> stack;
    int next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t idx = static_cast<size_t>(y) * w + x;
            if (!mask[idx] || labels[idx]) continue;
            Component comp;
            comp.label = ++next;
            comp.seed_x = x;
            comp.seed_y = y;
            labels[idx] = comp.label;
            stack.push_back(static_cast<int>(idx));
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cy = cur / w, cx = cur % w;
                ++comp.size;
                comp.min_x = std::min(comp.min_x, cx);
                comp.max_x = std::max(comp.max_x, cx);
                comp.min_y = std::min(comp.min_y, cy);
                comp.max_y = std::max(comp.max_y, cy);
                if (cx == 0 || cy == 0 || cx == w - 1 || cy == h - 1)
                    comp.touches_border = true;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dx && !dy) continue;
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const size_t nidx = static_cast<size_t>(ny) * w + nx;
                        if (mask[nidx] && !labels[nidx]) {
                            labels[nidx] = comp.label;
                            stack.push_back(static_cast<int>(nidx));
                        }
                    }
                }
            }
            comps.push_back(comp);
        }
    }
    return comps;
}

// ------------------------------------------------------------ contour trace

// Moore-neighbor tracing of the outer boundary, starting at the component's
// topmost-leftmost pixel. Returns pixel centers.
std::vector<Vec2> trace_outer_contour(const std::vector<int32_t>& labels, int w, int h,
                                      const Component& comp) {
    // clockwise neighbor order starting from "west"
    static const int dx8[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    static const int dy8[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    auto is_fg = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < w && y < h &&
               labels[static_cast<size_t>(y) * w + x] == comp.label;
    };

    std::vector<Vec2> contour;
    int cx = comp.seed_x, cy = comp.seed_y;
    int backtrack = 0;  // came from west (seed is topmost-leftmost, so west is background)
    const int sx = cx, sy = cy;
    int first_dir = -1;
    const int step_cap = 4 * (w + h) + 4 * comp.size + 16;
    for (int step = 0; step < step_cap; ++step) {
        contour.emplace_back(cx, cy);
        int dir = -1;
        for (int i = 0; i < 8; ++i) {
            const int d = (backtrack + i) % 8;
            if (is_fg(cx + dx8[d], cy + dy8[d])) {
                dir = d;
                break;
            }
        }
        if (dir < 0) break;  // isolated pixel
        if (cx == sx && cy == sy) {
            if (first_dir < 0)
                first_dir = dir;
            else if (dir == first_dir && contour.size() > 2)
                break;  // closed the loop entering the same way
        }
        cx += dx8[dir];
        cy += dy8[dir];
        backtrack = (dir + 5) % 8;  // one step clockwise past the reverse direction
    }
    if (!contour.empty()) contour.pop_back();  // last point repeats the start
    return contour;
}

// ----------------------------------------------------- polygon simplification

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 < 1e-12) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

void dp_simplify(const std::vector<Vec2>& pts, int i0, int i1, double eps,
                 std::vector<int>& keep) {
    // keep indices strictly between i0 and i1 that deviate more than eps
    double worst = -1.0;
    int worst_i = -1;
    for (int i = i0 + 1; i < i1; ++i) {
        const double d = point_segment_distance(pts[i], pts[i0], pts[i1]);
        if (d > worst) {
            worst = d;
            worst_i = i;
        }
    }
    if (worst > eps && worst_i >= 0) {
        dp_simplify(pts, i0, worst_i, eps, keep);
        keep.push_back(worst_i);
        dp_simplify(pts, worst_i, i1, eps, keep);
    }
}

// Douglas-Peucker on a closed contour; anchors are the two mutually farthest
// of (farthest-from-centroid, farthest-from-that).
std::vector<Vec2> simplify_closed(const std::vector<Vec2>& contour, double eps) {
    const int n = static_cast<int>(contour.size());
    Vec2 centroid = Vec2::Zero();
    for (const auto& p : contour) centroid += p;
    centroid /= n;
    int a = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = (contour[i] - centroid).squaredNorm();
        if (d > best) {
            best = d;
            a = i;
        }
    }
    int b = a;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = (contour[i] - contour[a]).squaredNorm();
        if (d > best) {
            best = d;
            b = i;
        }
    }
    if (a == b) return {};
    if (a > b) std::swap(a, b);

    std::vector<Vec2> rotated(contour.begin() + a, contour.end());
    rotated.insert(rotated.end(), contour.begin(), contour.begin() + a);
    const int bb = b - a;

    std::vector<int> keep{0};
    dp_simplify(rotated, 0, bb, eps, keep);
    keep.push_back(bb);
    dp_simplify(rotated, bb, static_cast<int>(rotated.size()) - 1, eps, keep);

    std::vector<Vec2> out;
    out.reserve(keep.size());
    for (int i : keep) out.push_back(rotated[i]);
    // closing segment between last kept point and the first is implicit
    if (out.size() >= 2 && (out.front() - out.back()).norm() < 1e-9) out.pop_back();
    return out;
}

// ---------------------------------------------------------------- quad utils

double shoelace(const std::array<Vec2, 4>& q) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Vec2& p0 = q[i];
        const Vec2& p1 = q[(i + 1) % 4];
        s += p0.x() * p1.y() - p1.x() * p0.y();
    }
    return 0.5 * s;
}

bool is_convex(const std::array<Vec2, 4>& q) {
    int sign = 0;
    for (int i = 0; i < 4; ++i) {
        const Vec2 e0 = q[(i + 1) % 4] - q[i];
        const Vec2 e1 = q[(i + 2) % 4] - q[(i + 1) % 4];
        const double cross = e0.x() * e1.y() - e0.y() * e1.x();
        if (std::abs(cross) < 1e-9) return false;
        const int s = cross > 0 ? 1 : -1;
        if (sign == 0)
            sign = s;
        else if (s != sign)
            return false;
    }
    return true;
}

double quad_perimeter(const std::array<Vec2, 4>& q) {
    double p = 0.0;
    for (int i = 0; i < 4; ++i) p += (q[(i + 1) % 4] - q[i]).norm();
    return p;
}

bool point_in_convex_quad(const Vec2& p, const std::array<Vec2, 4>& q) {
    // q is positively oriented
    for (int i = 0; i < 4; ++i) {
        const Vec2 e = q[(i + 1) % 4] - q[i];
        const Vec2 v = p - q[i];
        if (e.x() * v.y() - e.y() * v.x() <= 0.0) return false;
    }
    return true;
}

// Normalize to positive orientation starting at the topmost (then leftmost)
// corner, so the order is deterministic for a given image quad.
std::array<Vec2, 4> normalize_quad(std::array<Vec2, 4> q) {
    if (shoelace(q) < 0.0) std::swap(q[1], q[3]);
    int start = 0;
    for (int i = 1; i < 4; ++i) {
        if (q[i].y() < q[start].y() - 1e-9 ||
            (std::abs(q[i].y() - q[start].y()) <= 1e-9 && q[i].x() < q[start].x()))
            start = i;
    }
    std::array<Vec2, 4> out;
    for (int i = 0; i < 4; ++i) out[i] = q[(start + i) % 4];
    return out;
}

// -------------------------------------------------------- corner refinement

struct EdgeLine {
    Vec2 point;
    Vec2 dir;  // unit
    bool ok = false;
};

Vec2 gradient_at(const GrayImage& img, double x, double y) {
    const double gx = (img.sample_bilinear(x + 1.0, y) - img.sample_bilinear(x - 1.0, y)) * 0.5;
    const double gy = (img.sample_bilinear(x, y + 1.0) - img.sample_bilinear(x, y - 1.0)) * 0.5;
    return {gx, gy};
}

// Fit a line to gradient-magnitude peaks sampled along the edge normal.
EdgeLine fit_edge_line(const GrayImage& img, const Vec2& c0, const Vec2& c1,
                       const DetectorParams& params) {
    EdgeLine line;
    const Vec2 edge = c1 - c0;
    const double len = edge.norm();
    if (len < 4.0) return line;
    const Vec2 dir = edge / len;
    const Vec2 normal(-dir.y(), dir.x());

    const int samples = std::clamp(static_cast<int>(len * 0.4), 6, 40);
    std::vector<Vec2> pts;
    std::vector<double> wts;
    pts.reserve(samples);
    for (int i = 0; i < samples; ++i) {
        const double t = 0.15 + 0.7 * (i + 0.5) / samples;
        const Vec2 base = c0 + t * edge;

        // directional gradient magnitude along the normal, half-pixel steps
        double best_g = 0.0;
        double best_s = 0.0;
        constexpr double kStep = 0.5;
        constexpr int kHalfScan = 5;  // +-2.5 px
        std::array<double, 2 * kHalfScan + 1> g{};
        for (int k = -kHalfScan; k <= kHalfScan; ++k) {
            const Vec2 p = base + (k * kStep) * normal;
            if (p.x() < 2 || p.y() < 2 || p.x() > img.width - 3 || p.y() > img.height - 3)
                continue;
            g[k + kHalfScan] = std::abs(gradient_at(img, p.x(), p.y()).dot(normal));
            if (g[k + kHalfScan] > best_g) {
                best_g = g[k + kHalfScan];
                best_s = k * kStep;
            }
        }
        if (best_g < params.min_edge_gradient) continue;
        // gradient-magnitude centroid around the peak
        double num = 0.0, den = 0.0;
        const int peak = static_cast<int>(std::lround(best_s / kStep)) + kHalfScan;
        for (int k = std::max(0, peak - 2); k <= std::min(2 * kHalfScan, peak + 2); ++k) {
            num += g[k] * ((k - kHalfScan) * kStep);
            den += g[k];
        }
        if (den <= 0.0) continue;
        pts.push_back(base + (num / den) * normal);
        wts.push_back(best_g);
    }
    if (pts.size() < 4) return line;

    // weighted total least squares
    double wsum = 0.0;
    Vec2 mean = Vec2::Zero();
    for (size_t i = 0; i < pts.size(); ++i) {
        mean += wts[i] * pts[i];
        wsum += wts[i];
    }
    mean /= wsum;
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    for (size_t i = 0; i < pts.size(); ++i) {
        const Vec2 d = pts[i] - mean;
        scatter += wts[i] * d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(scatter);
    line.point = mean;
    line.dir = es.eigenvectors().col(1);  // largest eigenvalue
    line.ok = true;
    return line;
}

std::optional<Vec2> intersect_lines(const EdgeLine& a, const EdgeLine& b) {
    const double det = a.dir.x() * (-b.dir.y()) - (-b.dir.x()) * a.dir.y();
    if (std::abs(det) < 1e-9) return std::nullopt;
    const Vec2 rhs = b.point - a.point;
    const double t = (rhs.x() * (-b.dir.y()) - (-b.dir.x()) * rhs.y()) / det;
    return a.point + t * a.dir;
}

std::array<Vec2, 4> refine_quad(const GrayImage& img, const std::array<Vec2, 4>& quad,
                                const DetectorParams& params) {
    std::array<EdgeLine, 4> lines;
    for (int i = 0; i < 4; ++i)
        lines[i] = fit_edge_line(img, quad[i], quad[(i + 1) % 4], params);
    std::array<Vec2, 4> out = quad;
    for (int i = 0; i < 4; ++i) {
        const EdgeLine& prev = lines[(i + 3) % 4];
        const EdgeLine& next = lines[i];
        if (!prev.ok || !next.ok) continue;
        const auto p = intersect_lines(prev, next);
        if (p && (*p - quad[i]).norm() <= params.max_refine_shift) out[i] = *p;
    }
    return out;
}

// ------------------------------------------------------------- rectify/decode

// Homography mapping rectified cell coordinates (0..C)x(0..C) to image
// pixels, from the 4 quad corners (unit-square method).
Eigen::Matrix3d quad_homography(const std::array<Vec2, 4>& q, double C) {
    // map (0,0),(1,0),(1,1),(0,1) -> q0,q1,q2,q3, then scale by 1/C
    const double x0 = q[0].x(), y0 = q[0].y();
    const double x1 = q[1].x(), y1 = q[1].y();
    const double x2 = q[2].x(), y2 = q[2].y();
    const double x3 = q[3].x(), y3 = q[3].y();
    const double dx1 = x1 - x2, dx2 = x3 - x2, dy1 = y1 - y2, dy2 = y3 - y2;
    const double sx = x0 - x1 + x2 - x3;
    const double sy = y0 - y1 + y2 - y3;
    const double den = dx1 * dy2 - dx2 * dy1;
    const double g = (sx * dy2 - sy * dx2) / den;
    const double hh = (dx1 * sy - dy1 * sx) / den;
    Eigen::Matrix3d H;
    H << x1 - x0 + g * x1, x3 - x0 + hh * x3, x0,
         y1 - y0 + g * y1, y3 - y0 + hh * y3, y0,
         g, hh, 1.0;
    // pre-scale rect coords by 1/C
    Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
    S(0, 0) = 1.0 / C;
    S(1, 1) = 1.0 / C;
    return H * S;
}

Vec2 apply_h(const Eigen::Matrix3d& H, double u, double v) {
    const Eigen::Vector3d p = H * Eigen::Vector3d(u, v, 1.0);
    return {p.x() / p.z(), p.y() / p.z()};
}

// Mean intensity of every sheet cell sampled through the homography.
std::vector<double> sample_cells(const GrayImage& img, const Eigen::Matrix3d& H, int cells,
                                 double frac) {
    std::vector<double> means(static_cast<size_t>(cells) * cells, 0.0);
    constexpr int K = 5;
    for (int r = 0; r < cells; ++r) {
        for (int c = 0; c < cells; ++c) {
            double acc = 0.0;
            for (int i = 0; i < K; ++i) {
                for (int j = 0; j < K; ++j) {
                    const double u = c + 0.5 + frac * ((j + 0.5) / K - 0.5);
                    const double v = r + 0.5 + frac * ((i + 0.5) / K - 0.5);
                    const Vec2 px = apply_h(H, u, v);
                    acc += img.sample_bilinear(px.x(), px.y());
                }
            }
            means[static_cast<size_t>(r) * cells + c] = acc / (K * K);
        }
    }
    return means;
}

// Otsu split over the cell means; returns the threshold between classes.
double otsu_threshold(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const int n = static_cast<int>(values.size());
    double total = 0.0;
    for (double v : values) total += v;
    double best_var = -1.0;
    double thr = values.front();
    double below = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
        below += values[i];
        const double w0 = static_cast<double>(i + 1);
        const double w1 = n - w0;
        const double m0 = below / w0;
        const double m1 = (total - below) / w1;
        const double var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (var > best_var) {
            best_var = var;
            thr = 0.5 * (values[i] + values[i + 1]);
        }
    }
    return thr;
}

struct Candidate {
    std::array<Vec2, 4> corners;  // image-normalized order
    double area = 0.0;
    bool border_ok = false;
    std::optional<DecodeResult> decoded;
};

}  // namespace

std::vector<MarkerDetection> detect(const GrayImage& img, const Dictionary& dict,
                                    const DetectorParams& params,
                                    DetectionDiagnostics* diag) {
    DetectionDiagnostics local;
    DetectionDiagnostics& d = diag ? *diag : local;
    d = DetectionDiagnostics{};

    if (img.width < 8 || img.height < 8) return {};

    const auto mask = adaptive_dark_mask(img, params.threshold_window, params.threshold_offset);
    std::vector<int32_t> labels;
    const auto comps = label_components(mask, img.width, img.height, labels);
    d.components = static_cast<int>(comps.size());

    std::vector<Candidate> candidates;
    for (const auto& comp : comps) {
        if (comp.size < 16 || comp.touches_border) continue;
        const int bw = comp.max_x - comp.min_x + 1;
        const int bh = comp.max_y - comp.min_y + 1;
        if (2.0 * (bw + bh) < params.min_perimeter) continue;

        const auto contour = trace_outer_contour(labels, img.width, img.height, comp);
        if (contour.size() < 8) continue;
        ++d.traced;

        double contour_len = 0.0;
        for (size_t i = 0; i < contour.size(); ++i)
            contour_len += (contour[(i + 1) % contour.size()] - contour[i]).norm();
        const auto poly = simplify_closed(contour, params.dp_epsilon_rate * contour_len);
        if (poly.size() != 4) continue;

        std::array<Vec2, 4> quad{poly[0], poly[1], poly[2], poly[3]};
        if (!is_convex(quad)) continue;
        if (quad_perimeter(quad) < params.min_perimeter) continue;
        double min_side = std::numeric_limits<double>::max(), max_side = 0.0;
        for (int i = 0; i < 4; ++i) {
            const double s = (quad[(i + 1) % 4] - quad[i]).norm();
            min_side = std::min(min_side, s);
            max_side = std::max(max_side, s);
        }
        if (min_side < 1e-9 || min_side / max_side < params.min_side_ratio) continue;
        ++d.quads;

        quad = normalize_quad(quad);
        if (params.refine_corners) {
            quad = refine_quad(img, quad, params);
            quad = normalize_quad(quad);
        }

        Candidate cand;
        cand.corners = quad;
        cand.area = std::abs(shoelace(quad));

        const int cells = dict.n + 2;
        const auto H = quad_homography(quad, static_cast<double>(cells));
        const auto means = sample_cells(img, H, cells, params.cell_sample_frac);

        auto minmax = std::minmax_element(means.begin(), means.end());
        if (*minmax.second - *minmax.first < params.min_cell_contrast) {
            ++d.rejected_contrast;
            continue;
        }
        const double thr = otsu_threshold(means);

        bool border_ok = true;
        for (int r = 0; r < cells && border_ok; ++r) {
            for (int c = 0; c < cells; ++c) {
                if (r != 0 && r != cells - 1 && c != 0 && c != cells - 1) continue;
                if (means[static_cast<size_t>(r) * cells + c] > thr) {
                    border_ok = false;
                    break;
                }
            }
        }
        cand.border_ok = border_ok;
        if (!border_ok) {
            ++d.rejected_border;
            candidates.push_back(cand);  // kept for the containment filter
            continue;
        }

        MarkerBitGrid grid(dict.n);
        for (int r = 0; r < dict.n; ++r)
            for (int c = 0; c < dict.n; ++c)
                grid.set(r, c, means[static_cast<size_t>(r + 1) * cells + c + 1] > thr);
        cand.decoded = decode_bits(grid, dict, params.max_corrections);
        if (!cand.decoded) ++d.rejected_decode;
        candidates.push_back(cand);
    }

    // Containment: interior dark structure of a marker (the halo around an
    // isolated hole) can trace its own quad; drop anything nested inside a
    // larger border-valid quad.
    std::vector<MarkerDetection> detections;
    for (const auto& cand : candidates) {
        if (!cand.border_ok || !cand.decoded) continue;
        Vec2 center = Vec2::Zero();
        for (const auto& c : cand.corners) center += c;
        center /= 4.0;
        bool nested = false;
        for (const auto& other : candidates) {
            if (&other == &cand || !other.border_ok) continue;
            if (other.area > cand.area && point_in_convex_quad(center, other.corners)) {
                nested = true;
                break;
            }
        }
        if (nested) {
            ++d.rejected_nested;
            continue;
        }
        const int k = cand.decoded->rotation;
        const int shift = (4 - k) % 4;
        MarkerDetection det;
        det.id = cand.decoded->id;
        det.bit_errors = cand.decoded->bit_errors;
        det.rotation = 90 * shift;
        for (int i = 0; i < 4; ++i) det.corners[i] = cand.corners[(shift + i) % 4];
        detections.push_back(det);
    }

    // duplicate ids: keep the lower bit_errors (then larger quad)
    std::sort(detections.begin(), detections.end(), [](const auto& a, const auto& b) {
        if (a.id != b.id) return a.id < b.id;
        if (a.bit_errors != b.bit_errors) return a.bit_errors < b.bit_errors;
        return quad_perimeter(a.corners) > quad_perimeter(b.corners);
    });
    std::vector<MarkerDetection> unique;
    for (auto& det : detections) {
        if (!unique.empty() && unique.back().id == det.id) {
            d.duplicate_ids_dropped.push_back(det.id);
            continue;
        }
        unique.push_back(det);
    }
    return unique;
}

}  // namespace thermloc
