#include "thermloc/pose_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

namespace thermloc {

std::array<Vec3, 4> marker_corners_local(double side_length) {
    if (!(side_length > 0.0)) throw NonPositiveSide("marker side_length must be positive");
    const double h = side_length / 2.0;
    return {Vec3(-h, h, 0.0), Vec3(h, h, 0.0), Vec3(h, -h, 0.0), Vec3(-h, -h, 0.0)};
}

double compute_reprojection_error(const CameraIntrinsics& intr, const Pose& T,
                                  const std::vector<PoseCorrespondence>& corr) {
    if (corr.empty()) throw EmptyCorrespondences("no correspondences");
    double acc = 0.0;
    for (const auto& c : corr) {
        const Vec2 px = project_camera_point(intr, T.apply(c.point));
        acc += (px - c.pixel).squaredNorm();
    }
    return std::sqrt(acc / corr.size());
}

void camera_residual_jacobian(const CameraIntrinsics& intr, const Pose& T_CW,
                              const Vec3& p_W, const Vec2& observed, Vec2* residual,
                              Eigen::Matrix<double, 2, 6>* jacobian) {
    const Vec3 p_C = T_CW.apply(p_W);
    const Vec2 px = project_camera_point(intr, p_C);
    if (residual) *residual = px - observed;
    if (jacobian) {
        const Eigen::Matrix<double, 2, 3> J_pt = project_point_jacobian(intr, p_C);
        // T_CW perturbed as R <- Exp(dtheta) R, t <- t + dt:
        // d p_C = -[R p_W]x dtheta + dt = -[p_C - t]x dtheta + dt
        Eigen::Matrix<double, 3, 6> J_pose;
        J_pose.leftCols<3>() = -skew(p_C - T_CW.translation);
        J_pose.rightCols<3>() = Mat3::Identity();
        *jacobian = J_pt * J_pose;
    }
}

namespace {

// ------------------------------------------------------------ homography DLT

Eigen::Matrix3d dlt_homography(const std::array<Vec2, 4>& obj,
                               const std::array<Vec2, 4>& img) {
    // Hartley normalization of both point sets
    auto normalize = [](const std::array<Vec2, 4>& pts, Eigen::Matrix3d* T) {
        Vec2 mean = Vec2::Zero();
        for (const auto& p : pts) mean += p;
        mean /= 4.0;
        double scale = 0.0;
        for (const auto& p : pts) scale += (p - mean).norm();
        scale = scale > 1e-12 ? 4.0 * std::numbers::sqrt2 / scale : 1.0;
        *T = Eigen::Matrix3d::Identity();
        (*T)(0, 0) = scale;
        (*T)(1, 1) = scale;
        (*T)(0, 2) = -scale * mean.x();
        (*T)(1, 2) = -scale * mean.y();
        std::array<Vec2, 4> out;
        for (int i = 0; i < 4; ++i) out[i] = scale * (pts[i] - mean);
        return out;
    };
    Eigen::Matrix3d T_obj, T_img;
    const auto no = normalize(obj, &T_obj);
    const auto ni = normalize(img, &T_img);

    Eigen::Matrix<double, 8, 9> A;
    for (int i = 0; i < 4; ++i) {
        const double x = no[i].x(), y = no[i].y();
        const double u = ni[i].x(), v = ni[i].y();
        A.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        A.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(A, Eigen::ComputeFullV);
    // rank deficiency beyond the 1-dim null space means degenerate corners
    if (svd.singularValues()(6) < 1e-9 * svd.singularValues()(0))
        throw DegenerateConfiguration("homography from degenerate corner configuration");
    const Eigen::Matrix<double, 9, 1> hv = svd.matrixV().col(8);
    Eigen::Matrix3d Hn;
    Hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
    Eigen::Matrix3d H = T_img.inverse() * Hn * T_obj;
    if (std::abs(H(2, 2)) < 1e-12)
        throw DegenerateConfiguration("plane through the camera center");
    return H / H(2, 2);
}

// ---------------------------------------------------- planar decomposition

Mat3 rotation_taking_to_z(const Vec3& v) {
    const Vec3 vn = v.normalized();
    const Vec3 z(0.0, 0.0, 1.0);
    const double c = vn.dot(z);
    if (c > 1.0 - 1e-12) return Mat3::Identity();
    if (c < -1.0 + 1e-12) {
        Mat3 flip = Mat3::Identity();
        flip(0, 0) = -1.0;
        flip(2, 2) = -1.0;
        return flip;  // half turn about y
    }
    const Vec3 axis = vn.cross(z).normalized();
    const double angle = std::acos(std::clamp(c, -1.0, 1.0));
    return so3_exp(axis * angle).toRotationMatrix();
}

// The two rotation candidates of the planar pose problem from the homography
// Jacobian at the object origin and the origin's normalized image point v0.
void planar_rotations(const Eigen::Matrix3d& H, Mat3* R1, Mat3* R2) {
    const double p = H(0, 2), q = H(1, 2);
    Eigen::Matrix2d J;
    J << H(0, 0) - H(2, 0) * H(0, 2), H(0, 1) - H(2, 1) * H(0, 2),
         H(1, 0) - H(2, 0) * H(1, 2), H(1, 1) - H(2, 1) * H(1, 2);

    const Mat3 Rv = rotation_taking_to_z(Vec3(p, q, 1.0)).transpose();  // z-axis -> v

    Eigen::Matrix2d B;
    B << Rv(0, 0) - p * Rv(2, 0), Rv(0, 1) - p * Rv(2, 1),
         Rv(1, 0) - q * Rv(2, 0), Rv(1, 1) - q * Rv(2, 1);
    const double det = B(0, 0) * B(1, 1) - B(0, 1) * B(1, 0);
    if (std::abs(det) < 1e-15) throw DegenerateConfiguration("singular canonical frame");
    Eigen::Matrix2d A = B.inverse() * J;

    // largest singular value of A
    const double ata00 = A(0, 0) * A(0, 0) + A(0, 1) * A(0, 1);
    const double ata01 = A(0, 0) * A(1, 0) + A(0, 1) * A(1, 1);
    const double ata11 = A(1, 0) * A(1, 0) + A(1, 1) * A(1, 1);
    const double gamma = std::sqrt(
        0.5 * (ata00 + ata11 + std::sqrt((ata00 - ata11) * (ata00 - ata11) + 4.0 * ata01 * ata01)));
    if (!(gamma > 1e-15)) throw DegenerateConfiguration("zero-scale homography");

    const Eigen::Matrix2d Rt = A / gamma;
    const double c00 = std::clamp(1.0 - Rt(0, 0) * Rt(0, 0) - Rt(1, 0) * Rt(1, 0), 0.0, 1.0);
    const double c01 = std::clamp(1.0 - Rt(0, 1) * Rt(0, 1) - Rt(1, 1) * Rt(1, 1), 0.0, 1.0);
    double b0 = std::sqrt(c00);
    double b1 = std::sqrt(c01);
    if (-Rt(0, 0) * Rt(0, 1) - Rt(1, 0) * Rt(1, 1) < 0.0) b1 = -b1;

    auto assemble = [&](double s0, double s1) {
        Mat3 M;
        M.col(0) = Vec3(Rt(0, 0), Rt(1, 0), s0);
        M.col(1) = Vec3(Rt(0, 1), Rt(1, 1), s1);
        M.col(2) = M.col(0).cross(M.col(1));
        return Mat3(Rv * M);
    };
    *R1 = assemble(b0, b1);
    *R2 = assemble(-b0, -b1);
}

// Least-squares translation given R, from u*(r_z + t_z) = r_x + t_x etc.
Vec3 planar_translation(const std::array<Vec2, 4>& obj, const std::array<Vec2, 4>& norm_img,
                        const Mat3& R) {
    Eigen::Matrix<double, 8, 3> A;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const Vec3 r = R * Vec3(obj[i].x(), obj[i].y(), 0.0);
        const double u = norm_img[i].x(), v = norm_img[i].y();
        A.row(2 * i) << 1.0, 0.0, -u;
        A.row(2 * i + 1) << 0.0, 1.0, -v;
        b(2 * i) = u * r.z() - r.x();
        b(2 * i + 1) = v * r.z() - r.y();
    }
    return (A.transpose() * A).ldlt().solve(A.transpose() * b);
}

// --------------------------------------------------------- refinement (LM)

struct RefineResult {
    Pose T;
    double rms = std::numeric_limits<double>::infinity();
    bool converged = false;
};

double pose_cost(const CameraIntrinsics& intr, const Pose& T,
                 const std::vector<PoseCorrespondence>& corr,
                 const std::vector<double>& weights) {
    double acc = 0.0;
    for (size_t i = 0; i < corr.size(); ++i) {
        const Vec3 p_C = T.apply(corr[i].point);
        if (p_C.z() <= 1e-6) return std::numeric_limits<double>::infinity();
        const Vec2 px = project_camera_point(intr, p_C);
        acc += weights[i] * (px - corr[i].pixel).squaredNorm();
    }
    return acc;
}

// Damped Gauss-Newton on T (camera-from-X), left perturbation.
RefineResult refine_pose(const CameraIntrinsics& intr, Pose T,
                         const std::vector<PoseCorrespondence>& corr,
                         const std::vector<double>& weights, int max_iters,
                         double step_tol, int* consecutive_fail_out = nullptr) {
    RefineResult out;
    double lambda = 1e-4;
    double cost = pose_cost(intr, T, corr, weights);
    int consecutive_fail = 0;
    if (!std::isfinite(cost)) {
        out.T = T;
        return out;
    }
    for (int iter = 0; iter < max_iters; ++iter) {
        Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> Jtr = Eigen::Matrix<double, 6, 1>::Zero();
        for (size_t i = 0; i < corr.size(); ++i) {
            Vec2 r;
            Eigen::Matrix<double, 2, 6> J;
            camera_residual_jacobian(intr, T, corr[i].point, corr[i].pixel, &r, &J);
            JtJ.noalias() += weights[i] * J.transpose() * J;
            Jtr.noalias() += weights[i] * J.transpose() * r;
        }
        bool stepped = false;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Eigen::Matrix<double, 6, 6> Aug = JtJ;
            Aug.diagonal().array() += lambda;
            const Eigen::Matrix<double, 6, 1> delta = Aug.ldlt().solve(-Jtr);
            Pose trial;
            trial.rotation = (so3_exp(delta.head<3>()) * T.rotation).normalized();
            trial.translation = T.translation + delta.tail<3>();
            const double trial_cost = pose_cost(intr, trial, corr, weights);
            if (trial_cost < cost) {
                T = trial;
                cost = trial_cost;
                lambda = std::max(lambda * 0.1, 1e-12);
                consecutive_fail = 0;
                stepped = true;
                if (delta.norm() < step_tol) {
                    out.converged = true;
                    iter = max_iters;  // done
                }
                break;
            }
            lambda *= 10.0;
            ++consecutive_fail;
            if (consecutive_fail >= 5) break;
        }
        if (!stepped) break;
    }
    out.T = T;
    double acc = 0.0;
    bool valid = true;
    for (const auto& c : corr) {
        const Vec3 p_C = T.apply(c.point);
        if (p_C.z() <= 1e-6) {
            valid = false;
            break;
        }
        acc += (project_camera_point(intr, p_C) - c.pixel).squaredNorm();
    }
    if (valid) out.rms = std::sqrt(acc / corr.size());
    if (consecutive_fail_out) *consecutive_fail_out = consecutive_fail;
    return out;
}

}  // namespace

MarkerPoseResult estimate_marker_pose(const MarkerObservation& obs, double side_length,
                                      const CameraIntrinsics& intr) {
    const auto corners3 = marker_corners_local(side_length);

    // degenerate configurations: duplicate or collinear corners
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if ((obs.corners[i] - obs.corners[j]).norm() < 1e-9)
                throw DegenerateConfiguration("duplicate corners");
    {
        const Vec2 e1 = obs.corners[1] - obs.corners[0];
        bool collinear = true;
        for (int i = 2; i < 4; ++i) {
            const Vec2 e = obs.corners[i] - obs.corners[0];
            if (std::abs(e1.x() * e.y() - e1.y() * e.x()) > 1e-9) collinear = false;
        }
        if (collinear) throw DegenerateConfiguration("collinear corners");
    }

    std::array<Vec2, 4> obj;
    std::array<Vec2, 4> norm_img;
    for (int i = 0; i < 4; ++i) {
        obj[i] = Vec2(corners3[i].x(), corners3[i].y());
        norm_img[i] = pixel_to_normalized(intr, obs.corners[i]);
    }

    const Eigen::Matrix3d H = dlt_homography(obj, norm_img);
    Mat3 R1, R2;
    planar_rotations(H, &R1, &R2);

    std::vector<PoseCorrespondence> corr(4);
    for (int i = 0; i < 4; ++i) corr[i] = {corners3[i], obs.corners[i]};
    const std::vector<double> unit_w(4, 1.0);

    struct Candidate {
        Pose T;
        double raw_rms = std::numeric_limits<double>::infinity();
        bool valid = false;
    };
    std::array<Candidate, 2> cands;
    const std::array<Mat3, 2> rotations{R1, R2};
    for (int k = 0; k < 2; ++k) {
        Pose T;
        T.rotation = Quat(rotations[k]).normalized();
        T.translation = planar_translation(obj, norm_img, rotations[k]);
        if (T.translation.z() <= 1e-6) continue;
        bool in_front = true;
        double acc = 0.0;
        for (const auto& c : corr) {
            const Vec3 p_C = T.apply(c.point);
            if (p_C.z() <= 1e-6) {
                in_front = false;
                break;
            }
            acc += (project_camera_point(intr, p_C) - c.pixel).squaredNorm();
        }
        if (!in_front) continue;
        cands[k].T = T;
        cands[k].raw_rms = std::sqrt(acc / 4.0);
        cands[k].valid = true;
    }
    if (!cands[0].valid && !cands[1].valid)
        throw BehindCamera("both planar pose candidates lie behind the camera");

    MarkerPoseResult result;
    const int best_raw = (cands[0].raw_rms <= cands[1].raw_rms) ? 0 : 1;
    const int other = 1 - best_raw;
    if (cands[other].valid) {
        result.ambiguity_ratio =
            cands[other].raw_rms < 1e-15
                ? 1.0
                : std::min(1.0, cands[best_raw].raw_rms / cands[other].raw_rms);
    } else {
        result.ambiguity_ratio = 0.0;
    }

    RefineResult best_refined;
    for (int k = 0; k < 2; ++k) {
        if (!cands[k].valid) continue;
        const RefineResult r = refine_pose(intr, cands[k].T, corr, unit_w, 50, 1e-12);
        if (r.rms < best_refined.rms) best_refined = r;
    }
    if (!std::isfinite(best_refined.rms))
        throw BehindCamera("refined pose places the marker behind the camera");
    result.T_CM = best_refined.T;
    result.rms_px = best_refined.rms;
    return result;
}

CameraPoseEstimate estimate_camera_pose(const std::vector<MarkerObservation>& observations,
                                        const std::map<int, MapEntryForPose>& map_entries,
                                        const CameraIntrinsics& intr) {
    constexpr double kWeightFloor = 0.5;  // pixels, epsilon_w in w = 1/(e_w + e)

    // known observations only
    std::vector<const MarkerObservation*> known;
    for (const auto& obs : observations)
        if (map_entries.count(obs.id)) known.push_back(&obs);
    if (known.empty()) throw NoKnownMarkers("no observed marker is present in the map");

    // init from the known marker with the lowest stored quality error
    const MarkerObservation* init_obs = known.front();
    for (const auto* obs : known)
        if (map_entries.at(obs->id).quality_error <
            map_entries.at(init_obs->id).quality_error)
            init_obs = obs;
    const auto& init_entry = map_entries.at(init_obs->id);
    const MarkerPoseResult init_pose =
        estimate_marker_pose(*init_obs, init_entry.side_length, intr);
    const Pose T_WC_init = compose(init_entry.T_WM, init_pose.T_CM.inverse());

    // stacked correspondences in world coordinates with per-marker weights
    std::vector<PoseCorrespondence> corr;
    std::vector<double> weights;
    std::vector<std::pair<int, int>> marker_span;  // id, first corr index
    for (const auto* obs : known) {
        const auto& entry = map_entries.at(obs->id);
        const auto local = marker_corners_local(entry.side_length);
        const double w = 1.0 / (kWeightFloor + std::max(0.0, entry.quality_error));
        marker_span.emplace_back(obs->id, static_cast<int>(corr.size()));
        for (int i = 0; i < 4; ++i) {
            corr.push_back({entry.T_WM.apply(local[i]), obs->corners[i]});
            weights.push_back(w);
        }
    }

    int consecutive_fail = 0;
    const RefineResult refined =
        refine_pose(intr, T_WC_init.inverse(), corr, weights, 50, 1e-10, &consecutive_fail);
    if (!std::isfinite(refined.rms)) {
        if (consecutive_fail >= 5)
            throw ConvergenceFailure("camera pose refinement stalled");
        throw BehindCamera("camera pose solution places markers behind the camera");
    }
    if (consecutive_fail >= 5 && !refined.converged)
        throw ConvergenceFailure("residual increased for 5 consecutive damped steps");

    CameraPoseEstimate est;
    est.T_WC = refined.T.inverse();
    est.rms_reprojection = refined.rms;
    est.markers_used = static_cast<int>(known.size());
    for (size_t m = 0; m < marker_span.size(); ++m) {
        const int begin = marker_span[m].second;
        double acc = 0.0;
        for (int i = begin; i < begin + 4; ++i) {
            const Vec2 px = project_camera_point(intr, refined.T.apply(corr[i].point));
            acc += (px - corr[i].pixel).squaredNorm();
        }
        est.per_marker_errors[marker_span[m].first] = std::sqrt(acc / 4.0);
    }
    return est;
}

}  // namespace thermloc
