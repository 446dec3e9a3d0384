#pragma once

#include <array>
#include <map>
#include <vector>

#include "thermloc/geometry.hpp"

namespace thermloc {

// Marker corners observed in one image, canonical marker-frame order
// (same order as marker_corners_local).
struct MarkerObservation {
    int id = -1;
    std::array<Vec2, 4> corners;
};

// Marker-frame 3D corners on the z=0 plane, +z the outward normal:
// (-s/2,+s/2,0), (+s/2,+s/2,0), (+s/2,-s/2,0), (-s/2,-s/2,0).
std::array<Vec3, 4> marker_corners_local(double side_length);

struct MarkerPoseResult {
    Pose T_CM;
    // err_best/err_second of the two planar-pose candidates, evaluated before
    // refinement; ~1 flags the fronto-parallel ambiguity, <= 1 always.
    double ambiguity_ratio = 1.0;
    double rms_px = 0.0;  // refined reprojection RMS of the returned pose
};

// Planar PnP from the 4 corners: normalized-DLT homography, the two-candidate
// planar decomposition, damped Gauss-Newton refinement of each, lower
// reprojection error wins.
MarkerPoseResult estimate_marker_pose(const MarkerObservation& obs, double side_length,
                                      const CameraIntrinsics& intr);

struct PoseCorrespondence {
    Vec3 point;  // in the frame the pose maps from (world or marker)
    Vec2 pixel;
};

// sqrt(mean over correspondences of squared pixel residual norm).
double compute_reprojection_error(const CameraIntrinsics& intr, const Pose& T_C_from_X,
                                  const std::vector<PoseCorrespondence>& corr);

struct MapEntryForPose {
    Pose T_WM;
    double side_length = 0.2;
    double quality_error = 0.0;  // running reprojection error, pixels
};

struct CameraPoseEstimate {
    Pose T_WC;
    double rms_reprojection = 0.0;  // unweighted, pixels
    int markers_used = 0;
    std::map<int, double> per_marker_errors;  // id -> RMS pixels
};

// Weighted multi-marker camera pose: initialized from the known marker with
// the lowest stored quality error, then joint damped Gauss-Newton over all
// corner correspondences with per-marker weights w_i = 1/(0.5 + e_i).
CameraPoseEstimate estimate_camera_pose(const std::vector<MarkerObservation>& observations,
                                        const std::map<int, MapEntryForPose>& map_entries,
                                        const CameraIntrinsics& intr);

// Residual and 2x6 Jacobian of one correspondence with respect to the
// left-multiplicative perturbation [dtheta, dt] of T_CW. Shared by the solver
// and the finite-difference checks.
void camera_residual_jacobian(const CameraIntrinsics& intr, const Pose& T_CW,
                              const Vec3& p_W, const Vec2& observed, Vec2* residual,
                              Eigen::Matrix<double, 2, 6>* jacobian);

}  // namespace thermloc
