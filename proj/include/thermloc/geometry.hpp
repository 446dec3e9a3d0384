#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>

#include "thermloc/errors.hpp"

namespace thermloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// Conventions used throughout:
//  - Quaternions are Hamilton, passive; q_AB rotates coordinates of a vector
//    from frame B into frame A (p_A = q_AB * p_B).
//  - Pose T_AB carries (q_AB, t_AB) with p_A = R_AB * p_B + t_AB.
//  - Serialization order is [tx ty tz qw qx qy qz] with qw >= 0.
//  - Camera frame: x right, y down, z along the optical axis.

Mat3 skew(const Vec3& v);

// Rotation-vector exponential. Small angles (< 1e-6 rad) use the Taylor branch.
Quat so3_exp(const Vec3& v);

// Inverse of so3_exp; returns the rotation vector with angle in [0, pi].
// At angle exactly pi the axis sign follows the quaternion components after
// canonicalization (first nonzero of (x,y,z) made positive).
Vec3 so3_log(const Quat& q);

struct Pose {
    Quat rotation{1.0, 0.0, 0.0, 0.0};
    Vec3 translation{0.0, 0.0, 0.0};

    static Pose identity() { return Pose{}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    Pose inverse() const {
        Pose out;
        out.rotation = rotation.conjugate();
        out.translation = -(out.rotation * translation);
        return out;
    }

    // [tx ty tz qw qx qy qz], canonicalized so qw >= 0.
    std::array<double, 7> to_array() const;
    static Pose from_array(const std::array<double, 7>& a);
};

Pose compose(const Pose& a, const Pose& b);

// Geodesic angle between two rotations, radians in [0, pi].
double rotation_angle_between(const Quat& a, const Quat& b);

struct CameraIntrinsics {
    double fx = 600.0;
    double fy = 600.0;
    double cx = 320.0;
    double cy = 256.0;
    double k1 = 0.0, k2 = 0.0, p1 = 0.0, p2 = 0.0;
    int width = 640;
    int height = 512;

    void validate() const;  // throws ConfigError on violated invariants
};

// Brown distortion applied to normalized coordinates.
Vec2 distort_normalized(const CameraIntrinsics& intr, const Vec2& xy);

// Inverse of distort_normalized (fixed-point iteration; exact for zero
// distortion).
Vec2 undistort_normalized(const CameraIntrinsics& intr, const Vec2& xy_d);

// Projection of a camera-frame point; throws BehindCamera if z <= 1e-6 m.
Vec2 project_camera_point(const CameraIntrinsics& intr, const Vec3& p_C);

// Projection of a world point through T_CW (world -> camera).
Vec2 project(const CameraIntrinsics& intr, const Pose& T_CW, const Vec3& p_W);

// 2x3 Jacobian of project_camera_point with respect to the camera-frame point.
Eigen::Matrix<double, 2, 3> project_point_jacobian(const CameraIntrinsics& intr,
                                                   const Vec3& p_C);

// Pixel -> undistorted normalized image coordinates.
Vec2 pixel_to_normalized(const CameraIntrinsics& intr, const Vec2& px);

// Back-projection of a pixel to the camera-frame point at the given depth.
Vec3 unproject(const CameraIntrinsics& intr, const Vec2& px, double depth);

}  // namespace thermloc
