#include "thermloc/geometry.hpp"

#include <cmath>

namespace thermloc {

namespace {
constexpr double kSmallAngle = 1e-6;
constexpr double kMinDepth = 1e-6;
}  // namespace

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

Quat so3_exp(const Vec3& v) {
    const double theta = v.norm();
    double half_sinc;  // sin(theta/2)/theta
    double w;
    if (theta < kSmallAngle) {
        // Taylor: sin(t/2)/t = 1/2 - t^2/48, cos(t/2) = 1 - t^2/8
        half_sinc = 0.5 - theta * theta / 48.0;
        w = 1.0 - theta * theta / 8.0;
    } else {
        half_sinc = std::sin(0.5 * theta) / theta;
        w = std::cos(0.5 * theta);
    }
    Quat q(w, v.x() * half_sinc, v.y() * half_sinc, v.z() * half_sinc);
    q.normalize();
    return q;
}

Vec3 so3_log(const Quat& q_in) {
    Quat q = q_in.normalized();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    Vec3 xyz(q.x(), q.y(), q.z());
    const double s = xyz.norm();
    const double w = q.w();
    if (w == 0.0) {
        // angle exactly pi; fix sign on the first nonzero component
        Vec3 axis = xyz;
        for (int i = 0; i < 3; ++i) {
            if (axis[i] != 0.0) {
                if (axis[i] < 0.0) axis = -axis;
                break;
            }
        }
        return M_PI * axis;
    }
    if (s < kSmallAngle) {
        // theta/sin(theta/2) ~ 2/w * (1 - s^2/(3w^2)) for s = sin(theta/2)
        return xyz * (2.0 / w) * (1.0 - s * s / (3.0 * w * w));
    }
    const double theta = 2.0 * std::atan2(s, w);
    return xyz * (theta / s);
}

std::array<double, 7> Pose::to_array() const {
    Quat q = rotation.normalized();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return {translation.x(), translation.y(), translation.z(),
            q.w(), q.x(), q.y(), q.z()};
}

Pose Pose::from_array(const std::array<double, 7>& a) {
    Pose p;
    p.translation = Vec3(a[0], a[1], a[2]);
    p.rotation = Quat(a[3], a[4], a[5], a[6]).normalized();
    return p;
}

Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    out.rotation = (a.rotation * b.rotation).normalized();
    out.translation = a.rotation * b.translation + a.translation;
    return out;
}

double rotation_angle_between(const Quat& a, const Quat& b) {
    return so3_log(a.conjugate() * b).norm();
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
        throw ConfigError("intrinsics: focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
        throw ConfigError("intrinsics: principal point outside image");
    if (width <= 0 || height <= 0)
        throw ConfigError("intrinsics: non-positive image size");
}

Vec2 distort_normalized(const CameraIntrinsics& intr, const Vec2& xy) {
    const double x = xy.x(), y = xy.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
    const double xd = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x);
    const double yd = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y;
    return {xd, yd};
}

Vec2 undistort_normalized(const CameraIntrinsics& intr, const Vec2& xy_d) {
    if (intr.k1 == 0.0 && intr.k2 == 0.0 && intr.p1 == 0.0 && intr.p2 == 0.0)
        return xy_d;
    Vec2 xy = xy_d;
    for (int it = 0; it < 20; ++it) {
        const double x = xy.x(), y = xy.y();
        const double r2 = x * x + y * y;
        const double radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
        const Vec2 tangential(2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x),
                              intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y);
        Vec2 next = (xy_d - tangential) / radial;
        if ((next - xy).norm() < 1e-14) { xy = next; break; }
        xy = next;
    }
    return xy;
}

Vec2 project_camera_point(const CameraIntrinsics& intr, const Vec3& p_C) {
    if (p_C.z() <= kMinDepth)
        throw BehindCamera("point at or behind the camera plane");
    const Vec2 xy(p_C.x() / p_C.z(), p_C.y() / p_C.z());
    const Vec2 d = distort_normalized(intr, xy);
    return {intr.fx * d.x() + intr.cx, intr.fy * d.y() + intr.cy};
}

Vec2 project(const CameraIntrinsics& intr, const Pose& T_CW, const Vec3& p_W) {
    return project_camera_point(intr, T_CW.apply(p_W));
}

Eigen::Matrix<double, 2, 3> project_point_jacobian(const CameraIntrinsics& intr,
                                                   const Vec3& p_C) {
    if (p_C.z() <= kMinDepth)
        throw BehindCamera("point at or behind the camera plane");
    const double z = p_C.z();
    const double x = p_C.x() / z;
    const double y = p_C.y() / z;

    // d(x,y)/d(p_C)
    Eigen::Matrix<double, 2, 3> J_norm;
    J_norm << 1.0 / z, 0.0, -x / z,
              0.0, 1.0 / z, -y / z;

    // d(xd,yd)/d(x,y) for the Brown model
    const double r2 = x * x + y * y;
    const double radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
    const double dr = intr.k1 + 2.0 * intr.k2 * r2;  // d(radial)/d(r2) per 2x
    Eigen::Matrix2d J_dist;
    J_dist(0, 0) = radial + 2.0 * x * x * dr + 2.0 * intr.p1 * y + 6.0 * intr.p2 * x;
    J_dist(0, 1) = 2.0 * x * y * dr + 2.0 * intr.p1 * x + 2.0 * intr.p2 * y;
    J_dist(1, 0) = 2.0 * x * y * dr + 2.0 * intr.p2 * y + 2.0 * intr.p1 * x;
    J_dist(1, 1) = radial + 2.0 * y * y * dr + 6.0 * intr.p1 * y + 2.0 * intr.p2 * x;

    Eigen::Matrix2d F = Eigen::Matrix2d::Zero();
    F(0, 0) = intr.fx;
    F(1, 1) = intr.fy;
    return F * J_dist * J_norm;
}

Vec2 pixel_to_normalized(const CameraIntrinsics& intr, const Vec2& px) {
    const Vec2 xy_d((px.x() - intr.cx) / intr.fx, (px.y() - intr.cy) / intr.fy);
    return undistort_normalized(intr, xy_d);
}

Vec3 unproject(const CameraIntrinsics& intr, const Vec2& px, double depth) {
    if (depth <= kMinDepth) throw BehindCamera("non-positive unprojection depth");
    const Vec2 xy = pixel_to_normalized(intr, px);
    return {xy.x() * depth, xy.y() * depth, depth};
}

}  // namespace thermloc
