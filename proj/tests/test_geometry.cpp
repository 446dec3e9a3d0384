#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "thermloc/geometry.hpp"

using namespace thermloc;

namespace {
Pose rot_z_with_t(double deg, const Vec3& t) {
    Pose p;
    p.rotation = so3_exp(Vec3(0.0, 0.0, deg * M_PI / 180.0));
    p.translation = t;
    return p;
}
}  // namespace

TEST_CASE("compose identity and inverse") {
    std::mt19937_64 rng(11);
    const Pose T = oracles::random_pose(rng);
    double rot;
    CHECK(oracles::pose_difference(compose(Pose::identity(), T), T, &rot) < 1e-12);
    CHECK(rot < 1e-12);
    const Pose id = compose(T, T.inverse());
    CHECK(id.translation.norm() < 1e-9);
    CHECK(so3_log(id.rotation).norm() < 1e-9);
}

TEST_CASE("compose matches 4x4 matrix multiplication") {
    const Pose a = rot_z_with_t(90.0, {1.0, 0.0, 0.0});
    const Pose b = rot_z_with_t(90.0, {1.0, 0.0, 0.0});
    const Pose c = compose(a, b);
    const Pose expected = rot_z_with_t(180.0, {1.0, 1.0, 0.0});
    double rot;
    CHECK(oracles::pose_difference(c, expected, &rot) < 1e-12);
    CHECK(rot < 1e-12);

    // random pairs against the homogeneous-matrix oracle
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const Pose x = oracles::random_pose(rng);
        const Pose y = oracles::random_pose(rng);
        const Eigen::Matrix4d m = oracles::pose_matrix(x) * oracles::pose_matrix(y);
        const Eigen::Matrix4d mc = oracles::pose_matrix(compose(x, y));
        CHECK((m - mc).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("inverse closed forms") {
    const Pose id_inv = Pose::identity().inverse();
    CHECK(id_inv.translation.norm() == 0.0);
    CHECK(so3_log(id_inv.rotation).norm() == 0.0);

    Pose t_only;
    t_only.translation = Vec3(1.0, -2.0, 3.0);
    CHECK((t_only.inverse().translation + t_only.translation).norm() < 1e-15);

    const Pose p = rot_z_with_t(90.0, {1.0, 0.0, 0.0});
    const Pose inv = p.inverse();
    const Pose expected = rot_z_with_t(-90.0, {0.0, 1.0, 0.0});
    double rot;
    CHECK(oracles::pose_difference(inv, expected, &rot) < 1e-12);
    CHECK(rot < 1e-12);
}

TEST_CASE("compose associativity on random triples") {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 200; ++i) {
        const Pose a = oracles::random_pose(rng);
        const Pose b = oracles::random_pose(rng);
        const Pose c = oracles::random_pose(rng);
        const Pose left = compose(compose(a, b), c);
        const Pose right = compose(a, compose(b, c));
        double rot;
        CHECK(oracles::pose_difference(left, right, &rot) < 1e-9);
        CHECK(rot < 1e-9);
    }
}

TEST_CASE("so3 exp basics") {
    const Quat id = so3_exp(Vec3::Zero());
    CHECK(id.w() == doctest::Approx(1.0));
    CHECK(Vec3(id.x(), id.y(), id.z()).norm() == 0.0);

    const Quat qz = so3_exp(Vec3(0.0, 0.0, M_PI_2));
    CHECK(qz.w() == doctest::Approx(std::cos(M_PI_4)).epsilon(1e-12));
    CHECK(qz.z() == doctest::Approx(std::sin(M_PI_4)).epsilon(1e-12));
    CHECK(std::abs(qz.x()) < 1e-15);
    CHECK(std::abs(qz.y()) < 1e-15);
}

TEST_CASE("so3 exp/log roundtrip of 1000 random vectors") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> mag(0.0, 3.0);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        Vec3 axis(g(rng), g(rng), g(rng));
        if (axis.norm() < 1e-12) continue;
        const Vec3 v = axis.normalized() * mag(rng);
        worst = std::max(worst, (so3_log(so3_exp(v)) - v).norm());
    }
    CHECK(worst < 1e-9);

    // small-angle branch
    const Vec3 tiny(1e-9, -2e-9, 5e-10);
    CHECK((so3_log(so3_exp(tiny)) - tiny).norm() < 1e-15);
}

TEST_CASE("quaternion norm maintained through composition chains") {
    std::mt19937_64 rng(5);
    Pose acc = Pose::identity();
    for (int i = 0; i < 2000; ++i) {
        acc = compose(acc, oracles::random_pose(rng));
        CHECK(std::abs(acc.rotation.norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("serialization canonicalizes qw >= 0") {
    Pose p;
    p.rotation = Quat(-0.5, 0.5, 0.5, 0.5);  // negative w
    const auto a = p.to_array();
    CHECK(a[3] >= 0.0);
    const Pose q = Pose::from_array(a);
    CHECK(rotation_angle_between(p.rotation, q.rotation) < 1e-12);
}

TEST_CASE("projection closed forms") {
    CameraIntrinsics intr;
    intr.fx = intr.fy = 600.0;
    intr.cx = 320.0;
    intr.cy = 256.0;

    // optical axis hits the principal point
    const Vec2 pp = project_camera_point(intr, Vec3(0.0, 0.0, 1.0));
    CHECK(pp.x() == doctest::Approx(320.0).epsilon(1e-14));
    CHECK(pp.y() == doctest::Approx(256.0).epsilon(1e-14));

    const Vec2 off = project_camera_point(intr, Vec3(0.1, 0.0, 1.0));
    CHECK(off.x() == doctest::Approx(380.0).epsilon(1e-14));
    CHECK(off.y() == doctest::Approx(256.0).epsilon(1e-14));

    CameraIntrinsics distorted = intr;
    distorted.k1 = 0.1;
    const Vec2 d = project_camera_point(distorted, Vec3(0.1, 0.0, 1.0));
    CHECK(d.x() == doctest::Approx(380.6).epsilon(1e-12));
    CHECK(d.y() == doctest::Approx(256.0).epsilon(1e-12));
}

TEST_CASE("project throws behind camera") {
    CameraIntrinsics intr;
    CHECK_THROWS_AS(project_camera_point(intr, Vec3(0.0, 0.0, -1.0)), BehindCamera);
    CHECK_THROWS_AS(project_camera_point(intr, Vec3(0.0, 0.0, 0.0)), BehindCamera);
}

TEST_CASE("project/unproject consistency") {
    CameraIntrinsics intr;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    std::uniform_real_distribution<double> z(0.3, 10.0);
    for (int i = 0; i < 500; ++i) {
        const double depth = z(rng);
        const Vec3 p(u(rng) * depth, u(rng) * depth, depth);
        const Vec2 px = project_camera_point(intr, p);
        CHECK((unproject(intr, px, depth) - p).norm() < 1e-9);
    }

    // with distortion, the fixed-point undistortion must still invert
    CameraIntrinsics d = intr;
    d.k1 = -0.2;
    d.k2 = 0.05;
    d.p1 = 1e-3;
    d.p2 = -5e-4;
    for (int i = 0; i < 500; ++i) {
        const double depth = z(rng);
        const Vec3 p(u(rng) * depth, u(rng) * depth, depth);
        const Vec2 px = project_camera_point(d, p);
        CHECK((unproject(d, px, depth) - p).norm() < 1e-8);
    }
}

TEST_CASE("projection jacobian matches finite differences") {
    CameraIntrinsics intr;
    intr.k1 = 0.1;
    intr.k2 = -0.02;
    intr.p1 = 1e-3;
    intr.p2 = -2e-3;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    std::uniform_real_distribution<double> z(0.5, 5.0);
    const double eps = 1e-6;
    for (int i = 0; i < 100; ++i) {
        const double depth = z(rng);
        const Vec3 p(u(rng) * depth, u(rng) * depth, depth);
        const auto J = project_point_jacobian(intr, p);
        for (int k = 0; k < 3; ++k) {
            Vec3 dp = Vec3::Zero();
            dp[k] = eps;
            const Vec2 fd =
                (project_camera_point(intr, p + dp) - project_camera_point(intr, p - dp)) /
                (2.0 * eps);
            CHECK((fd - J.col(k)).norm() < 1e-5 * std::max(1.0, J.col(k).norm()));
        }
    }
}

TEST_CASE("intrinsics validation") {
    CameraIntrinsics bad;
    bad.fx = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CameraIntrinsics bad2;
    bad2.cx = 900.0;
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}
