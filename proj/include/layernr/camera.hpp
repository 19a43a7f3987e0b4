#pragma once

#include <Eigen/Dense>

namespace lnr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Calibrated pinhole camera: x_cam = R x_world + t.
struct Camera {
    Mat3 K = Mat3::Identity();
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    int width = 0;
    int height = 0;

    Vec3 center() const { return -R.transpose() * t; }

    struct Projection {
        double u, v, depth;
        bool in_front;  // depth > 1e-6
    };

    Projection project(const Vec3& x) const {
        Vec3 xc = R * x + t;
        Projection p;
        p.depth = xc.z();
        p.in_front = xc.z() > 1e-6;
        if (p.in_front) {
            Vec3 h = K * xc;
            p.u = h.x() / h.z();
            p.v = h.y() / h.z();
        } else {
            p.u = p.v = 0.0;
        }
        return p;
    }

    // Unit world-space direction through pixel center (u,v).
    Vec3 ray_direction(double u, double v) const {
        Vec3 d = R.transpose() * (K.inverse() * Vec3(u, v, 1.0));
        return d.normalized();
    }
};

}  // namespace lnr
