#pragma once

#include "dpc/arm.hpp"
#include "dpc/types.hpp"

namespace dpc {

/// Linearized rigid-body dynamics  qdd = M f - g~ + A f_a + B tau_a  with
/// qdd = (linear world, angular body) stacked in that order.
struct DynamicsMatrices {
    Mat6x12 M = Mat6x12::Zero();
    Mat6x3 A = Mat6x3::Zero();
    Mat6x3 B = Mat6x3::Zero();
    Vec6 gravity_vec = Vec6::Zero();
};

struct FootGeometry {
    std::array<Vec3, 4> foot_positions = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    std::array<bool, 4> stance_mask = {true, true, true, true};

    int stance_count() const {
        int n = 0;
        for (bool s : stance_mask) n += s ? 1 : 0;
        return n;
    }
};

inline DynamicsMatrices build_matrices(const RobotParams& params, const BodyState& body,
                                       const FootGeometry& feet, double gravity = 9.81) {
    params.validate();
    if (feet.stance_count() < 1)
        throw std::invalid_argument("build_matrices: no stance feet");

    DynamicsMatrices dyn;
    const Mat3 rzt = rotation_z(body.orientation_rpy.z()).transpose();
    const Mat3 inertia_inv = params.trunk_inertia.inverse();
    const Mat3 rot_inertia_inv = rzt * inertia_inv;

    for (int i = 0; i < 4; ++i) {
        if (!feet.stance_mask[i]) continue;  // swing feet cannot push
        const Vec3 r = feet.foot_positions[i] - body.position;
        dyn.M.block<3, 3>(0, 3 * i) = Mat3::Identity() / params.mass;
        dyn.M.block<3, 3>(3, 3 * i) = rot_inertia_inv * skew(r);
    }
    dyn.A.topRows<3>() = Mat3::Identity() / params.mass;
    dyn.B.bottomRows<3>() = rot_inertia_inv;
    dyn.gravity_vec << 0.0, 0.0, gravity, 0.0, 0.0, 0.0;
    return dyn;
}

inline Vec6 body_acceleration(const DynamicsMatrices& dyn, const Vec12& foot_forces,
                              const DisturbanceParams& dist) {
    require_finite(foot_forces, "body_acceleration: foot_forces");
    return dyn.M * foot_forces - dyn.gravity_vec + dyn.A * dist.force + dyn.B * dist.torque;
}

}  // namespace dpc
