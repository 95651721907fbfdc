// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

namespace gecolab {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

// Unit quaternion (w, x, y, z) to rotation matrix (local -> world).
inline Mat3 quat_to_mat(const Vec4& q) {
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 m;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return m;
}

inline Vec4 normalize_quat(const Vec4& q) {
    double n = q.norm();
    return n > 0 ? Vec4(q / n) : Vec4(1, 0, 0, 0);
}

} // namespace gecolab
