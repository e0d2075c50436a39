#pragma once

// Quaternion and behavioral-cue algebra: relative-feature transforms and
// heading conversion used by the data generators, pose losses and metrics.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace groupcast {

constexpr double kQuatTol = 1e-6;

/// Unit quaternion (w, x, y, z). Canonical form keeps w >= 0 so that equality
/// tests are deterministic under the q/-q sign ambiguity.
struct UnitQuaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static UnitQuaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    UnitQuaternion canonical() const {
        if (w < 0.0) return {-w, -x, -y, -z};
        return *this;
    }
};

inline UnitQuaternion quat_normalize(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (n <= 0.0 || !std::isfinite(n))
        throw std::invalid_argument("quat_normalize: zero-norm input");
    return UnitQuaternion{w / n, x / n, y / n, z / n}.canonical();
}

inline UnitQuaternion quat_normalize(const Eigen::Vector4d& q) {
    return quat_normalize(q[0], q[1], q[2], q[3]);
}

inline UnitQuaternion quat_hamilton_product(const UnitQuaternion& a, const UnitQuaternion& b) {
    UnitQuaternion r{
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    };
    return r.canonical();
}

/// For unit quaternions the inverse is the conjugate.
inline UnitQuaternion quat_inverse(const UnitQuaternion& q) {
    return UnitQuaternion{q.w, -q.x, -q.y, -q.z}.canonical();
}

/// Heading angle (degrees in [-180, 180)) of a rotation about the vertical
/// z-axis. Quaternions with off-axis components are projected onto the yaw
/// plane; `off_axis` is set when that projection discards anything.
inline double quat_to_heading_deg(const UnitQuaternion& q, bool* off_axis = nullptr) {
    if (off_axis) *off_axis = (q.x * q.x + q.y * q.y) > kQuatTol;
    double theta = 2.0 * std::atan2(q.z, q.w);
    double deg = theta * 180.0 / std::numbers::pi;
    while (deg < -180.0) deg += 360.0;
    while (deg >= 180.0) deg -= 360.0;
    return deg;
}

inline UnitQuaternion heading_deg_to_quat(double deg) {
    const double half = deg * std::numbers::pi / 360.0;
    return UnitQuaternion{std::cos(half), 0.0, 0.0, std::sin(half)}.canonical();
}

/// Layout of one participant's cue vector b = [q; l; s]: an optional unit
/// quaternion block, a location block of configurable dimension, and an
/// optional binary speaking status.
struct CueLayout {
    int quat_dims = 0;  // 0 or 4
    int loc_dims = 0;   // 0..3
    bool speaking = false;

    int dims() const { return quat_dims + loc_dims + (speaking ? 1 : 0); }
    int loc_offset() const { return quat_dims; }
    int speak_offset() const { return quat_dims + loc_dims; }
};

inline UnitQuaternion cue_quat(const CueLayout& layout, const Eigen::VectorXd& cue) {
    return UnitQuaternion{cue[0], cue[1], cue[2], cue[3]};
}

/// Relative cue of `partner` in the frame of `self` (per-component transform:
/// q_rel = q_self * q_partner^-1, l_rel = l_partner - l_self,
/// s_rel = s_partner - s_self).
inline Eigen::VectorXd relative_cue(const CueLayout& layout,
                                    const Eigen::VectorXd& self,
                                    const Eigen::VectorXd& partner) {
    Eigen::VectorXd rel(layout.dims());
    if (layout.quat_dims == 4) {
        const UnitQuaternion q =
            quat_hamilton_product(cue_quat(layout, self), quat_inverse(cue_quat(layout, partner)));
        rel[0] = q.w;
        rel[1] = q.x;
        rel[2] = q.y;
        rel[3] = q.z;
    }
    for (int d = 0; d < layout.loc_dims; ++d) {
        const int i = layout.loc_offset() + d;
        rel[i] = partner[i] - self[i];
    }
    if (layout.speaking) {
        const int i = layout.speak_offset();
        rel[i] = partner[i] - self[i];
    }
    return rel;
}

}  // namespace groupcast
