#include <catch_amalgamated.hpp>

#include "groupcast/geometry.hpp"
#include "groupcast/nn.hpp"

using namespace groupcast;

namespace {

UnitQuaternion random_unit(nn::Rng& rng) {
    return quat_normalize(rng.normal(), rng.normal(), rng.normal(), rng.normal());
}

double quat_dist(const UnitQuaternion& a, const UnitQuaternion& b) {
    return std::max({std::abs(a.w - b.w), std::abs(a.x - b.x), std::abs(a.y - b.y),
                     std::abs(a.z - b.z)});
}

}  // namespace

TEST_CASE("quat_normalize rescales and canonicalizes") {
    auto q = quat_normalize(2, 0, 0, 0);
    CHECK(quat_dist(q, UnitQuaternion::identity()) < 1e-12);

    q = quat_normalize(0, 3, 0, 0);
    CHECK(quat_dist(q, UnitQuaternion{0, 1, 0, 0}) < 1e-12);

    q = quat_normalize(1, 1, 1, 1);
    CHECK(quat_dist(q, UnitQuaternion{0.5, 0.5, 0.5, 0.5}) < 1e-12);

    CHECK_THROWS_AS(quat_normalize(0, 0, 0, 0), std::invalid_argument);
}

TEST_CASE("hamilton product laws") {
    nn::Rng rng(11);
    const auto id = UnitQuaternion::identity();
    for (int k = 0; k < 200; ++k) {
        const auto q = random_unit(rng);
        CHECK(quat_dist(quat_hamilton_product(id, q), q.canonical()) < 1e-12);
        CHECK(quat_dist(quat_hamilton_product(q, quat_inverse(q)), id) < 1e-6);
        CHECK(std::abs(quat_hamilton_product(q, random_unit(rng)).norm() - 1.0) < 1e-6);
    }
    // i * j = k (up to canonical sign).
    const auto k = quat_hamilton_product(UnitQuaternion{0, 1, 0, 0}, UnitQuaternion{0, 0, 1, 0});
    CHECK(quat_dist(k, UnitQuaternion{0, 0, 0, 1}) < 1e-12);
}

TEST_CASE("quat_inverse is conjugate and involution") {
    CHECK(quat_dist(quat_inverse(UnitQuaternion::identity()), UnitQuaternion::identity()) == 0.0);
    CHECK(quat_dist(quat_inverse(UnitQuaternion{0, 1, 0, 0}), UnitQuaternion{0, -1, 0, 0}) < 1e-12);
    nn::Rng rng(5);
    for (int k = 0; k < 100; ++k) {
        const auto q = random_unit(rng);
        CHECK(quat_dist(quat_inverse(quat_inverse(q)), q) == 0.0);
    }
}

TEST_CASE("relative_cue transform") {
    CueLayout layout{4, 2, true};
    nn::Rng rng(3);
    Eigen::VectorXd self(layout.dims()), partner(layout.dims());

    SECTION("self-relative is the null cue") {
        for (int k = 0; k < 20; ++k) {
            const auto q = random_unit(rng);
            self << q.w, q.x, q.y, q.z, rng.normal(), rng.normal(), 1.0;
            const auto rel = relative_cue(layout, self, self);
            CHECK(std::abs(rel[0] - 1.0) < 1e-6);
            CHECK(std::abs(rel[1]) < 1e-6);
            CHECK(std::abs(rel[2]) < 1e-6);
            CHECK(std::abs(rel[3]) < 1e-6);
            CHECK(rel.segment(4, 2).norm() < 1e-12);
            CHECK(rel[6] == 0.0);
        }
    }

    SECTION("speaking difference") {
        self << 1, 0, 0, 0, 0, 0, 0;
        partner << 1, 0, 0, 0, 0, 0, 1;
        CHECK(relative_cue(layout, self, partner)[6] == 1.0);
        CHECK(relative_cue(layout, partner, self)[6] == -1.0);
    }

    SECTION("90 degree yaw against identity partner") {
        const auto yaw = heading_deg_to_quat(90.0);
        self << yaw.w, yaw.x, yaw.y, yaw.z, 0, 0, 0;
        partner << 1, 0, 0, 0, 0, 0, 0;
        const auto rel = relative_cue(layout, self, partner);
        const auto q = UnitQuaternion{rel[0], rel[1], rel[2], rel[3]};
        CHECK(std::abs(quat_to_heading_deg(q) - 90.0) < 1e-9);
    }

    SECTION("translation equivariance of relative location") {
        for (int k = 0; k < 50; ++k) {
            const auto qa = random_unit(rng);
            const auto qb = random_unit(rng);
            self << qa.w, qa.x, qa.y, qa.z, rng.normal(), rng.normal(), 0.0;
            partner << qb.w, qb.x, qb.y, qb.z, rng.normal(), rng.normal(), 1.0;
            const auto rel = relative_cue(layout, self, partner);
            Eigen::VectorXd shift = Eigen::VectorXd::Zero(layout.dims());
            shift[4] = rng.normal();
            shift[5] = rng.normal();
            const auto rel_shifted = relative_cue(layout, self + shift, partner + shift);
            CHECK((rel.segment(4, 2) - rel_shifted.segment(4, 2)).norm() < 1e-12);
        }
    }
}

TEST_CASE("heading round trip") {
    CHECK(quat_to_heading_deg(UnitQuaternion::identity()) == 0.0);
    CHECK(std::abs(quat_to_heading_deg(heading_deg_to_quat(90.0)) - 90.0) < 1e-9);

    nn::Rng rng(17);
    double max_err = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double deg = rng.uniform(-180.0, 180.0);
        max_err = std::max(max_err, std::abs(quat_to_heading_deg(heading_deg_to_quat(deg)) - deg));
    }
    CHECK(max_err < 1e-6);

    bool off_axis = false;
    quat_to_heading_deg(quat_normalize(1, 1, 0, 0), &off_axis);
    CHECK(off_axis);
    quat_to_heading_deg(heading_deg_to_quat(45.0), &off_axis);
    CHECK_FALSE(off_axis);
}
