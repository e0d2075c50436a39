#include <catch_amalgamated.hpp>

#include "groupcast/encoding.hpp"
#include "groupcast/synthdata.hpp"

using namespace groupcast;
using namespace groupcast::model;
using ad::Mat;

namespace {

data::SequencePair random_pair(nn::Rng& rng, int t_obs, int t_fut, int n, int dims,
                               bool binary = false) {
    data::SequencePair p;
    p.offset = 1;
    auto cue = [&]() {
        Mat m(n, dims);
        for (int i = 0; i < n; ++i)
            for (int d = 0; d < dims; ++d)
                m(i, d) = binary ? static_cast<double>(rng.uniform_int(0, 1)) : rng.normal();
        return m;
    };
    for (int t = 0; t < t_obs; ++t) p.observed.push_back(cue());
    for (int t = 0; t < t_fut; ++t) p.future.push_back(cue());
    return p;
}

}  // namespace

TEST_CASE("offset encoding values and range") {
    const auto oe0 = offset_encoding(0, 8);
    for (int m = 0; m < 4; ++m) {
        CHECK(oe0[2 * m] == 0.0);
        CHECK(oe0[2 * m + 1] == 1.0);
    }
    const auto oe1 = offset_encoding(1, 8);
    CHECK(oe1[0] == Catch::Approx(std::sin(1.0)).epsilon(1e-12));
    CHECK(oe1[0] == Catch::Approx(0.84147).epsilon(1e-4));

    for (int dt : {0, 1, 7, 100, 5000, 10000}) {
        const auto oe = offset_encoding(dt, 32);
        CHECK(oe.minCoeff() >= -1.0);
        CHECK(oe.maxCoeff() <= 1.0);
    }
    CHECK_THROWS_AS(offset_encoding(1, 7), std::invalid_argument);

    SECTION("distinct offsets produce distinct encodings") {
        const int d = 16;
        for (int a = 1; a <= 64; ++a)
            for (int b = a + 1; b <= 64; ++b)
                CHECK((offset_encoding(a, d) - offset_encoding(b, d)).norm() > 1e-9);
    }
}

TEST_CASE("sequence encoder contracts") {
    nn::Rng rng(1);
    nn::ParamRegistry reg;
    SequenceEncoder enc(reg, "e", Backbone::GRU, 3, 0, {}, 8, rng);

    auto run = [&](int t, int batch) {
        std::vector<ad::Var> steps;
        nn::Rng data_rng(7);
        for (int i = 0; i < t; ++i) {
            Mat m(batch, 3);
            for (int r = 0; r < batch; ++r)
                for (int c = 0; c < 3; ++c) m(r, c) = data_rng.normal();
            steps.push_back(ad::constant(m));
        }
        return enc.encode(steps);
    };

    // Output dimension independent of sequence length.
    CHECK(run(2, 4)->val.cols() == 8);
    CHECK(run(10, 4)->val.cols() == 8);
    // Determinism.
    CHECK(run(5, 2)->val == run(5, 2)->val);
    CHECK_THROWS_AS(enc.encode({}), std::invalid_argument);

    SECTION("one-timestep difference changes the embedding") {
        auto a = run(5, 1);
        std::vector<ad::Var> steps;
        nn::Rng data_rng(7);
        for (int i = 0; i < 5; ++i) {
            Mat m(1, 3);
            for (int c = 0; c < 3; ++c) m(0, c) = data_rng.normal();
            steps.push_back(ad::constant(m));
        }
        steps[2] = ad::constant(Mat::Constant(1, 3, 5.0));
        auto b = enc.encode(steps);
        CHECK((a->val - b->val).cwiseAbs().maxCoeff() > 1e-8);
    }
}

TEST_CASE("partner pooling invariances") {
    nn::Rng rng(2);
    nn::ParamRegistry reg;
    const CueLayout layout{0, 0, true};
    IndividualEncoder enc(reg, "enc", layout, Backbone::GRU, 2, 8, 4, 6, {}, false, rng);

    auto pairs = std::vector<data::SequencePair>{random_pair(rng, 2, 4, 5, 1, true)};
    GroupBatch gb = make_group_batch(pairs);
    const auto e_self = enc.encode_self_all(gb);
    const auto e_partner = enc.encode_partner_all(gb, e_self);

    SECTION("permuting partner order leaves the pooled output unchanged") {
        // Permute participants 1..4 (partners of 0) in the raw data.
        data::SequencePair permuted = pairs[0];
        const std::vector<int> perm{0, 3, 1, 4, 2};
        for (auto* window : {&permuted.observed, &permuted.future})
            for (auto& cue : *window) {
                Eigen::MatrixXd orig = cue;
                for (int i = 0; i < 5; ++i) cue.row(i) = orig.row(perm[static_cast<size_t>(i)]);
            }
        GroupBatch gb2 = make_group_batch(std::vector<data::SequencePair>{permuted});
        const auto e_self2 = enc.encode_self_all(gb2);
        const auto e_partner2 = enc.encode_partner_all(gb2, e_self2);
        // Participant 0 kept its own row, so its pooled partner embedding is
        // bit-for-bit identical.
        CHECK(e_partner[0]->val == e_partner2[0]->val);
    }

    SECTION("pooling is independent of group size in shape") {
        for (int n : {2, 3, 4, 8}) {
            auto ps = std::vector<data::SequencePair>{random_pair(rng, 2, 4, n, 1, true)};
            GroupBatch g = make_group_batch(ps);
            const auto es = enc.encode_self_all(g);
            const auto ep = enc.encode_partner_all(g, es);
            CHECK(ep[0]->val.cols() == 8);
        }
    }

    SECTION("duplicated partner equals the single partner (max idempotence)") {
        PartnerPooler pooler(reg, "p", 1, 4, 8, 6, rng);
        ad::Var rel = ad::constant(Mat::Constant(3, 1, 0.5));
        ad::Var eself = ad::constant(Mat::Random(3, 8));
        ad::Var one = pooler.pool_timestep({rel}, {eself});
        ad::Var two = pooler.pool_timestep({rel, rel}, {eself, eself});
        CHECK(one->val == two->val);

        // Singleton pooling passes the pre-pooler output through.
        ad::Var emb = ad::tanh_(pooler.embedder(rel));
        ad::Var pp = pooler.pre_pooler(ad::concat_cols(emb, eself));
        CHECK(one->val == pp->val);
    }
}

TEST_CASE("no-pool participants get a zero partner embedding") {
    nn::Rng rng(3);
    nn::ParamRegistry reg;
    const CueLayout layout{0, 1, false};
    IndividualEncoder enc(reg, "enc", layout, Backbone::GRU, 10, 8, 4, 6, {}, true, rng);
    auto pairs = std::vector<data::SequencePair>{random_pair(rng, 10, 10, 1, 1)};
    GroupBatch gb = make_group_batch(pairs);
    const auto e_self = enc.encode_self_all(gb);
    const auto e_partner = enc.encode_partner_all(gb, e_self);
    CHECK(e_partner[0]->val == Mat::Zero(1, 8));

    SECTION("composed representation equals fused self plus offset encoding") {
        const auto e = enc.encode(gb);
        ad::Var fused = enc.fuse(ad::concat_cols(e_self[0], e_partner[0]));
        Eigen::RowVectorXd oe = offset_encoding(1, 8);
        CHECK((e[0]->val - (fused->val.rowwise() + oe)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("fusion is linear") {
    nn::Rng rng(4);
    nn::ParamRegistry reg;
    nn::Linear fuse(reg, "W", 8, 4, rng);
    Mat a = Mat::Random(2, 4), b = Mat::Random(2, 4), c = Mat::Random(2, 4);
    auto apply = [&](const Mat& x, const Mat& y) {
        return fuse(ad::constant((Mat(2, 8) << x, y).finished()))->val;
    };
    // fuse(a + b, c) == fuse(a, c) + fuse(b, 0) when the bias is zero.
    CHECK(((apply(a + b, c)) - (apply(a, c) + apply(b, Mat::Zero(2, 4)))).cwiseAbs().maxCoeff() <
          1e-12);

    SECTION("block-identity weights pass the self embedding through") {
        fuse.W->val.setZero();
        fuse.W->val.topRows(4) = Mat::Identity(4, 4);
        CHECK((apply(a, c) - a).cwiseAbs().maxCoeff() < 1e-12);
    }
}
