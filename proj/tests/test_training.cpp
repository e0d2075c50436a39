#include <catch_amalgamated.hpp>

#include "groupcast/evaluation.hpp"
#include "groupcast/synthdata.hpp"
#include "groupcast/training.hpp"

using namespace groupcast;
using namespace groupcast::model;
using ad::Mat;
using ad::Var;

namespace {

/// Random valid pose cue: unit quaternion, 2-d location, binary speaking.
Eigen::RowVectorXd random_pose_cue(nn::Rng& rng) {
    const auto q = quat_normalize(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    Eigen::RowVectorXd cue(7);
    cue << q.w, q.x, q.y, q.z, rng.normal(), rng.normal(),
        static_cast<double>(rng.uniform_int(0, 1));
    return cue;
}

data::SequencePair random_pose_pair(nn::Rng& rng, int t_obs, int t_fut, int n) {
    data::SequencePair p;
    p.offset = 1;
    auto cue_matrix = [&]() {
        Mat m(n, 7);
        for (int i = 0; i < n; ++i) m.row(i) = random_pose_cue(rng);
        return m;
    };
    for (int t = 0; t < t_obs; ++t) p.observed.push_back(cue_matrix());
    for (int t = 0; t < t_fut; ++t) p.future.push_back(cue_matrix());
    return p;
}

data::MetaSample pose_micro_sample(std::uint64_t seed) {
    nn::Rng rng(seed);
    data::MetaSample s;
    s.group_id = "micro";
    for (int k = 0; k < 2; ++k) s.context.push_back(random_pose_pair(rng, 2, 2, 2));
    for (int k = 0; k < 3; ++k) s.target.push_back(random_pose_pair(rng, 2, 2, 2));
    return s;
}

ModelConfig micro_config(const std::string& variant) {
    ModelConfig cfg;
    cfg.variant = VariantSpec::parse(variant);
    cfg.layout = CueLayout{4, 2, true};
    cfg.participants = 2;
    cfg.t_obs = 2;
    cfg.t_fut = 2;
    cfg.d_e = 6;
    cfg.d_z = 2;
    cfg.d_r = 4;
    cfg.d_hidden = 6;
    cfg.d_embed = 4;
    cfg.d_pool = 5;
    cfg.d_pair = 5;
    cfg.enc_hidden = {6};
    cfg.dec_hidden = {6};
    cfg.decode_mode = DecodeMode::autoregressive;
    cfg.teacher_forcing = true;
    cfg.init_seed = 11;
    return cfg;
}

double loss_value(const SocialProcess& m, const data::MetaSample& s, double kl_w, double aux_w,
                  std::uint64_t z_seed) {
    nn::Rng z_rng(z_seed);
    return train::build_loss(m, s, ZMode::sample, &z_rng, kl_w, aux_w)->val(0, 0);
}

}  // namespace

TEST_CASE("micro-model gradients match central finite differences") {
    // Frozen micro-model: 2 participants, 2 observed / 2 future steps, full
    // pose layout, autoregressive GRU decoder, ELBO + auxiliary loss.
    SocialProcess m(micro_config("SP-GRU-latent"));
    const auto sample = pose_micro_sample(21);
    const std::uint64_t z_seed = 77;

    nn::Rng z_rng(z_seed);
    train::LossParts parts;
    Var loss = train::build_loss(m, sample, ZMode::sample, &z_rng, 1.0, 1.0, &parts);
    m.reg.zero_grad();
    ad::backward(loss);

    const double eps = 1e-6;
    double worst = 0.0;
    std::string worst_name;
    const auto& params = m.reg.params();
    const auto& names = m.reg.names();
    for (size_t k = 0; k < params.size(); ++k) {
        Mat analytic = params[k]->grad;
        Mat& v = params[k]->val;
        for (Eigen::Index i = 0; i < v.rows(); ++i)
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                const double saved = v(i, j);
                v(i, j) = saved + eps;
                const double fp = loss_value(m, sample, 1.0, 1.0, z_seed);
                v(i, j) = saved - eps;
                const double fm = loss_value(m, sample, 1.0, 1.0, z_seed);
                v(i, j) = saved;
                const double fd = (fp - fm) / (2.0 * eps);
                const double an = analytic(i, j);
                const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
                if (rel > worst) {
                    worst = rel;
                    worst_name = names[k];
                }
            }
    }
    INFO("worst parameter: " << worst_name);
    CHECK(worst < 1e-4);
}

TEST_CASE("ELBO components") {
    SocialProcess m(micro_config("SP-GRU-latent"));
    const auto sample = pose_micro_sample(33);

    SECTION("context equal to target gives zero KL") {
        data::MetaSample same;
        same.context = sample.target;
        same.target = sample.target;
        nn::Rng z_rng(5);
        train::LossParts parts;
        train::build_loss(m, same, ZMode::sample, &z_rng, 1.0, 0.0, &parts);
        CHECK(parts.kl == Catch::Approx(0.0).margin(1e-12));
    }

    SECTION("KL weight scales the objective difference") {
        const double l0 = loss_value(m, sample, 0.0, 0.0, 9);
        const double l1 = loss_value(m, sample, 1.0, 0.0, 9);
        const double l2 = loss_value(m, sample, 2.0, 0.0, 9);
        CHECK(l2 - l1 == Catch::Approx(l1 - l0).epsilon(1e-9));
        CHECK(l1 - l0 > 0.0);  // KL is nonnegative
    }
}

TEST_CASE("auxiliary loss spot values") {
    // A perfect prediction with s_l = s_q = 0 contributes nothing; a unit
    // location error contributes exactly 1 per (participant, timestep).
    SocialProcess m(micro_config("SP-GRU-latent"));
    const CueLayout lay{4, 2, true};

    auto make_fg = [&](const Mat& truth, double loc_shift, int participants, int t_fut) {
        ForecastGraph fg;
        fg.categorical = false;
        fg.mean.resize(static_cast<size_t>(t_fut));
        fg.stddev.resize(static_cast<size_t>(t_fut));
        for (int t = 0; t < t_fut; ++t)
            for (int i = 0; i < participants; ++i) {
                Mat mu = truth;
                mu(0, lay.loc_offset()) += loc_shift;
                // Drive the BCE logit toward the truth label hard.
                mu(0, lay.speak_offset()) = truth(0, lay.speak_offset()) > 0.5 ? 700.0 : -700.0;
                fg.mean[static_cast<size_t>(t)].push_back(ad::constant(mu));
                fg.stddev[static_cast<size_t>(t)].push_back(ad::constant(Mat::Ones(1, 7)));
            }
        return fg;
    };

    nn::Rng rng(2);
    Eigen::RowVectorXd cue = random_pose_cue(rng);
    Mat truth = cue;
    data::SequencePair pair;
    pair.observed = {truth, truth};
    pair.future = {truth, truth};
    GroupBatch gb = make_group_batch(std::vector<data::SequencePair>{pair});

    // participants=1 here: the pair carries a single row.
    ForecastGraph perfect = make_fg(truth, 0.0, 1, 2);
    Var aux0 = train::auxiliary_loss_graph(m, perfect, gb);
    CHECK(aux0->val(0, 0) == Catch::Approx(0.0).margin(1e-10));

    ForecastGraph shifted = make_fg(truth, 1.0, 1, 2);
    Var aux1 = train::auxiliary_loss_graph(m, shifted, gb);
    // Unit location error, s_l = 0: contribution 1.0 per timestep.
    CHECK(aux1->val(0, 0) == Catch::Approx(2.0).epsilon(1e-6));

    SECTION("homoscedastic weights rescale the location term") {
        m.s_l_hat->val(0, 0) = std::log(4.0);  // exp(-s) = 0.25, + s offset
        Var aux = train::auxiliary_loss_graph(m, shifted, gb);
        CHECK(aux->val(0, 0) == Catch::Approx(2.0 * (0.25 + std::log(4.0))).epsilon(1e-6));
        m.s_l_hat->val(0, 0) = 0.0;
    }
}

TEST_CASE("NP-latent and SP-MLP-latent coincide under parameter injection") {
    // Micro-configuration: 1 participant, no pooling, fixed offset, MLP
    // backbone with linear encoders, flattened IO. Injecting identity
    // encoders and shared downstream weights must give identical losses.
    ModelConfig np_cfg;
    np_cfg.variant = VariantSpec::parse("NP-latent");
    np_cfg.layout = CueLayout{0, 2, false};
    np_cfg.participants = 1;
    np_cfg.t_obs = 2;
    np_cfg.t_fut = 2;
    np_cfg.d_z = 2;
    np_cfg.d_pair = 5;
    np_cfg.dec_hidden = {6};
    np_cfg.init_seed = 3;

    ModelConfig sp_cfg = np_cfg;
    sp_cfg.variant = VariantSpec::parse("SP-MLP-latent");
    sp_cfg.d_e = 4;  // flat observed dimension (2 steps x 2 dims)
    sp_cfg.enc_hidden = {};
    sp_cfg.no_pool = true;
    sp_cfg.init_seed = 4;

    SocialProcess np(np_cfg);
    SocialProcess sp(sp_cfg);

    auto copy = [](const Var& from, const Var& to) {
        REQUIRE(from->val.rows() == to->val.rows());
        REQUIRE(from->val.cols() == to->val.cols());
        to->val = from->val;
    };

    // Identity self-encoder with the offset encoding cancelled via the bias.
    sp.ind_enc.self_enc.mlp.layers[0].W->val = Mat::Identity(4, 4);
    sp.ind_enc.self_enc.mlp.layers[0].b->val = -offset_encoding(1, 4);
    // Identity future-embedder for the latent pair path.
    sp.latent.y_enc.mlp.layers[0].W->val = Mat::Identity(4, 4);
    sp.latent.y_enc.mlp.layers[0].b->val = Mat::Zero(1, 4);
    // Fusion passes the self embedding through (partner half is zero anyway).
    sp.ind_enc.fuse.W->val = Mat::Zero(8, 4);
    sp.ind_enc.fuse.W->val.topRows(4) = Mat::Identity(4, 4);
    sp.ind_enc.fuse.b->val = Mat::Zero(1, 4);
    // Shared pair encoder, latent heads and decoder.
    copy(np.reg.find("pair.h0.W"), sp.reg.find("latent.pair.h0.W"));
    copy(np.reg.find("pair.h0.b"), sp.reg.find("latent.pair.h0.b"));
    copy(np.reg.find("pair.out.W"), sp.reg.find("latent.pair.out.W"));
    copy(np.reg.find("pair.out.b"), sp.reg.find("latent.pair.out.b"));
    copy(np.reg.find("latent.mu.W"), sp.reg.find("latent.mu.W"));
    copy(np.reg.find("latent.mu.b"), sp.reg.find("latent.mu.b"));
    copy(np.reg.find("latent.lv.W"), sp.reg.find("latent.lv.W"));
    copy(np.reg.find("latent.lv.b"), sp.reg.find("latent.lv.b"));
    copy(np.reg.find("dec.h0.W"), sp.reg.find("dec.mlp.h0.W"));
    copy(np.reg.find("dec.h0.b"), sp.reg.find("dec.mlp.h0.b"));
    copy(np.reg.find("dec.out.W"), sp.reg.find("dec.mlp.out.W"));
    copy(np.reg.find("dec.out.b"), sp.reg.find("dec.mlp.out.b"));

    nn::Rng rng(6);
    data::MetaSample s;
    auto flat_pair = [&]() {
        data::SequencePair p;
        p.offset = 1;
        for (int t = 0; t < 2; ++t) p.observed.push_back((Mat(1, 2) << rng.normal(), rng.normal()).finished());
        for (int t = 0; t < 2; ++t) p.future.push_back((Mat(1, 2) << rng.normal(), rng.normal()).finished());
        return p;
    };
    for (int k = 0; k < 4; ++k) s.context.push_back(flat_pair());
    for (int k = 0; k < 6; ++k) s.target.push_back(flat_pair());

    train::LossParts np_parts, sp_parts;
    train::build_loss(np, s, ZMode::mean, nullptr, 1.0, 0.0, &np_parts);
    train::build_loss(sp, s, ZMode::mean, nullptr, 1.0, 0.0, &sp_parts);
    CHECK(np_parts.total == Catch::Approx(sp_parts.total).epsilon(1e-12));
    CHECK(np_parts.nll == Catch::Approx(sp_parts.nll).epsilon(1e-12));
    CHECK(np_parts.kl == Catch::Approx(sp_parts.kl).margin(1e-12));
}

TEST_CASE("fit determinism and error paths") {
    const auto corpus = data::generate_glancing_corpus();

    ModelConfig cfg;
    cfg.variant = VariantSpec::parse("SP-GRU-latent");
    cfg.layout = data::glancing_layout();
    cfg.participants = 1;
    cfg.t_obs = 10;
    cfg.t_fut = 10;
    cfg.d_e = 8;
    cfg.d_z = 1;
    cfg.d_hidden = 8;
    cfg.d_pair = 8;
    cfg.no_pool = true;
    cfg.init_seed = 11;

    // Small provider: 5 meta-samples of 8 context + 16 target sequences.
    auto provider = [&corpus](int epoch) {
        nn::Rng rng(nn::derive_seed(400, static_cast<std::uint64_t>(epoch)));
        std::vector<data::MetaSample> out;
        for (int b = 0; b < 5; ++b) {
            data::MetaSample s;
            for (int k = 0; k < 8; ++k)
                s.context.push_back(data::glancing_pair(
                    corpus[static_cast<size_t>(rng.uniform_int(0, 12567))]));
            for (int k = 0; k < 16; ++k)
                s.target.push_back(data::glancing_pair(
                    corpus[static_cast<size_t>(rng.uniform_int(0, 12567))]));
            out.push_back(std::move(s));
        }
        return out;
    };

    train::TrainConfig tc;
    tc.variant = "SP-GRU-latent";
    tc.epochs = 2;
    tc.lr = 1e-3;
    tc.seed = 5;
    tc.aux_weight = 1.0;

    SECTION("identical seeds give identical final losses") {
        SocialProcess m1(cfg), m2(cfg);
        const auto r1 = train::fit(m1, provider, tc);
        const auto r2 = train::fit(m2, provider, tc);
        REQUIRE(r1.steps == r2.steps);
        CHECK(r1.final_epoch_loss == r2.final_epoch_loss);
        CHECK(r1.log.back().total == r2.log.back().total);
    }

    SECTION("VED ignores context and trains") {
        ModelConfig ved_cfg = cfg;
        ved_cfg.variant = VariantSpec::parse("VED-GRU");
        SocialProcess ved(ved_cfg);
        auto empty_ctx_provider = [&](int epoch) {
            auto samples = provider(epoch);
            for (auto& s : samples) s.context.clear();
            return samples;
        };
        const auto r = train::fit(ved, empty_ctx_provider, tc);
        CHECK(r.steps == 10);
        CHECK(std::isfinite(r.final_epoch_loss));
    }

    SECTION("divergence aborts with a diagnostic") {
        SocialProcess m(cfg);
        train::TrainConfig bad = tc;
        bad.lr = 1e18;
        CHECK_THROWS_WITH(train::fit(m, provider, bad),
                          Catch::Matchers::ContainsSubstring("diverged"));
    }

    SECTION("checkpoint round trip preserves parameters and loss") {
        SocialProcess m(cfg);
        const auto r = train::fit(m, provider, tc);
        const std::string path =
            (std::filesystem::temp_directory_path() / "groupcast_ckpt.json").string();
        train::save_checkpoint(m, tc, path, r.steps);
        SocialProcess restored = train::load_model(path);
        const double a = loss_value(m, provider(0)[0], 1.0, 1.0, 3);
        const double b = loss_value(restored, provider(0)[0], 1.0, 1.0, 3);
        CHECK(a == b);
        std::remove(path.c_str());
    }
}
