#pragma once

// Training: ELBO with the closed-form Gaussian KL, the homoscedastically
// weighted geometric auxiliary loss, the optimizer loop with optional KL
// annealing, and checkpoint serialization.

#include <chrono>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "groupcast/model.hpp"

namespace groupcast::train {

using ad::Mat;
using ad::Var;

/// Realized speaker index per batch row at future step t.
inline std::vector<int> speaker_labels(const model::GroupBatch& gb, int t) {
    std::vector<int> labels(static_cast<size_t>(gb.batch));
    for (int b = 0; b < gb.batch; ++b) {
        int who = 0;
        double best = -1.0;
        for (int i = 0; i < gb.participants; ++i) {
            const double v = gb.future[static_cast<size_t>(t)][static_cast<size_t>(i)]->val(b, 0);
            if (v > best) {
                best = v;
                who = i;
            }
        }
        labels[static_cast<size_t>(b)] = who;
    }
    return labels;
}

/// Negative log-likelihood of the batch's ground-truth futures under the
/// decoded forecast, summed over timesteps, participants and feature dims.
inline Var nll_graph(const model::ForecastGraph& fg, const model::GroupBatch& gb) {
    Var total = ad::constant_scalar(0.0);
    if (fg.categorical) {
        for (size_t t = 0; t < fg.logits.size(); ++t)
            total = ad::add(total, ad::nll_categorical(fg.logits[t], speaker_labels(gb, static_cast<int>(t))));
        return total;
    }
    for (size_t t = 0; t < fg.mean.size(); ++t)
        for (size_t i = 0; i < fg.mean[t].size(); ++i)
            total = ad::add(total, ad::gaussian_nll(fg.mean[t][i], fg.stddev[t][i],
                                                    gb.future[t][i]->val));
    return total;
}

/// Euclidean norm of (pred - truth) over a column block, per batch row.
inline Var block_error_norm(const Var& pred, const Mat& truth, Eigen::Index start,
                            Eigen::Index len) {
    Var diff = ad::sub(ad::slice_cols(pred, start, len),
                       ad::constant(truth.middleCols(start, len)));
    return ad::sqrt_(ad::add_scalar(ad::sum_over_cols(ad::square_(diff)), 1e-12));
}

/// Geometric auxiliary loss over the future window: homoscedastically
/// weighted location and quaternion error norms plus binary cross-entropy
/// on speaking status, summed over participants, timesteps and batch rows.
/// The quaternion block of the predicted mean is already unit-normalized by
/// the decoder; the speaking column of the mean is treated as a logit here.
inline Var auxiliary_loss_graph(const model::SocialProcess& m, const model::ForecastGraph& fg,
                                const model::GroupBatch& gb) {
    const CueLayout& lay = m.cfg.layout;
    if (fg.categorical || (lay.loc_dims == 0 && lay.quat_dims == 0 && !lay.speaking))
        return ad::constant_scalar(0.0);
    const Eigen::Index batch = gb.batch;
    Var exp_neg_sl = ad::replicate_rows(ad::exp_(ad::scale(m.s_l_hat, -1.0)), batch);
    Var exp_neg_sq = ad::replicate_rows(ad::exp_(ad::scale(m.s_q_hat, -1.0)), batch);
    Var sl_rep = ad::replicate_rows(m.s_l_hat, batch);
    Var sq_rep = ad::replicate_rows(m.s_q_hat, batch);

    Var total = ad::constant_scalar(0.0);
    for (size_t t = 0; t < fg.mean.size(); ++t)
        for (size_t i = 0; i < fg.mean[t].size(); ++i) {
            const Var& mu = fg.mean[t][i];
            const Mat& truth = gb.future[t][i]->val;
            Var per_row = ad::constant(Mat::Zero(batch, 1));
            if (lay.loc_dims > 0) {
                Var l_loc = block_error_norm(mu, truth, lay.loc_offset(), lay.loc_dims);
                per_row = ad::add(per_row, ad::add(ad::mul(l_loc, exp_neg_sl), sl_rep));
            }
            if (lay.quat_dims == 4) {
                Var l_quat = block_error_norm(mu, truth, 0, 4);
                per_row = ad::add(per_row, ad::add(ad::mul(l_quat, exp_neg_sq), sq_rep));
            }
            if (lay.speaking) {
                Var logit = ad::slice_cols(mu, lay.speak_offset(), 1);
                Var y = ad::constant(truth.middleCols(lay.speak_offset(), 1));
                Var bce = ad::sub(ad::softplus_(logit), ad::mul(logit, y));
                per_row = ad::add(per_row, bce);
            }
            total = ad::add(total, ad::sum(per_row));
        }
    return total;
}

struct LossParts {
    double nll = 0.0;
    double kl = 0.0;
    double aux = 0.0;
    double total = 0.0;
};

/// Per-meta-sample training objective: (sum-target NLL + kl_weight * KL +
/// aux_weight * L_aux) / |targets|, with z drawn once from q(z|s_D) by
/// reparameterization (or taken as a posterior mean at evaluation).
inline Var build_loss(const model::SocialProcess& m, const data::MetaSample& sample,
                      model::ZMode z_mode, nn::Rng* z_rng, double kl_weight, double aux_weight,
                      LossParts* parts = nullptr) {
    if (sample.target.empty()) throw std::invalid_argument("build_loss: no target pairs");
    const auto& variant = m.cfg.variant;

    std::optional<model::Encoded> ctx;
    std::vector<Var> ctx_u;
    if (!variant.context_free() && !sample.context.empty()) {
        ctx.emplace(m.encode_pairs(sample.context));
        ctx_u = m.pair_encodings(*ctx);
    }
    model::LatentVar q_ctx = m.latent.aggregate_stochastic(ctx_u);

    model::Encoded tgt = m.encode_pairs(sample.target);
    std::vector<Var> tgt_u = m.pair_encodings(tgt);
    model::LatentVar q_tgt = m.latent.aggregate_stochastic(tgt_u);

    // At evaluation (mean mode) decoding conditions on the context posterior.
    const bool eval_mode = z_mode == model::ZMode::mean;
    Var z = eval_mode ? q_ctx.mean : model::sample_latent(q_tgt, model::ZMode::sample, z_rng);

    std::vector<Var> r;
    const std::vector<Var>* r_ptr = nullptr;
    if (variant.has_deterministic()) {
        if (!ctx) throw std::invalid_argument("deterministic-path variant requires a context set");
        r = m.deterministic_path(tgt, *ctx, ctx_u);
        r_ptr = &r;
    }

    model::ForecastGraph fg = m.decode(tgt, r_ptr, z, m.cfg.teacher_forcing);
    Var nll = nll_graph(fg, tgt.gb);
    Var kl = ad::kl_diag_gaussians(q_tgt.mean, q_tgt.log_var, q_ctx.mean, q_ctx.log_var);
    Var aux = aux_weight > 0.0 ? auxiliary_loss_graph(m, fg, tgt.gb) : ad::constant_scalar(0.0);

    const double inv_targets = 1.0 / static_cast<double>(sample.target.size());
    Var loss = ad::scale(
        ad::add(ad::add(nll, ad::scale(kl, kl_weight)), ad::scale(aux, aux_weight)), inv_targets);
    if (parts) {
        parts->nll = nll->val(0, 0) * inv_targets;
        parts->kl = kl->val(0, 0) * inv_targets;
        parts->aux = aux->val(0, 0) * inv_targets;
        parts->total = loss->val(0, 0);
    }
    return loss;
}

struct TrainConfig {
    std::string variant = "SP-GRU-latent";
    double lr = 1e-3;
    int epochs = 20;
    std::uint64_t seed = 1;
    double kl_anneal_frac = 0.0;  // 0: no annealing; else linear ramp over this step fraction
    double aux_weight = 1.0;

    data::json to_json() const {
        return data::json{{"variant", variant}, {"lr", lr},     {"epochs", epochs},
                          {"seed", seed},       {"kl_anneal_frac", kl_anneal_frac},
                          {"aux_weight", aux_weight}};
    }
    static TrainConfig from_json(const data::json& j) {
        TrainConfig c;
        c.variant = j.at("variant").get<std::string>();
        c.lr = j.at("lr").get<double>();
        c.epochs = j.at("epochs").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.kl_anneal_frac = j.at("kl_anneal_frac").get<double>();
        c.aux_weight = j.at("aux_weight").get<double>();
        return c;
    }
};

struct LogRecord {
    int step = 0;
    double nll = 0.0, kl = 0.0, aux = 0.0, total = 0.0, wall_s = 0.0;
};

struct FitResult {
    std::vector<LogRecord> log;
    double final_epoch_loss = 0.0;
    int steps = 0;
};

using EpochProvider = std::function<std::vector<data::MetaSample>(int epoch)>;

/// Meta-training loop. Deterministic given (model init, provider, seed):
/// single-threaded, one z-sample per step, per-epoch sample order drawn from
/// the derived stream. Aborts on non-finite loss.
inline FitResult fit(model::SocialProcess& m, const EpochProvider& provider,
                     const TrainConfig& cfg, std::ostream* log_stream = nullptr) {
    nn::Adam opt(cfg.lr);
    nn::Rng z_rng(nn::derive_seed(cfg.seed, 0x7a726e67ULL));
    nn::Rng order_rng(nn::derive_seed(cfg.seed, 0x6f726472ULL));
    FitResult result;
    const auto t0 = std::chrono::steady_clock::now();

    long total_steps_estimate = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<data::MetaSample> samples = provider(epoch);
        if (samples.empty()) throw std::runtime_error("fit: epoch provider returned no samples");
        if (epoch == 0) total_steps_estimate = static_cast<long>(samples.size()) * cfg.epochs;
        std::vector<size_t> order(samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (size_t k = 0; k < order.size(); ++k) {
            double kl_w = 1.0;
            if (cfg.kl_anneal_frac > 0.0) {
                const double ramp = cfg.kl_anneal_frac * static_cast<double>(total_steps_estimate);
                kl_w = std::min(1.0, static_cast<double>(result.steps + 1) / std::max(1.0, ramp));
            }
            LossParts parts;
            Var loss = build_loss(m, samples[order[k]], model::ZMode::sample, &z_rng, kl_w,
                                  cfg.aux_weight, &parts);
            if (!std::isfinite(parts.total))
                throw std::runtime_error("fit: training diverged (non-finite loss) at step " +
                                         std::to_string(result.steps));
            m.reg.zero_grad();
            ad::backward(loss);
            opt.step(m.reg.params());
            ++result.steps;
            epoch_loss += parts.total;

            LogRecord rec{result.steps, parts.nll, parts.kl, parts.aux, parts.total,
                          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
            result.log.push_back(rec);
            if (log_stream)
                (*log_stream) << data::json{{"step", rec.step}, {"nll", rec.nll}, {"kl", rec.kl},
                                            {"aux", rec.aux},   {"total", rec.total},
                                            {"wall_s", rec.wall_s}}
                                     .dump()
                              << "\n";
        }
        result.final_epoch_loss = epoch_loss / static_cast<double>(order.size());
    }
    return result;
}

constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const model::SocialProcess& m, const TrainConfig& tc,
                            const std::string& path, int trained_steps,
                            const data::json& extra = data::json::object()) {
    data::json j;
    j["format"] = "groupcast-checkpoint";
    j["schema_version"] = kCheckpointVersion;
    j["model_config"] = m.cfg.to_json();
    j["train_config"] = tc.to_json();
    j["trained_steps"] = trained_steps;
    j["extra"] = extra;
    data::json params = data::json::object();
    const auto& names = m.reg.names();
    const auto& vars = m.reg.params();
    for (size_t i = 0; i < names.size(); ++i) {
        const Mat& v = vars[i]->val;
        std::vector<double> flat(static_cast<size_t>(v.size()));
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c)
                flat[static_cast<size_t>(r * v.cols() + c)] = v(r, c);
        params[names[i]] = data::json{{"rows", v.rows()}, {"cols", v.cols()}, {"data", flat}};
    }
    j["params"] = std::move(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << j.dump() << "\n";
}

struct Checkpoint {
    model::ModelConfig model_config;
    TrainConfig train_config;
    int trained_steps = 0;
    data::json extra;
    data::json params;

    void restore_into(model::SocialProcess& m) const {
        const auto& names = m.reg.names();
        const auto& vars = m.reg.params();
        for (size_t i = 0; i < names.size(); ++i) {
            const auto& pj = params.at(names[i]);
            const Eigen::Index rows = pj.at("rows").get<Eigen::Index>();
            const Eigen::Index cols = pj.at("cols").get<Eigen::Index>();
            if (rows != vars[i]->val.rows() || cols != vars[i]->val.cols())
                throw std::runtime_error("checkpoint: shape mismatch for " + names[i]);
            const auto& flat = pj.at("data");
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c)
                    vars[i]->val(r, c) = flat[static_cast<size_t>(r * cols + c)].get<double>();
        }
    }
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    data::json j = data::json::parse(in);
    if (j.value("format", "") != "groupcast-checkpoint")
        throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
    if (j.value("schema_version", -1) != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported checkpoint version in " + path);
    Checkpoint ck;
    ck.model_config = model::ModelConfig::from_json(j.at("model_config"));
    ck.train_config = TrainConfig::from_json(j.at("train_config"));
    ck.trained_steps = j.at("trained_steps").get<int>();
    ck.extra = j.value("extra", data::json::object());
    ck.params = j.at("params");
    return ck;
}

inline model::SocialProcess load_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    model::SocialProcess m(ck.model_config);
    ck.restore_into(m);
    return m;
}

}  // namespace groupcast::train
