#pragma once

// Observation models: decode per-participant representations, the
// deterministic path and the task sample z into per-timestep output
// distributions over future cues.

#include <string>
#include <vector>

#include "groupcast/encoding.hpp"

namespace groupcast::model {

/// Plain-value forecast for a single sequence pair: factorized Gaussians
/// over cue dimensions (mean/std per timestep and participant) or a
/// categorical distribution over persons per timestep.
struct ForecastDistribution {
    enum class Kind { gaussian, categorical };
    Kind kind = Kind::gaussian;
    std::vector<Eigen::MatrixXd> mean;    // [t_fut] x [n x dims]
    std::vector<Eigen::MatrixXd> stddev;  // [t_fut] x [n x dims]
    std::vector<Eigen::VectorXd> probs;   // [t_fut] x [n]

    int t_fut() const {
        return static_cast<int>(kind == Kind::gaussian ? mean.size() : probs.size());
    }
};

/// Per-timestep and total log-likelihood of the ground truth under a
/// forecast. Gaussian forecasts sum the per-dimension log densities over
/// participants and features; categorical forecasts take the log
/// probability of the realized speaker.
struct LogLik {
    double total = 0.0;
    std::vector<double> per_timestep;
};

inline int realized_speaker(const Eigen::MatrixXd& cue) {
    int who = 0;
    cue.col(cue.cols() - 1).maxCoeff(&who);
    return who;
}

inline LogLik observation_loglik(const ForecastDistribution& dist, const data::SequencePair& truth) {
    constexpr double kLogTwoPi = 1.8378770664093454836;
    if (dist.t_fut() != truth.t_fut())
        throw std::invalid_argument("observation_loglik: timestep count mismatch");
    LogLik ll;
    ll.per_timestep.resize(static_cast<size_t>(dist.t_fut()));
    for (int t = 0; t < dist.t_fut(); ++t) {
        double step = 0.0;
        if (dist.kind == ForecastDistribution::Kind::gaussian) {
            const auto& mu = dist.mean[static_cast<size_t>(t)];
            const auto& sd = dist.stddev[static_cast<size_t>(t)];
            const auto& y = truth.future[static_cast<size_t>(t)];
            if (mu.rows() != y.rows() || mu.cols() != y.cols())
                throw std::invalid_argument("observation_loglik: shape mismatch");
            for (Eigen::Index i = 0; i < y.rows(); ++i)
                for (Eigen::Index d = 0; d < y.cols(); ++d) {
                    const double zd = (y(i, d) - mu(i, d)) / sd(i, d);
                    step += -0.5 * zd * zd - std::log(sd(i, d)) - 0.5 * kLogTwoPi;
                }
        } else {
            const int who = realized_speaker(truth.future[static_cast<size_t>(t)]);
            step = std::log(dist.probs[static_cast<size_t>(t)][who]);
        }
        ll.per_timestep[static_cast<size_t>(t)] = step;
        ll.total += step;
    }
    return ll;
}

/// Graph-level batched forecast. Gaussian: mean/std per timestep and
/// participant, each [batch x dims]. Categorical: per-timestep logits
/// [batch x n_participants]; probabilities are their row-wise softmax.
struct ForecastGraph {
    bool categorical = false;
    std::vector<std::vector<Var>> mean;    // [t][participant]
    std::vector<std::vector<Var>> stddev;  // [t][participant]
    std::vector<Var> logits;               // [t]
};

enum class DecodeMode { direct, autoregressive };

/// Sequence decoder seeded from [e; r; z]. The GRU flavor unrolls t_fut
/// steps, optionally feeding back previous cues (ground truth under teacher
/// forcing, its own predictions otherwise); the MLP flavor emits the whole
/// window in one shot. Decoding sees the observed window only through e.
struct SeqDecoder {
    CueLayout layout;
    Backbone backbone = Backbone::GRU;
    bool categorical = false;
    DecodeMode mode = DecodeMode::direct;
    Eigen::Index t_fut = 0;
    double std_floor = 0.01;

    nn::Linear init_proj;
    nn::GRUCell cell;
    nn::Linear mean_head, std_head, logit_head;
    nn::MLP mlp;

    SeqDecoder() = default;
    SeqDecoder(nn::ParamRegistry& reg, const std::string& name, const CueLayout& lay, Backbone bb,
               bool categorical_, DecodeMode mode_, Eigen::Index in_rep, Eigen::Index t_fut_,
               Eigen::Index d_hidden, const std::vector<Eigen::Index>& mlp_hidden, nn::Rng& rng)
        : layout(lay), backbone(bb), categorical(categorical_), mode(mode_), t_fut(t_fut_) {
        const Eigen::Index dims = lay.dims();
        if (backbone == Backbone::GRU) {
            init_proj = nn::Linear(reg, name + ".init", in_rep, d_hidden, rng);
            cell = nn::GRUCell(reg, name + ".gru", dims, d_hidden, rng);
            if (categorical) {
                logit_head = nn::Linear(reg, name + ".logit", d_hidden, 1, rng);
            } else {
                mean_head = nn::Linear(reg, name + ".mean", d_hidden, dims, rng);
                std_head = nn::Linear(reg, name + ".std", d_hidden, dims, rng);
            }
        } else {
            // The MLP backbone always decodes the window in one shot.
            mode = DecodeMode::direct;
            const Eigen::Index out = categorical ? t_fut : 2 * t_fut * dims;
            mlp = nn::MLP(reg, name + ".mlp", in_rep, mlp_hidden, out, rng);
        }
    }

    Var positive_std(const Var& raw) const { return ad::add_scalar(ad::softplus_(raw), std_floor); }

    /// Unit-normalize the quaternion block of a predicted mean.
    Var normalize_quat_block(const Var& mean_raw) const {
        if (layout.quat_dims != 4) return mean_raw;
        Var q = ad::slice_cols(mean_raw, 0, 4);
        Var n2 = ad::sum_over_cols(ad::square_(q));
        Var norm = ad::sqrt_(ad::add_scalar(n2, 1e-12));
        Var qn = ad::div(q, ad::replicate_cols(norm, 4));
        if (layout.dims() == 4) return qn;
        return ad::concat_cols(qn, ad::slice_cols(mean_raw, 4, layout.dims() - 4));
    }

    /// Decode all participants of a batch step-synchronously. `reps[i]` is
    /// the [batch x in_rep] representation for participant i; `gb` provides
    /// the last observed cues (autoregressive seed) and, under teacher
    /// forcing, the ground-truth future fed back between steps.
    ForecastGraph decode_group(const std::vector<Var>& reps, const GroupBatch& gb,
                               bool teacher_forcing) const {
        const int n = static_cast<int>(reps.size());
        const Eigen::Index batch = reps[0]->val.rows();
        const Eigen::Index dims = layout.dims();
        ForecastGraph fg;
        fg.categorical = categorical;

        if (backbone == Backbone::MLP) {
            std::vector<Var> flat;
            flat.reserve(static_cast<size_t>(n));
            for (const auto& rep : reps) flat.push_back(mlp(rep));
            if (categorical) {
                for (Eigen::Index t = 0; t < t_fut; ++t) {
                    std::vector<Var> cols;
                    for (int i = 0; i < n; ++i) cols.push_back(ad::slice_cols(flat[static_cast<size_t>(i)], t, 1));
                    fg.logits.push_back(ad::concat_cols(cols));
                }
            } else {
                fg.mean.resize(static_cast<size_t>(t_fut));
                fg.stddev.resize(static_cast<size_t>(t_fut));
                for (Eigen::Index t = 0; t < t_fut; ++t)
                    for (int i = 0; i < n; ++i) {
                        fg.mean[static_cast<size_t>(t)].push_back(
                            normalize_quat_block(ad::slice_cols(flat[static_cast<size_t>(i)], t * dims, dims)));
                        fg.stddev[static_cast<size_t>(t)].push_back(
                            positive_std(ad::slice_cols(flat[static_cast<size_t>(i)], (t_fut + t) * dims, dims)));
                    }
            }
            return fg;
        }

        std::vector<Var> h, input;
        for (int i = 0; i < n; ++i) {
            h.push_back(ad::tanh_(init_proj(reps[static_cast<size_t>(i)])));
            input.push_back(mode == DecodeMode::autoregressive
                                ? gb.observed.back()[static_cast<size_t>(i)]
                                : ad::constant(Mat::Zero(batch, dims)));
        }
        if (!categorical) {
            fg.mean.resize(static_cast<size_t>(t_fut));
            fg.stddev.resize(static_cast<size_t>(t_fut));
        }
        for (Eigen::Index t = 0; t < t_fut; ++t) {
            std::vector<Var> logits_t;
            for (int i = 0; i < n; ++i) {
                h[static_cast<size_t>(i)] = cell.step(input[static_cast<size_t>(i)], h[static_cast<size_t>(i)]);
                if (categorical) {
                    logits_t.push_back(logit_head(h[static_cast<size_t>(i)]));
                } else {
                    Var mu = normalize_quat_block(mean_head(h[static_cast<size_t>(i)]));
                    fg.mean[static_cast<size_t>(t)].push_back(mu);
                    fg.stddev[static_cast<size_t>(t)].push_back(
                        positive_std(std_head(h[static_cast<size_t>(i)])));
                    if (mode == DecodeMode::autoregressive)
                        input[static_cast<size_t>(i)] =
                            teacher_forcing ? gb.future[static_cast<size_t>(t)][static_cast<size_t>(i)] : mu;
                }
            }
            if (categorical) {
                Var joint = ad::concat_cols(logits_t);
                fg.logits.push_back(joint);
                if (mode == DecodeMode::autoregressive) {
                    if (teacher_forcing) {
                        for (int i = 0; i < n; ++i)
                            input[static_cast<size_t>(i)] = gb.future[static_cast<size_t>(t)][static_cast<size_t>(i)];
                    } else {
                        Var p = ad::softmax_rows(joint);
                        for (int i = 0; i < n; ++i)
                            input[static_cast<size_t>(i)] = ad::slice_cols(p, i, 1);
                    }
                }
            }
        }
        return fg;
    }
};

/// Extract the forecast of one batch row as plain values.
inline ForecastDistribution extract_forecast(const ForecastGraph& fg, int row, int participants,
                                             int dims) {
    ForecastDistribution d;
    if (fg.categorical) {
        d.kind = ForecastDistribution::Kind::categorical;
        for (const auto& logits : fg.logits) {
            Eigen::VectorXd l = logits->val.row(row).transpose();
            Eigen::VectorXd p = (l.array() - l.maxCoeff()).exp();
            d.probs.push_back(p / p.sum());
        }
    } else {
        d.kind = ForecastDistribution::Kind::gaussian;
        for (size_t t = 0; t < fg.mean.size(); ++t) {
            Eigen::MatrixXd mu(participants, dims), sd(participants, dims);
            for (int i = 0; i < participants; ++i) {
                mu.row(i) = fg.mean[t][static_cast<size_t>(i)]->val.row(row);
                sd.row(i) = fg.stddev[t][static_cast<size_t>(i)]->val.row(row);
            }
            d.mean.push_back(std::move(mu));
            d.stddev.push_back(std::move(sd));
        }
    }
    return d;
}

}  // namespace groupcast::model
