#pragma once

// Context aggregation: permutation-invariant stochastic path q(z|s_C),
// deterministic path r_C, and query-specific cross-attention r*(C, x*).

#include <string>
#include <vector>

#include "groupcast/encoding.hpp"

namespace groupcast::model {

/// Diagonal-Gaussian task posterior as plain values (diagnostics, reports).
struct LatentState {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_var;

    static LatentState prior(int d) {
        return LatentState{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
    }
};

/// Graph-level counterpart of LatentState.
struct LatentVar {
    Var mean;     // [1 x d_z]
    Var log_var;  // [1 x d_z]

    LatentState values() const {
        return LatentState{mean->val.row(0).transpose(), log_var->val.row(0).transpose()};
    }
};

enum class AttentionKind { uniform, dot, multihead };

/// Stochastic and deterministic context paths. Context pairs are encoded per
/// participant as pair_mlp([e^i(x); y_enc(y^i)]), averaged over participants
/// and then over pairs; the result parameterizes q(z|s_C) and, when enabled,
/// the deterministic representation.
struct LatentPath {
    Eigen::Index d_z = 1;
    Eigen::Index d_r = 0;  // 0: latent-only variant
    Eigen::Index d_e = 0;
    int attention_heads = 4;

    SequenceEncoder y_enc;
    nn::MLP pair_mlp;
    nn::Linear mu_head, lv_head;
    nn::Linear value_head;                  // deterministic path values
    std::vector<nn::Linear> wq, wk, wv;     // multi-head projections
    nn::Linear mh_out;

    LatentPath() = default;
    LatentPath(nn::ParamRegistry& reg, const std::string& name, const CueLayout& lay, Backbone bb,
               Eigen::Index t_fut, Eigen::Index d_e_, Eigen::Index d_pair, Eigen::Index d_z_,
               Eigen::Index d_r_, const std::vector<Eigen::Index>& mlp_hidden, int heads,
               nn::Rng& rng)
        : d_z(d_z_), d_r(d_r_), d_e(d_e_), attention_heads(heads) {
        y_enc = SequenceEncoder(reg, name + ".y_enc", bb, lay.dims(), t_fut, mlp_hidden, d_e_, rng);
        pair_mlp = nn::MLP(reg, name + ".pair", 2 * d_e_, {d_pair}, d_pair, rng);
        mu_head = nn::Linear(reg, name + ".mu", d_pair, d_z_, rng);
        lv_head = nn::Linear(reg, name + ".lv", d_pair, d_z_, rng);
        if (d_r > 0) {
            value_head = nn::Linear(reg, name + ".value", d_pair, d_r, rng);
            for (int h = 0; h < heads; ++h) {
                wq.emplace_back(reg, name + ".wq" + std::to_string(h), d_e_, d_e_, rng);
                wk.emplace_back(reg, name + ".wk" + std::to_string(h), d_e_, d_e_, rng);
                wv.emplace_back(reg, name + ".wv" + std::to_string(h), d_r, d_r, rng);
            }
            mh_out = nn::Linear(reg, name + ".mh_out", heads * d_r, d_r, rng);
        }
    }

    /// Per-participant pair encodings u^i for a batch of (x, y) pairs.
    std::vector<Var> pair_encodings(const GroupBatch& gb, const std::vector<Var>& e) const {
        std::vector<Var> u;
        u.reserve(static_cast<size_t>(gb.participants));
        for (int i = 0; i < gb.participants; ++i) {
            std::vector<Var> ysteps;
            ysteps.reserve(gb.future.size());
            for (const auto& t : gb.future) ysteps.push_back(t[static_cast<size_t>(i)]);
            Var yemb = y_enc.encode(ysteps);
            u.push_back(pair_mlp(ad::concat_cols(e[static_cast<size_t>(i)], yemb)));
        }
        return u;
    }

    static Var participant_mean(const std::vector<Var>& per_participant) {
        Var acc = per_participant[0];
        for (size_t i = 1; i < per_participant.size(); ++i) acc = ad::add(acc, per_participant[i]);
        return ad::scale(acc, 1.0 / static_cast<double>(per_participant.size()));
    }

    /// q(z|s_C) from already-encoded pairs; the empty set maps to the
    /// zero-information prior (mean 0, log-variance 0).
    LatentVar aggregate_stochastic(const std::vector<Var>& pair_u) const {
        if (pair_u.empty()) {
            return LatentVar{ad::constant(Mat::Zero(1, d_z)), ad::constant(Mat::Zero(1, d_z))};
        }
        Var s = ad::mean_over_rows(participant_mean(pair_u));
        return LatentVar{mu_head(s), lv_head(s)};
    }

    /// Order-invariant deterministic representation r_C = mean of context
    /// value encodings. Disabled (and an error) for an empty context.
    Var aggregate_deterministic(const std::vector<Var>& pair_u) const {
        if (d_r == 0) throw std::logic_error("aggregate_deterministic: latent-only variant");
        if (pair_u.empty())
            throw std::invalid_argument("aggregate_deterministic: empty context");
        return ad::mean_over_rows(value_head(participant_mean(pair_u)));  // [1 x d_r]
    }

    static Var dot_attend(const Var& q, const Var& k, const Var& v) {
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k->val.cols()));
        Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d);
        return ad::matmul(ad::softmax_rows(scores), v);
    }

    /// Query-specific r*(C, x*) for one participant: query rows attend over
    /// the context pairs' key/value encodings.
    Var cross_attend(const Var& query, const Var& keys, const Var& values,
                     AttentionKind kind) const {
        if (d_r == 0) throw std::logic_error("cross_attend: latent-only variant");
        if (keys->val.rows() == 0) throw std::invalid_argument("cross_attend: empty context");
        if (kind == AttentionKind::dot) return dot_attend(query, keys, values);
        if (kind != AttentionKind::multihead)
            throw std::invalid_argument("cross_attend: uniform attention has no query");
        std::vector<Var> heads;
        heads.reserve(static_cast<size_t>(attention_heads));
        for (int h = 0; h < attention_heads; ++h)
            heads.push_back(dot_attend(wq[static_cast<size_t>(h)](query), wk[static_cast<size_t>(h)](keys),
                                       wv[static_cast<size_t>(h)](values)));
        return mh_out(ad::concat_cols(heads));
    }
};

enum class ZMode { sample, mean };

/// Reparameterized draw z = mean + exp(log_var / 2) * eps, or the posterior
/// mean for deterministic evaluation.
inline Var sample_latent(const LatentVar& state, ZMode mode, nn::Rng* rng) {
    if (mode == ZMode::mean) return state.mean;
    if (rng == nullptr) throw std::invalid_argument("sample_latent: rng required for sampling");
    Mat eps(1, state.mean->val.cols());
    for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(0, j) = rng->normal();
    Var sigma = ad::exp_(ad::scale(state.log_var, 0.5));
    return ad::add(state.mean, ad::mul(sigma, ad::constant(std::move(eps))));
}

}  // namespace groupcast::model
