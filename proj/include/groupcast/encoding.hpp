#pragma once

// Observed-sequence encoding: per-participant self-dynamics encoders,
// partner pooling in the participant's frame of reference, linear fusion,
// and the sinusoidal window-offset encoding.

#include <string>
#include <vector>

#include "groupcast/data.hpp"
#include "groupcast/geometry.hpp"
#include "groupcast/nn.hpp"

namespace groupcast::model {

using ad::Mat;
using ad::Var;

enum class Backbone { MLP, GRU };

inline Backbone backbone_from_string(const std::string& s) {
    if (s == "MLP" || s == "mlp") return Backbone::MLP;
    if (s == "GRU" || s == "gru") return Backbone::GRU;
    throw std::invalid_argument("unknown backbone: " + s + " (expected MLP|GRU)");
}

inline const char* to_string(Backbone b) { return b == Backbone::MLP ? "MLP" : "GRU"; }

/// Sinusoidal encoding of the observed-to-future window offset. Even
/// dimensions carry sin(dt / 10000^(2m/d)), odd dimensions the matching cos.
inline Eigen::RowVectorXd offset_encoding(int delta_t, int d) {
    if (d % 2 != 0) throw std::invalid_argument("offset_encoding: dimension must be even");
    Eigen::RowVectorXd oe(d);
    for (int m = 0; 2 * m < d; ++m) {
        const double rate = std::pow(10000.0, 2.0 * m / static_cast<double>(d));
        oe[2 * m] = std::sin(delta_t / rate);
        oe[2 * m + 1] = std::cos(delta_t / rate);
    }
    return oe;
}

/// Fixed-dimension embedding of a time-major sequence of [batch x in] steps.
/// GRU keeps the last hidden state; MLP flattens the timesteps first.
struct SequenceEncoder {
    Backbone backbone = Backbone::GRU;
    nn::GRUCell gru;
    nn::MLP mlp;

    SequenceEncoder() = default;
    SequenceEncoder(nn::ParamRegistry& reg, const std::string& name, Backbone bb,
                    Eigen::Index in_dims, Eigen::Index t_fixed,
                    const std::vector<Eigen::Index>& mlp_hidden, Eigen::Index out_dims,
                    nn::Rng& rng)
        : backbone(bb) {
        if (backbone == Backbone::GRU)
            gru = nn::GRUCell(reg, name + ".gru", in_dims, out_dims, rng);
        else
            mlp = nn::MLP(reg, name + ".mlp", in_dims * t_fixed, mlp_hidden, out_dims, rng);
    }

    Var encode(const std::vector<Var>& steps) const {
        if (steps.empty()) throw std::invalid_argument("SequenceEncoder: empty sequence");
        if (backbone == Backbone::GRU) return nn::gru_last_hidden(gru, steps);
        return mlp(ad::concat_cols(steps));
    }
};

/// Permutation-invariant, group-size-independent summary of the partners'
/// behavior as seen from one participant: relative cues go through an
/// embedder, are joined with the partner's self-embedding, passed through a
/// pre-pooler, and element-wise max-pooled over partners at each timestep.
struct PartnerPooler {
    nn::MLP embedder;
    nn::MLP pre_pooler;
    Eigen::Index out_dims = 0;

    PartnerPooler() = default;
    PartnerPooler(nn::ParamRegistry& reg, const std::string& name, Eigen::Index cue_dims,
                  Eigen::Index embed_dims, Eigen::Index self_dims, Eigen::Index pool_dims,
                  nn::Rng& rng)
        : embedder(reg, name + ".embedder", cue_dims, {embed_dims}, embed_dims, rng),
          pre_pooler(reg, name + ".prepool", embed_dims + self_dims, {pool_dims}, pool_dims, rng),
          out_dims(pool_dims) {}

    /// rel_cues: per partner, the [batch x cue_dims] relative features at one
    /// timestep; partner_self: per partner, that partner's self-embedding.
    Var pool_timestep(const std::vector<Var>& rel_cues, const std::vector<Var>& partner_self) const {
        if (rel_cues.empty()) throw std::invalid_argument("PartnerPooler: no partners");
        std::vector<Var> pooled_inputs;
        pooled_inputs.reserve(rel_cues.size());
        for (size_t j = 0; j < rel_cues.size(); ++j) {
            Var emb = ad::tanh_(embedder(rel_cues[j]));
            pooled_inputs.push_back(pre_pooler(ad::concat_cols(emb, partner_self[j])));
        }
        return ad::max_of(pooled_inputs);
    }
};

/// Raw batch view of one group's windows: cue matrices are stacked over the
/// batch of sequence pairs, per timestep and participant.
struct GroupBatch {
    // steps[t][i] is a [batch x cue_dims] constant.
    std::vector<std::vector<Var>> observed;
    std::vector<std::vector<Var>> future;
    std::vector<int> offsets;  // per batch row
    int batch = 0;
    int participants = 0;
};

inline GroupBatch make_group_batch(const std::vector<const data::SequencePair*>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("make_group_batch: empty batch");
    GroupBatch gb;
    gb.batch = static_cast<int>(pairs.size());
    gb.participants = pairs[0]->participants();
    const int t_obs = pairs[0]->t_obs();
    const int t_fut = pairs[0]->t_fut();
    const int dims = pairs[0]->cue_dims();
    for (const auto* p : pairs) {
        if (p->participants() != gb.participants || p->t_obs() != t_obs || p->t_fut() != t_fut ||
            p->cue_dims() != dims)
            throw std::invalid_argument("make_group_batch: ragged batch shapes");
        gb.offsets.push_back(p->offset);
    }
    auto stack = [&](bool obs, int t, int i) {
        Mat m(gb.batch, dims);
        for (int b = 0; b < gb.batch; ++b) {
            const auto& src = obs ? pairs[static_cast<size_t>(b)]->observed[static_cast<size_t>(t)]
                                  : pairs[static_cast<size_t>(b)]->future[static_cast<size_t>(t)];
            m.row(b) = src.row(i);
        }
        return ad::constant(std::move(m));
    };
    gb.observed.resize(static_cast<size_t>(t_obs));
    for (int t = 0; t < t_obs; ++t)
        for (int i = 0; i < gb.participants; ++i) gb.observed[static_cast<size_t>(t)].push_back(stack(true, t, i));
    gb.future.resize(static_cast<size_t>(t_fut));
    for (int t = 0; t < t_fut; ++t)
        for (int i = 0; i < gb.participants; ++i) gb.future[static_cast<size_t>(t)].push_back(stack(false, t, i));
    return gb;
}

inline GroupBatch make_group_batch(const std::vector<data::SequencePair>& pairs) {
    std::vector<const data::SequencePair*> ptrs;
    ptrs.reserve(pairs.size());
    for (const auto& p : pairs) ptrs.push_back(&p);
    return make_group_batch(ptrs);
}

/// Full observed-window encoder producing the per-participant representation
/// e^i = W [e_self; e_partner] + OE_dt.
struct IndividualEncoder {
    CueLayout layout;
    Eigen::Index embed_dim = 0;
    bool no_pool = false;

    SequenceEncoder self_enc;
    SequenceEncoder partner_enc;
    PartnerPooler pooler;
    nn::Linear fuse;

    IndividualEncoder() = default;
    IndividualEncoder(nn::ParamRegistry& reg, const std::string& name, const CueLayout& lay,
                      Backbone bb, Eigen::Index t_obs, Eigen::Index d_e, Eigen::Index d_embed,
                      Eigen::Index d_pool, const std::vector<Eigen::Index>& mlp_hidden,
                      bool no_pool_, nn::Rng& rng)
        : layout(lay), embed_dim(d_e), no_pool(no_pool_) {
        self_enc = SequenceEncoder(reg, name + ".self", bb, lay.dims(), t_obs, mlp_hidden, d_e, rng);
        if (!no_pool) {
            pooler = PartnerPooler(reg, name + ".pool", lay.dims(), d_embed, d_e, d_pool, rng);
            partner_enc =
                SequenceEncoder(reg, name + ".partner", bb, d_pool, t_obs, mlp_hidden, d_e, rng);
        }
        fuse = nn::Linear(reg, name + ".fuse", 2 * d_e, d_e, rng);
    }

    std::vector<Var> encode_self_all(const GroupBatch& gb) const {
        std::vector<Var> e_self;
        for (int i = 0; i < gb.participants; ++i) {
            std::vector<Var> steps;
            steps.reserve(gb.observed.size());
            for (const auto& t : gb.observed) steps.push_back(t[static_cast<size_t>(i)]);
            e_self.push_back(self_enc.encode(steps));
        }
        return e_self;
    }

    /// Relative cues are plain data transforms (no gradient flows into them).
    Var relative_const(const Var& self_cue, const Var& partner_cue) const {
        Mat rel(self_cue->val.rows(), self_cue->val.cols());
        for (Eigen::Index b = 0; b < rel.rows(); ++b)
            rel.row(b) = relative_cue(layout, self_cue->val.row(b).transpose(),
                                      partner_cue->val.row(b).transpose());
        return ad::constant(std::move(rel));
    }

    std::vector<Var> encode_partner_all(const GroupBatch& gb, const std::vector<Var>& e_self) const {
        std::vector<Var> e_partner(static_cast<size_t>(gb.participants));
        if (no_pool || gb.participants == 1) {
            for (auto& e : e_partner) e = ad::constant(Mat::Zero(gb.batch, embed_dim));
            return e_partner;
        }
        for (int i = 0; i < gb.participants; ++i) {
            std::vector<Var> pooled_steps;
            pooled_steps.reserve(gb.observed.size());
            for (const auto& t : gb.observed) {
                std::vector<Var> rel, pself;
                for (int j = 0; j < gb.participants; ++j) {
                    if (j == i) continue;
                    rel.push_back(relative_const(t[static_cast<size_t>(i)], t[static_cast<size_t>(j)]));
                    pself.push_back(e_self[static_cast<size_t>(j)]);
                }
                pooled_steps.push_back(pooler.pool_timestep(rel, pself));
            }
            e_partner[static_cast<size_t>(i)] = partner_enc.encode(pooled_steps);
        }
        return e_partner;
    }

    /// Offset encodings stacked per batch row (offsets may differ per row).
    Var offset_rows(const GroupBatch& gb) const {
        Mat oe(gb.batch, embed_dim);
        for (int b = 0; b < gb.batch; ++b)
            oe.row(b) = offset_encoding(gb.offsets[static_cast<size_t>(b)], static_cast<int>(embed_dim));
        return ad::constant(std::move(oe));
    }

    /// e^i for every participant: fuse(self, partner) + OE.
    std::vector<Var> encode(const GroupBatch& gb) const {
        const std::vector<Var> e_self = encode_self_all(gb);
        const std::vector<Var> e_partner = encode_partner_all(gb, e_self);
        const Var oe = offset_rows(gb);
        std::vector<Var> e;
        e.reserve(static_cast<size_t>(gb.participants));
        for (int i = 0; i < gb.participants; ++i) {
            Var e_ind = fuse(ad::concat_cols(e_self[static_cast<size_t>(i)], e_partner[static_cast<size_t>(i)]));
            e.push_back(ad::add(e_ind, oe));
        }
        return e;
    }
};

}  // namespace groupcast::model
