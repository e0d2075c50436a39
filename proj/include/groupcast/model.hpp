#pragma once

// The model families: Social Process (SP) and Attentive Social Process (ASP)
// with MLP/GRU backbones, the flattened NP/ANP baselines, and the VED
// configuration (empty context). One class covers all variants; the variant
// spec selects the paths that are built and used.

#include <optional>
#include <string>
#include <vector>

#include "groupcast/decoding.hpp"
#include "groupcast/latent.hpp"

namespace groupcast::model {

enum class ModelFamily { NP, ANP, SP, ASP, VED };

inline const char* to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::NP: return "NP";
        case ModelFamily::ANP: return "ANP";
        case ModelFamily::SP: return "SP";
        case ModelFamily::ASP: return "ASP";
        case ModelFamily::VED: return "VED";
    }
    return "?";
}

enum class PathKind { latent, uniform, dot, mh };

inline const char* to_string(PathKind p) {
    switch (p) {
        case PathKind::latent: return "latent";
        case PathKind::uniform: return "uniform";
        case PathKind::dot: return "dot";
        case PathKind::mh: return "mh";
    }
    return "?";
}

/// Parsed model variant. Valid combinations:
///   NP-latent, NP-uniform, ANP-dot, ANP-mh,
///   SP-{MLP,GRU}-{latent,uniform}, ASP-{MLP,GRU}-{dot,mh},
///   VED-{MLP,GRU}.
struct VariantSpec {
    ModelFamily family = ModelFamily::SP;
    Backbone backbone = Backbone::GRU;
    PathKind path = PathKind::latent;

    bool flat() const { return family == ModelFamily::NP || family == ModelFamily::ANP; }
    bool has_deterministic() const { return path != PathKind::latent; }
    bool attentive() const { return path == PathKind::dot || path == PathKind::mh; }
    bool context_free() const { return family == ModelFamily::VED; }

    std::string str() const {
        std::string s = to_string(family);
        if (!flat()) s += std::string("-") + to_string(backbone);
        if (family != ModelFamily::VED) s += std::string("-") + to_string(path);
        return s;
    }

    static VariantSpec parse(const std::string& text) {
        static const char* kValid =
            "NP-latent, NP-uniform, ANP-dot, ANP-mh, SP-{MLP,GRU}-{latent,uniform}, "
            "ASP-{MLP,GRU}-{dot,mh}, VED-{MLP,GRU}";
        std::vector<std::string> tok;
        std::string cur;
        for (char c : text) {
            if (c == '-') {
                tok.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        tok.push_back(cur);
        auto fail = [&]() -> VariantSpec {
            throw std::invalid_argument("invalid model variant '" + text + "'; expected one of: " +
                                        kValid);
        };
        VariantSpec v;
        if (tok.empty()) return fail();
        const std::string& fam = tok[0];
        if (fam == "NP" || fam == "ANP") {
            v.family = fam == "NP" ? ModelFamily::NP : ModelFamily::ANP;
            v.backbone = Backbone::MLP;
            if (tok.size() != 2) return fail();
            if (fam == "NP" && tok[1] == "latent") v.path = PathKind::latent;
            else if (fam == "NP" && tok[1] == "uniform") v.path = PathKind::uniform;
            else if (fam == "ANP" && tok[1] == "dot") v.path = PathKind::dot;
            else if (fam == "ANP" && tok[1] == "mh") v.path = PathKind::mh;
            else return fail();
        } else if (fam == "SP" || fam == "ASP" || fam == "VED") {
            v.family = fam == "SP" ? ModelFamily::SP
                       : fam == "ASP" ? ModelFamily::ASP
                                      : ModelFamily::VED;
            if (tok.size() < 2) return fail();
            v.backbone = tok[1] == "MLP" ? Backbone::MLP : tok[1] == "GRU" ? Backbone::GRU
                                                                           : (fail(), Backbone::GRU);
            if (fam == "VED") {
                if (tok.size() != 2) return fail();
                v.path = PathKind::latent;
            } else {
                if (tok.size() != 3) return fail();
                if (fam == "SP" && tok[2] == "latent") v.path = PathKind::latent;
                else if (fam == "SP" && tok[2] == "uniform") v.path = PathKind::uniform;
                else if (fam == "ASP" && tok[2] == "dot") v.path = PathKind::dot;
                else if (fam == "ASP" && tok[2] == "mh") v.path = PathKind::mh;
                else return fail();
            }
        } else {
            return fail();
        }
        return v;
    }
};

struct ModelConfig {
    VariantSpec variant;
    CueLayout layout;
    int participants = 1;
    int t_obs = 10;
    int t_fut = 10;
    int d_e = 32;      // per-participant embedding (even: offset encoding pairs sin/cos)
    int d_z = 1;       // latent dimension
    int d_r = 32;      // deterministic-path dimension
    int d_hidden = 64; // GRU decoder hidden size
    int d_embed = 16;  // relative-cue embedder output
    int d_pool = 32;   // pre-pooler output
    int d_pair = 64;   // pair-encoding dimension
    std::vector<Eigen::Index> enc_hidden{64, 64};  // MLP-backbone encoder hidden dims
    std::vector<Eigen::Index> dec_hidden{64, 64};  // MLP-backbone decoder hidden dims
    bool no_pool = false;
    bool categorical = false;
    DecodeMode decode_mode = DecodeMode::direct;
    bool teacher_forcing = true;
    double std_floor = 0.01;
    int attention_heads = 4;
    std::uint64_t init_seed = 1;

    int cue_dims() const { return layout.dims(); }
    int flat_x_dims() const { return t_obs * participants * layout.dims(); }
    int flat_y_dims() const { return t_fut * participants * layout.dims(); }

    data::json to_json() const {
        return data::json{{"variant", variant.str()},
                          {"layout", data::layout_to_json(layout)},
                          {"participants", participants},
                          {"t_obs", t_obs},
                          {"t_fut", t_fut},
                          {"d_e", d_e},
                          {"d_z", d_z},
                          {"d_r", d_r},
                          {"d_hidden", d_hidden},
                          {"d_embed", d_embed},
                          {"d_pool", d_pool},
                          {"d_pair", d_pair},
                          {"enc_hidden", enc_hidden},
                          {"dec_hidden", dec_hidden},
                          {"no_pool", no_pool},
                          {"categorical", categorical},
                          {"autoregressive", decode_mode == DecodeMode::autoregressive},
                          {"teacher_forcing", teacher_forcing},
                          {"std_floor", std_floor},
                          {"attention_heads", attention_heads},
                          {"init_seed", init_seed}};
    }

    static ModelConfig from_json(const data::json& j) {
        ModelConfig c;
        c.variant = VariantSpec::parse(j.at("variant").get<std::string>());
        c.layout = data::layout_from_json(j.at("layout"));
        c.participants = j.at("participants").get<int>();
        c.t_obs = j.at("t_obs").get<int>();
        c.t_fut = j.at("t_fut").get<int>();
        c.d_e = j.at("d_e").get<int>();
        c.d_z = j.at("d_z").get<int>();
        c.d_r = j.at("d_r").get<int>();
        c.d_hidden = j.at("d_hidden").get<int>();
        c.d_embed = j.at("d_embed").get<int>();
        c.d_pool = j.at("d_pool").get<int>();
        c.d_pair = j.at("d_pair").get<int>();
        c.enc_hidden = j.at("enc_hidden").get<std::vector<Eigen::Index>>();
        c.dec_hidden = j.at("dec_hidden").get<std::vector<Eigen::Index>>();
        c.no_pool = j.at("no_pool").get<bool>();
        c.categorical = j.at("categorical").get<bool>();
        c.decode_mode = j.at("autoregressive").get<bool>() ? DecodeMode::autoregressive
                                                           : DecodeMode::direct;
        c.teacher_forcing = j.at("teacher_forcing").get<bool>();
        c.std_floor = j.at("std_floor").get<double>();
        c.attention_heads = j.at("attention_heads").get<int>();
        c.init_seed = j.at("init_seed").get<std::uint64_t>();
        return c;
    }
};

/// Encoded view of a batch of sequence pairs from one group.
struct Encoded {
    GroupBatch gb;
    std::vector<Var> e;  // structured path: per-participant [batch x d_e]
    Var x_flat;          // flat path: [batch x t_obs*n*dims]
};

class SocialProcess {
  public:
    ModelConfig cfg;
    nn::ParamRegistry reg;

    // Structured (SP/ASP/VED) components.
    IndividualEncoder ind_enc;
    LatentPath latent;
    SeqDecoder decoder;

    // Flat (NP/ANP) components.
    nn::MLP flat_pair_mlp;
    nn::Linear flat_key_embed;
    nn::MLP flat_dec_mlp;

    // Homoscedastic auxiliary-loss weights (log sigma^2 terms).
    Var s_l_hat, s_q_hat;

    explicit SocialProcess(const ModelConfig& config) : cfg(config) {
        if (cfg.d_e % 2 != 0)
            throw std::invalid_argument("SocialProcess: d_e must be even for offset encodings");
        nn::Rng rng(nn::derive_seed(cfg.init_seed, 0x696e6974ULL));
        const auto& v = cfg.variant;
        const Eigen::Index d_r = v.has_deterministic() ? cfg.d_r : 0;
        if (v.flat()) {
            flat_pair_mlp = nn::MLP(reg, "pair", cfg.flat_x_dims() + cfg.flat_y_dims(),
                                    {static_cast<Eigen::Index>(cfg.d_pair)}, cfg.d_pair, rng);
            latent = LatentPath();  // heads only, constructed below via shared path
            latent.d_z = cfg.d_z;
            latent.d_r = d_r;
            latent.d_e = cfg.d_e;
            latent.attention_heads = cfg.attention_heads;
            latent.mu_head = nn::Linear(reg, "latent.mu", cfg.d_pair, cfg.d_z, rng);
            latent.lv_head = nn::Linear(reg, "latent.lv", cfg.d_pair, cfg.d_z, rng);
            if (d_r > 0) {
                latent.value_head = nn::Linear(reg, "latent.value", cfg.d_pair, d_r, rng);
                flat_key_embed = nn::Linear(reg, "latent.key", cfg.flat_x_dims(), cfg.d_e, rng);
                for (int h = 0; h < cfg.attention_heads; ++h) {
                    latent.wq.emplace_back(reg, "latent.wq" + std::to_string(h), cfg.d_e, cfg.d_e, rng);
                    latent.wk.emplace_back(reg, "latent.wk" + std::to_string(h), cfg.d_e, cfg.d_e, rng);
                    latent.wv.emplace_back(reg, "latent.wv" + std::to_string(h), d_r, d_r, rng);
                }
                latent.mh_out = nn::Linear(reg, "latent.mh_out", cfg.attention_heads * d_r, d_r, rng);
            }
            const Eigen::Index dec_in = cfg.flat_x_dims() + cfg.d_z + d_r;
            const Eigen::Index dec_out =
                cfg.categorical ? cfg.t_fut * cfg.participants
                                : 2 * cfg.t_fut * cfg.participants * cfg.layout.dims();
            flat_dec_mlp = nn::MLP(reg, "dec", dec_in, cfg.dec_hidden, dec_out, rng);
        } else {
            ind_enc = IndividualEncoder(reg, "enc", cfg.layout, v.backbone, cfg.t_obs, cfg.d_e,
                                        cfg.d_embed, cfg.d_pool, cfg.enc_hidden,
                                        cfg.no_pool || cfg.participants == 1, rng);
            latent = LatentPath(reg, "latent", cfg.layout, v.backbone, cfg.t_fut, cfg.d_e,
                                cfg.d_pair, cfg.d_z, d_r, cfg.enc_hidden, cfg.attention_heads, rng);
            decoder = SeqDecoder(reg, "dec", cfg.layout, v.backbone, cfg.categorical,
                                 cfg.decode_mode, cfg.d_e + cfg.d_z + d_r, cfg.t_fut, cfg.d_hidden,
                                 cfg.dec_hidden, rng);
        }
        s_l_hat = reg.create_zero("aux.s_l", 1, 1);
        s_q_hat = reg.create_zero("aux.s_q", 1, 1);
    }

    Encoded encode_pairs(const std::vector<data::SequencePair>& pairs) const {
        Encoded enc;
        enc.gb = make_group_batch(pairs);
        if (cfg.variant.flat()) {
            std::vector<Var> cols;
            for (const auto& t : enc.gb.observed)
                for (const auto& cue : t) cols.push_back(cue);
            enc.x_flat = ad::concat_cols(cols);
        } else {
            enc.e = ind_enc.encode(enc.gb);
        }
        return enc;
    }

    Var flat_future(const Encoded& enc) const {
        std::vector<Var> cols;
        for (const auto& t : enc.gb.future)
            for (const auto& cue : t) cols.push_back(cue);
        return ad::concat_cols(cols);
    }

    /// Per-participant pair encodings (a single pseudo-participant for the
    /// flat baselines, which see the raw flattened (x, y)).
    std::vector<Var> pair_encodings(const Encoded& enc) const {
        if (cfg.variant.flat())
            return {flat_pair_mlp(ad::concat_cols(enc.x_flat, flat_future(enc)))};
        return latent.pair_encodings(enc.gb, enc.e);
    }

    LatentVar posterior_from_encoded(const std::vector<Var>& pair_u) const {
        return latent.aggregate_stochastic(pair_u);
    }

    /// q(z|s_C) for a set of pairs; the empty set yields the prior.
    LatentVar posterior(const std::vector<data::SequencePair>& pairs) const {
        if (pairs.empty() || cfg.variant.context_free())
            return latent.aggregate_stochastic({});
        return posterior_from_encoded(pair_encodings(encode_pairs(pairs)));
    }

    /// Deterministic representations, one per participant (or one shared for
    /// flat/uniform paths), replicated over the target batch rows.
    std::vector<Var> deterministic_path(const Encoded& tgt, const Encoded& ctx,
                                        const std::vector<Var>& ctx_u) const {
        const auto& v = cfg.variant;
        if (!v.has_deterministic()) throw std::logic_error("deterministic_path: latent-only");
        const Eigen::Index batch = tgt.gb.batch;
        if (v.path == PathKind::uniform) {
            Var r = ad::replicate_rows(latent.aggregate_deterministic(ctx_u), batch);
            return std::vector<Var>(static_cast<size_t>(std::max(1, v.flat() ? 1 : tgt.gb.participants)), r);
        }
        const AttentionKind kind = v.path == PathKind::dot ? AttentionKind::dot : AttentionKind::multihead;
        if (v.flat()) {
            Var keys = flat_key_embed(ctx.x_flat);
            Var query = flat_key_embed(tgt.x_flat);
            Var values = latent.value_head(ctx_u[0]);
            return {latent.cross_attend(query, keys, values, kind)};
        }
        std::vector<Var> r;
        r.reserve(static_cast<size_t>(tgt.gb.participants));
        for (int i = 0; i < tgt.gb.participants; ++i) {
            Var values = latent.value_head(ctx_u[static_cast<size_t>(i)]);
            r.push_back(latent.cross_attend(tgt.e[static_cast<size_t>(i)], ctx.e[static_cast<size_t>(i)],
                                            values, kind));
        }
        return r;
    }

    /// Decode a batch of target pairs given the latent sample `z` ([1 x d_z])
    /// and optional per-participant deterministic representations.
    ForecastGraph decode(const Encoded& tgt, const std::vector<Var>* r, const Var& z,
                         bool teacher_forcing) const {
        const Eigen::Index batch = tgt.gb.batch;
        Var zrep = ad::replicate_rows(z, batch);
        if (cfg.variant.flat()) {
            std::vector<Var> parts{tgt.x_flat};
            if (r) parts.push_back((*r)[0]);
            parts.push_back(zrep);
            return decode_flat(flat_dec_mlp(ad::concat_cols(parts)), batch);
        }
        std::vector<Var> reps;
        reps.reserve(static_cast<size_t>(tgt.gb.participants));
        for (int i = 0; i < tgt.gb.participants; ++i) {
            std::vector<Var> parts{tgt.e[static_cast<size_t>(i)]};
            if (r) parts.push_back((*r)[r->size() == 1 ? 0 : static_cast<size_t>(i)]);
            parts.push_back(zrep);
            reps.push_back(ad::concat_cols(parts));
        }
        return decoder.decode_group(reps, tgt.gb, teacher_forcing);
    }

  private:
    ForecastGraph decode_flat(const Var& flat, Eigen::Index batch) const {
        (void)batch;
        ForecastGraph fg;
        fg.categorical = cfg.categorical;
        const Eigen::Index n = cfg.participants;
        const Eigen::Index dims = cfg.layout.dims();
        const Eigen::Index t_fut = cfg.t_fut;
        if (cfg.categorical) {
            for (Eigen::Index t = 0; t < t_fut; ++t) fg.logits.push_back(ad::slice_cols(flat, t * n, n));
            return fg;
        }
        fg.mean.resize(static_cast<size_t>(t_fut));
        fg.stddev.resize(static_cast<size_t>(t_fut));
        const Eigen::Index mean_block = t_fut * n * dims;
        for (Eigen::Index t = 0; t < t_fut; ++t)
            for (Eigen::Index i = 0; i < n; ++i) {
                const Eigen::Index at = (t * n + i) * dims;
                fg.mean[static_cast<size_t>(t)].push_back(ad::slice_cols(flat, at, dims));
                Var raw = ad::slice_cols(flat, mean_block + at, dims);
                fg.stddev[static_cast<size_t>(t)].push_back(
                    ad::add_scalar(ad::softplus_(raw), cfg.std_floor));
            }
        return fg;
    }
};

/// Flatten a pair's observed window to a single row vector (time-major,
/// participant, then feature order). The baselines consume these.
inline Eigen::VectorXd flatten_window(const std::vector<Eigen::MatrixXd>& window) {
    if (window.empty()) return Eigen::VectorXd();
    const Eigen::Index n = window[0].rows(), d = window[0].cols();
    Eigen::VectorXd out(static_cast<Eigen::Index>(window.size()) * n * d);
    Eigen::Index at = 0;
    for (const auto& m : window)
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j) out[at++] = m(i, j);
    return out;
}

inline std::vector<Eigen::MatrixXd> unflatten_window(const Eigen::VectorXd& flat, int t, int n,
                                                     int dims) {
    if (flat.size() != static_cast<Eigen::Index>(t) * n * dims)
        throw std::invalid_argument("unflatten_window: size mismatch");
    std::vector<Eigen::MatrixXd> out;
    Eigen::Index at = 0;
    for (int s = 0; s < t; ++s) {
        Eigen::MatrixXd m(n, dims);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dims; ++j) m(i, j) = flat[at++];
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace groupcast::model
