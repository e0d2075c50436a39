#pragma once

// Evaluation: log-likelihood and error metrics (timestep average first, then
// mean/std over sequences), per-timestep curves, latent-space diagnostics
// (posterior collapse, z sweeps) and the cross-dataset generalization
// protocol for the speaking models.

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "groupcast/synthdata.hpp"
#include "groupcast/training.hpp"

namespace groupcast::eval {

using model::ForecastDistribution;
using model::SocialProcess;

constexpr double kValueToDegrees = 90.0;  // glancing values in [-1, 1] span +-90 degrees

struct MetricReport {
    int n_sequences = 0;
    double ll_mean = 0.0;
    double ll_std = 0.0;
    double mae_deg_mean = 0.0;  // against each sequence's own ground truth
    double mae_deg_std = 0.0;
    double accuracy = 0.0;  // speaking: argmax match rate
    std::vector<double> per_timestep_ll;
    std::vector<double> per_timestep_mae_deg;  // against the expected mean over futures

    data::json to_json() const {
        return data::json{{"n_sequences", n_sequences},
                          {"ll_mean", ll_mean},
                          {"ll_std", ll_std},
                          {"mae_deg_mean", mae_deg_mean},
                          {"mae_deg_std", mae_deg_std},
                          {"accuracy", accuracy},
                          {"per_timestep_ll", per_timestep_ll},
                          {"per_timestep_mae_deg", per_timestep_mae_deg}};
    }
};

/// Flat key-value text rendering of a report (arrays as space-separated
/// columns, one key per line).
inline void write_report_text(const MetricReport& r, std::ostream& out) {
    out << "n_sequences " << r.n_sequences << "\n";
    out << "ll_mean " << r.ll_mean << "\n";
    out << "ll_std " << r.ll_std << "\n";
    out << "mae_deg_mean " << r.mae_deg_mean << "\n";
    out << "mae_deg_std " << r.mae_deg_std << "\n";
    out << "accuracy " << r.accuracy << "\n";
    out << "per_timestep_ll";
    for (double v : r.per_timestep_ll) out << " " << v;
    out << "\nper_timestep_mae_deg";
    for (double v : r.per_timestep_mae_deg) out << " " << v;
    out << "\n";
}

struct EvalOptions {
    model::ZMode z_mode = model::ZMode::mean;
    int mc_samples = 0;  // >0: log-mean-exp over this many posterior draws
    int chunk = 512;
    std::uint64_t seed = 7;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline std::vector<model::ForecastDistribution> forecast_chunk(
    const SocialProcess& m, const std::vector<data::SequencePair>& chunk,
    const std::optional<model::Encoded>& ctx, const std::vector<ad::Var>& ctx_u, const ad::Var& z,
    bool teacher_forcing) {
    model::Encoded tgt = m.encode_pairs(chunk);
    std::vector<ad::Var> r;
    const std::vector<ad::Var>* r_ptr = nullptr;
    if (m.cfg.variant.has_deterministic()) {
        if (!ctx) throw std::invalid_argument("forecast: deterministic path requires context");
        r = m.deterministic_path(tgt, *ctx, ctx_u);
        r_ptr = &r;
    }
    model::ForecastGraph fg = m.decode(tgt, r_ptr, z, teacher_forcing);
    std::vector<model::ForecastDistribution> out;
    out.reserve(chunk.size());
    for (size_t b = 0; b < chunk.size(); ++b)
        out.push_back(model::extract_forecast(fg, static_cast<int>(b), tgt.gb.participants,
                                              m.cfg.layout.dims()));
    return out;
}

}  // namespace detail

/// Forecast distributions for a list of target pairs conditioned on a
/// context set (teacher forcing only affects autoregressive decoders).
inline std::vector<ForecastDistribution> forecast(const SocialProcess& m,
                                                  const std::vector<data::SequencePair>& context,
                                                  const std::vector<data::SequencePair>& targets,
                                                  const EvalOptions& opt = {},
                                                  bool teacher_forcing = true) {
    std::optional<model::Encoded> ctx;
    std::vector<ad::Var> ctx_u;
    if (!m.cfg.variant.context_free() && !context.empty()) {
        ctx.emplace(m.encode_pairs(context));
        ctx_u = m.pair_encodings(*ctx);
    }
    model::LatentVar q_ctx = m.latent.aggregate_stochastic(ctx_u);
    nn::Rng rng(nn::derive_seed(opt.seed, 0x65766121ULL));
    ad::Var z = opt.z_mode == model::ZMode::mean ? q_ctx.mean
                                                 : model::sample_latent(q_ctx, model::ZMode::sample, &rng);

    std::vector<ForecastDistribution> out;
    out.reserve(targets.size());
    for (size_t at = 0; at < targets.size(); at += static_cast<size_t>(opt.chunk)) {
        const size_t end = std::min(targets.size(), at + static_cast<size_t>(opt.chunk));
        std::vector<data::SequencePair> chunk(targets.begin() + static_cast<long>(at),
                                              targets.begin() + static_cast<long>(end));
        auto part = detail::forecast_chunk(m, chunk, ctx, ctx_u, z, teacher_forcing);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

/// Expected-mean future for a glancing target: the average of the Type I and
/// Type III continuations of its phase.
inline std::vector<double> glancing_expected_mean(double phase) {
    const auto v1 = data::glancing_type1_values(phase);
    const auto v3 = data::glancing_type3_values(phase);
    std::vector<double> out;
    out.reserve(data::kGlancingFut);
    for (int t = data::kGlancingObs; t < data::kGlancingLength; ++t)
        out.push_back(0.5 * (v1[static_cast<size_t>(t)] + v3[static_cast<size_t>(t)]));
    return out;
}

/// Metrics over an evaluation bundle (fixed context regime): LL averaged
/// over timesteps then mean/std over sequences; MAE in degrees against the
/// sequence's own future; per-timestep curves (glancing MAE curve measured
/// against the expected mean of the two possible futures).
inline MetricReport evaluate(const SocialProcess& m, const data::MetaSample& bundle,
                             const EvalOptions& opt = {}) {
    MetricReport rep;
    const int t_fut = bundle.target.empty() ? 0 : bundle.target[0].t_fut();
    rep.per_timestep_ll.assign(static_cast<size_t>(t_fut), 0.0);
    rep.per_timestep_mae_deg.assign(static_cast<size_t>(t_fut), 0.0);

    const auto dists = forecast(m, bundle.context, bundle.target, opt, true);
    std::vector<double> per_seq_ll, per_seq_mae;
    long correct = 0, total_steps = 0;
    const bool has_phase_meta = bundle.group_meta.contains("target_phase");

    for (size_t k = 0; k < bundle.target.size(); ++k) {
        const auto& truth = bundle.target[k];
        const auto ll = model::observation_loglik(dists[k], truth);
        per_seq_ll.push_back(ll.total / static_cast<double>(t_fut));
        for (int t = 0; t < t_fut; ++t)
            rep.per_timestep_ll[static_cast<size_t>(t)] += ll.per_timestep[static_cast<size_t>(t)];

        if (dists[k].kind == ForecastDistribution::Kind::gaussian) {
            double mae = 0.0;
            for (int t = 0; t < t_fut; ++t) {
                const auto& mu = dists[k].mean[static_cast<size_t>(t)];
                const auto& y = truth.future[static_cast<size_t>(t)];
                mae += (mu - y).array().abs().mean();
            }
            per_seq_mae.push_back(mae / static_cast<double>(t_fut) * kValueToDegrees);
            if (has_phase_meta) {
                const double phase = bundle.group_meta["target_phase"][k].get<double>();
                const auto expected = glancing_expected_mean(phase);
                for (int t = 0; t < t_fut; ++t)
                    rep.per_timestep_mae_deg[static_cast<size_t>(t)] +=
                        std::abs(dists[k].mean[static_cast<size_t>(t)](0, 0) - expected[static_cast<size_t>(t)]) *
                        kValueToDegrees;
            }
        } else {
            for (int t = 0; t < t_fut; ++t) {
                int argmax = 0;
                dists[k].probs[static_cast<size_t>(t)].maxCoeff(&argmax);
                correct += argmax == model::realized_speaker(truth.future[static_cast<size_t>(t)]) ? 1 : 0;
                ++total_steps;
            }
        }
    }

    rep.n_sequences = static_cast<int>(bundle.target.size());
    rep.ll_mean = detail::mean_of(per_seq_ll);
    rep.ll_std = detail::std_of(per_seq_ll);
    if (!per_seq_mae.empty()) {
        rep.mae_deg_mean = detail::mean_of(per_seq_mae);
        rep.mae_deg_std = detail::std_of(per_seq_mae);
    }
    if (total_steps > 0) rep.accuracy = static_cast<double>(correct) / static_cast<double>(total_steps);
    const double inv_n = 1.0 / std::max(1.0, static_cast<double>(rep.n_sequences));
    for (auto& v : rep.per_timestep_ll) v *= inv_n;
    for (auto& v : rep.per_timestep_mae_deg) v *= inv_n;
    return rep;
}

// ---------------------------------------------------------------------------
// Latent-space diagnostics
// ---------------------------------------------------------------------------

struct PosteriorDiagnostics {
    std::vector<model::LatentState> per_context;
    bool collapse = false;
    double max_ratio = 0.0;  // max over dims of across-context mean variance / within variance
};

/// Collapse verdict: true when, in every latent dimension, the variance of
/// posterior means across contexts is below 1e-3 of the mean posterior
/// variance. Invariant to context order.
inline PosteriorDiagnostics posterior_diagnostics(
    const SocialProcess& m, const std::vector<std::vector<data::SequencePair>>& contexts) {
    PosteriorDiagnostics diag;
    for (const auto& ctx : contexts) diag.per_context.push_back(m.posterior(ctx).values());
    if (diag.per_context.size() < 2) {
        diag.collapse = false;
        return diag;
    }
    const int d = static_cast<int>(diag.per_context[0].mean.size());
    const double n = static_cast<double>(diag.per_context.size());
    diag.collapse = true;
    for (int j = 0; j < d; ++j) {
        double mean = 0.0, mean_sq = 0.0, within = 0.0;
        for (const auto& st : diag.per_context) {
            mean += st.mean[j];
            mean_sq += st.mean[j] * st.mean[j];
            within += std::exp(st.log_var[j]);
        }
        mean /= n;
        const double across_var = mean_sq / n - mean * mean;
        within /= n;
        const double ratio = across_var / std::max(within, 1e-300);
        diag.max_ratio = std::max(diag.max_ratio, ratio);
        if (ratio >= 1e-3) diag.collapse = false;
    }
    return diag;
}

struct LatentSweep {
    std::vector<double> z_grid;
    // final_value[k][p]: predicted final-timestep mean for grid point k and probe p.
    std::vector<std::vector<double>> final_value;
};

/// Decode probe observed windows with injected z values (context encoder
/// bypassed). Requires a 1-dimensional latent model.
inline LatentSweep latent_sweep(const SocialProcess& m,
                                const std::vector<data::SequencePair>& probes,
                                const std::vector<double>& z_grid) {
    if (m.cfg.d_z != 1) throw std::invalid_argument("latent_sweep: requires a 1-dim latent");
    if (m.cfg.variant.has_deterministic())
        throw std::invalid_argument("latent_sweep: requires a latent-only variant");
    LatentSweep sweep;
    sweep.z_grid = z_grid;
    model::Encoded enc = m.encode_pairs(probes);
    for (double zval : z_grid) {
        ad::Var z = ad::constant(ad::Mat::Constant(1, 1, zval));
        model::ForecastGraph fg = m.decode(enc, nullptr, z, false);
        std::vector<double> finals;
        finals.reserve(probes.size());
        for (size_t p = 0; p < probes.size(); ++p)
            finals.push_back(fg.mean.back()[0]->val(static_cast<int>(p), 0));
        sweep.final_value.push_back(std::move(finals));
    }
    return sweep;
}

// ---------------------------------------------------------------------------
// Cross-dataset generalization
// ---------------------------------------------------------------------------

struct GeneralizationResult {
    double loss = 0.0;            // mean per-meta-sample objective (sum over its targets + KL)
    double dominator_prob = 0.0;  // mean P(dominator) at steps where the dominator speaks
    double dominator_prob_all_steps = 0.0;
    double accuracy = 0.0;
};

/// Evaluate one speaking model on an out-of-distribution eval set: the
/// training objective per meta-sample (z at the context-posterior mean,
/// teacher-forced likelihood, KL included), and the probability mass placed
/// on the true dominator.
inline GeneralizationResult generalization_eval(const SocialProcess& m,
                                                const std::vector<data::MetaSample>& eval_set) {
    GeneralizationResult res;
    double prob_dom_true = 0.0, prob_dom_all = 0.0;
    long n_dom_steps = 0, n_all_steps = 0, correct = 0;
    for (const auto& sample : eval_set) {
        train::LossParts parts;
        train::build_loss(m, sample, model::ZMode::mean, nullptr, 1.0, 0.0, &parts);
        res.loss += (parts.nll + parts.kl) * static_cast<double>(sample.target.size());

        const int dominator = sample.group_meta.value("dominator", -1);
        const auto dists = forecast(m, sample.context, sample.target, {}, true);
        for (size_t k = 0; k < sample.target.size(); ++k) {
            for (int t = 0; t < sample.target[k].t_fut(); ++t) {
                const int who =
                    model::realized_speaker(sample.target[k].future[static_cast<size_t>(t)]);
                const auto& p = dists[k].probs[static_cast<size_t>(t)];
                int argmax = 0;
                p.maxCoeff(&argmax);
                correct += argmax == who ? 1 : 0;
                ++n_all_steps;
                if (dominator >= 0) {
                    prob_dom_all += p[dominator];
                    if (who == dominator) {
                        prob_dom_true += p[dominator];
                        ++n_dom_steps;
                    }
                }
            }
        }
    }
    res.loss /= static_cast<double>(eval_set.size());
    if (n_dom_steps > 0) res.dominator_prob = prob_dom_true / static_cast<double>(n_dom_steps);
    if (n_all_steps > 0) {
        res.dominator_prob_all_steps = prob_dom_all / static_cast<double>(n_all_steps);
        res.accuracy = static_cast<double>(correct) / static_cast<double>(n_all_steps);
    }
    return res;
}

}  // namespace groupcast::eval
