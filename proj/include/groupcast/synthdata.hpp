#pragma once

// Seedable generators for the synthetic datasets: glancing-behavior
// sinusoids (sweeping Type I vs end-clipped Type III) and five-person
// speaking-turn timelines with four successor dynamics, plus assembly into
// meta-learning samples.

#include <array>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "groupcast/data.hpp"
#include "groupcast/nn.hpp"

namespace groupcast::data {

// ---------------------------------------------------------------------------
// Glancing behavior
// ---------------------------------------------------------------------------

constexpr int kGlancingLength = 20;
constexpr int kGlancingObs = 10;
constexpr int kGlancingFut = 10;
constexpr int kGlancingPhaseCount = 6284;   // phase grid 0.001 over [0, 2*pi)
constexpr int kGlancingClipStart = 14;      // last six timesteps are clipped
constexpr int kGlancingEvalPhases = 785;    // fixed context phases at evaluation

enum class GlanceKind { TypeI, TypeIII };

inline const char* to_string(GlanceKind k) { return k == GlanceKind::TypeI ? "I" : "III"; }

struct GlancingSequence {
    double phase = 0.0;
    GlanceKind kind = GlanceKind::TypeI;
    std::array<double, kGlancingLength> values{};
};

/// Pristine sweeping-glance sinusoid: values sin(n * (3*pi + phase) / 19).
inline std::array<double, kGlancingLength> glancing_type1_values(double phase) {
    std::array<double, kGlancingLength> v{};
    for (int n = 0; n < kGlancingLength; ++n)
        v[n] = std::sin(n * (3.0 * std::numbers::pi + phase) / 19.0);
    return v;
}

/// Gaze-fixating variant: identical until timestep 13, then the rotation
/// freezes (the timestep-13 value is held over the last six timesteps).
inline std::array<double, kGlancingLength> glancing_type3_values(double phase) {
    auto v = glancing_type1_values(phase);
    for (int n = kGlancingClipStart; n < kGlancingLength; ++n) v[n] = v[kGlancingClipStart - 1];
    return v;
}

inline std::vector<GlancingSequence> generate_glancing_corpus() {
    std::vector<GlancingSequence> corpus;
    corpus.reserve(2 * kGlancingPhaseCount);
    for (int p = 0; p < kGlancingPhaseCount; ++p) {
        const double phase = p * 0.001;
        corpus.push_back({phase, GlanceKind::TypeI, glancing_type1_values(phase)});
    }
    for (int p = 0; p < kGlancingPhaseCount; ++p) {
        const double phase = p * 0.001;
        corpus.push_back({phase, GlanceKind::TypeIII, glancing_type3_values(phase)});
    }
    return corpus;
}

inline CueLayout glancing_layout() { return CueLayout{0, 1, false}; }

/// First 10 timesteps observed, last 10 to forecast, contiguous windows.
inline SequencePair glancing_pair(const GlancingSequence& seq) {
    SequencePair p;
    p.offset = 1;
    for (int t = 0; t < kGlancingObs; ++t)
        p.observed.push_back(Eigen::MatrixXd::Constant(1, 1, seq.values[t]));
    for (int t = kGlancingObs; t < kGlancingLength; ++t)
        p.future.push_back(Eigen::MatrixXd::Constant(1, 1, seq.values[t]));
    return p;
}

enum class GlancingMode { mixed, separated };

inline GlancingMode glancing_mode_from_string(const std::string& s) {
    if (s == "mixed") return GlancingMode::mixed;
    if (s == "separated") return GlancingMode::separated;
    throw std::invalid_argument("unknown glancing mode: " + s + " (expected mixed|separated)");
}

namespace detail {

inline MetaSample glancing_sample_from_indices(const std::vector<GlancingSequence>& corpus,
                                               const std::vector<int>& ctx_idx,
                                               const std::vector<int>& tgt_idx,
                                               const std::string& group_id) {
    MetaSample s;
    s.group_id = group_id;
    json ctx_phase = json::array(), ctx_kind = json::array();
    json tgt_phase = json::array(), tgt_kind = json::array();
    for (int i : ctx_idx) {
        s.context.push_back(glancing_pair(corpus[static_cast<size_t>(i)]));
        ctx_phase.push_back(corpus[static_cast<size_t>(i)].phase);
        ctx_kind.push_back(to_string(corpus[static_cast<size_t>(i)].kind));
    }
    for (int i : tgt_idx) {
        s.target.push_back(glancing_pair(corpus[static_cast<size_t>(i)]));
        tgt_phase.push_back(corpus[static_cast<size_t>(i)].phase);
        tgt_kind.push_back(to_string(corpus[static_cast<size_t>(i)].kind));
    }
    s.group_meta = json{{"context_phase", std::move(ctx_phase)},
                        {"context_kind", std::move(ctx_kind)},
                        {"target_phase", std::move(tgt_phase)},
                        {"target_kind", std::move(tgt_kind)}};
    return s;
}

}  // namespace detail

/// Training stream for one epoch: batches of 100 sequences with a randomly
/// sampled 25% of each batch as context. In mixed mode a batch mixes both
/// glance kinds; in separated mode every meta-sample is single-kind.
inline std::vector<MetaSample> build_glancing_train_epoch(
    const std::vector<GlancingSequence>& corpus, GlancingMode mode, std::uint64_t seed,
    int epoch) {
    constexpr int kBatch = 100;
    constexpr int kContext = 25;
    nn::Rng rng(nn::derive_seed(seed, 0x6c616e63ULL + static_cast<std::uint64_t>(epoch)));
    std::vector<MetaSample> out;

    auto emit_batches = [&](std::vector<int>& idx, const std::string& tag) {
        rng.shuffle(idx);
        const int n_batches = static_cast<int>(idx.size()) / kBatch;
        for (int b = 0; b < n_batches; ++b) {
            std::vector<int> ctx(idx.begin() + b * kBatch, idx.begin() + b * kBatch + kContext);
            std::vector<int> tgt(idx.begin() + b * kBatch + kContext,
                                 idx.begin() + (b + 1) * kBatch);
            out.push_back(detail::glancing_sample_from_indices(
                corpus, ctx, tgt,
                "glancing-" + tag + "-e" + std::to_string(epoch) + "-b" + std::to_string(b)));
        }
    };

    if (mode == GlancingMode::mixed) {
        std::vector<int> idx(corpus.size());
        for (size_t i = 0; i < corpus.size(); ++i) idx[i] = static_cast<int>(i);
        emit_batches(idx, "mixed");
    } else {
        std::vector<int> type1, type3;
        for (size_t i = 0; i < corpus.size(); ++i)
            (corpus[i].kind == GlanceKind::TypeI ? type1 : type3).push_back(static_cast<int>(i));
        emit_batches(type1, "sep1");
        emit_batches(type3, "sep3");
        // Interleave the two kinds deterministically.
        rng.shuffle(out);
    }
    return out;
}

/// The 785 phase indices held fixed as evaluation context.
inline std::vector<int> glancing_eval_phase_indices(std::uint64_t seed) {
    nn::Rng rng(nn::derive_seed(seed, 0x6576616cULL));
    std::vector<int> all(kGlancingPhaseCount);
    for (int i = 0; i < kGlancingPhaseCount; ++i) all[i] = i;
    rng.shuffle(all);
    std::vector<int> picked(all.begin(), all.begin() + kGlancingEvalPhases);
    std::sort(picked.begin(), picked.end());
    return picked;
}

enum class GlancingEvalContext { mixed, type1, type3 };

/// Evaluation regime: context fixed to the sampled phases, targets are the
/// remaining phases. Mixed includes both kinds of every phase; type1/type3
/// restrict context and targets to a single kind.
inline MetaSample build_glancing_eval_sample(const std::vector<GlancingSequence>& corpus,
                                             GlancingEvalContext which, std::uint64_t seed) {
    const std::vector<int> phases = glancing_eval_phase_indices(seed);
    std::vector<char> is_ctx_phase(kGlancingPhaseCount, 0);
    for (int p : phases) is_ctx_phase[static_cast<size_t>(p)] = 1;

    std::vector<int> ctx_idx, tgt_idx;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto& seq = corpus[i];
        const bool kind_ok = which == GlancingEvalContext::mixed ||
                             (which == GlancingEvalContext::type1 && seq.kind == GlanceKind::TypeI) ||
                             (which == GlancingEvalContext::type3 && seq.kind == GlanceKind::TypeIII);
        if (!kind_ok) continue;
        const int p = static_cast<int>(std::lround(seq.phase / 0.001));
        if (is_ctx_phase[static_cast<size_t>(p)])
            ctx_idx.push_back(static_cast<int>(i));
        else
            tgt_idx.push_back(static_cast<int>(i));
    }
    const char* tag = which == GlancingEvalContext::mixed  ? "mixed"
                      : which == GlancingEvalContext::type1 ? "type1"
                                                            : "type3";
    return detail::glancing_sample_from_indices(corpus, ctx_idx, tgt_idx,
                                                std::string("glancing-eval-") + tag);
}

/// Corpus file: one record per sequence (empty context, single target pair).
inline Dataset glancing_corpus_dataset(std::uint64_t seed) {
    Dataset ds;
    ds.layout = glancing_layout();
    ds.header = json{{"kind", "glancing-corpus"}, {"seed", seed}, {"generator_version", 1},
                     {"n_sequences", 2 * kGlancingPhaseCount}};
    const auto corpus = generate_glancing_corpus();
    for (size_t i = 0; i < corpus.size(); ++i) {
        MetaSample s;
        s.group_id = "seq-" + std::to_string(i);
        s.group_meta = json{{"phase", corpus[i].phase}, {"kind", to_string(corpus[i].kind)}};
        s.target.push_back(glancing_pair(corpus[i]));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Speaking turns
// ---------------------------------------------------------------------------

constexpr int kSpeakingPeople = 5;
constexpr int kTurnLength = 2;
constexpr int kSpeakingWindow = 6;       // context sequences span 6 contiguous steps
constexpr int kSpeakingObs = 2;
constexpr int kSpeakingFut = 4;
constexpr int kSpeakingContextCount = 8;
constexpr int kSpeakingTargetCount = 11;

enum class TurnDynamics { dual, dual_random, full_random, dominating };

inline const char* to_string(TurnDynamics d) {
    switch (d) {
        case TurnDynamics::dual: return "dual";
        case TurnDynamics::dual_random: return "dual_random";
        case TurnDynamics::full_random: return "full_random";
        case TurnDynamics::dominating: return "dominating";
    }
    return "?";
}

inline TurnDynamics dynamics_from_string(const std::string& s) {
    if (s == "dual") return TurnDynamics::dual;
    if (s == "dual_random") return TurnDynamics::dual_random;
    if (s == "full_random") return TurnDynamics::full_random;
    if (s == "dominating") return TurnDynamics::dominating;
    throw std::invalid_argument("unknown turn dynamics: " + s +
                                " (expected dual|dual_random|full_random|dominating)");
}

struct GroupTimeline {
    std::vector<int> speaker;  // speaker index per timestep
    TurnDynamics dynamics = TurnDynamics::dual;
    int n_people = kSpeakingPeople;
    int direction = 0;   // +1 / -1 for dual and dominating groups
    int dominator = -1;  // person index for dominating groups
};

/// One-hot speaker timeline with turns of exactly two timesteps. The
/// successor rule depends on the dynamics; see TurnDynamics.
inline GroupTimeline generate_speaking_group(TurnDynamics dynamics, int n_people, int length,
                                             nn::Rng& rng) {
    if (length < 6 || length % 2 != 0)
        throw std::invalid_argument("generate_speaking_group: length must be even and >= 6");
    if (n_people < 3)
        throw std::invalid_argument("generate_speaking_group: need at least 3 people");

    GroupTimeline tl;
    tl.dynamics = dynamics;
    tl.n_people = n_people;
    tl.speaker.reserve(static_cast<size_t>(length));

    const int turns = length / kTurnLength;
    auto mod = [n_people](int v) { return ((v % n_people) + n_people) % n_people; };

    std::vector<int> turn_speakers;
    turn_speakers.reserve(static_cast<size_t>(turns));

    if (dynamics == TurnDynamics::dominating) {
        tl.dominator = static_cast<int>(rng.uniform_int(0, n_people - 1));
        tl.direction = rng.uniform_int(0, 1) == 0 ? 1 : -1;
        int other = mod(tl.dominator + static_cast<int>(rng.uniform_int(1, n_people - 1)));
        for (int k = 0; k < turns; ++k) {
            if (k % 2 == 0) {
                turn_speakers.push_back(tl.dominator);
            } else {
                turn_speakers.push_back(other);
                int next = mod(other + tl.direction);
                if (next == tl.dominator) next = mod(next + tl.direction);
                other = next;
            }
        }
    } else {
        if (dynamics == TurnDynamics::dual) tl.direction = rng.uniform_int(0, 1) == 0 ? 1 : -1;
        int cur = static_cast<int>(rng.uniform_int(0, n_people - 1));
        for (int k = 0; k < turns; ++k) {
            turn_speakers.push_back(cur);
            switch (dynamics) {
                case TurnDynamics::dual:
                    cur = mod(cur + tl.direction);
                    break;
                case TurnDynamics::dual_random:
                    cur = mod(cur + (rng.uniform_int(0, 1) == 0 ? 1 : -1));
                    break;
                case TurnDynamics::full_random: {
                    cur = mod(cur + static_cast<int>(rng.uniform_int(1, n_people - 1)));
                    break;
                }
                default: break;
            }
        }
    }

    for (int k = 0; k < turns; ++k)
        for (int r = 0; r < kTurnLength; ++r) tl.speaker.push_back(turn_speakers[static_cast<size_t>(k)]);
    return tl;
}

inline CueLayout speaking_layout() { return CueLayout{0, 0, true}; }

inline Eigen::MatrixXd speaking_cue(const GroupTimeline& tl, int t) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(tl.n_people, 1);
    m(tl.speaker[static_cast<size_t>(t)], 0) = 1.0;
    return m;
}

inline SequencePair speaking_window_pair(const GroupTimeline& tl, int start) {
    SequencePair p;
    p.offset = 1;
    for (int t = 0; t < kSpeakingObs; ++t) p.observed.push_back(speaking_cue(tl, start + t));
    for (int t = kSpeakingObs; t < kSpeakingWindow; ++t) p.future.push_back(speaking_cue(tl, start + t));
    return p;
}

/// 8 context + 11 target windows of 6 contiguous steps each, exposed as
/// (2 observed, 4 future) pairs. The earliest sampled windows become the
/// context so that context always precedes the forecast targets.
inline MetaSample build_speaking_meta_sample(const GroupTimeline& tl, const std::string& group_id,
                                             nn::Rng& rng) {
    const int max_start = static_cast<int>(tl.speaker.size()) - kSpeakingWindow;
    const int need = kSpeakingContextCount + kSpeakingTargetCount;
    if (max_start + 1 < need)
        throw std::invalid_argument("build_speaking_meta_sample: timeline too short");

    std::vector<int> starts(static_cast<size_t>(max_start + 1));
    for (int i = 0; i <= max_start; ++i) starts[static_cast<size_t>(i)] = i;
    rng.shuffle(starts);
    starts.resize(static_cast<size_t>(need));
    std::sort(starts.begin(), starts.end());

    MetaSample s;
    s.group_id = group_id;
    json ctx_starts = json::array(), tgt_starts = json::array();
    for (int i = 0; i < kSpeakingContextCount; ++i) {
        s.context.push_back(speaking_window_pair(tl, starts[static_cast<size_t>(i)]));
        ctx_starts.push_back(starts[static_cast<size_t>(i)]);
    }
    for (int i = kSpeakingContextCount; i < need; ++i) {
        s.target.push_back(speaking_window_pair(tl, starts[static_cast<size_t>(i)]));
        tgt_starts.push_back(starts[static_cast<size_t>(i)]);
    }
    s.group_meta = json{{"dynamics", to_string(tl.dynamics)},
                        {"direction", tl.direction},
                        {"dominator", tl.dominator},
                        {"context_start", std::move(ctx_starts)},
                        {"target_start", std::move(tgt_starts)}};
    return s;
}

struct SpeakingConfig {
    TurnDynamics dynamics = TurnDynamics::dual;
    int n_groups = 200;
    int timeline_length = 60;
    std::uint64_t seed = 1;
};

inline Dataset build_speaking_meta_dataset(const SpeakingConfig& cfg) {
    Dataset ds;
    ds.layout = speaking_layout();
    ds.header = json{{"kind", "speaking"},
                     {"dynamics", to_string(cfg.dynamics)},
                     {"seed", cfg.seed},
                     {"n_groups", cfg.n_groups},
                     {"timeline_length", cfg.timeline_length},
                     {"generator_version", 1}};
    for (int g = 0; g < cfg.n_groups; ++g) {
        nn::Rng rng(nn::derive_seed(cfg.seed, 0x73706b00ULL + static_cast<std::uint64_t>(g)));
        GroupTimeline tl =
            generate_speaking_group(cfg.dynamics, kSpeakingPeople, cfg.timeline_length, rng);
        ds.samples.push_back(build_speaking_meta_sample(
            tl, std::string(to_string(cfg.dynamics)) + "-g" + std::to_string(g), rng));
    }
    return ds;
}

}  // namespace groupcast::data
