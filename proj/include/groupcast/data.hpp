#pragma once

// Core dataset types (sequence pairs, meta-learning samples) and the
// line-delimited JSON dataset file format with a provenance header.

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "groupcast/geometry.hpp"

namespace groupcast::data {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;

/// One observed/future window pair for a group. Both windows are time-major
/// lists of [n_participants x cue_dims] matrices. `offset` is the gap
/// f1 - oT >= 1 between the last observed and first future timestep.
struct SequencePair {
    std::vector<Eigen::MatrixXd> observed;
    std::vector<Eigen::MatrixXd> future;
    int offset = 1;

    int t_obs() const { return static_cast<int>(observed.size()); }
    int t_fut() const { return static_cast<int>(future.size()); }
    int participants() const { return observed.empty() ? 0 : static_cast<int>(observed[0].rows()); }
    int cue_dims() const { return observed.empty() ? 0 : static_cast<int>(observed[0].cols()); }
};

/// One meta-learning task instance: context and target window pairs drawn
/// from a single group. `group_meta` holds generator-side latent descriptors
/// (phase, glance kind, dominator, direction, ...) consumed only by
/// evaluation code; the models never see it.
struct MetaSample {
    std::vector<SequencePair> context;
    std::vector<SequencePair> target;
    std::string group_id;
    json group_meta = json::object();
};

struct Dataset {
    json header = json::object();
    CueLayout layout;
    std::vector<MetaSample> samples;
};

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& rows) {
    const auto r = rows.size();
    const auto c = r == 0 ? 0 : rows[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
    return m;
}

inline json pair_to_json(const SequencePair& p) {
    json j;
    j["offset"] = p.offset;
    json obs = json::array(), fut = json::array();
    for (const auto& m : p.observed) obs.push_back(matrix_to_json(m));
    for (const auto& m : p.future) fut.push_back(matrix_to_json(m));
    j["observed"] = std::move(obs);
    j["future"] = std::move(fut);
    return j;
}

inline SequencePair pair_from_json(const json& j) {
    SequencePair p;
    p.offset = j.at("offset").get<int>();
    for (const auto& m : j.at("observed")) p.observed.push_back(matrix_from_json(m));
    for (const auto& m : j.at("future")) p.future.push_back(matrix_from_json(m));
    return p;
}

inline json sample_to_json(const MetaSample& s) {
    json j;
    j["group_id"] = s.group_id;
    j["group_meta"] = s.group_meta;
    json ctx = json::array(), tgt = json::array();
    for (const auto& p : s.context) ctx.push_back(pair_to_json(p));
    for (const auto& p : s.target) tgt.push_back(pair_to_json(p));
    j["context"] = std::move(ctx);
    j["target"] = std::move(tgt);
    return j;
}

inline MetaSample sample_from_json(const json& j) {
    MetaSample s;
    s.group_id = j.at("group_id").get<std::string>();
    s.group_meta = j.value("group_meta", json::object());
    for (const auto& p : j.at("context")) s.context.push_back(pair_from_json(p));
    for (const auto& p : j.at("target")) s.target.push_back(pair_from_json(p));
    return s;
}

inline json layout_to_json(const CueLayout& l) {
    return json{{"quat_dims", l.quat_dims}, {"loc_dims", l.loc_dims}, {"speaking", l.speaking}};
}

inline CueLayout layout_from_json(const json& j) {
    CueLayout l;
    l.quat_dims = j.at("quat_dims").get<int>();
    l.loc_dims = j.at("loc_dims").get<int>();
    l.speaking = j.at("speaking").get<bool>();
    return l;
}

/// Writes a dataset as one JSON header line followed by one line per
/// meta-sample. Output is byte-deterministic for a given dataset.
inline void serialize_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("serialize_dataset: cannot open " + path);
    json header = ds.header;
    header["format"] = "groupcast-dataset";
    header["schema_version"] = kSchemaVersion;
    header["layout"] = layout_to_json(ds.layout);
    out << header.dump() << "\n";
    for (const auto& s : ds.samples) out << sample_to_json(s).dump() << "\n";
    if (!out) throw std::runtime_error("serialize_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file " + path);
    Dataset ds;
    ds.header = json::parse(line);
    if (ds.header.value("format", "") != "groupcast-dataset")
        throw std::runtime_error("load_dataset: " + path + " is not a groupcast dataset file");
    const int version = ds.header.value("schema_version", -1);
    if (version != kSchemaVersion)
        throw std::runtime_error("load_dataset: unsupported schema_version " +
                                 std::to_string(version) + " in " + path + " (expected " +
                                 std::to_string(kSchemaVersion) + ")");
    ds.layout = layout_from_json(ds.header.at("layout"));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ds.samples.push_back(sample_from_json(json::parse(line)));
    }
    return ds;
}

inline bool pairs_equal(const SequencePair& a, const SequencePair& b) {
    if (a.offset != b.offset || a.observed.size() != b.observed.size() ||
        a.future.size() != b.future.size())
        return false;
    for (size_t t = 0; t < a.observed.size(); ++t)
        if (a.observed[t] != b.observed[t]) return false;
    for (size_t t = 0; t < a.future.size(); ++t)
        if (a.future[t] != b.future[t]) return false;
    return true;
}

inline bool samples_equal(const MetaSample& a, const MetaSample& b) {
    if (a.group_id != b.group_id || a.group_meta != b.group_meta ||
        a.context.size() != b.context.size() || a.target.size() != b.target.size())
        return false;
    for (size_t i = 0; i < a.context.size(); ++i)
        if (!pairs_equal(a.context[i], b.context[i])) return false;
    for (size_t i = 0; i < a.target.size(); ++i)
        if (!pairs_equal(a.target[i], b.target[i])) return false;
    return true;
}

}  // namespace groupcast::data
