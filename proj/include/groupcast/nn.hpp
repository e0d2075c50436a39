#pragma once

// Small neural-network toolkit on top of the autodiff graph: parameter
// registry, linear/MLP/GRU modules, Adam, and hierarchical seeded RNG.

#include <algorithm>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "groupcast/autodiff.hpp"

namespace groupcast::nn {

using ad::Mat;
using ad::Var;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic child-seed derivation so independent streams (init, data
/// order, latent samples, ...) never share state.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x51ed270b7a2fa6e1ULL));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive bounds
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), engine_);
    }
    std::mt19937_64& engine() { return engine_; }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

  private:
    std::mt19937_64 engine_;
};

/// Owns every learnable tensor of a model, keyed by name, in registration
/// order. Registration order is the serialization and optimizer-state order.
class ParamRegistry {
  public:
    Var create(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng,
               double stddev) {
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, stddev);
        Var v = ad::param(std::move(m));
        names_.push_back(name);
        params_.push_back(v);
        return v;
    }

    Var create_zero(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        Var v = ad::param(Mat::Zero(rows, cols));
        names_.push_back(name);
        params_.push_back(v);
        return v;
    }

    const std::vector<Var>& params() const { return params_; }
    const std::vector<std::string>& names() const { return names_; }

    Var find(const std::string& name) const {
        for (size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return params_[i];
        throw std::invalid_argument("ParamRegistry: unknown parameter " + name);
    }

    std::size_t count_values() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += static_cast<std::size_t>(p->val.size());
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p->grad = Mat::Zero(p->val.rows(), p->val.cols());
    }

  private:
    std::vector<std::string> names_;
    std::vector<Var> params_;
};

inline double glorot_stddev(Eigen::Index fan_in, Eigen::Index fan_out) {
    return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

struct Linear {
    Var W, b;

    Linear() = default;
    Linear(ParamRegistry& reg, const std::string& name, Eigen::Index in, Eigen::Index out,
           Rng& rng) {
        W = reg.create(name + ".W", in, out, rng, glorot_stddev(in, out));
        b = reg.create_zero(name + ".b", 1, out);
    }

    Var operator()(const Var& x) const { return ad::add_rowvec(ad::matmul(x, W), b); }
};

/// Feed-forward stack with tanh hidden activations and a linear output.
/// `hidden` may be empty, in which case this is a single linear map.
struct MLP {
    std::vector<Linear> layers;

    MLP() = default;
    MLP(ParamRegistry& reg, const std::string& name, Eigen::Index in,
        const std::vector<Eigen::Index>& hidden, Eigen::Index out, Rng& rng) {
        Eigen::Index prev = in;
        for (size_t i = 0; i < hidden.size(); ++i) {
            layers.emplace_back(reg, name + ".h" + std::to_string(i), prev, hidden[i], rng);
            prev = hidden[i];
        }
        layers.emplace_back(reg, name + ".out", prev, out, rng);
    }

    Var operator()(Var x) const {
        for (size_t i = 0; i + 1 < layers.size(); ++i) x = ad::tanh_(layers[i](x));
        return layers.back()(x);
    }
};

/// Single GRU cell; gate layout in the fused weights is [r | u | c].
struct GRUCell {
    Var W, U, b;
    Eigen::Index hidden_dim = 0;

    GRUCell() = default;
    GRUCell(ParamRegistry& reg, const std::string& name, Eigen::Index in, Eigen::Index hidden,
            Rng& rng)
        : hidden_dim(hidden) {
        W = reg.create(name + ".W", in, 3 * hidden, rng, glorot_stddev(in, hidden));
        U = reg.create(name + ".U", hidden, 3 * hidden, rng, glorot_stddev(hidden, hidden));
        b = reg.create_zero(name + ".b", 1, 3 * hidden);
    }

    Var step(const Var& x, const Var& h) const {
        using namespace ad;
        Var px = add_rowvec(matmul(x, W), b);
        Var ph = matmul(h, U);
        const Eigen::Index d = hidden_dim;
        Var r = sigmoid_(add(slice_cols(px, 0, d), slice_cols(ph, 0, d)));
        Var u = sigmoid_(add(slice_cols(px, d, d), slice_cols(ph, d, d)));
        Var c = tanh_(add(slice_cols(px, 2 * d, d), mul(r, slice_cols(ph, 2 * d, d))));
        return add(h, mul(u, sub(c, h)));  // (1-u) h + u c
    }

    Var initial_state(Eigen::Index batch) const {
        return ad::constant(Mat::Zero(batch, hidden_dim));
    }
};

/// Runs a GRU over a time-major sequence and returns the last hidden state.
inline Var gru_last_hidden(const GRUCell& cell, const std::vector<Var>& steps) {
    if (steps.empty()) throw std::invalid_argument("gru_last_hidden: empty sequence");
    Var h = cell.initial_state(steps[0]->val.rows());
    for (const auto& x : steps) h = cell.step(x, h);
    return h;
}

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;
    std::vector<Mat> m, v;

    explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

    void step(const std::vector<Var>& params) {
        if (m.empty()) {
            for (const auto& p : params) {
                m.push_back(Mat::Zero(p->val.rows(), p->val.cols()));
                v.push_back(Mat::Zero(p->val.rows(), p->val.cols()));
            }
        }
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < params.size(); ++i) {
            const Mat& g = params[i]->grad;
            if (g.size() == 0) continue;
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
            Mat mhat = m[i] / bc1;
            Mat vhat = v[i] / bc2;
            params[i]->val.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
        }
    }
};

}  // namespace groupcast::nn
