#pragma once

// Reverse-mode automatic differentiation over Eigen matrices. Nodes form a
// DAG through parent pointers; backward() topologically sorts the graph
// reachable from the root and pulls gradients back in reverse order.
// Convention: rows index batch entries, columns index features.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace groupcast::ad {

using Mat = Eigen::MatrixXd;

struct Node {
    Mat val;
    Mat grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.rows() != val.rows() || grad.cols() != val.cols())
            grad = Mat::Zero(val.rows(), val.cols());
    }
};

using Var = std::shared_ptr<Node>;

inline Var make_node(Mat val, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

inline Var constant(Mat v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    return n;
}

inline Var constant_scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

inline Var param(Mat v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = true;
    return n;
}

/// Backpropagate from a scalar (1x1) root. Seeds the root gradient with 1.
inline void backward(const Var& root) {
    if (root->val.size() != 1)
        throw std::invalid_argument("backward: root must be a scalar node");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->ensure_grad();
    root->grad(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make_node(a->val + b->val, {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad += n.grad;
        if (b->requires_grad) b->grad += n.grad;
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make_node(a->val - b->val, {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad += n.grad;
        if (b->requires_grad) b->grad -= n.grad;
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make_node(a->val.cwiseProduct(b->val), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad += n.grad.cwiseProduct(b->val);
        if (b->requires_grad) b->grad += n.grad.cwiseProduct(a->val);
    });
}

inline Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    return make_node(a->val.cwiseQuotient(b->val), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad += n.grad.cwiseQuotient(b->val);
        if (b->requires_grad)
            b->grad -= n.grad.cwiseProduct(a->val).cwiseQuotient(b->val.cwiseProduct(b->val));
    });
}

inline Var scale(const Var& a, double c) {
    return make_node(a->val * c, {a}, [a, c](Node& n) {
        if (a->requires_grad) a->grad += n.grad * c;
    });
}

inline Var add_scalar(const Var& a, double c) {
    return make_node(a->val.array() + c, {a}, [a](Node& n) {
        if (a->requires_grad) a->grad += n.grad;
    });
}

inline Var matmul(const Var& a, const Var& b) {
    if (a->val.cols() != b->val.rows())
        throw std::invalid_argument("matmul: inner dimension mismatch");
    return make_node(a->val * b->val, {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad.noalias() += n.grad * b->val.transpose();
        if (b->requires_grad) b->grad.noalias() += a->val.transpose() * n.grad;
    });
}

/// Broadcast-add a 1 x d row vector to every row of an n x d matrix.
inline Var add_rowvec(const Var& x, const Var& b) {
    if (b->val.rows() != 1 || b->val.cols() != x->val.cols())
        throw std::invalid_argument("add_rowvec: bias must be 1 x cols(x)");
    return make_node(x->val.rowwise() + b->val.row(0), {x, b}, [x, b](Node& n) {
        if (x->requires_grad) x->grad += n.grad;
        if (b->requires_grad) b->grad += n.grad.colwise().sum();
    });
}

inline Var tanh_(const Var& a) {
    Mat y = a->val.array().tanh();
    return make_node(y, {a}, [a, y](Node& n) {
        if (a->requires_grad) a->grad.array() += n.grad.array() * (1.0 - y.array().square());
    });
}

inline Var sigmoid_(const Var& a) {
    Mat y = (1.0 / (1.0 + (-a->val.array()).exp())).matrix();
    return make_node(y, {a}, [a, y](Node& n) {
        if (a->requires_grad) a->grad.array() += n.grad.array() * y.array() * (1.0 - y.array());
    });
}

inline Var softplus_(const Var& a) {
    Mat y = (a->val.array().max(0.0) + (-a->val.array().abs()).exp().log1p()).matrix();
    return make_node(y, {a}, [a](Node& n) {
        if (a->requires_grad)
            a->grad.array() += n.grad.array() / (1.0 + (-a->val.array()).exp());
    });
}

inline Var exp_(const Var& a) {
    Mat y = a->val.array().exp();
    return make_node(y, {a}, [a, y](Node& n) {
        if (a->requires_grad) a->grad.array() += n.grad.array() * y.array();
    });
}

inline Var log_(const Var& a) {
    return make_node(a->val.array().log(), {a}, [a](Node& n) {
        if (a->requires_grad) a->grad.array() += n.grad.array() / a->val.array();
    });
}

inline Var square_(const Var& a) {
    return make_node(a->val.array().square(), {a}, [a](Node& n) {
        if (a->requires_grad) a->grad.array() += n.grad.array() * 2.0 * a->val.array();
    });
}

inline Var sqrt_(const Var& a) {
    Mat y = a->val.array().sqrt();
    return make_node(y, {a}, [a, y](Node& n) {
        if (a->requires_grad) a->grad.array() += n.grad.array() * 0.5 / y.array();
    });
}

inline Var sum(const Var& a) {
    return make_node(Mat::Constant(1, 1, a->val.sum()), {a}, [a](Node& n) {
        if (a->requires_grad) a->grad.array() += n.grad(0, 0);
    });
}

inline Var mean(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->val.size());
    return make_node(Mat::Constant(1, 1, a->val.sum() * inv), {a}, [a, inv](Node& n) {
        if (a->requires_grad) a->grad.array() += n.grad(0, 0) * inv;
    });
}

/// Column-wise mean over rows: n x d -> 1 x d.
inline Var mean_over_rows(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->val.rows());
    return make_node(a->val.colwise().mean(), {a}, [a, inv](Node& n) {
        if (a->requires_grad) a->grad += (n.grad * inv).replicate(a->val.rows(), 1);
    });
}

/// Row-wise sum over columns: n x d -> n x 1.
inline Var sum_over_cols(const Var& a) {
    return make_node(a->val.rowwise().sum(), {a}, [a](Node& n) {
        if (a->requires_grad) a->grad += n.grad.replicate(1, a->val.cols());
    });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    const auto rows = parts[0]->val.rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p->val.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p->val.cols();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p->val.cols()) = p->val;
        at += p->val.cols();
    }
    return make_node(std::move(out), parts, [parts](Node& n) {
        Eigen::Index at = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) p->grad += n.grad.middleCols(at, p->val.cols());
            at += p->val.cols();
        }
    });
}

inline Var concat_cols(const Var& a, const Var& b) { return concat_cols(std::vector<Var>{a, b}); }

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index len) {
    if (start < 0 || start + len > a->val.cols())
        throw std::invalid_argument("slice_cols: out of range");
    return make_node(a->val.middleCols(start, len), {a}, [a, start, len](Node& n) {
        if (a->requires_grad) a->grad.middleCols(start, len) += n.grad;
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    const auto cols = parts[0]->val.cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p->val.cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
        rows += p->val.rows();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p->val.rows()) = p->val;
        at += p->val.rows();
    }
    return make_node(std::move(out), parts, [parts](Node& n) {
        Eigen::Index at = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) p->grad += n.grad.middleRows(at, p->val.rows());
            at += p->val.rows();
        }
    });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index len) {
    if (start < 0 || start + len > a->val.rows())
        throw std::invalid_argument("slice_rows: out of range");
    return make_node(a->val.middleRows(start, len), {a}, [a, start, len](Node& n) {
        if (a->requires_grad) a->grad.middleRows(start, len) += n.grad;
    });
}

inline Var transpose(const Var& a) {
    return make_node(a->val.transpose(), {a}, [a](Node& n) {
        if (a->requires_grad) a->grad += n.grad.transpose();
    });
}

/// Tile a 1 x d row vector into n identical rows.
inline Var replicate_rows(const Var& a, Eigen::Index n) {
    if (a->val.rows() != 1) throw std::invalid_argument("replicate_rows: input must be 1 x d");
    return make_node(a->val.replicate(n, 1), {a}, [a](Node& n_) {
        if (a->requires_grad) a->grad += n_.grad.colwise().sum();
    });
}

/// Tile an n x 1 column vector into k identical columns.
inline Var replicate_cols(const Var& a, Eigen::Index k) {
    if (a->val.cols() != 1) throw std::invalid_argument("replicate_cols: input must be n x 1");
    return make_node(a->val.replicate(1, k), {a}, [a](Node& n_) {
        if (a->requires_grad) a->grad += n_.grad.rowwise().sum();
    });
}

/// Elementwise max over a set of same-shape inputs. Gradient flows to the
/// first input attaining the max, so duplicated inputs stay consistent.
inline Var max_of(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("max_of: empty input");
    Mat out = parts[0]->val;
    Eigen::MatrixXi which = Eigen::MatrixXi::Zero(out.rows(), out.cols());
    for (size_t k = 1; k < parts.size(); ++k) {
        check_same_shape(parts[0], parts[k], "max_of");
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            for (Eigen::Index j = 0; j < out.cols(); ++j)
                if (parts[k]->val(i, j) > out(i, j)) {
                    out(i, j) = parts[k]->val(i, j);
                    which(i, j) = static_cast<int>(k);
                }
    }
    return make_node(std::move(out), parts, [parts, which](Node& n) {
        for (Eigen::Index i = 0; i < n.grad.rows(); ++i)
            for (Eigen::Index j = 0; j < n.grad.cols(); ++j) {
                const auto& p = parts[static_cast<size_t>(which(i, j))];
                if (p->requires_grad) p->grad(i, j) += n.grad(i, j);
            }
    });
}

/// Row-wise log-softmax (numerically stable).
inline Var log_softmax_rows(const Var& a) {
    Mat y = a->val;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double m = y.row(i).maxCoeff();
        const double lse = std::log((y.row(i).array() - m).exp().sum()) + m;
        y.row(i).array() -= lse;
    }
    return make_node(y, {a}, [a, y](Node& n) {
        if (!a->requires_grad) return;
        Mat soft = y.array().exp();
        Eigen::VectorXd rowsum = n.grad.rowwise().sum();
        a->grad += n.grad - (soft.array().colwise() * rowsum.array()).matrix();
    });
}

inline Var softmax_rows(const Var& a) { return exp_(log_softmax_rows(a)); }

/// -sum_i log softmax(logits)[i, labels[i]]; the categorical NLL of realized
/// classes under row-wise logits.
inline Var nll_categorical(const Var& logits, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != logits->val.rows())
        throw std::invalid_argument("nll_categorical: one label per row required");
    Var ls = log_softmax_rows(logits);
    Mat picked(logits->val.rows(), 1);
    for (Eigen::Index i = 0; i < ls->val.rows(); ++i) {
        const int c = labels[static_cast<size_t>(i)];
        if (c < 0 || c >= ls->val.cols())
            throw std::invalid_argument("nll_categorical: label out of range");
        picked(i, 0) = ls->val(i, c);
    }
    Var out = make_node(Mat::Constant(1, 1, -picked.sum()), {ls}, [ls, labels](Node& n) {
        if (!ls->requires_grad) return;
        for (Eigen::Index i = 0; i < ls->val.rows(); ++i)
            ls->grad(i, labels[static_cast<size_t>(i)]) -= n.grad(0, 0);
    });
    return out;
}

constexpr double kLogTwoPi = 1.8378770664093454836;

/// Elementwise Gaussian negative log density -log N(target | mean, std),
/// summed over all entries. `std` must be strictly positive.
inline Var gaussian_nll(const Var& mean, const Var& stddev, const Mat& target) {
    check_same_shape(mean, stddev, "gaussian_nll");
    Var diff = sub(mean, constant(target));
    Var z = div(diff, stddev);
    Var per = add_scalar(add(scale(square_(z), 0.5), log_(stddev)), 0.5 * kLogTwoPi);
    return sum(per);
}

/// KL(N(mq, exp(lvq)) || N(mp, exp(lvp))) for diagonal Gaussians, summed
/// over dimensions.
inline Var kl_diag_gaussians(const Var& mq, const Var& lvq, const Var& mp, const Var& lvp) {
    Var ratio = exp_(sub(lvq, lvp));
    Var md = sub(mq, mp);
    Var quad = mul(square_(md), exp_(scale(lvp, -1.0)));
    Var term = add(add(ratio, quad), add_scalar(sub(lvp, lvq), -1.0));
    return scale(sum(term), 0.5);
}

}  // namespace groupcast::ad
