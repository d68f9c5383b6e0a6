#pragma once

// Minimal reverse-mode autodiff over Eigen matrices. A Tape owns nodes in
// creation order (a valid topological order); backward() walks it in reverse.
// All arithmetic is double precision so finite-difference checks are tight.

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lanerep::ad {

using Mat = Eigen::MatrixXd;

struct Node {
    Mat val;
    Mat grad;
    std::function<void()> back;
};

using Var = Node*;

// Trainable parameter with accumulated gradient and Adam state.
struct Param {
    std::string name;
    Mat value;
    Mat grad;
    Mat m, v;  // Adam moments
    bool frozen = false;

    explicit Param(std::string n = "", Mat init = Mat()) : name(std::move(n)), value(std::move(init)) {
        grad = Mat::Zero(value.rows(), value.cols());
        m = Mat::Zero(value.rows(), value.cols());
        v = Mat::Zero(value.rows(), value.cols());
    }
    void zero_grad() { grad.setZero(); }
};

class Tape {
public:
    Var make(Mat v) {
        nodes_.push_back(std::make_unique<Node>());
        Node* n = nodes_.back().get();
        n->val = std::move(v);
        n->grad = Mat::Zero(n->val.rows(), n->val.cols());
        return n;
    }

    Var constant(Mat v) { return make(std::move(v)); }

    Var leaf(Param& p) {
        Var n = make(p.value);
        if (!p.frozen) {
            Param* pp = &p;
            n->back = [n, pp]() { pp->grad += n->grad; };
        }
        return n;
    }

    void backward(Var root) {
        if (root->val.size() != 1)
            throw std::invalid_argument("backward: root must be a scalar");
        root->grad(0, 0) = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if ((*it)->back) (*it)->back();
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

// ---------------------------------------------------------------------------
// primitive ops

inline Var matmul(Tape& t, Var a, Var b) {
    Var out = t.make(a->val * b->val);
    out->back = [out, a, b]() {
        a->grad += out->grad * b->val.transpose();
        b->grad += a->val.transpose() * out->grad;
    };
    return out;
}

inline Var add(Tape& t, Var a, Var b) {
    Var out = t.make(a->val + b->val);
    out->back = [out, a, b]() {
        a->grad += out->grad;
        b->grad += out->grad;
    };
    return out;
}

// a (n x d) + bias (1 x d) broadcast over rows
inline Var add_rowvec(Tape& t, Var a, Var bias) {
    Var out = t.make(a->val.rowwise() + bias->val.row(0));
    out->back = [out, a, bias]() {
        a->grad += out->grad;
        bias->grad.row(0) += out->grad.colwise().sum();
    };
    return out;
}

inline Var sub(Tape& t, Var a, Var b) {
    Var out = t.make(a->val - b->val);
    out->back = [out, a, b]() {
        a->grad += out->grad;
        b->grad -= out->grad;
    };
    return out;
}

inline Var scale(Tape& t, Var a, double s) {
    Var out = t.make(a->val * s);
    out->back = [out, a, s]() { a->grad += out->grad * s; };
    return out;
}

inline Var cmul(Tape& t, Var a, Var b) {
    Var out = t.make(a->val.cwiseProduct(b->val));
    out->back = [out, a, b]() {
        a->grad += out->grad.cwiseProduct(b->val);
        b->grad += out->grad.cwiseProduct(a->val);
    };
    return out;
}

inline Var transpose(Tape& t, Var a) {
    Var out = t.make(a->val.transpose());
    out->back = [out, a]() { a->grad += out->grad.transpose(); };
    return out;
}

inline Var concat_cols(Tape& t, const std::vector<Var>& parts) {
    Eigen::Index rows = parts[0]->val.rows(), cols = 0;
    for (Var p : parts) cols += p->val.cols();
    Mat v(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
        v.middleCols(c, p->val.cols()) = p->val;
        c += p->val.cols();
    }
    Var out = t.make(std::move(v));
    std::vector<Var> ps = parts;
    out->back = [out, ps]() {
        Eigen::Index c = 0;
        for (Var p : ps) {
            p->grad += out->grad.middleCols(c, p->val.cols());
            c += p->val.cols();
        }
    };
    return out;
}

inline Var concat_rows(Tape& t, const std::vector<Var>& parts) {
    Eigen::Index cols = parts[0]->val.cols(), rows = 0;
    for (Var p : parts) rows += p->val.rows();
    Mat v(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
        v.middleRows(r, p->val.rows()) = p->val;
        r += p->val.rows();
    }
    Var out = t.make(std::move(v));
    std::vector<Var> ps = parts;
    out->back = [out, ps]() {
        Eigen::Index r = 0;
        for (Var p : ps) {
            p->grad += out->grad.middleRows(r, p->val.rows());
            r += p->val.rows();
        }
    };
    return out;
}

inline Var slice_cols(Tape& t, Var a, Eigen::Index c0, Eigen::Index n) {
    Var out = t.make(a->val.middleCols(c0, n));
    out->back = [out, a, c0, n]() { a->grad.middleCols(c0, n) += out->grad; };
    return out;
}

inline Var slice_rows(Tape& t, Var a, Eigen::Index r0, Eigen::Index n) {
    Var out = t.make(a->val.middleRows(r0, n));
    out->back = [out, a, r0, n]() { a->grad.middleRows(r0, n) += out->grad; };
    return out;
}

inline Var gather_rows(Tape& t, Var a, const std::vector<Eigen::Index>& idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), a->val.cols());
    for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a->val.row(idx[i]);
    Var out = t.make(std::move(v));
    std::vector<Eigen::Index> ix = idx;
    out->back = [out, a, ix]() {
        for (size_t i = 0; i < ix.size(); ++i)
            a->grad.row(ix[i]) += out->grad.row(static_cast<Eigen::Index>(i));
    };
    return out;
}

inline Var mean_rows(Tape& t, Var a) {  // n x d -> 1 x d
    const double inv = 1.0 / static_cast<double>(a->val.rows());
    Var out = t.make(a->val.colwise().mean());
    out->back = [out, a, inv]() { a->grad += (out->grad * inv).replicate(a->val.rows(), 1); };
    return out;
}

inline Var sum_all(Tape& t, Var a) {  // -> 1 x 1
    Mat v(1, 1);
    v(0, 0) = a->val.sum();
    Var out = t.make(v);
    out->back = [out, a]() { a->grad.array() += out->grad(0, 0); };
    return out;
}

inline Var mean_all(Tape& t, Var a) {
    return scale(t, sum_all(t, a), 1.0 / static_cast<double>(a->val.size()));
}

inline Var sigmoid(Tape& t, Var a) {
    Mat v = a->val.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    Var out = t.make(std::move(v));
    out->back = [out, a]() {
        a->grad += out->grad.cwiseProduct(out->val.cwiseProduct(Mat::Ones(out->val.rows(), out->val.cols()) - out->val));
    };
    return out;
}

inline Var tanh_op(Tape& t, Var a) {
    Mat v = a->val.unaryExpr([](double x) { return std::tanh(x); });
    Var out = t.make(std::move(v));
    out->back = [out, a]() {
        a->grad += out->grad.cwiseProduct(Mat::Ones(out->val.rows(), out->val.cols()) - out->val.cwiseAbs2());
    };
    return out;
}

inline Var gelu(Tape& t, Var a) {  // exact erf form
    Mat v = a->val.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x / M_SQRT2)); });
    Var out = t.make(std::move(v));
    out->back = [out, a]() {
        Mat d = a->val.unaryExpr([](double x) {
            double cdf = 0.5 * (1.0 + std::erf(x / M_SQRT2));
            double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
            return cdf + x * pdf;
        });
        a->grad += out->grad.cwiseProduct(d);
    };
    return out;
}

inline Var exp_op(Tape& t, Var a) {
    Mat v = a->val.array().exp();
    Var out = t.make(std::move(v));
    out->back = [out, a]() { a->grad += out->grad.cwiseProduct(out->val); };
    return out;
}

inline Var log_op(Tape& t, Var a) {
    Mat v = a->val.array().log();
    Var out = t.make(std::move(v));
    out->back = [out, a]() { a->grad += out->grad.cwiseQuotient(a->val); };
    return out;
}

// row-wise softmax
inline Var softmax_rows(Tape& t, Var a) {
    Mat v = a->val;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        double mx = v.row(r).maxCoeff();
        v.row(r) = (v.row(r).array() - mx).exp();
        v.row(r) /= v.row(r).sum();
    }
    Var out = t.make(std::move(v));
    out->back = [out, a]() {
        for (Eigen::Index r = 0; r < out->val.rows(); ++r) {
            double dot = out->grad.row(r).dot(out->val.row(r));
            a->grad.row(r) += out->val.row(r).cwiseProduct((out->grad.row(r).array() - dot).matrix());
        }
    };
    return out;
}

// row-wise layer norm with learnable gamma/beta (1 x d each)
inline Var layer_norm_rows(Tape& t, Var a, Var gamma, Var beta, double eps = 1e-5) {
    const Eigen::Index n = a->val.rows(), d = a->val.cols();
    Mat xhat(n, d);
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        double mu = a->val.row(r).mean();
        double var = (a->val.row(r).array() - mu).square().mean();
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (a->val.row(r).array() - mu) * inv_std[r];
    }
    Mat v = (xhat.array().rowwise() * gamma->val.row(0).array()).rowwise() + beta->val.row(0).array();
    Var out = t.make(std::move(v));
    Mat xhat_c = xhat;
    Eigen::VectorXd inv_std_c = inv_std;
    out->back = [out, a, gamma, beta, xhat_c, inv_std_c, d]() {
        for (Eigen::Index r = 0; r < out->val.rows(); ++r) {
            Eigen::RowVectorXd dy = out->grad.row(r);
            Eigen::RowVectorXd g = gamma->val.row(0);
            Eigen::RowVectorXd dxhat = dy.cwiseProduct(g);
            double m1 = dxhat.mean();
            double m2 = dxhat.cwiseProduct(xhat_c.row(r)).mean();
            a->grad.row(r) +=
                inv_std_c[r] * (dxhat.array() - m1 - xhat_c.row(r).array() * m2).matrix();
            gamma->grad.row(0) += dy.cwiseProduct(xhat_c.row(r));
            beta->grad.row(0) += dy;
        }
    };
    return out;
}

// stable BCE with logits against constant targets; elementwise output
inline Var bce_with_logits(Tape& t, Var logits, const Mat& targets) {
    Mat v(logits->val.rows(), logits->val.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r)
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            double x = logits->val(r, c), y = targets(r, c);
            v(r, c) = std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        }
    Var out = t.make(std::move(v));
    Mat tgt = targets;
    out->back = [out, logits, tgt]() {
        for (Eigen::Index r = 0; r < out->val.rows(); ++r)
            for (Eigen::Index c = 0; c < out->val.cols(); ++c) {
                double x = logits->val(r, c);
                double s = 1.0 / (1.0 + std::exp(-x));
                logits->grad(r, c) += out->grad(r, c) * (s - tgt(r, c));
            }
    };
    return out;
}

// row-major reshape
inline Var reshape_rm(Tape& t, Var a, Eigen::Index rows, Eigen::Index cols) {
    if (a->val.size() != rows * cols) throw std::invalid_argument("reshape_rm: size mismatch");
    const Eigen::Index ac = a->val.cols();
    Mat v(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i)
        v(i / cols, i % cols) = a->val(i / ac, i % ac);
    Var out = t.make(std::move(v));
    out->back = [out, a, cols, ac]() {
        const Eigen::Index n = out->val.size();
        for (Eigen::Index i = 0; i < n; ++i)
            a->grad(i / ac, i % ac) += out->grad(i / cols, i % cols);
    };
    return out;
}

// rows normalized to unit L2 norm (eps added to the norm before dividing)
inline Var l2_normalize_rows(Tape& t, Var a, double eps = 1e-12) {
    const Eigen::Index n = a->val.rows();
    Mat v(n, a->val.cols());
    Eigen::VectorXd norms(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        norms[r] = a->val.row(r).norm();
        v.row(r) = a->val.row(r) / (norms[r] + eps);
    }
    Var out = t.make(std::move(v));
    Eigen::VectorXd norms_c = norms;
    out->back = [out, a, norms_c, eps]() {
        for (Eigen::Index r = 0; r < out->val.rows(); ++r) {
            double s = norms_c[r] + eps;
            if (norms_c[r] < 1e-300) {
                a->grad.row(r) += out->grad.row(r) / s;
            } else {
                double xd = a->val.row(r).dot(out->grad.row(r));
                a->grad.row(r) +=
                    out->grad.row(r) / s - a->val.row(r) * (xd / (norms_c[r] * s * s));
            }
        }
    };
    return out;
}

}  // namespace lanerep::ad
