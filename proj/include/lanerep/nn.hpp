#pragma once

// Small trainable-layer library on top of the autodiff tape.

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanerep/ad.hpp"
#include "lanerep/rng.hpp"

namespace lanerep::nn {

using ad::Mat;
using ad::Param;
using ad::Tape;
using ad::Var;

inline Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
    return m;
}

struct Linear {
    Param W, b;

    Linear() = default;
    Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
        : W(name + ".W", xavier_uniform(in, out, rng)), b(name + ".b", Mat::Zero(1, out)) {}

    Var operator()(Tape& t, Var x) {
        return ad::add_rowvec(t, ad::matmul(t, x, t.leaf(W)), t.leaf(b));
    }
    void collect(std::vector<Param*>& ps) {
        ps.push_back(&W);
        ps.push_back(&b);
    }
};

struct LayerNorm {
    Param gamma, beta;

    LayerNorm() = default;
    LayerNorm(const std::string& name, Eigen::Index d)
        : gamma(name + ".gamma", Mat::Ones(1, d)), beta(name + ".beta", Mat::Zero(1, d)) {}

    Var operator()(Tape& t, Var x) {
        return ad::layer_norm_rows(t, x, t.leaf(gamma), t.leaf(beta));
    }
    void collect(std::vector<Param*>& ps) {
        ps.push_back(&gamma);
        ps.push_back(&beta);
    }
};

// Per-feature batch normalization over the batch (row) dimension. Training
// with >= 2 rows uses batch statistics and updates running stats; otherwise
// the running statistics are used (single-row LOCO queries).
struct BatchNorm {
    Param gamma, beta;
    Mat running_mean, running_var;  // buffers, not optimized
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm() = default;
    BatchNorm(const std::string& name, Eigen::Index d)
        : gamma(name + ".gamma", Mat::Ones(1, d)),
          beta(name + ".beta", Mat::Zero(1, d)),
          running_mean(Mat::Zero(1, d)),
          running_var(Mat::Ones(1, d)) {}

    Var operator()(Tape& t, Var x, bool training) {
        const Eigen::Index n = x->val.rows(), d = x->val.cols();
        Var g = t.leaf(gamma), b = t.leaf(beta);
        if (training && n > 1) {
            Eigen::RowVectorXd mu = x->val.colwise().mean();
            Eigen::RowVectorXd var(d);
            for (Eigen::Index c = 0; c < d; ++c)
                var[c] = (x->val.col(c).array() - mu[c]).square().mean();
            running_mean = (1.0 - momentum) * running_mean + momentum * mu.matrix();
            running_var = (1.0 - momentum) * running_var + momentum * var.matrix();

            Mat xhat(n, d);
            Eigen::RowVectorXd inv_std(d);
            for (Eigen::Index c = 0; c < d; ++c) {
                inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
                xhat.col(c) = (x->val.col(c).array() - mu[c]) * inv_std[c];
            }
            Var out = t.make((xhat.array().rowwise() * g->val.row(0).array()).rowwise() +
                             b->val.row(0).array());
            Mat xhat_c = xhat;
            Eigen::RowVectorXd inv_std_c = inv_std;
            out->back = [out, x, g, b, xhat_c, inv_std_c, n]() {
                for (Eigen::Index c = 0; c < out->val.cols(); ++c) {
                    Eigen::VectorXd dy = out->grad.col(c);
                    double gc = g->val(0, c);
                    double sum_dy = dy.sum();
                    double sum_dyx = dy.dot(xhat_c.col(c));
                    x->grad.col(c) += (gc * inv_std_c[c] / static_cast<double>(n)) *
                                      (static_cast<double>(n) * dy.array() - sum_dy -
                                       xhat_c.col(c).array() * sum_dyx)
                                          .matrix();
                    g->grad(0, c) += sum_dyx;
                    b->grad(0, c) += sum_dy;
                }
            };
            return out;
        }
        // inference / single row: running statistics, plain affine transform
        Mat xhat(n, d);
        for (Eigen::Index c = 0; c < d; ++c)
            xhat.col(c) =
                (x->val.col(c).array() - running_mean(0, c)) / std::sqrt(running_var(0, c) + eps);
        Var out = t.make((xhat.array().rowwise() * g->val.row(0).array()).rowwise() +
                         b->val.row(0).array());
        Mat inv_std(1, d);
        for (Eigen::Index c = 0; c < d; ++c) inv_std(0, c) = 1.0 / std::sqrt(running_var(0, c) + eps);
        Mat xhat_c = xhat;
        Mat inv_std_c = inv_std;
        out->back = [out, x, g, b, xhat_c, inv_std_c]() {
            for (Eigen::Index c = 0; c < out->val.cols(); ++c) {
                x->grad.col(c) += out->grad.col(c) * (g->val(0, c) * inv_std_c(0, c));
                g->grad(0, c) += out->grad.col(c).dot(xhat_c.col(c));
                b->grad(0, c) += out->grad.col(c).sum();
            }
        };
        return out;
    }

    void collect(std::vector<Param*>& ps) {
        ps.push_back(&gamma);
        ps.push_back(&beta);
    }
};

// standard sinusoidal positional encoding over token index, base 10000
inline Mat sinusoidal_encoding(Eigen::Index n_pos, Eigen::Index d) {
    Mat pe(n_pos, d);
    for (Eigen::Index p = 0; p < n_pos; ++p)
        for (Eigen::Index i = 0; i < d; ++i) {
            double angle = static_cast<double>(p) /
                           std::pow(10000.0, 2.0 * std::floor(i / 2.0) / static_cast<double>(d));
            pe(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

// Multi-head self-attention over one sequence (tokens x dim). Optional
// additive per-head logit bias (n x n per head) and key padding mask.
struct MultiHeadAttention {
    Linear Wq, Wk, Wv, Wo;
    int heads = 4;
    Eigen::Index dim = 0;

    MultiHeadAttention() = default;
    MultiHeadAttention(const std::string& name, Eigen::Index d, int h, Rng& rng)
        : Wq(name + ".q", d, d, rng),
          Wk(name + ".k", d, d, rng),
          Wv(name + ".v", d, d, rng),
          Wo(name + ".o", d, d, rng),
          heads(h),
          dim(d) {
        if (d % h != 0) throw std::invalid_argument("MultiHeadAttention: dim % heads != 0");
    }

    // bias: optional heads-sized vector of (n x n) logit-bias Vars
    // key_mask: true = attendable; masked logits get a large negative constant
    Var operator()(Tape& t, Var x, const std::vector<Var>* bias = nullptr,
                   const std::vector<bool>* key_mask = nullptr) {
        const Eigen::Index n = x->val.rows();
        const Eigen::Index dk = dim / heads;
        const double scl = 1.0 / std::sqrt(static_cast<double>(dk));
        Var q = Wq(t, x), k = Wk(t, x), v = Wv(t, x);
        Mat maskmat = Mat::Zero(n, n);
        if (key_mask) {
            for (Eigen::Index j = 0; j < n; ++j)
                if (!(*key_mask)[static_cast<size_t>(j)]) maskmat.col(j).setConstant(-1e9);
        }
        std::vector<Var> head_outs;
        for (int h = 0; h < heads; ++h) {
            Var qh = ad::slice_cols(t, q, h * dk, dk);
            Var kh = ad::slice_cols(t, k, h * dk, dk);
            Var vh = ad::slice_cols(t, v, h * dk, dk);
            Var logits = ad::scale(t, ad::matmul(t, qh, ad::transpose(t, kh)), scl);
            if (bias) logits = ad::add(t, logits, (*bias)[static_cast<size_t>(h)]);
            if (key_mask) logits = ad::add(t, logits, t.constant(maskmat));
            Var attn = ad::softmax_rows(t, logits);
            head_outs.push_back(ad::matmul(t, attn, vh));
        }
        return Wo(t, ad::concat_cols(t, head_outs));
    }

    void collect(std::vector<Param*>& ps) {
        Wq.collect(ps);
        Wk.collect(ps);
        Wv.collect(ps);
        Wo.collect(ps);
    }
};

// post-LN transformer encoder layer: LN(x + MHA(x)), LN(x + FFN(x))
struct TransformerLayer {
    MultiHeadAttention mha;
    Linear ff1, ff2;
    LayerNorm ln1, ln2;

    TransformerLayer() = default;
    TransformerLayer(const std::string& name, Eigen::Index d, Eigen::Index ff, int heads, Rng& rng)
        : mha(name + ".mha", d, heads, rng),
          ff1(name + ".ff1", d, ff, rng),
          ff2(name + ".ff2", ff, d, rng),
          ln1(name + ".ln1", d),
          ln2(name + ".ln2", d) {}

    Var operator()(Tape& t, Var x) {
        Var a = ln1(t, ad::add(t, x, mha(t, x)));
        Var f = ff2(t, ad::gelu(t, ff1(t, a)));
        return ln2(t, ad::add(t, a, f));
    }
    void collect(std::vector<Param*>& ps) {
        mha.collect(ps);
        ff1.collect(ps);
        ff2.collect(ps);
        ln1.collect(ps);
        ln2.collect(ps);
    }
};

struct GRUCell {
    Linear Wz, Uz, Wr, Ur, Wh, Uh;
    Eigen::Index hidden = 0;

    GRUCell() = default;
    GRUCell(const std::string& name, Eigen::Index in, Eigen::Index h, Rng& rng)
        : Wz(name + ".Wz", in, h, rng),
          Uz(name + ".Uz", h, h, rng),
          Wr(name + ".Wr", in, h, rng),
          Ur(name + ".Ur", h, h, rng),
          Wh(name + ".Wh", in, h, rng),
          Uh(name + ".Uh", h, h, rng),
          hidden(h) {}

    // x: 1 x in, h: 1 x hidden -> new hidden 1 x hidden
    Var operator()(Tape& t, Var x, Var h) {
        Var z = ad::sigmoid(t, ad::add(t, Wz(t, x), Uz(t, h)));
        Var r = ad::sigmoid(t, ad::add(t, Wr(t, x), Ur(t, h)));
        Var hh = ad::tanh_op(t, ad::add(t, Wh(t, x), Uh(t, ad::cmul(t, r, h))));
        // h' = (1-z) * h + z * hh
        Var one = t.constant(Mat::Ones(1, hidden));
        return ad::add(t, ad::cmul(t, ad::sub(t, one, z), h), ad::cmul(t, z, hh));
    }
    void collect(std::vector<Param*>& ps) {
        Wz.collect(ps);
        Uz.collect(ps);
        Wr.collect(ps);
        Ur.collect(ps);
        Wh.collect(ps);
        Uh.collect(ps);
    }
};

// ---------------------------------------------------------------------------
// optimizer

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;

    void step(std::vector<Param*>& params) {
        ++step_count;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (Param* p : params) {
            if (p->frozen) continue;
            p->m = beta1 * p->m + (1.0 - beta1) * p->grad;
            p->v = beta2 * p->v + (1.0 - beta2) * p->grad.cwiseAbs2();
            Mat mhat = p->m / bc1;
            Mat vhat = p->v / bc2;
            p->value -= lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(vhat.rows(), vhat.cols(), eps));
        }
    }

    static void zero_grad(std::vector<Param*>& params) {
        for (Param* p : params) p->zero_grad();
    }
};

}  // namespace lanerep::nn
