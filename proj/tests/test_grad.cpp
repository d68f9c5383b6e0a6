// Finite-difference gradient checks for every parameterized block, in double
// precision: central differences with step 1e-5, relative error <= 1e-3.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lanerep/anomaly.hpp"
#include "lanerep/dataset.hpp"
#include "lanerep/diffusion.hpp"
#include "lanerep/encoder.hpp"
#include "lanerep/losses.hpp"
#include "lanerep/nn.hpp"
#include "lanerep/scene.hpp"

using namespace lanerep;
using ad::Tape;
using ad::Var;

namespace {

// compare analytic gradients against central differences on a handful of
// randomly chosen coordinates of every parameter
template <typename F>
void check_grads(const std::vector<nn::Param*>& ps, F&& loss_fn, int samples = 3,
                 double step = 1e-5, double tol = 1e-3) {
    for (auto* p : ps) p->grad.setZero();
    {
        Tape t;
        Var L = loss_fn(t);
        t.backward(L);
    }
    Rng rng(424242);
    for (auto* p : ps) {
        INFO("parameter " << p->name);
        for (int s = 0; s < samples; ++s) {
            auto i = static_cast<Eigen::Index>(rng.uniform_int(0, p->value.rows() - 1));
            auto j = static_cast<Eigen::Index>(rng.uniform_int(0, p->value.cols() - 1));
            double orig = p->value(i, j);
            p->value(i, j) = orig + step;
            double lp;
            {
                Tape t;
                lp = loss_fn(t)->val(0, 0);
            }
            p->value(i, j) = orig - step;
            double lm;
            {
                Tape t;
                lm = loss_fn(t)->val(0, 0);
            }
            p->value(i, j) = orig;
            double fd = (lp - lm) / (2.0 * step);
            double an = p->grad(i, j);
            // structurally zero gradients (e.g. key bias under softmax shift
            // invariance) only show central-difference rounding noise
            if (std::abs(fd) < 1e-6 && std::abs(an) < 1e-6) continue;
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            INFO("coord (" << i << "," << j << ") fd=" << fd << " analytic=" << an);
            REQUIRE(std::abs(fd - an) / denom < tol);
        }
    }
}

Eigen::MatrixXd random_mat(Eigen::Index r, Eigen::Index c, uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("gradients: linear layer") {
    Rng rng(1);
    nn::Linear lin("lin", 5, 4, rng);
    Eigen::MatrixXd x = random_mat(6, 5, 2);
    std::vector<nn::Param*> ps;
    lin.collect(ps);
    check_grads(ps, [&](Tape& t) { return ad::mean_all(t, ad::gelu(t, lin(t, t.constant(x)))); });
}

TEST_CASE("gradients: layer norm") {
    Rng rng(3);
    nn::LayerNorm ln("ln", 6);
    // break the trivial gamma symmetry
    ln.gamma.value = random_mat(1, 6, 4).array() + 1.5;
    Eigen::MatrixXd x = random_mat(5, 6, 5);
    std::vector<nn::Param*> ps;
    ln.collect(ps);
    check_grads(ps, [&](Tape& t) { return ad::mean_all(t, ad::gelu(t, ln(t, t.constant(x)))); });
}

TEST_CASE("gradients: batch norm in training mode") {
    Rng rng(6);
    nn::BatchNorm bn("bn", 4);
    bn.gamma.value = random_mat(1, 4, 7).array() + 1.2;
    Eigen::MatrixXd x = random_mat(8, 4, 8);
    std::vector<nn::Param*> ps;
    bn.collect(ps);
    // training mode mutates running statistics; restore them per evaluation
    auto rm = bn.running_mean, rv = bn.running_var;
    check_grads(ps, [&](Tape& t) {
        bn.running_mean = rm;
        bn.running_var = rv;
        return ad::mean_all(t, ad::gelu(t, bn(t, t.constant(x), true)));
    });
}

TEST_CASE("gradients: multi-head attention with pairwise bias and key mask") {
    Rng rng(9);
    nn::MultiHeadAttention mha("mha", 8, 2, rng);
    Eigen::MatrixXd x = random_mat(4, 8, 10);
    nn::Linear bias_proj("bias", 3, 2, rng);
    Eigen::MatrixXd feats = random_mat(16, 3, 11);
    std::vector<bool> key_mask{true, true, true, false};
    std::vector<nn::Param*> ps;
    mha.collect(ps);
    bias_proj.collect(ps);
    check_grads(ps, [&](Tape& t) {
        Var b = bias_proj(t, t.constant(feats));  // 16 x heads
        std::vector<Var> bias;
        for (int h = 0; h < 2; ++h)
            bias.push_back(ad::reshape_rm(t, ad::slice_cols(t, b, h, 1), 4, 4));
        return ad::mean_all(t, ad::gelu(t, mha(t, t.constant(x), &bias, &key_mask)));
    });
}

TEST_CASE("gradients: transformer layer") {
    Rng rng(12);
    nn::TransformerLayer tf("tf", 8, 16, 2, rng);
    Eigen::MatrixXd x = random_mat(5, 8, 13);
    std::vector<nn::Param*> ps;
    tf.collect(ps);
    check_grads(ps, [&](Tape& t) { return ad::mean_all(t, ad::gelu(t, tf(t, t.constant(x)))); }, 2);
}

TEST_CASE("gradients: GRU sequence with temporal BCE head") {
    Rng rng(15);
    anomaly::DetectorConfig dc;
    dc.input_dim = 6;
    dc.gru_hidden = 5;
    dc.head_hidden = 4;
    anomaly::Detector det(dc);
    std::vector<Eigen::MatrixXd> xs;
    for (int w = 0; w < 4; ++w) xs.push_back(random_mat(1, 6, 20 + w));
    std::vector<double> labels{0, 1, 0, 1};
    check_grads(det.params(), [&](Tape& t) {
        std::vector<Var> zs;
        for (auto& x : xs) zs.push_back(t.constant(x));
        zs.insert(zs.begin() + 2, nullptr);  // gap: invalid window passthrough
        auto logits = det.sequence_logits(t, zs);
        std::vector<Var> wl;
        std::vector<double> ls;
        std::vector<bool> valid;
        for (size_t i = 0; i < logits.size(); ++i) {
            if (!logits[i]) continue;
            wl.push_back(logits[i]);
            ls.push_back(labels[wl.size() - 1]);
            valid.push_back(true);
        }
        return train::temporal_loss(t, wl, ls, valid);
    });
}

TEST_CASE("gradients: FiLM denoiser") {
    gen::DiffusionConfig cfg;
    cfg.denoiser_hidden = 24;
    cfg.denoiser_layers = 2;
    cfg.time_embed_dim = 8;
    gen::Denoiser den(cfg);
    // move FiLM projections off their zero init so their gradients are live
    Rng rng(31);
    for (auto& g : den.film_gamma) g.W.value = 0.05 * random_mat(g.W.value.rows(), g.W.value.cols(), rng.next_u64());
    for (auto& b : den.film_beta) b.W.value = 0.05 * random_mat(b.W.value.rows(), b.W.value.cols(), rng.next_u64());
    Eigen::MatrixXd x = random_mat(3, 32, 32), cond = random_mat(3, 128, 33);
    Eigen::MatrixXd target = random_mat(3, 32, 34);
    check_grads(den.params(), [&](Tape& t) {
        Var out = den.forward(t, t.constant(x), {3, 40, 77}, t.constant(cond));
        Var diff = ad::sub(t, out, t.constant(target));
        return ad::mean_all(t, ad::cmul(t, diff, diff));
    }, 2);
}

TEST_CASE("gradients: full encoder through the combined training objective") {
    // a tiny real scene so the encoder sees realistic inputs
    scene::SceneConfig sc;
    sc.n_cameras = 1;
    sc.groups_per_camera = 1;
    sc.total_groups = 0;
    sc.lanes_per_group_range = {3, 3};
    // tracklet counts scale with frames_per_window/300; keep windows long
    // enough that every window holds at least one tracklet
    sc.frames_per_window = 150;
    sc.n_windows = 2;
    sc.tracklets_per_lane_per_window_range = {3, 4};
    sc.seed = 5;
    auto ds = scene::generate_scene(sc);
    auto built = data::build_dataset(ds);
    REQUIRE(built.records.size() == 3);

    model::EncoderConfig ec;
    ec.transformer_layers = 1;
    ec.attention_heads = 2;
    ec.ffn_dim = 32;
    ec.dropout_rate = 0.0;  // deterministic forward for finite differences
    model::LaneEncoder enc(ec);

    std::vector<model::LaneInput> lanes;
    for (const auto& r : built.records) lanes.push_back(model::make_lane_input(r));

    Eigen::MatrixXd rank_t(3, 1), edge_t(3, 2), size_t_(3, 1);
    std::vector<int> pos{1, 0, -1};
    for (int i = 0; i < 3; ++i) {
        rank_t(i, 0) = built.records[i].truth_rank;
        edge_t(i, 0) = built.records[i].truth_leftmost ? 1.0 : 0.0;
        edge_t(i, 1) = built.records[i].truth_rightmost ? 1.0 : 0.0;
        size_t_(i, 0) = std::min(1.0, built.records[i].truth_group_size / 8.0);
    }

    check_grads(enc.params(), [&](Tape& t) {
        auto out = enc.forward(t, lanes, true, nullptr);
        Var proj = ad::concat_rows(t, out.projection);
        Var ctr = train::info_nce(t, proj, pos, 0.07, nullptr);
        auto rl = train::role_loss(t, out.rank_logits, rank_t, out.edge_logits, edge_t,
                                   out.size_logits, size_t_);
        Var gc = train::group_consistency_loss(t, out.rank_logits, {{0, 1, 2}});
        Var structural = ad::add(t, ad::add(t, rl.combined, gc), ctr);
        return ad::add(t, structural, ad::mean_all(t, ad::concat_rows(t, out.attended)));
    }, 1, 1e-5, 2e-3);
}
