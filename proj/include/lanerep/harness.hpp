// Pipeline glue shared by the CLI and the end-to-end test binaries:
// checkpoint config echoes, frozen-encoder lane embedding, anomaly
// corruption, detector-only fitting, and the split anomaly evaluation.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lanerep/anomaly.hpp"
#include "lanerep/checkpoint.hpp"
#include "lanerep/dataset.hpp"
#include "lanerep/diffusion.hpp"
#include "lanerep/encoder.hpp"
#include "lanerep/evalkit.hpp"
#include "lanerep/losses.hpp"

namespace lanerep::harness {

inline model::EncoderConfig encoder_config_from_checkpoint(const nn::Checkpoint& c) {
    model::EncoderConfig ec;
    if (c.config.contains("encoder")) {
        const nlohmann::json& e = c.config.at("encoder");
        ec.transformer_layers = e.value("transformer_layers", ec.transformer_layers);
        ec.attention_heads = e.value("attention_heads", ec.attention_heads);
        ec.ffn_dim = e.value("ffn_dim", ec.ffn_dim);
        ec.dropout_rate = e.value("dropout_rate", ec.dropout_rate);
        ec.geometry_dropout_p = e.value("geometry_dropout_p", ec.geometry_dropout_p);
        ec.seed = e.value("seed", ec.seed);
    }
    return ec;
}

// restore the stream gating a regime trained with; single-stream regimes zero
// the other stream embeddings at inference too, or the untrained streams (and
// the role vector inside the descriptor) would leak into evaluation
inline void apply_regime_streams(model::LaneEncoder& enc, const std::string& regime) {
    enc.disable_geometry = (regime == "trajectory_only");
    enc.disable_trajectory = (regime == "geometry_only");
    enc.disable_descriptor = (regime == "geometry_only" || regime == "trajectory_only");
}

inline anomaly::DetectorConfig detector_config_from_checkpoint(const nn::Checkpoint& c) {
    anomaly::DetectorConfig dc;
    if (c.config.contains("detector")) {
        const nlohmann::json& d = c.config.at("detector");
        dc.gru_hidden = d.value("gru_hidden", dc.gru_hidden);
        dc.head_hidden = d.value("head_hidden", dc.head_hidden);
        dc.threshold = d.value("threshold", dc.threshold);
        dc.seed = d.value("seed", dc.seed);
    }
    return dc;
}

inline gen::DiffusionConfig diffusion_config_from_checkpoint(const nn::Checkpoint& c) {
    gen::DiffusionConfig dc;
    const nlohmann::json& e = c.config;
    dc.T_diff = e.value("T_diff", dc.T_diff);
    dc.beta_start = e.value("beta_start", dc.beta_start);
    dc.beta_end = e.value("beta_end", dc.beta_end);
    dc.t0 = e.value("t0", dc.t0);
    dc.denoiser_hidden = e.value("denoiser_hidden", dc.denoiser_hidden);
    dc.denoiser_layers = e.value("denoiser_layers", dc.denoiser_layers);
    dc.time_embed_dim = e.value("time_embed_dim", dc.time_embed_dim);
    dc.n_candidates = e.value("n_candidates", dc.n_candidates);
    dc.seed = e.value("seed", dc.seed);
    return dc;
}

// per-lane mean descriptor: mean window stats plus the role vector
inline Eigen::Matrix<double, 9, 1> lane_mean_descriptor(const data::LaneRecord& r) {
    Eigen::Matrix<double, 9, 1> d = Eigen::Matrix<double, 9, 1>::Zero();
    Eigen::Vector4d s = Eigen::Vector4d::Zero();
    int n = 0;
    for (const auto& w : r.windows)
        if (w.is_valid) {
            s += w.stats;
            ++n;
        }
    d.head<4>() = n ? (s / n).eval() : s;
    d.tail<5>() = r.role_vector;
    return d;
}

// embed one lane (optionally corrupted) through the frozen encoder, one
// row per window; invalid windows come back as zero rows with valid=false
inline void embed_lane_windows(model::LaneEncoder& enc, const data::LaneRecord& rec,
                               std::vector<Eigen::RowVectorXd>& z, std::vector<bool>& valid) {
    ad::Tape t;
    std::vector<model::LaneInput> one{model::make_lane_input(rec)};
    auto out = enc.forward(t, one, false, nullptr);
    z.clear();
    valid.clear();
    for (auto* zw : out.z[0]) {
        z.emplace_back(zw ? Eigen::RowVectorXd(zw->val.row(0))
                          : Eigen::RowVectorXd::Zero(enc.cfg.embed_dim).eval());
        valid.push_back(zw != nullptr);
    }
}

inline data::LaneRecord corrupt_lane(const data::LaneRecord& rec, double prob, Rng& rng) {
    data::LaneRecord copy = rec;
    for (auto& w : copy.windows) {
        if (!w.is_valid || !rng.bernoulli(prob)) continue;
        auto kind = anomaly::choose_kind(w, rng);
        anomaly::inject(w, anomaly::default_spec(kind), copy.centerline_cam, rng);
    }
    return copy;
}

// train a fresh detector against a frozen encoder over precomputed corrupted
// variants of every lane (used by the window-size sweep)
inline void train_detector_frozen(model::LaneEncoder& enc, anomaly::Detector& det,
                                  const data::Dataset& ds, uint64_t seed, int variants,
                                  int epochs, double corruption_prob) {
    struct Seq {
        std::vector<Eigen::RowVectorXd> z;
        std::vector<bool> valid;
        std::vector<int> labels;
    };
    std::vector<Seq> seqs;
    Rng rng = Rng(seed).substream("detfit");
    for (const auto& rec : ds.records)
        for (int v = 0; v < variants; ++v) {
            data::LaneRecord c = v == 0 ? rec : corrupt_lane(rec, corruption_prob, rng);
            Seq s;
            embed_lane_windows(enc, c, s.z, s.valid);
            for (const auto& w : c.windows) s.labels.push_back(w.anomaly_label);
            seqs.push_back(std::move(s));
        }
    auto params = det.params();
    nn::Adam opt;
    std::vector<size_t> order(seqs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (size_t si : order) {
            const Seq& s = seqs[si];
            ad::Tape t;
            std::vector<ad::Var> zs(s.z.size(), nullptr);
            for (size_t w = 0; w < s.z.size(); ++w)
                if (s.valid[w]) zs[w] = t.constant(s.z[w]);
            auto logits = det.sequence_logits(t, zs);
            std::vector<ad::Var> wl;
            std::vector<double> labels;
            std::vector<bool> valid;
            for (size_t w = 0; w < logits.size(); ++w) {
                if (!logits[w]) continue;
                wl.push_back(logits[w]);
                labels.push_back(s.labels[w]);
                valid.push_back(true);
            }
            if (wl.empty()) continue;
            ad::Var loss = train::temporal_loss(t, wl, labels, valid);
            nn::Adam::zero_grad(params);
            t.backward(loss);
            opt.step(params);
        }
    }
}

struct AnomalyEvalResult {
    double auroc = 0.0;
    double youden_threshold = 0.5;
    eval::ThresholdMetrics at_default, at_youden;
    std::vector<std::pair<double, double>> roc;
    long n_windows = 0;
};

// corrupt the dataset with a fixed substream, score every valid window, pick
// the Youden threshold on even-indexed lanes, report metrics on odd-indexed
inline AnomalyEvalResult eval_anomaly_on(model::LaneEncoder& enc, anomaly::Detector& det,
                                         const data::Dataset& ds, uint64_t seed,
                                         double corruption_prob) {
    Rng rng = Rng(seed).substream("anomaly-eval");
    std::vector<double> val_scores, test_scores, all_scores;
    std::vector<int> val_labels, test_labels, all_labels;
    size_t lane_idx = 0;
    for (const auto& rec : ds.records) {
        data::LaneRecord c = corrupt_lane(rec, corruption_prob, rng);
        std::vector<Eigen::RowVectorXd> z;
        std::vector<bool> valid;
        embed_lane_windows(enc, c, z, valid);
        auto probs = det.detect_sequence(z, valid);
        bool is_val = lane_idx % 2 == 0;
        for (size_t w = 0; w < probs.size(); ++w) {
            if (!valid[w]) continue;
            (is_val ? val_scores : test_scores).push_back(probs[w]);
            (is_val ? val_labels : test_labels).push_back(c.windows[w].anomaly_label);
            all_scores.push_back(probs[w]);
            all_labels.push_back(c.windows[w].anomaly_label);
        }
        ++lane_idx;
    }
    AnomalyEvalResult r;
    r.n_windows = static_cast<long>(all_scores.size());
    auto [curve, auc] = eval::roc_auroc(all_scores, all_labels);
    r.roc = curve;
    r.auroc = auc;
    r.youden_threshold = anomaly::select_threshold(val_scores, val_labels);
    r.at_default = eval::threshold_metrics(test_scores, test_labels, det.cfg.threshold);
    r.at_youden = eval::threshold_metrics(test_scores, test_labels, r.youden_threshold);
    return r;
}

}  // namespace lanerep::harness
