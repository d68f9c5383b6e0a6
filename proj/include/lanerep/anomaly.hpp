#pragma once

// Synthetic anomaly injection, GRU per-window detector, Youden-J threshold
// selection, and clean/corrupted timeline scoring.

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanerep/dataset.hpp"
#include "lanerep/nn.hpp"
#include "lanerep/rng.hpp"

namespace lanerep::anomaly {

using ad::Mat;
using ad::Tape;
using ad::Var;

enum class AnomalyKind { speed_reduction, trajectory_dropout, lateral_deviation };

inline const char* anomaly_kind_name(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::speed_reduction: return "speed_reduction";
        case AnomalyKind::trajectory_dropout: return "trajectory_dropout";
        case AnomalyKind::lateral_deviation: return "lateral_deviation";
    }
    throw std::invalid_argument("anomaly_kind_name: unknown kind");
}

struct AnomalySpec {
    AnomalyKind kind = AnomalyKind::speed_reduction;
    double severity = 0.5;  // lateral_deviation default is 0.05 (normalized units)

    void validate() const {
        if (kind == AnomalyKind::lateral_deviation) {
            if (severity <= 0.0) throw std::invalid_argument("AnomalySpec: lateral shift must be > 0");
        } else if (severity <= 0.0 || severity > 1.0) {
            throw std::invalid_argument("AnomalySpec: severity must be in (0,1]");
        }
    }
};

inline AnomalySpec default_spec(AnomalyKind k) {
    AnomalySpec s;
    s.kind = k;
    s.severity = (k == AnomalyKind::lateral_deviation) ? 0.05 : 0.5;
    return s;
}

// Pick an injection kind that actually perturbs the window. Dropout keeps at
// least one tracklet, so on a single-tracklet window it removes nothing; a
// no-op labeled anomalous would poison both training and evaluation.
inline AnomalyKind choose_kind(const data::WindowRecord& w, Rng& rng) {
    auto k = static_cast<AnomalyKind>(rng.uniform_int(0, 2));
    if (k == AnomalyKind::trajectory_dropout && w.raw_tracklets.size() < 2)
        k = rng.bernoulli(0.5) ? AnomalyKind::speed_reduction : AnomalyKind::lateral_deviation;
    return k;
}

// Corrupt a window in place: mutate raw tracklets, set anomaly_label = 1 and
// recompute stats so the descriptor stream sees the corruption.
inline void inject(data::WindowRecord& w, const AnomalySpec& spec, const geom::Polyline& centerline,
                   Rng& rng) {
    spec.validate();
    if (!w.is_valid) throw std::invalid_argument("inject: window is not valid");
    switch (spec.kind) {
        case AnomalyKind::speed_reduction: {
            // scale per-step displacements about the tracklet start
            double f = 1.0 - spec.severity;
            for (auto& tr : w.raw_tracklets) {
                if (tr.empty()) continue;
                geom::Point p0 = tr.front();
                for (auto& p : tr) {
                    p.x = p0.x + f * (p.x - p0.x);
                    p.y = p0.y + f * (p.y - p0.y);
                }
            }
            break;
        }
        case AnomalyKind::trajectory_dropout: {
            int n = static_cast<int>(w.raw_tracklets.size());
            int drop = std::min(static_cast<int>(std::floor(spec.severity * n)), n - 1);
            std::vector<size_t> idx(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = static_cast<size_t>(i);
            rng.shuffle(idx);
            idx.resize(static_cast<size_t>(drop));
            std::sort(idx.rbegin(), idx.rend());
            for (size_t i : idx) w.raw_tracklets.erase(w.raw_tracklets.begin() + static_cast<long>(i));
            break;
        }
        case AnomalyKind::lateral_deviation: {
            // shift every point along the left normal of its nearest
            // centerline segment
            for (auto& tr : w.raw_tracklets)
                for (auto& p : tr) {
                    double best = std::numeric_limits<double>::infinity();
                    geom::Point nrm{0.0, 0.0};
                    for (size_t s = 0; s + 1 < centerline.size(); ++s) {
                        double d = geom::point_to_segment_distance(p, centerline[s], centerline[s + 1]);
                        if (d < best) {
                            best = d;
                            double dx = centerline[s + 1].x - centerline[s].x;
                            double dy = centerline[s + 1].y - centerline[s].y;
                            double len = std::hypot(dx, dy);
                            if (len > 0) nrm = {-dy / len, dx / len};
                        }
                    }
                    p.x += spec.severity * nrm.x;
                    p.y += spec.severity * nrm.y;
                }
            break;
        }
    }
    data::refresh_window(w, centerline);
    w.anomaly_label = 1;
}

struct DetectorConfig {
    int input_dim = 128;
    int gru_hidden = 64;
    int head_hidden = 32;
    double threshold = 0.5;  // replaced by Youden-J after validation
    uint64_t seed = 11;

    void validate() const {
        if (threshold <= 0.0 || threshold >= 1.0)
            throw std::invalid_argument("DetectorConfig: threshold must be in (0,1)");
        if (gru_hidden < 1 || head_hidden < 1) throw std::invalid_argument("DetectorConfig: bad dims");
    }
};

struct Detector {
    DetectorConfig cfg;
    nn::GRUCell gru;
    nn::Linear head1, head2;

    explicit Detector(const DetectorConfig& c = {}) : cfg(c) {
        cfg.validate();
        Rng rng(cfg.seed);
        gru = nn::GRUCell("detector.gru", cfg.input_dim, cfg.gru_hidden, rng);
        head1 = nn::Linear("detector.head1", cfg.gru_hidden, cfg.head_hidden, rng);
        head2 = nn::Linear("detector.head2", cfg.head_hidden, 1, rng);
    }

    std::vector<ad::Param*> params() {
        std::vector<ad::Param*> ps;
        gru.collect(ps);
        head1.collect(ps);
        head2.collect(ps);
        return ps;
    }

    void load_from(const std::map<std::string, Mat>& tensors) {
        for (ad::Param* p : params()) {
            auto it = tensors.find(p->name);
            if (it == tensors.end()) throw std::runtime_error("checkpoint missing tensor " + p->name);
            p->value = it->second;
        }
    }

    // Per-window logits over one lane's embedding sequence. Invalid windows
    // (nullptr entries) pass the hidden state through and yield nullptr.
    std::vector<Var> sequence_logits(Tape& t, const std::vector<Var>& z_windows) {
        Var h = t.constant(Mat::Zero(1, cfg.gru_hidden));
        std::vector<Var> logits(z_windows.size(), nullptr);
        for (size_t w = 0; w < z_windows.size(); ++w) {
            if (!z_windows[w]) continue;
            h = gru(t, z_windows[w], h);
            logits[w] = head2(t, ad::gelu(t, head1(t, h)));
        }
        return logits;
    }

    // Inference: probabilities aligned with the window sequence; invalid
    // windows emit probability 0 with masked[w] = true.
    std::vector<double> detect_sequence(const std::vector<Eigen::RowVectorXd>& z, const std::vector<bool>& valid,
                                        std::vector<bool>* masked = nullptr) {
        if (z.size() != valid.size() || z.empty())
            throw std::invalid_argument("detect_sequence: bad shapes");
        Tape t;
        std::vector<Var> zs(z.size(), nullptr);
        for (size_t w = 0; w < z.size(); ++w)
            if (valid[w]) zs[w] = t.constant(z[w]);
        auto logits = sequence_logits(t, zs);
        std::vector<double> probs(z.size(), 0.0);
        if (masked) masked->assign(z.size(), false);
        for (size_t w = 0; w < z.size(); ++w) {
            if (!logits[w]) {
                if (masked) (*masked)[w] = true;
                continue;
            }
            probs[w] = 1.0 / (1.0 + std::exp(-logits[w]->val(0, 0)));
        }
        return probs;
    }
};

// Youden-J threshold over midpoints of sorted distinct scores; ties -> lowest
inline double select_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("select_threshold: bad shapes");
    long npos = std::count(labels.begin(), labels.end(), 1);
    long nneg = static_cast<long>(labels.size()) - npos;
    if (npos == 0 || nneg == 0)
        throw std::invalid_argument("select_threshold: validation set has a single class");
    std::vector<double> distinct = scores;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> candidates;
    for (size_t i = 0; i + 1 < distinct.size(); ++i)
        candidates.push_back(0.5 * (distinct[i] + distinct[i + 1]));
    if (candidates.empty()) candidates.push_back(distinct[0]);  // all scores equal
    double best_j = -std::numeric_limits<double>::infinity();
    double best_thr = candidates[0];
    for (double thr : candidates) {
        long tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] > thr) {
                if (labels[i] == 1)
                    ++tp;
                else
                    ++fp;
            }
        }
        double j = static_cast<double>(tp) / npos - static_cast<double>(fp) / nneg;
        if (j > best_j + 1e-15) {
            best_j = j;
            best_thr = thr;
        }
    }
    return best_thr;
}

struct Timeline {
    std::string lane_id;
    std::vector<double> clean_prob, corrupted_prob;
    std::vector<bool> injected, valid;
};

inline void write_timeline_csv(const Timeline& tl, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_timeline_csv: cannot write " + path);
    os << "window,clean_prob,corrupted_prob,injected_flag,valid_flag\n";
    for (size_t w = 0; w < tl.clean_prob.size(); ++w)
        os << w << ',' << tl.clean_prob[w] << ',' << tl.corrupted_prob[w] << ','
           << (tl.injected[w] ? 1 : 0) << ',' << (tl.valid[w] ? 1 : 0) << '\n';
}

}  // namespace lanerep::anomaly
