#pragma once

// Training objectives: InfoNCE over projection embeddings, role supervision,
// group rank-consistency, the three-phase weight schedule, and the
// validity-weighted temporal anomaly loss.

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lanerep/ad.hpp"

namespace lanerep::train {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct LossWeights {
    double w_ctr = 1.0;
    double w_role = 1.0;
    double alpha = 1.0;  // temporal mix
    double beta = 1.0;   // structural mix
    double tau = 0.07;
    double group_consistency_weight = 1.0;

    void validate() const {
        if (w_ctr < 0 || w_role < 0 || alpha < 0 || beta < 0 || tau <= 0 ||
            group_consistency_weight < 0)
            throw std::invalid_argument("LossWeights: negative weight or non-positive tau");
    }
};

enum class Regime {
    joint,
    two_stage_frozen,
    contrastive_only,
    geometry_only,
    trajectory_only,
    traj_stats_baseline,
};

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::joint: return "joint";
        case Regime::two_stage_frozen: return "two_stage_frozen";
        case Regime::contrastive_only: return "contrastive_only";
        case Regime::geometry_only: return "geometry_only";
        case Regime::trajectory_only: return "trajectory_only";
        case Regime::traj_stats_baseline: return "traj_stats_baseline";
    }
    throw std::invalid_argument("regime_name: unknown regime");
}

inline Regime regime_from_name(const std::string& s) {
    for (Regime r : {Regime::joint, Regime::two_stage_frozen, Regime::contrastive_only,
                     Regime::geometry_only, Regime::trajectory_only, Regime::traj_stats_baseline})
        if (s == regime_name(r)) return r;
    throw std::invalid_argument("unknown regime: " + s);
}

// InfoNCE over unit-norm projection rows. positive_index[i] = in-batch index
// of anchor i's positive, or -1 when it has none (excluded from the mean,
// counted in skipped). Self-similarity is masked out of the denominator.
inline Var info_nce(Tape& t, Var projections, const std::vector<int>& positive_index, double tau,
                    int* skipped = nullptr) {
    const Eigen::Index B = projections->val.rows();
    if (static_cast<Eigen::Index>(positive_index.size()) != B)
        throw std::invalid_argument("info_nce: positive_index size mismatch");
    Var S = ad::scale(t, ad::matmul(t, projections, ad::transpose(t, projections)), 1.0 / tau);
    Mat selfmask = Mat::Zero(B, B);
    for (Eigen::Index i = 0; i < B; ++i) selfmask(i, i) = -1e9;
    Var P = ad::softmax_rows(t, ad::add(t, S, t.constant(selfmask)));

    std::vector<Var> terms;
    int skip = 0;
    for (Eigen::Index i = 0; i < B; ++i) {
        int pos = positive_index[static_cast<size_t>(i)];
        if (pos < 0) {
            ++skip;
            continue;
        }
        if (pos == i || pos >= B) throw std::invalid_argument("info_nce: bad positive index");
        Var pij = ad::slice_cols(t, ad::slice_rows(t, P, i, 1), pos, 1);
        terms.push_back(ad::scale(t, ad::log_op(t, pij), -1.0));
    }
    if (skipped) *skipped = skip;
    if (terms.empty()) throw std::invalid_argument("info_nce: no anchor has a positive");
    return ad::mean_all(t, ad::concat_rows(t, terms));
}

struct RoleLoss {
    Var rank = nullptr, edge = nullptr, size = nullptr, combined = nullptr;
};

inline void check_unit_targets(const Mat& m, const char* what) {
    if ((m.array() < 0.0).any() || (m.array() > 1.0).any())
        throw std::invalid_argument(std::string("role_loss: ") + what + " targets outside [0,1]");
}

// L_role = L_rank + L_edge + 0.5 * L_size, each a mean BCE-with-logits
inline RoleLoss role_loss(Tape& t, Var rank_logits, const Mat& rank_targets, Var edge_logits,
                          const Mat& edge_targets, Var size_logits, const Mat& size_targets) {
    check_unit_targets(rank_targets, "rank");
    check_unit_targets(edge_targets, "edge");
    check_unit_targets(size_targets, "size");
    RoleLoss rl;
    rl.rank = ad::mean_all(t, ad::bce_with_logits(t, rank_logits, rank_targets));
    rl.edge = ad::mean_all(t, ad::bce_with_logits(t, edge_logits, edge_targets));
    rl.size = ad::mean_all(t, ad::bce_with_logits(t, size_logits, size_targets));
    rl.combined = ad::add(t, ad::add(t, rl.rank, rl.edge), ad::scale(t, rl.size, 0.5));
    return rl;
}

// (1/G) sum_g || sort(sigmoid(logits_g)) - linspace(0,1,n_g) ||^2 over groups
// of size >= 2; singleton groups are skipped. Returns a zero constant when no
// group qualifies.
inline Var group_consistency_loss(Tape& t, Var rank_logits,
                                  const std::vector<std::vector<int>>& groups) {
    std::vector<Var> per_group;
    for (const auto& g : groups) {
        const int n = static_cast<int>(g.size());
        if (n < 2) continue;
        std::vector<Var> rows;
        for (int idx : g) rows.push_back(ad::slice_rows(t, rank_logits, idx, 1));
        Var s = ad::sigmoid(t, ad::concat_rows(t, rows));
        std::vector<Eigen::Index> perm(static_cast<size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::stable_sort(perm.begin(), perm.end(), [&](Eigen::Index a, Eigen::Index b) {
            return s->val(a, 0) < s->val(b, 0);
        });
        Var sorted = ad::gather_rows(t, s, perm);
        Mat grid(n, 1);
        for (int i = 0; i < n; ++i) grid(i, 0) = static_cast<double>(i) / (n - 1);
        Var d = ad::sub(t, sorted, t.constant(grid));
        per_group.push_back(ad::sum_all(t, ad::cmul(t, d, d)));
    }
    if (per_group.empty()) return t.constant(Mat::Zero(1, 1));
    return ad::mean_all(t, ad::concat_rows(t, per_group));
}

// role-dominant warm-up / balanced / contrastive fine-tune
inline std::pair<double, double> phase_weights(int epoch, int total_epochs) {
    if (total_epochs <= 0) throw std::invalid_argument("phase_weights: total_epochs <= 0");
    if (epoch < 0 || epoch >= total_epochs) throw std::invalid_argument("phase_weights: epoch out of range");
    double f = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    if (f < 0.3) return {0.3, 2.0};
    if (f < 0.7) return {1.0, 1.0};
    return {2.0, 0.5};
}

// validity-weighted BCE: sum(v * bce) / sum(v); 0 when nothing is valid
inline Var temporal_loss(Tape& t, const std::vector<Var>& window_logits,
                         const std::vector<double>& labels, const std::vector<bool>& valid,
                         bool* degenerate = nullptr) {
    if (window_logits.size() != labels.size() || labels.size() != valid.size())
        throw std::invalid_argument("temporal_loss: shape mismatch");
    std::vector<Var> terms;
    for (size_t i = 0; i < window_logits.size(); ++i) {
        if (!valid[i]) continue;
        Mat y(1, 1);
        y(0, 0) = labels[i];
        terms.push_back(ad::bce_with_logits(t, window_logits[i], y));
    }
    if (degenerate) *degenerate = terms.empty();
    if (terms.empty()) return t.constant(Mat::Zero(1, 1));
    return ad::mean_all(t, ad::concat_rows(t, terms));
}

}  // namespace lanerep::train
