#pragma once

// Evaluation harness: leave-one-camera-out matching, anomaly metrics,
// generation metrics, the trajectory-stats baseline, and report emission.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanerep/dataset_io.hpp"
#include "lanerep/diffusion.hpp"
#include "lanerep/encoder.hpp"
#include "lanerep/plot.hpp"

namespace lanerep::eval {

struct MatchResult {
    std::string query_id, matched_id;
    double similarity = 0.0;
    double rank_diff = 0.0;
    double query_rank = 0.0, ref_rank = 0.0;
    bool query_leftmost = false, query_rightmost = false;
    bool ref_leftmost = false, ref_rightmost = false;

    bool left_agree() const { return query_leftmost == ref_leftmost; }
    bool right_agree() const { return query_rightmost == ref_rightmost; }
};

struct LaneEmbedding {
    Eigen::RowVectorXd pooled, attended, projection;
};

// eval-mode embeddings for every lane; lanes of drop_geometry_camera are
// encoded with the geometry stream zeroed (query-side omission)
inline std::map<std::string, LaneEmbedding> encode_dataset(model::LaneEncoder& enc,
                                                           const data::Dataset& ds,
                                                           const std::string& drop_geometry_camera = "") {
    std::map<std::string, LaneEmbedding> out;
    for (const auto& cam : ds.camera_ids()) {
        ad::Tape t;
        std::vector<model::LaneInput> lanes;
        std::vector<const data::LaneRecord*> recs;
        for (const auto& r : ds.records)
            if (r.camera_id == cam) {
                lanes.push_back(model::make_lane_input(r, cam == drop_geometry_camera));
                recs.push_back(&r);
            }
        if (lanes.empty()) continue;
        auto res = enc.forward(t, lanes, false, nullptr);
        for (size_t i = 0; i < recs.size(); ++i)
            out[recs[i]->lane_id] = {res.pooled[i]->val.row(0), res.attended[i]->val.row(0),
                                     res.projection[i]->val.row(0)};
    }
    return out;
}

inline double cosine_rows(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    double na = a.norm(), nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return a.dot(b) / (na * nb);
}

enum class QueryMode { with_geometry, geometry_dropped };

// nearest-neighbor matching of one held-out camera against the rest
inline std::vector<MatchResult> loco_match(const data::Dataset& ds, model::LaneEncoder& enc,
                                           const std::string& held_out_camera, QueryMode mode) {
    auto cams = ds.camera_ids();
    if (cams.size() < 2) throw std::invalid_argument("loco_match: need >= 2 cameras");
    if (std::find(cams.begin(), cams.end(), held_out_camera) == cams.end())
        throw std::invalid_argument("loco_match: unknown camera " + held_out_camera);
    auto emb = encode_dataset(
        enc, ds, mode == QueryMode::geometry_dropped ? held_out_camera : std::string{});

    std::vector<MatchResult> out;
    for (const auto& q : ds.records) {
        if (q.camera_id != held_out_camera) continue;
        const data::LaneRecord* best = nullptr;
        double best_sim = -2.0;
        for (const auto& r : ds.records) {
            if (r.camera_id == held_out_camera) continue;
            double s = cosine_rows(emb.at(q.lane_id).pooled, emb.at(r.lane_id).pooled);
            if (s > best_sim) {
                best_sim = s;
                best = &r;
            }
        }
        MatchResult m;
        m.query_id = q.lane_id;
        m.matched_id = best->lane_id;
        m.similarity = best_sim;
        m.rank_diff = std::abs(q.truth_rank - best->truth_rank);
        m.query_rank = q.truth_rank;
        m.ref_rank = best->truth_rank;
        m.query_leftmost = q.truth_leftmost;
        m.query_rightmost = q.truth_rightmost;
        m.ref_leftmost = best->truth_leftmost;
        m.ref_rightmost = best->truth_rightmost;
        out.push_back(std::move(m));
    }
    return out;
}

inline std::vector<MatchResult> loco_sweep(const data::Dataset& ds, model::LaneEncoder& enc,
                                           QueryMode mode) {
    std::vector<MatchResult> all;
    for (const auto& cam : ds.camera_ids()) {
        auto fold = loco_match(ds, enc, cam, mode);
        all.insert(all.end(), fold.begin(), fold.end());
    }
    return all;
}

struct MatchingMetrics {
    double mean_similarity = 0.0;
    double rank_mae = 0.0;
    double edge_f1 = 0.0;
};

// edge F1: micro-average over the two edge flags as a 2-label problem
inline MatchingMetrics matching_metrics(const std::vector<MatchResult>& results) {
    if (results.empty()) throw std::invalid_argument("matching_metrics: empty result list");
    MatchingMetrics m;
    long tp = 0, fp = 0, fn = 0;
    for (const auto& r : results) {
        m.mean_similarity += r.similarity;
        m.rank_mae += r.rank_diff;
        auto tally = [&](bool truth, bool pred) {
            if (pred && truth) ++tp;
            else if (pred && !truth) ++fp;
            else if (!pred && truth) ++fn;
        };
        tally(r.query_leftmost, r.ref_leftmost);
        tally(r.query_rightmost, r.ref_rightmost);
    }
    m.mean_similarity /= static_cast<double>(results.size());
    m.rank_mae /= static_cast<double>(results.size());
    double denom = 2.0 * tp + fp + fn;
    m.edge_f1 = denom > 0 ? 2.0 * tp / denom : 1.0;  // no positive flags anywhere
    return m;
}

// trapezoidal AUROC with tied scores grouped
inline std::pair<std::vector<std::pair<double, double>>, double> roc_auroc(
    const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("roc_auroc: bad shapes");
    long npos = std::count(labels.begin(), labels.end(), 1);
    long nneg = static_cast<long>(labels.size()) - npos;
    if (npos == 0 || nneg == 0) throw std::invalid_argument("roc_auroc: single class");
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    std::vector<std::pair<double, double>> curve{{0.0, 0.0}};  // (fpr, tpr)
    long tp = 0, fp = 0;
    double auc = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (size_t k = i; k < j; ++k) (labels[order[k]] == 1 ? tp : fp)++;
        double fpr = static_cast<double>(fp) / nneg, tpr = static_cast<double>(tp) / npos;
        auc += (fpr - curve.back().first) * (tpr + curve.back().second) * 0.5;
        curve.emplace_back(fpr, tpr);
        i = j;
    }
    return {curve, auc};
}

struct ThresholdMetrics {
    double threshold = 0.5;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

inline ThresholdMetrics threshold_metrics(const std::vector<double>& scores,
                                          const std::vector<int>& labels, double thr) {
    ThresholdMetrics m;
    m.threshold = thr;
    for (size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] > thr;
        bool truth = labels[i] == 1;
        if (pred && truth) ++m.tp;
        else if (pred) ++m.fp;
        else if (truth) ++m.fn;
        else ++m.tn;
    }
    long n = m.tp + m.fp + m.tn + m.fn;
    m.accuracy = n ? static_cast<double>(m.tp + m.tn) / n : 0.0;
    m.precision = (m.tp + m.fp) ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
    m.recall = (m.tp + m.fn) ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

// nearest neighbor on standardized 4-dim window stats (baseline regime)
inline std::vector<MatchResult> traj_stats_baseline(const data::Dataset& ds,
                                                    const std::string& held_out_camera) {
    auto cams = ds.camera_ids();
    if (cams.size() < 2) throw std::invalid_argument("traj_stats_baseline: need >= 2 cameras");
    std::map<std::string, Eigen::Vector4d> feats;
    for (const auto& r : ds.records) {
        Eigen::Vector4d s = Eigen::Vector4d::Zero();
        int n = 0;
        for (const auto& w : r.windows)
            if (w.is_valid) {
                s += w.stats;
                ++n;
            }
        feats[r.lane_id] = n ? (s / n).eval() : s;
    }
    Eigen::Vector4d mu = Eigen::Vector4d::Zero(), sd = Eigen::Vector4d::Zero();
    for (const auto& [id, f] : feats) mu += f;
    mu /= static_cast<double>(feats.size());
    for (const auto& [id, f] : feats) sd += (f - mu).cwiseAbs2();
    sd = (sd / static_cast<double>(feats.size())).cwiseSqrt();
    for (auto& [id, f] : feats)
        for (int d = 0; d < 4; ++d) f[d] = (f[d] - mu[d]) / (sd[d] > 1e-12 ? sd[d] : 1.0);

    std::vector<MatchResult> out;
    for (const auto& q : ds.records) {
        if (q.camera_id != held_out_camera) continue;
        const data::LaneRecord* best = nullptr;
        double best_sim = -2.0;
        for (const auto& r : ds.records) {
            if (r.camera_id == held_out_camera) continue;
            Eigen::RowVector4d a = feats.at(q.lane_id).transpose(), b = feats.at(r.lane_id).transpose();
            double s = cosine_rows(a, b);
            if (s > best_sim) {
                best_sim = s;
                best = &r;
            }
        }
        MatchResult m;
        m.query_id = q.lane_id;
        m.matched_id = best->lane_id;
        m.similarity = best_sim;
        m.rank_diff = std::abs(q.truth_rank - best->truth_rank);
        m.query_rank = q.truth_rank;
        m.ref_rank = best->truth_rank;
        m.query_leftmost = q.truth_leftmost;
        m.query_rightmost = q.truth_rightmost;
        m.ref_leftmost = best->truth_leftmost;
        m.ref_rightmost = best->truth_rightmost;
        out.push_back(std::move(m));
    }
    return out;
}

inline std::vector<MatchResult> traj_stats_sweep(const data::Dataset& ds) {
    std::vector<MatchResult> all;
    for (const auto& cam : ds.camera_ids()) {
        auto fold = traj_stats_baseline(ds, cam);
        all.insert(all.end(), fold.begin(), fold.end());
    }
    return all;
}

// similarity structure by pair category, computed on projection embeddings
struct CategorySimilarity {
    double cross_camera_same_rank = 0.0;
    double same_group_siblings = 0.0;
    double same_camera_other_group = 0.0;
    double cross_camera_other_rank = 0.0;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline CategorySimilarity category_similarity(const data::Dataset& ds,
                                              const std::map<std::string, LaneEmbedding>& emb,
                                              double rank_tol = 0.15) {
    std::vector<double> ccsr, sgs, scog, ccor;
    for (size_t i = 0; i < ds.records.size(); ++i)
        for (size_t j = i + 1; j < ds.records.size(); ++j) {
            const auto& a = ds.records[i];
            const auto& b = ds.records[j];
            double cs = cosine_rows(emb.at(a.lane_id).projection, emb.at(b.lane_id).projection);
            if (a.group_id == b.group_id)
                sgs.push_back(cs);
            else if (a.camera_id == b.camera_id)
                scog.push_back(cs);
            else if (std::abs(a.truth_rank - b.truth_rank) < rank_tol &&
                     a.truth_leftmost == b.truth_leftmost && a.truth_rightmost == b.truth_rightmost)
                ccsr.push_back(cs);
            else
                ccor.push_back(cs);
        }
    return {median_of(ccsr), median_of(sgs), median_of(scog), median_of(ccor)};
}

// ---------------------------------------------------------------------------
// generation evaluation

struct GenerationTable {
    std::map<std::string, double> spec_accuracy;  // per role + "edge" aggregate
    std::map<std::string, double> per_spec_chamfer;
    double diversity = 0.0;       // mean pairwise L2 within a spec cell
    double coherence = 0.0;       // mean candidate-to-group chamfer (one-directional)
    double fgd_raw = 0.0, fgd_filtered = 0.0;
    double smoothness_raw = 0.0, smoothness_filtered = 0.0;
    double outlier_rate = 0.0;
    double outlier_threshold = 0.0;
    int skipped_specs = 0;
    int n_candidates = 0, n_filtered = 0;
};

inline bool role_matches(scene::RoleClass rc, gen::SpecRole sr) {
    switch (sr) {
        case gen::SpecRole::leftmost: return rc == scene::RoleClass::leftmost;
        case gen::SpecRole::rightmost: return rc == scene::RoleClass::rightmost;
        case gen::SpecRole::merge: return rc == scene::RoleClass::merge;
    }
    return false;
}

inline GenerationTable generation_eval(const std::vector<gen::Candidate>& cands,
                                       const data::Dataset& ds) {
    if (cands.empty()) throw std::invalid_argument("generation_eval: no candidates");
    GenerationTable tbl;
    tbl.n_candidates = static_cast<int>(cands.size());

    std::map<std::string, std::vector<const data::LaneRecord*>> by_group;
    for (const auto& r : ds.records) by_group[r.group_id].push_back(&r);

    // robust smoothness threshold from the real lanes: median + 3 * IQR
    std::vector<double> ref_smooth;
    for (const auto& r : ds.records)
        ref_smooth.push_back(geom::curvature_smoothness(geom::to_polyline(r.geometry)));
    {
        std::vector<double> s = ref_smooth;
        std::sort(s.begin(), s.end());
        double med = median_of(s);
        double q1 = s[s.size() / 4], q3 = s[(3 * s.size()) / 4];
        tbl.outlier_threshold = med + 3.0 * (q3 - q1);
    }

    std::map<std::string, std::pair<long, long>> role_hits;  // role -> (hits, total)
    std::map<std::string, std::pair<double, long>> role_chamfer;
    std::map<std::pair<std::string, std::string>, std::vector<Eigen::VectorXd>> cells;
    std::vector<Eigen::VectorXd> flat_all, flat_filtered;
    std::vector<bool> outlier_flags;
    double coh = 0.0;
    double smooth_sum = 0.0, smooth_filt_sum = 0.0;
    long n_out = 0;

    for (const auto& c : cands) {
        auto git = by_group.find(c.group_id);
        if (git == by_group.end())
            throw std::invalid_argument("generation_eval: unknown group " + c.group_id);
        const auto& group = git->second;

        // landing-spot classification: role of the chamfer-nearest real lane
        const data::LaneRecord* nearest = nullptr;
        double best = std::numeric_limits<double>::infinity();
        for (const auto* r : group) {
            double d = geom::chamfer_distance(c.points, r->geometry);
            if (d < best) {
                best = d;
                nearest = r;
            }
        }
        std::string role = gen::spec_role_name(c.spec_role);
        auto& rh = role_hits[role];
        ++rh.second;
        if (role_matches(nearest->role_class, c.spec_role)) ++rh.first;

        // chamfer to the real lane of the specified role (skip when missing)
        const data::LaneRecord* target = nullptr;
        for (const auto* r : group)
            if (role_matches(r->role_class, c.spec_role)) target = r;
        if (target) {
            auto& rc = role_chamfer[role];
            rc.first += geom::chamfer_distance(c.points, target->geometry);
            ++rc.second;
        } else {
            ++tbl.skipped_specs;
        }

        // one-directional chamfer to the union of the group's centerlines
        double acc = 0.0;
        for (Eigen::Index p = 0; p < c.points.rows(); ++p) {
            double nearest_d = std::numeric_limits<double>::infinity();
            for (const auto* r : group)
                for (Eigen::Index q = 0; q < r->geometry.rows(); ++q)
                    nearest_d = std::min(nearest_d, (c.points.row(p) - r->geometry.row(q)).norm());
            acc += nearest_d;
        }
        coh += acc / static_cast<double>(c.points.rows());

        Eigen::VectorXd flat = geom::flatten_geometry(c.points);
        cells[{c.group_id, role}].push_back(flat);
        flat_all.push_back(flat);
        double sm = geom::curvature_smoothness(geom::to_polyline(c.points));
        smooth_sum += sm;
        bool is_out = sm > tbl.outlier_threshold;
        outlier_flags.push_back(is_out);
        if (!is_out) {
            flat_filtered.push_back(flat);
            smooth_filt_sum += sm;
        } else {
            ++n_out;
        }
    }

    for (const auto& [role, hits] : role_hits)
        tbl.spec_accuracy[role] = static_cast<double>(hits.first) / hits.second;
    {
        long eh = 0, et = 0;
        for (const char* r : {"leftmost", "rightmost"})
            if (role_hits.count(r)) {
                eh += role_hits[r].first;
                et += role_hits[r].second;
            }
        if (et) tbl.spec_accuracy["edge"] = static_cast<double>(eh) / et;
    }
    for (const auto& [role, cs] : role_chamfer)
        tbl.per_spec_chamfer[role] = cs.second ? cs.first / cs.second : 0.0;

    double div_sum = 0.0;
    long div_n = 0;
    for (const auto& [key, flats] : cells)
        for (size_t i = 0; i < flats.size(); ++i)
            for (size_t j = i + 1; j < flats.size(); ++j) {
                div_sum += (flats[i] - flats[j]).norm();
                ++div_n;
            }
    tbl.diversity = div_n ? div_sum / div_n : 0.0;
    tbl.coherence = coh / tbl.n_candidates;

    std::vector<Eigen::VectorXd> ref_flat;
    for (const auto& r : ds.records) ref_flat.push_back(geom::flatten_geometry(r.geometry));
    tbl.fgd_raw = geom::frechet_geometry_distance(flat_all, ref_flat);
    tbl.n_filtered = static_cast<int>(flat_filtered.size());
    tbl.fgd_filtered = flat_filtered.size() >= 2 ? geom::frechet_geometry_distance(flat_filtered, ref_flat)
                                                 : tbl.fgd_raw;
    tbl.smoothness_raw = smooth_sum / tbl.n_candidates;
    tbl.smoothness_filtered = tbl.n_filtered ? smooth_filt_sum / tbl.n_filtered : 0.0;
    tbl.outlier_rate = static_cast<double>(n_out) / tbl.n_candidates;
    return tbl;
}

// ---------------------------------------------------------------------------
// report emission

inline void write_match_csv(const std::vector<MatchResult>& results, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_match_csv: cannot write " + path);
    os.precision(10);
    os << "query_id,matched_id,similarity,rank_diff,query_rank,ref_rank,left_agree,right_agree\n";
    for (const auto& r : results)
        os << r.query_id << ',' << r.matched_id << ',' << r.similarity << ',' << r.rank_diff << ','
           << r.query_rank << ',' << r.ref_rank << ','
           << (r.left_agree() ? 1 : 0) << ',' << (r.right_agree() ? 1 : 0) << '\n';
}

inline nlohmann::json matching_metrics_json(const MatchingMetrics& m) {
    return {{"mean_similarity", m.mean_similarity}, {"rank_mae", m.rank_mae}, {"edge_f1", m.edge_f1}};
}

inline nlohmann::json threshold_metrics_json(const ThresholdMetrics& m) {
    return {{"threshold", m.threshold}, {"accuracy", m.accuracy}, {"precision", m.precision},
            {"recall", m.recall},       {"f1", m.f1},             {"tp", m.tp},
            {"fp", m.fp},               {"tn", m.tn},             {"fn", m.fn}};
}

inline nlohmann::json generation_table_json(const GenerationTable& t) {
    nlohmann::json j{{"diversity", t.diversity},
                     {"coherence", t.coherence},
                     {"fgd_raw", t.fgd_raw},
                     {"fgd_filtered", t.fgd_filtered},
                     {"smoothness_raw", t.smoothness_raw},
                     {"smoothness_filtered", t.smoothness_filtered},
                     {"outlier_rate", t.outlier_rate},
                     {"outlier_threshold", t.outlier_threshold},
                     {"skipped_specs", t.skipped_specs},
                     {"n_candidates", t.n_candidates},
                     {"n_filtered", t.n_filtered}};
    j["spec_accuracy"] = t.spec_accuracy;
    j["per_spec_chamfer"] = t.per_spec_chamfer;
    return j;
}

}  // namespace lanerep::eval
