#pragma once

// Model-ready lane records: tracklet assignment, temporal windowing,
// descriptor construction, positive-pair mining, and batch collation.

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lanerep/geom.hpp"
#include "lanerep/scene.hpp"

namespace lanerep::data {

constexpr int kGeomPoints = 16;           // K
constexpr double kCountCap = 20.0;        // normalized_count cap
constexpr double kGroupSizeDivisor = 8.0; // role-vector group-size normalizer
constexpr double kDefaultAssignThreshold = 60.0 / 1280.0;

struct WindowRecord {
    int window_index = 0;
    std::vector<geom::Polyline> raw_tracklets;      // camera frame, full rate
    std::vector<Eigen::MatrixX2d> tracklets;        // arc-length resampled, 16x2 each
    std::vector<bool> valid_mask;                   // one flag per slot
    Eigen::Vector4d stats = Eigen::Vector4d::Zero();  // [speed, curvature, lat_offset, count]
    bool is_valid = false;
    int anomaly_label = 0;

    int valid_count() const {
        int n = 0;
        for (bool v : valid_mask) n += v ? 1 : 0;
        return n;
    }
};

struct LaneRecord {
    std::string lane_id;
    std::string group_id;
    std::string camera_id;
    Eigen::MatrixX2d geometry;       // 16x2, camera frame
    geom::Polyline centerline_cam;   // full-resolution annotation, camera frame
    std::vector<WindowRecord> windows;
    Eigen::Matrix<double, 5, 1> role_vector;  // [rank, L, R, successor, group_size/8]
    scene::RoleClass role_class = scene::RoleClass::interior;
    // ground truth kept for evaluation
    double truth_rank = 0.0;
    bool truth_leftmost = false;
    bool truth_rightmost = false;
    int truth_group_size = 1;

    Eigen::Matrix<double, 9, 1> fused_descriptor(int w) const {
        Eigen::Matrix<double, 9, 1> d;
        d.head<4>() = windows[static_cast<size_t>(w)].stats;
        d.tail<5>() = role_vector;
        return d;
    }
};

// ---------------------------------------------------------------------------
// assignment

struct AssignmentResult {
    std::map<std::string, std::vector<const scene::Tracklet*>> by_lane;
    int discarded = 0;
};

inline AssignmentResult assign_tracklets(const std::vector<const scene::Tracklet*>& tracklets,
                                         const std::vector<const scene::LaneTruth*>& lanes,
                                         const std::vector<geom::Polyline>& lane_centerlines_cam,
                                         double threshold) {
    if (lanes.empty()) throw std::invalid_argument("assign_tracklets: camera has zero lanes");
    AssignmentResult res;
    for (const auto* lane : lanes) res.by_lane[lane->lane_id];
    for (const auto* t : tracklets) {
        double best = std::numeric_limits<double>::infinity();
        std::string best_id;
        for (size_t i = 0; i < lanes.size(); ++i) {
            double d = geom::mean_tracklet_distance(t->points, lane_centerlines_cam[i]);
            // ties break toward the lexicographically lowest lane id
            if (d < best || (d == best && lanes[i]->lane_id < best_id)) {
                best = d;
                best_id = lanes[i]->lane_id;
            }
        }
        if (best <= threshold)
            res.by_lane[best_id].push_back(t);
        else
            ++res.discarded;
    }
    return res;
}

// ---------------------------------------------------------------------------
// descriptors

inline Eigen::Vector4d compute_stats(const std::vector<geom::Polyline>& raw_tracklets,
                                     const geom::Polyline& centerline) {
    Eigen::Vector4d s = Eigen::Vector4d::Zero();
    if (raw_tracklets.empty()) return s;

    double speed_sum = 0.0;
    long step_count = 0;
    double curv_sum = 0.0, off_sum = 0.0;
    for (const auto& t : raw_tracklets) {
        for (size_t i = 1; i < t.size(); ++i) {
            speed_sum += geom::dist(t[i - 1], t[i]);
            ++step_count;
        }
        curv_sum += geom::mean_curvature(t);
        off_sum += geom::signed_lateral_offset(t, centerline);
    }
    const double n = static_cast<double>(raw_tracklets.size());
    s[0] = step_count > 0 ? speed_sum / static_cast<double>(step_count) : 0.0;
    s[1] = curv_sum / n;
    s[2] = off_sum / n;
    s[3] = std::min(n, kCountCap) / kCountCap;
    return s;
}

inline Eigen::Matrix<double, 5, 1> build_role_vector(const scene::LaneTruth& lane) {
    Eigen::Matrix<double, 5, 1> r;
    r[0] = lane.group_size >= 2 ? lane.lateral_rank : 0.5;
    r[1] = lane.leftmost ? 1.0 : 0.0;
    r[2] = lane.rightmost ? 1.0 : 0.0;
    r[3] = lane.successor ? 1.0 : 0.0;
    r[4] = std::min(static_cast<double>(lane.group_size) / kGroupSizeDivisor, 1.0);
    return r;
}

// refresh stats after tracklet corruption; keeps is_valid in sync
inline void refresh_window(WindowRecord& w, const geom::Polyline& centerline) {
    w.tracklets.clear();
    w.valid_mask.clear();
    for (const auto& raw : w.raw_tracklets) {
        w.tracklets.push_back(geom::resample_arclength(raw, kGeomPoints));
        w.valid_mask.push_back(true);
    }
    w.is_valid = !w.raw_tracklets.empty();
    w.stats = w.is_valid ? compute_stats(w.raw_tracklets, centerline) : Eigen::Vector4d::Zero();
}

// ---------------------------------------------------------------------------
// pair mining (cross-camera positives)

struct PairSet {
    // canonicalized: first < second lexicographically
    std::vector<std::pair<std::string, std::string>> positives;

    bool contains(const std::string& a, const std::string& b) const {
        auto p = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
        return std::find(positives.begin(), positives.end(), p) != positives.end();
    }
};

inline bool pair_eligible(const LaneRecord& a, const LaneRecord& b,
                          double rank_tol = 0.15, double cos_min = 0.8) {
    if (a.camera_id == b.camera_id) return false;
    if (std::abs(a.role_vector[0] - b.role_vector[0]) >= rank_tol) return false;
    if (a.role_vector[1] != b.role_vector[1] || a.role_vector[2] != b.role_vector[2]) return false;
    double na = a.role_vector.norm(), nb = b.role_vector.norm();
    if (na <= 0.0 || nb <= 0.0) return false;
    double cosine = a.role_vector.dot(b.role_vector) / (na * nb);
    return cosine >= cos_min;
}

inline PairSet mine_positive_pairs(const std::vector<const LaneRecord*>& records) {
    PairSet out;
    for (size_t i = 0; i < records.size(); ++i)
        for (size_t j = i + 1; j < records.size(); ++j)
            if (pair_eligible(*records[i], *records[j])) {
                auto p = records[i]->lane_id < records[j]->lane_id
                             ? std::make_pair(records[i]->lane_id, records[j]->lane_id)
                             : std::make_pair(records[j]->lane_id, records[i]->lane_id);
                out.positives.push_back(std::move(p));
            }
    std::sort(out.positives.begin(), out.positives.end());
    return out;
}

inline PairSet mine_positive_pairs(const std::vector<LaneRecord>& records) {
    PairSet out;
    for (size_t i = 0; i < records.size(); ++i)
        for (size_t j = i + 1; j < records.size(); ++j)
            if (pair_eligible(records[i], records[j])) {
                auto p = records[i].lane_id < records[j].lane_id
                             ? std::make_pair(records[i].lane_id, records[j].lane_id)
                             : std::make_pair(records[j].lane_id, records[i].lane_id);
                out.positives.push_back(std::move(p));
            }
    std::sort(out.positives.begin(), out.positives.end());
    return out;
}

// ---------------------------------------------------------------------------
// scene -> records

struct BuildResult {
    std::vector<LaneRecord> records;
    int discarded_tracklets = 0;
};

inline BuildResult build_dataset(const scene::SceneDataset& ds,
                                 double assign_threshold = kDefaultAssignThreshold) {
    BuildResult out;
    std::map<std::string, const scene::CameraView*> views;
    for (const auto& v : ds.cameras) views[v.camera_id] = &v;

    // group by camera (lanes keep generation order, which is deterministic)
    std::map<std::string, std::vector<const scene::LaneTruth*>> lanes_by_cam;
    for (const auto& l : ds.lanes) lanes_by_cam[l.camera_id].push_back(&l);
    std::map<std::string, std::vector<const scene::Tracklet*>> tracks_by_cam;
    for (const auto& t : ds.tracklets) {
        auto cam = t.lane_id_truth.substr(0, t.lane_id_truth.find('_'));
        tracks_by_cam[cam].push_back(&t);
    }

    for (const auto& [cam_id, lanes] : lanes_by_cam) {
        const scene::CameraView* view = views.at(cam_id);
        // annotated centerlines carry measurement noise: the pipeline works
        // from estimated lane geometry, not the analytic truth
        Rng arng = Rng(ds.config.seed).substream("annotate").substream(cam_id);
        scene::CameraView aview = *view;
        aview.observation_noise_std = ds.config.annotation_noise_std;
        std::vector<geom::Polyline> centerlines_cam;
        centerlines_cam.reserve(lanes.size());
        for (const auto* l : lanes)
            centerlines_cam.push_back(scene::project_to_camera(
                l->centerline_world, aview,
                ds.config.annotation_noise_std > 0.0 ? &arng : nullptr));

        auto it = tracks_by_cam.find(cam_id);
        std::vector<const scene::Tracklet*> cam_tracks =
            it != tracks_by_cam.end() ? it->second : std::vector<const scene::Tracklet*>{};
        auto assignment = assign_tracklets(cam_tracks, lanes, centerlines_cam, assign_threshold);
        out.discarded_tracklets += assignment.discarded;

        for (size_t i = 0; i < lanes.size(); ++i) {
            const auto* truth = lanes[i];
            LaneRecord rec;
            rec.lane_id = truth->lane_id;
            rec.group_id = truth->group_id;
            rec.camera_id = truth->camera_id;
            rec.centerline_cam = centerlines_cam[i];
            rec.geometry = geom::resample_arclength(rec.centerline_cam, kGeomPoints);
            rec.role_vector = build_role_vector(*truth);
            rec.role_class = truth->role_class;
            rec.truth_rank = rec.role_vector[0];
            rec.truth_leftmost = truth->leftmost;
            rec.truth_rightmost = truth->rightmost;
            rec.truth_group_size = truth->group_size;

            rec.windows.resize(static_cast<size_t>(ds.config.n_windows));
            for (int w = 0; w < ds.config.n_windows; ++w)
                rec.windows[static_cast<size_t>(w)].window_index = w;
            for (const auto* t : assignment.by_lane.at(truth->lane_id)) {
                auto& win = rec.windows[static_cast<size_t>(t->window_index)];
                win.raw_tracklets.push_back(t->points);
            }
            for (auto& win : rec.windows) refresh_window(win, rec.centerline_cam);
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// batch collation

struct Batch {
    std::vector<Eigen::MatrixX2d> geometry;                   // B x (16x2)
    std::vector<std::vector<Eigen::MatrixX2d>> trajectories;  // B x Tmax x (16x2)
    std::vector<std::vector<bool>> mask;                      // B x Tmax
    Eigen::MatrixXd descriptors;                              // B x 9
    std::vector<std::string> lane_ids;
    // lanes sharing a group id, as indices into this batch
    std::map<std::string, std::vector<int>> group_packing;
};

inline Batch collate_batch(const std::vector<const LaneRecord*>& records,
                           const std::vector<int>& window_index) {
    if (records.empty()) throw std::invalid_argument("collate_batch: empty batch");
    if (window_index.size() != records.size())
        throw std::invalid_argument("collate_batch: window selector size mismatch");
    size_t t_max = 1;
    for (size_t b = 0; b < records.size(); ++b) {
        const auto& w = records[b]->windows.at(static_cast<size_t>(window_index[b]));
        t_max = std::max(t_max, w.tracklets.size());
    }
    Batch batch;
    batch.descriptors.resize(static_cast<Eigen::Index>(records.size()), 9);
    for (size_t b = 0; b < records.size(); ++b) {
        const auto* rec = records[b];
        const auto& w = rec->windows.at(static_cast<size_t>(window_index[b]));
        batch.geometry.push_back(rec->geometry);
        std::vector<Eigen::MatrixX2d> slots;
        std::vector<bool> m;
        for (size_t t = 0; t < t_max; ++t) {
            if (t < w.tracklets.size()) {
                slots.push_back(w.tracklets[t]);
                m.push_back(w.valid_mask[t]);
            } else {
                slots.push_back(Eigen::MatrixX2d::Zero(kGeomPoints, 2));
                m.push_back(false);
            }
        }
        batch.trajectories.push_back(std::move(slots));
        batch.mask.push_back(std::move(m));
        batch.descriptors.row(static_cast<Eigen::Index>(b)) = rec->fused_descriptor(window_index[b]);
        batch.lane_ids.push_back(rec->lane_id);
        batch.group_packing[rec->group_id].push_back(static_cast<int>(b));
    }
    return batch;
}

}  // namespace lanerep::data
