#pragma once

// Synthetic multi-camera roadside scene generation: lane geometries, group
// structure, role labels, and role-dependent vehicle tracklets.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanerep/geom.hpp"
#include "lanerep/rng.hpp"

namespace lanerep::scene {

struct KinematicsProfile {
    double base_speed = 0.0045;                 // world units per frame
    double speed_gradient_across_lanes = 0.6;   // leftmost faster
    double lateral_jitter_std = 0.004;
    double heading_noise_std = 0.02;
    double merge_curve_strength = 0.8;
    // per-tracklet multiplicative speed spread: drivers hold different speeds,
    // so short windows (few tracklets) see noisier mean-speed estimates
    double speed_jitter_std = 0.15;
};

struct SceneConfig {
    int n_cameras = 16;
    int groups_per_camera = 2;
    int total_groups = 38;  // 0 = use groups_per_camera for every camera
    std::pair<int, int> lanes_per_group_range = {2, 4};
    double merge_fraction = 0.474;
    int frames_per_window = 300;
    int n_windows = 6;
    std::pair<int, int> tracklets_per_lane_per_window_range = {2, 6};
    KinematicsProfile kinematics;
    double observation_noise_std = 0.0015;
    // measurement noise on annotated lane centerlines (camera frame); real
    // lane annotations are estimated, not analytic curves
    double annotation_noise_std = 0.003;
    uint64_t seed = 7;

    void validate() const {
        if (n_cameras < 1 || n_windows < 1 || frames_per_window < 1)
            throw std::invalid_argument("SceneConfig: counts must be positive");
        if (lanes_per_group_range.first < 1 ||
            lanes_per_group_range.first > lanes_per_group_range.second)
            throw std::invalid_argument("SceneConfig: invalid lanes_per_group_range");
        if (tracklets_per_lane_per_window_range.first < 0 ||
            tracklets_per_lane_per_window_range.first > tracklets_per_lane_per_window_range.second)
            throw std::invalid_argument("SceneConfig: invalid tracklets range");
        if (merge_fraction < 0.0 || merge_fraction > 1.0)
            throw std::invalid_argument("SceneConfig: merge_fraction outside [0,1]");
        if (kinematics.base_speed <= 0.0 || kinematics.lateral_jitter_std < 0.0 ||
            kinematics.heading_noise_std < 0.0 || kinematics.speed_jitter_std < 0.0)
            throw std::invalid_argument("SceneConfig: invalid kinematics profile");
        if (total_groups < 0 || observation_noise_std < 0.0 || annotation_noise_std < 0.0)
            throw std::invalid_argument("SceneConfig: invalid total_groups/noise");
    }
};

// 2-D similarity-plus-shear map: p' = diag(sx,sy) * Shear(k) * R(theta) * p + t
struct CameraView {
    std::string camera_id;
    double theta = 0.0;
    double scale_x = 1.0;
    double scale_y = 1.0;
    double shear = 0.0;
    double tx = 0.0;
    double ty = 0.0;
    double observation_noise_std = 0.0;

    geom::Point apply(const geom::Point& p) const {
        double c = std::cos(theta), s = std::sin(theta);
        double rx = c * p.x - s * p.y;
        double ry = s * p.x + c * p.y;
        double hx = rx + shear * ry;  // shear along x
        return {scale_x * hx + tx, scale_y * ry + ty};
    }

    bool invertible() const {
        return std::abs(scale_x) > 1e-12 && std::abs(scale_y) > 1e-12;
    }
};

enum class RoleClass { leftmost, rightmost, interior, merge };

inline const char* role_class_name(RoleClass r) {
    switch (r) {
        case RoleClass::leftmost: return "leftmost";
        case RoleClass::rightmost: return "rightmost";
        case RoleClass::interior: return "interior";
        case RoleClass::merge: return "merge";
    }
    return "?";
}

struct LaneTruth {
    std::string lane_id;
    std::string group_id;
    std::string camera_id;
    geom::Polyline centerline_world;
    double lateral_rank = 0.0;   // 0 = leftmost edge, 1 = rightmost edge
    bool leftmost = false;
    bool rightmost = false;
    bool successor = true;
    int group_size = 1;
    RoleClass role_class = RoleClass::interior;
    // populated for merge lanes: the through-lane this one curves into
    std::string merge_neighbor_id;
};

struct Tracklet {
    std::string tracklet_id;
    std::string lane_id_truth;
    geom::Polyline points;            // unit-square camera coordinates
    std::vector<int> frame_indices;   // strictly increasing
    int window_index = 0;
};

struct SceneDataset {
    SceneConfig config;
    std::vector<CameraView> cameras;
    std::vector<LaneTruth> lanes;     // world-frame truth
    std::vector<Tracklet> tracklets;  // camera-frame observations

    const LaneTruth* find_lane(const std::string& id) const {
        for (const auto& l : lanes)
            if (l.lane_id == id) return &l;
        return nullptr;
    }
};

inline geom::Polyline project_to_camera(const geom::Polyline& world, const CameraView& view,
                                        Rng* noise_rng = nullptr) {
    if (!view.invertible())
        throw std::invalid_argument("project_to_camera: degenerate camera transform");
    geom::Polyline out;
    out.reserve(world.size());
    for (const auto& p : world) {
        geom::Point q = view.apply(p);
        if (noise_rng && view.observation_noise_std > 0.0) {
            q.x += noise_rng->normal(0.0, view.observation_noise_std);
            q.y += noise_rng->normal(0.0, view.observation_noise_std);
        }
        q.x = std::clamp(q.x, 0.0, 1.0);
        q.y = std::clamp(q.y, 0.0, 1.0);
        out.push_back(q);
    }
    return out;
}

namespace detail {

// Gently curved lane centerline: straight baseline plus a sine bow.
inline geom::Polyline make_centerline(geom::Point center, double heading, double half_len,
                                      double lateral_offset, double bow, int n_pts = 24) {
    geom::Polyline p;
    p.reserve(n_pts);
    double c = std::cos(heading), s = std::sin(heading);
    for (int i = 0; i < n_pts; ++i) {
        double t = -half_len + 2.0 * half_len * i / (n_pts - 1);
        double u = (t + half_len) / (2.0 * half_len);
        double off = lateral_offset + bow * std::sin(M_PI * u);
        // lateral axis points to the left of the travel direction
        p.push_back({center.x + c * t - s * off, center.y + s * t + c * off});
    }
    return p;
}

}  // namespace detail

// Role-dependent tracklets in WORLD coordinates (callers project them).
// Speed grows toward the leftmost side; merge lanes blend into the neighbor
// centerline over the second half of the run.
inline std::vector<geom::Polyline> simulate_tracklets_world(
    const LaneTruth& lane, int window, int frames_per_window, int count,
    const KinematicsProfile& profile, Rng& rng,
    const geom::Polyline* merge_neighbor,
    std::vector<std::vector<int>>* frame_indices_out) {
    if (lane.centerline_world.size() < 2)
        throw std::invalid_argument("simulate_tracklets: centerline needs >= 2 points");

    const double total_len = geom::arc_length(lane.centerline_world);
    const double speed =
        profile.base_speed * (1.0 + profile.speed_gradient_across_lanes * (1.0 - lane.lateral_rank));
    const int K_dense = 256;
    Eigen::MatrixX2d dense = geom::resample_arclength(lane.centerline_world, K_dense);
    Eigen::MatrixX2d dense_nb;
    const bool merging = lane.role_class == RoleClass::merge && merge_neighbor != nullptr &&
                         profile.merge_curve_strength > 0.0;
    if (merging) dense_nb = geom::resample_arclength(*merge_neighbor, K_dense);

    auto at_arc = [&](const Eigen::MatrixX2d& d, double s_arc) -> geom::Point {
        double u = std::clamp(s_arc / total_len, 0.0, 1.0) * (K_dense - 1);
        int i0 = std::min(static_cast<int>(u), K_dense - 2);
        double f = u - i0;
        return {d(i0, 0) * (1 - f) + d(i0 + 1, 0) * f, d(i0, 1) * (1 - f) + d(i0 + 1, 1) * f};
    };

    std::vector<geom::Polyline> out;
    for (int n = 0; n < count; ++n) {
        int entry = static_cast<int>(rng.uniform_int(0, std::max(0, frames_per_window - 20)));
        double s_arc = rng.uniform(0.0, 0.15 * total_len);
        // each driver holds their own pace around the lane's nominal speed
        double pace = 1.0;
        if (profile.speed_jitter_std > 0.0)
            pace = std::max(0.2, 1.0 + rng.normal(0.0, profile.speed_jitter_std));
        double jitter = 0.0;
        geom::Polyline pts;
        std::vector<int> frames;
        for (int f = entry; f < frames_per_window && s_arc <= total_len; ++f) {
            double frac = s_arc / total_len;
            geom::Point base = at_arc(dense, s_arc);
            if (merging && frac > 0.5) {
                double blend = profile.merge_curve_strength * (frac - 0.5) / 0.5;
                geom::Point nb = at_arc(dense_nb, s_arc);
                base.x = (1 - blend) * base.x + blend * nb.x;
                base.y = (1 - blend) * base.y + blend * nb.y;
            }
            // local tangent for the lateral jitter direction
            geom::Point ahead = at_arc(dense, std::min(s_arc + 0.01 * total_len, total_len));
            double tx = ahead.x - base.x, ty = ahead.y - base.y;
            double tl = std::hypot(tx, ty);
            if (tl > 0) { tx /= tl; ty /= tl; }
            if (profile.lateral_jitter_std > 0.0)
                jitter = 0.9 * jitter + rng.normal(0.0, profile.lateral_jitter_std);
            pts.push_back({base.x - ty * jitter, base.y + tx * jitter});
            frames.push_back(window * frames_per_window + f);
            double step = pace * speed * (1.0 + (profile.heading_noise_std > 0.0
                                                     ? 0.2 * rng.normal(0.0, profile.heading_noise_std)
                                                     : 0.0));
            s_arc += std::max(step, 0.2 * pace * speed);
        }
        // 5-frame minimum; shorter runs are dropped as real pipelines would
        if (pts.size() >= 5) {
            out.push_back(std::move(pts));
            if (frame_indices_out) frame_indices_out->push_back(std::move(frames));
        }
    }
    return out;
}

inline SceneDataset generate_scene(const SceneConfig& config) {
    config.validate();
    Rng root(config.seed);

    SceneDataset ds;
    ds.config = config;

    // distribute groups across cameras
    std::vector<int> groups_for_camera(config.n_cameras, config.groups_per_camera);
    if (config.total_groups > 0) {
        int base = config.total_groups / config.n_cameras;
        int extra = config.total_groups % config.n_cameras;
        for (int c = 0; c < config.n_cameras; ++c)
            groups_for_camera[c] = base + (c < extra ? 1 : 0);
    }

    int group_counter = 0;
    for (int c = 0; c < config.n_cameras; ++c) {
        char cam_name[32];
        std::snprintf(cam_name, sizeof(cam_name), "cam%02d", c);
        Rng crng = root.substream(cam_name);

        CameraView view;
        view.camera_id = cam_name;
        view.theta = crng.uniform(0.0, 2.0 * M_PI);
        view.scale_x = crng.uniform(0.38, 0.55);
        view.scale_y = crng.uniform(0.38, 0.55);
        view.shear = crng.uniform(-0.15, 0.15);
        view.tx = 0.5 + crng.uniform(-0.04, 0.04);
        view.ty = 0.5 + crng.uniform(-0.04, 0.04);
        view.observation_noise_std = config.observation_noise_std;
        ds.cameras.push_back(view);

        const int n_groups = groups_for_camera[c];
        for (int g = 0; g < n_groups; ++g) {
            char grp_name[48];
            std::snprintf(grp_name, sizeof(grp_name), "%s_g%02d", cam_name, g);
            Rng grng = crng.substream(grp_name);

            // spread group centers around a circle to keep them apart
            double ang = 2.0 * M_PI * g / std::max(1, n_groups) + grng.uniform(-0.2, 0.2);
            double rad = n_groups > 1 ? 0.26 : 0.0;
            geom::Point center{rad * std::cos(ang), rad * std::sin(ang)};
            double heading = grng.uniform(0.0, 2.0 * M_PI);
            double half_len = grng.uniform(0.30, 0.38);
            double spacing = grng.uniform(0.055, 0.075);
            double bow = grng.uniform(-0.03, 0.03);

            int n_through = static_cast<int>(grng.uniform_int(config.lanes_per_group_range.first,
                                                              config.lanes_per_group_range.second));
            bool has_merge = n_through >= 2 && grng.bernoulli(config.merge_fraction);
            int n_total = n_through + (has_merge ? 1 : 0);

            std::vector<LaneTruth> group_lanes;
            for (int i = 0; i < n_total; ++i) {
                LaneTruth lane;
                char lane_name[64];
                std::snprintf(lane_name, sizeof(lane_name), "%s_l%02d", grp_name, i);
                lane.lane_id = lane_name;
                lane.group_id = grp_name;
                lane.camera_id = cam_name;
                lane.group_size = n_total;
                bool is_merge = has_merge && i == n_total - 1;
                // lateral axis is positive to the LEFT of travel; lane 0 is leftmost
                double lateral = (0.5 * (n_total - 1) - i) * spacing;
                double lane_bow = bow;
                if (is_merge) {
                    // start offset further right; the blend happens in kinematics
                    lateral -= 0.4 * spacing;
                    lane_bow = bow + 0.35 * spacing;  // bows toward its neighbor
                }
                lane.centerline_world =
                    detail::make_centerline(center, heading, half_len, lateral, lane_bow);
                lane.lateral_rank =
                    n_total >= 2 ? static_cast<double>(i) / static_cast<double>(n_total - 1) : 0.5;
                lane.leftmost = i == 0;
                lane.rightmost = i == n_total - 1;
                if (is_merge) {
                    lane.role_class = RoleClass::merge;
                    lane.successor = false;
                    char nb[64];
                    std::snprintf(nb, sizeof(nb), "%s_l%02d", grp_name, n_total - 2);
                    lane.merge_neighbor_id = nb;
                } else if (i == 0) {
                    lane.role_class = RoleClass::leftmost;
                } else if (i == n_through - 1) {
                    // outermost through-lane keeps the rightmost CLASS even
                    // when a merge lane occupies the max-rank slot
                    lane.role_class = RoleClass::rightmost;
                } else {
                    lane.role_class = RoleClass::interior;
                }
                if (n_total == 1) {
                    lane.leftmost = lane.rightmost = true;
                    lane.role_class = RoleClass::leftmost;  // degenerate; flags carry the truth
                }
                group_lanes.push_back(std::move(lane));
            }
            ++group_counter;

            // tracklets per lane per window
            for (auto& lane : group_lanes) {
                Rng lrng = grng.substream(lane.lane_id);
                const geom::Polyline* neighbor = nullptr;
                geom::Polyline neighbor_line;
                if (lane.role_class == RoleClass::merge) {
                    for (const auto& other : group_lanes)
                        if (other.lane_id == lane.merge_neighbor_id) neighbor_line = other.centerline_world;
                    if (!neighbor_line.empty()) neighbor = &neighbor_line;
                }
                // traffic density is a property of the lane, not the window:
                // a stable per-lane count makes window-level count changes
                // (e.g. drop-outs) meaningful rather than sampling noise
                const int raw = static_cast<int>(
                    lrng.uniform_int(config.tracklets_per_lane_per_window_range.first,
                                     config.tracklets_per_lane_per_window_range.second));
                for (int w = 0; w < config.n_windows; ++w) {
                    double scale = static_cast<double>(config.frames_per_window) / 300.0;
                    int count = static_cast<int>(std::lround(raw * scale));
                    std::vector<std::vector<int>> frame_sets;
                    auto world_tracks = simulate_tracklets_world(
                        lane, w, config.frames_per_window, count, config.kinematics, lrng,
                        neighbor, &frame_sets);
                    for (size_t n = 0; n < world_tracks.size(); ++n) {
                        Tracklet t;
                        char tid[96];
                        std::snprintf(tid, sizeof(tid), "%s_w%02d_t%03zu", lane.lane_id.c_str(), w, n);
                        t.tracklet_id = tid;
                        t.lane_id_truth = lane.lane_id;
                        t.window_index = w;
                        t.frame_indices = frame_sets[n];
                        t.points = project_to_camera(world_tracks[n], view, &lrng);
                        ds.tracklets.push_back(std::move(t));
                    }
                }
            }
            for (auto& lane : group_lanes) ds.lanes.push_back(std::move(lane));
        }
    }
    return ds;
}

}  // namespace lanerep::scene
