#pragma once

// On-disk formats.
//
// Raw scene directory:
//   scene.json        camera views, lane truths, tracklet headers, config echo
//   scene_arrays.bin  float32 blocks for tracklet points / frame indices
//
// Model-ready dataset directory:
//   manifest.json              camera list, counts, config echo, format version
//   cameras/<id>/lanes.jsonl   one LaneRecord header per line
//   cameras/<id>/arrays.bin    float32 blocks referenced by byte offset

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lanerep/array_io.hpp"
#include "lanerep/dataset.hpp"
#include "lanerep/scene.hpp"

namespace lanerep::data {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// config <-> json

inline json scene_config_to_json(const scene::SceneConfig& c) {
    return json{
        {"n_cameras", c.n_cameras},
        {"groups_per_camera", c.groups_per_camera},
        {"total_groups", c.total_groups},
        {"lanes_per_group_range", {c.lanes_per_group_range.first, c.lanes_per_group_range.second}},
        {"merge_fraction", c.merge_fraction},
        {"frames_per_window", c.frames_per_window},
        {"n_windows", c.n_windows},
        {"tracklets_per_lane_per_window_range",
         {c.tracklets_per_lane_per_window_range.first, c.tracklets_per_lane_per_window_range.second}},
        {"observation_noise_std", c.observation_noise_std},
        {"annotation_noise_std", c.annotation_noise_std},
        {"seed", c.seed},
        {"kinematics",
         {{"base_speed", c.kinematics.base_speed},
          {"speed_gradient_across_lanes", c.kinematics.speed_gradient_across_lanes},
          {"lateral_jitter_std", c.kinematics.lateral_jitter_std},
          {"heading_noise_std", c.kinematics.heading_noise_std},
          {"merge_curve_strength", c.kinematics.merge_curve_strength},
          {"speed_jitter_std", c.kinematics.speed_jitter_std}}}};
}

inline scene::SceneConfig scene_config_from_json(const json& j) {
    scene::SceneConfig c;
    c.n_cameras = j.at("n_cameras").get<int>();
    c.groups_per_camera = j.at("groups_per_camera").get<int>();
    c.total_groups = j.at("total_groups").get<int>();
    c.lanes_per_group_range = {j.at("lanes_per_group_range")[0].get<int>(),
                               j.at("lanes_per_group_range")[1].get<int>()};
    c.merge_fraction = j.at("merge_fraction").get<double>();
    c.frames_per_window = j.at("frames_per_window").get<int>();
    c.n_windows = j.at("n_windows").get<int>();
    c.tracklets_per_lane_per_window_range = {
        j.at("tracklets_per_lane_per_window_range")[0].get<int>(),
        j.at("tracklets_per_lane_per_window_range")[1].get<int>()};
    c.observation_noise_std = j.at("observation_noise_std").get<double>();
    c.annotation_noise_std = j.at("annotation_noise_std").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    const auto& k = j.at("kinematics");
    c.kinematics.base_speed = k.at("base_speed").get<double>();
    c.kinematics.speed_gradient_across_lanes = k.at("speed_gradient_across_lanes").get<double>();
    c.kinematics.lateral_jitter_std = k.at("lateral_jitter_std").get<double>();
    c.kinematics.heading_noise_std = k.at("heading_noise_std").get<double>();
    c.kinematics.merge_curve_strength = k.at("merge_curve_strength").get<double>();
    c.kinematics.speed_jitter_std = k.at("speed_jitter_std").get<double>();
    return c;
}

// ---------------------------------------------------------------------------
// raw scene

inline io::ArrayBlock polyline_block(const geom::Polyline& p) {
    io::ArrayBlock b;
    b.shape = {static_cast<uint32_t>(p.size()), 2};
    b.data.reserve(p.size() * 2);
    for (const auto& q : p) {
        b.data.push_back(static_cast<float>(q.x));
        b.data.push_back(static_cast<float>(q.y));
    }
    return b;
}

inline geom::Polyline block_polyline(const io::ArrayBlock& b) {
    geom::Polyline p(b.shape[0]);
    for (uint32_t i = 0; i < b.shape[0]; ++i) p[i] = {b.data[2 * i], b.data[2 * i + 1]};
    return p;
}

inline void save_scene(const scene::SceneDataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream bin(dir / "scene_arrays.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("save_scene: cannot write " + (dir / "scene_arrays.bin").string());

    json j;
    j["format_version"] = kFormatVersion;
    j["config"] = scene_config_to_json(ds.config);
    j["cameras"] = json::array();
    for (const auto& v : ds.cameras)
        j["cameras"].push_back({{"camera_id", v.camera_id},
                                {"theta", v.theta},
                                {"scale_x", v.scale_x},
                                {"scale_y", v.scale_y},
                                {"shear", v.shear},
                                {"tx", v.tx},
                                {"ty", v.ty},
                                {"observation_noise_std", v.observation_noise_std}});
    j["lanes"] = json::array();
    for (const auto& l : ds.lanes) {
        uint64_t off = io::write_block(bin, polyline_block(l.centerline_world));
        j["lanes"].push_back({{"lane_id", l.lane_id},
                              {"group_id", l.group_id},
                              {"camera_id", l.camera_id},
                              {"lateral_rank", l.lateral_rank},
                              {"leftmost", l.leftmost},
                              {"rightmost", l.rightmost},
                              {"successor", l.successor},
                              {"group_size", l.group_size},
                              {"role_class", scene::role_class_name(l.role_class)},
                              {"merge_neighbor_id", l.merge_neighbor_id},
                              {"centerline_offset", off}});
    }
    j["tracklets"] = json::array();
    for (const auto& t : ds.tracklets) {
        uint64_t poff = io::write_block(bin, polyline_block(t.points));
        io::ArrayBlock fb;
        fb.shape = {static_cast<uint32_t>(t.frame_indices.size())};
        for (int f : t.frame_indices) fb.data.push_back(static_cast<float>(f));
        uint64_t foff = io::write_block(bin, fb);
        j["tracklets"].push_back({{"tracklet_id", t.tracklet_id},
                                  {"lane_id_truth", t.lane_id_truth},
                                  {"window_index", t.window_index},
                                  {"points_offset", poff},
                                  {"frames_offset", foff}});
    }
    std::ofstream out(dir / "scene.json", std::ios::trunc);
    out << j.dump(1) << "\n";
}

inline scene::RoleClass role_class_from_name(const std::string& s) {
    if (s == "leftmost") return scene::RoleClass::leftmost;
    if (s == "rightmost") return scene::RoleClass::rightmost;
    if (s == "interior") return scene::RoleClass::interior;
    if (s == "merge") return scene::RoleClass::merge;
    throw std::runtime_error("unknown role class: " + s);
}

inline scene::SceneDataset load_scene(const fs::path& dir) {
    std::ifstream in(dir / "scene.json");
    if (!in) throw std::runtime_error("load_scene: missing " + (dir / "scene.json").string());
    json j;
    in >> j;
    std::ifstream bin(dir / "scene_arrays.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("load_scene: missing scene_arrays.bin");

    scene::SceneDataset ds;
    ds.config = scene_config_from_json(j.at("config"));
    for (const auto& cv : j.at("cameras")) {
        scene::CameraView v;
        v.camera_id = cv.at("camera_id").get<std::string>();
        v.theta = cv.at("theta").get<double>();
        v.scale_x = cv.at("scale_x").get<double>();
        v.scale_y = cv.at("scale_y").get<double>();
        v.shear = cv.at("shear").get<double>();
        v.tx = cv.at("tx").get<double>();
        v.ty = cv.at("ty").get<double>();
        v.observation_noise_std = cv.at("observation_noise_std").get<double>();
        ds.cameras.push_back(v);
    }
    for (const auto& lj : j.at("lanes")) {
        scene::LaneTruth l;
        l.lane_id = lj.at("lane_id").get<std::string>();
        l.group_id = lj.at("group_id").get<std::string>();
        l.camera_id = lj.at("camera_id").get<std::string>();
        l.lateral_rank = lj.at("lateral_rank").get<double>();
        l.leftmost = lj.at("leftmost").get<bool>();
        l.rightmost = lj.at("rightmost").get<bool>();
        l.successor = lj.at("successor").get<bool>();
        l.group_size = lj.at("group_size").get<int>();
        l.role_class = role_class_from_name(lj.at("role_class").get<std::string>());
        l.merge_neighbor_id = lj.at("merge_neighbor_id").get<std::string>();
        l.centerline_world = block_polyline(io::read_block(bin, lj.at("centerline_offset").get<uint64_t>()));
        ds.lanes.push_back(std::move(l));
    }
    for (const auto& tj : j.at("tracklets")) {
        scene::Tracklet t;
        t.tracklet_id = tj.at("tracklet_id").get<std::string>();
        t.lane_id_truth = tj.at("lane_id_truth").get<std::string>();
        t.window_index = tj.at("window_index").get<int>();
        t.points = block_polyline(io::read_block(bin, tj.at("points_offset").get<uint64_t>()));
        auto fb = io::read_block(bin, tj.at("frames_offset").get<uint64_t>());
        for (float f : fb.data) t.frame_indices.push_back(static_cast<int>(f));
        ds.tracklets.push_back(std::move(t));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// model-ready dataset

struct Dataset {
    json config_echo;                    // scene config carried through
    double assign_threshold = kDefaultAssignThreshold;
    int discarded_tracklets = 0;
    std::vector<LaneRecord> records;

    std::vector<std::string> camera_ids() const {
        std::vector<std::string> ids;
        for (const auto& r : records)
            if (ids.empty() || ids.back() != r.camera_id) {
                if (std::find(ids.begin(), ids.end(), r.camera_id) == ids.end())
                    ids.push_back(r.camera_id);
            }
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    const LaneRecord* find(const std::string& lane_id) const {
        for (const auto& r : records)
            if (r.lane_id == lane_id) return &r;
        return nullptr;
    }
};

inline void save_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir / "cameras");
    std::map<std::string, std::vector<const LaneRecord*>> by_cam;
    for (const auto& r : ds.records) by_cam[r.camera_id].push_back(&r);

    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["config"] = ds.config_echo;
    manifest["assign_threshold"] = ds.assign_threshold;
    manifest["discarded_tracklets"] = ds.discarded_tracklets;
    manifest["n_lanes"] = ds.records.size();
    manifest["cameras"] = json::array();
    for (const auto& [cam, _] : by_cam) manifest["cameras"].push_back(cam);

    for (const auto& [cam, lanes] : by_cam) {
        fs::create_directories(dir / "cameras" / cam);
        std::ofstream bin(dir / "cameras" / cam / "arrays.bin", std::ios::binary | std::ios::trunc);
        std::ofstream jsonl(dir / "cameras" / cam / "lanes.jsonl", std::ios::trunc);
        for (const auto* rec : lanes) {
            json line;
            line["lane_id"] = rec->lane_id;
            line["group_id"] = rec->group_id;
            line["camera_id"] = rec->camera_id;
            line["role_class"] = scene::role_class_name(rec->role_class);
            line["truth_rank"] = rec->truth_rank;
            line["truth_leftmost"] = rec->truth_leftmost;
            line["truth_rightmost"] = rec->truth_rightmost;
            line["truth_group_size"] = rec->truth_group_size;
            line["geometry_offset"] = io::write_block(bin, io::from_matrix(rec->geometry));
            line["centerline_offset"] = io::write_block(bin, polyline_block(rec->centerline_cam));
            std::vector<double> role(rec->role_vector.data(), rec->role_vector.data() + 5);
            line["role_vector"] = role;
            line["windows"] = json::array();
            for (const auto& w : rec->windows) {
                json wj;
                wj["window_index"] = w.window_index;
                wj["is_valid"] = w.is_valid;
                wj["anomaly_label"] = w.anomaly_label;
                wj["stats"] = {w.stats[0], w.stats[1], w.stats[2], w.stats[3]};
                wj["raw_offsets"] = json::array();
                wj["resampled_offsets"] = json::array();
                for (size_t t = 0; t < w.raw_tracklets.size(); ++t) {
                    wj["raw_offsets"].push_back(io::write_block(bin, polyline_block(w.raw_tracklets[t])));
                    wj["resampled_offsets"].push_back(io::write_block(bin, io::from_matrix(w.tracklets[t])));
                }
                line["windows"].push_back(std::move(wj));
            }
            jsonl << line.dump() << "\n";
        }
    }
    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    mf << manifest.dump(1) << "\n";
}

inline Dataset load_dataset(const fs::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("load_dataset: missing " + (dir / "manifest.json").string());
    json manifest;
    mf >> manifest;
    if (manifest.at("format_version").get<int>() != kFormatVersion)
        throw std::runtime_error("load_dataset: unsupported format version");

    Dataset ds;
    ds.config_echo = manifest.at("config");
    ds.assign_threshold = manifest.at("assign_threshold").get<double>();
    ds.discarded_tracklets = manifest.at("discarded_tracklets").get<int>();

    for (const auto& camj : manifest.at("cameras")) {
        std::string cam = camj.get<std::string>();
        std::ifstream bin(dir / "cameras" / cam / "arrays.bin", std::ios::binary);
        std::ifstream jsonl(dir / "cameras" / cam / "lanes.jsonl");
        if (!bin || !jsonl) throw std::runtime_error("load_dataset: missing files for camera " + cam);
        std::string lstr;
        while (std::getline(jsonl, lstr)) {
            if (lstr.empty()) continue;
            json line = json::parse(lstr);
            LaneRecord rec;
            rec.lane_id = line.at("lane_id").get<std::string>();
            rec.group_id = line.at("group_id").get<std::string>();
            rec.camera_id = line.at("camera_id").get<std::string>();
            rec.role_class = role_class_from_name(line.at("role_class").get<std::string>());
            rec.truth_rank = line.at("truth_rank").get<double>();
            rec.truth_leftmost = line.at("truth_leftmost").get<bool>();
            rec.truth_rightmost = line.at("truth_rightmost").get<bool>();
            rec.truth_group_size = line.at("truth_group_size").get<int>();
            rec.geometry = io::to_matrix(io::read_block(bin, line.at("geometry_offset").get<uint64_t>()));
            rec.centerline_cam = block_polyline(io::read_block(bin, line.at("centerline_offset").get<uint64_t>()));
            auto role = line.at("role_vector").get<std::vector<double>>();
            for (int i = 0; i < 5; ++i) rec.role_vector[i] = role[static_cast<size_t>(i)];
            for (const auto& wj : line.at("windows")) {
                WindowRecord w;
                w.window_index = wj.at("window_index").get<int>();
                w.is_valid = wj.at("is_valid").get<bool>();
                w.anomaly_label = wj.at("anomaly_label").get<int>();
                for (int i = 0; i < 4; ++i) w.stats[i] = wj.at("stats")[static_cast<size_t>(i)].get<double>();
                for (const auto& off : wj.at("raw_offsets"))
                    w.raw_tracklets.push_back(block_polyline(io::read_block(bin, off.get<uint64_t>())));
                for (const auto& off : wj.at("resampled_offsets")) {
                    w.tracklets.push_back(io::to_matrix(io::read_block(bin, off.get<uint64_t>())));
                    w.valid_mask.push_back(true);
                }
                rec.windows.push_back(std::move(w));
            }
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

}  // namespace lanerep::data
