// Scene generation, tracklet-to-lane assignment, dataset construction,
// serialization round trips, and config parsing.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lanerep/anomaly.hpp"
#include "lanerep/config.hpp"
#include "lanerep/dataset_io.hpp"
#include "lanerep/scene.hpp"

namespace fs = std::filesystem;
using namespace lanerep;
using Catch::Approx;

namespace {

scene::SceneConfig small_config() {
    scene::SceneConfig sc;
    sc.n_cameras = 3;
    sc.groups_per_camera = 2;
    sc.total_groups = 0;
    sc.lanes_per_group_range = {2, 4};
    sc.frames_per_window = 150;
    sc.n_windows = 3;
    sc.tracklets_per_lane_per_window_range = {3, 5};
    sc.seed = 99;
    return sc;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string tree_bytes(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += f.filename().string() + "\x01" + file_bytes(f) + "\x02";
    return all;
}

}  // namespace

TEST_CASE("default scene matches the target population") {
    scene::SceneConfig sc;  // defaults: 16 cameras, 38 groups
    auto ds = scene::generate_scene(sc);
    std::set<std::string> cams, groups;
    int leftmost = 0, rightmost = 0, interior = 0, merge = 0;
    for (const auto& l : ds.lanes) {
        cams.insert(l.camera_id);
        groups.insert(l.group_id);
        switch (l.role_class) {
            case scene::RoleClass::leftmost: ++leftmost; break;
            case scene::RoleClass::rightmost: ++rightmost; break;
            case scene::RoleClass::interior: ++interior; break;
            case scene::RoleClass::merge: ++merge; break;
        }
    }
    REQUIRE(cams.size() == 16);
    REQUIRE(groups.size() == 38);
    REQUIRE(ds.lanes.size() >= 100);
    REQUIRE(ds.lanes.size() <= 160);
    // role mix roughly 28.8/28.8/28.8/13.6%
    auto frac = [&](int n) { return static_cast<double>(n) / ds.lanes.size(); };
    REQUIRE(frac(leftmost) == Approx(0.288).margin(0.08));
    REQUIRE(frac(rightmost) == Approx(0.288).margin(0.08));
    REQUIRE(frac(merge) == Approx(0.136).margin(0.08));
    // observations stay inside the unit square
    for (const auto& t : ds.tracklets)
        for (const auto& p : t.points) {
            REQUIRE(p.x >= 0.0);
            REQUIRE(p.x <= 1.0);
            REQUIRE(p.y >= 0.0);
            REQUIRE(p.y <= 1.0);
        }
}

TEST_CASE("degenerate single-lane group is both leftmost and rightmost") {
    scene::SceneConfig sc;
    sc.n_cameras = 1;
    sc.groups_per_camera = 1;
    sc.total_groups = 0;
    sc.lanes_per_group_range = {1, 1};
    sc.merge_fraction = 0.0;
    sc.frames_per_window = 150;
    sc.n_windows = 1;
    auto ds = scene::generate_scene(sc);
    REQUIRE(ds.lanes.size() == 1);
    REQUIRE(ds.lanes[0].leftmost);
    REQUIRE(ds.lanes[0].rightmost);
    REQUIRE(ds.lanes[0].group_size == 1);
}

TEST_CASE("scene generation is deterministic and seed-sensitive") {
    auto a = scene::generate_scene(small_config());
    auto b = scene::generate_scene(small_config());
    REQUIRE(a.tracklets.size() == b.tracklets.size());
    for (size_t i = 0; i < a.tracklets.size(); ++i) {
        REQUIRE(a.tracklets[i].tracklet_id == b.tracklets[i].tracklet_id);
        for (size_t j = 0; j < a.tracklets[i].points.size(); ++j) {
            REQUIRE(a.tracklets[i].points[j].x == b.tracklets[i].points[j].x);
            REQUIRE(a.tracklets[i].points[j].y == b.tracklets[i].points[j].y);
        }
    }
    auto sc = small_config();
    sc.seed = 100;
    auto c = scene::generate_scene(sc);
    bool any_diff = c.tracklets.size() != a.tracklets.size();
    for (size_t i = 0; !any_diff && i < a.tracklets.size(); ++i)
        any_diff = a.tracklets[i].points.size() != c.tracklets[i].points.size() ||
                   a.tracklets[i].points[0].x != c.tracklets[i].points[0].x;
    REQUIRE(any_diff);
}

TEST_CASE("tracklet assignment recovers ground-truth lanes") {
    auto ds = scene::generate_scene(small_config());
    auto built = data::build_dataset(ds);
    // every tracklet that was assigned must appear under its ground-truth
    // lane: the synthetic noise is far below the assignment threshold
    long assigned = 0;
    for (const auto& r : built.records)
        for (const auto& w : r.windows) assigned += w.valid_count();
    REQUIRE(assigned + built.discarded_tracklets == static_cast<long>(ds.tracklets.size()));
    REQUIRE(assigned > static_cast<long>(ds.tracklets.size()) * 8 / 10);

    for (const auto& r : built.records) {
        REQUIRE(r.geometry.rows() == 16);
        REQUIRE(r.role_vector[0] == Approx(r.truth_rank));
        for (const auto& w : r.windows) {
            REQUIRE(w.tracklets.size() == w.valid_mask.size());
            if (w.is_valid) {
                REQUIRE(w.valid_count() >= 1);
                REQUIRE(w.stats[3] ==
                        Approx(std::min(1.0, w.valid_count() / data::kCountCap)));
            }
        }
    }
}

TEST_CASE("window stats reflect the kinematic layout") {
    auto ds = scene::generate_scene(small_config());
    auto built = data::build_dataset(ds);
    // leftmost lanes are simulated faster than rightmost ones; compare the
    // mean speed stat across roles
    double left_speed = 0, right_speed = 0;
    int nl = 0, nr = 0;
    for (const auto& r : built.records) {
        if (r.role_class == scene::RoleClass::merge) continue;
        for (const auto& w : r.windows) {
            if (!w.is_valid) continue;
            if (r.truth_leftmost) {
                left_speed += w.stats[0];
                ++nl;
            } else if (r.truth_rightmost) {
                right_speed += w.stats[0];
                ++nr;
            }
        }
    }
    REQUIRE(nl > 0);
    REQUIRE(nr > 0);
    REQUIRE(left_speed / nl > right_speed / nr);
}

TEST_CASE("scene and dataset round trip byte-identically") {
    auto ds = scene::generate_scene(small_config());
    fs::path tmp = fs::temp_directory_path() / "lanerep_io_test";
    fs::remove_all(tmp);
    data::save_scene(ds, (tmp / "scene_a").string());
    auto loaded = data::load_scene((tmp / "scene_a").string());
    REQUIRE(loaded.tracklets.size() == ds.tracklets.size());
    REQUIRE(loaded.lanes.size() == ds.lanes.size());
    data::save_scene(loaded, (tmp / "scene_b").string());
    REQUIRE(tree_bytes(tmp / "scene_a") == tree_bytes(tmp / "scene_b"));

    auto built = data::build_dataset(ds);
    data::Dataset d1;
    d1.config_echo = data::scene_config_to_json(ds.config);
    d1.records = built.records;
    d1.discarded_tracklets = built.discarded_tracklets;
    data::save_dataset(d1, (tmp / "ds_a").string());
    auto d2 = data::load_dataset((tmp / "ds_a").string());
    REQUIRE(d2.records.size() == d1.records.size());
    data::save_dataset(d2, (tmp / "ds_b").string());
    REQUIRE(tree_bytes(tmp / "ds_a") == tree_bytes(tmp / "ds_b"));
    // loaded windows carry identical tensors
    for (size_t i = 0; i < d1.records.size(); ++i) {
        REQUIRE(d2.records[i].lane_id == d1.records[i].lane_id);
        // tensors persist as float32; equality holds at that precision
        REQUIRE((d2.records[i].geometry - d1.records[i].geometry).cwiseAbs().maxCoeff() < 1e-6);
        for (size_t w = 0; w < d1.records[i].windows.size(); ++w)
            REQUIRE((d2.records[i].windows[w].stats - d1.records[i].windows[w].stats).cwiseAbs().maxCoeff() < 1e-6);
    }
    fs::remove_all(tmp);
}

TEST_CASE("positive pair mining links same-group lanes across cameras only") {
    auto ds = scene::generate_scene(small_config());
    auto built = data::build_dataset(ds);
    auto pairs = data::mine_positive_pairs(built.records);
    auto find = [&](const std::string& id) -> const data::LaneRecord& {
        for (const auto& r : built.records)
            if (r.lane_id == id) return r;
        FAIL("unknown lane " + id);
        return built.records[0];
    };
    for (const auto& [a, b] : pairs.positives) {
        const auto& ra = find(a);
        const auto& rb = find(b);
        REQUIRE(ra.camera_id != rb.camera_id);
        REQUIRE(std::abs(ra.truth_rank - rb.truth_rank) < 0.15);
        REQUIRE(ra.truth_leftmost == rb.truth_leftmost);
        REQUIRE(ra.truth_rightmost == rb.truth_rightmost);
    }
    REQUIRE_FALSE(pairs.positives.empty());
}

TEST_CASE("anomaly injection never empties a window and refreshes stats") {
    auto ds = scene::generate_scene(small_config());
    auto built = data::build_dataset(ds);
    Rng rng(5);
    int tested = 0;
    for (auto& r : built.records) {
        for (auto& w : r.windows) {
            if (!w.is_valid) continue;
            data::WindowRecord before = w;
            for (auto kind : {anomaly::AnomalyKind::speed_reduction,
                              anomaly::AnomalyKind::trajectory_dropout,
                              anomaly::AnomalyKind::lateral_deviation}) {
                data::WindowRecord copy = before;
                anomaly::inject(copy, anomaly::default_spec(kind), r.centerline_cam, rng);
                REQUIRE(copy.anomaly_label == 1);
                REQUIRE(copy.valid_count() >= 1);
                REQUIRE(copy.is_valid);
                if (kind == anomaly::AnomalyKind::speed_reduction)
                    REQUIRE(copy.stats[0] < before.stats[0]);
                if (kind == anomaly::AnomalyKind::trajectory_dropout)
                    REQUIRE(copy.valid_count() <= before.valid_count());
                if (kind == anomaly::AnomalyKind::lateral_deviation)
                    REQUIRE(std::abs(copy.stats[2] - before.stats[2]) > 0.0);
                ++tested;
            }
        }
        if (tested > 30) break;
    }
    REQUIRE(tested > 0);
    anomaly::AnomalySpec bad{anomaly::AnomalyKind::speed_reduction, 1.5};
    REQUIRE_THROWS(bad.validate());
}

TEST_CASE("run config parses known keys and rejects unknown ones") {
    fs::path tmp = fs::temp_directory_path() / "lanerep_cfg_test.json";
    {
        std::ofstream os(tmp);
        os << R"({"seed": 3, "scene": {"n_cameras": 4, "seed": 9},
                  "training": {"epochs": 17, "regime": "contrastive_only"}})";
    }
    auto cfg = config::load_run_config(tmp.string());
    REQUIRE(cfg.seed == 3);
    REQUIRE(cfg.scene.n_cameras == 4);
    REQUIRE(cfg.scene.seed == 9);
    REQUIRE(cfg.training.epochs == 17);
    REQUIRE(cfg.training.regime == train::Regime::contrastive_only);
    {
        std::ofstream os(tmp);
        os << R"({"scene": {"n_camras": 4}})";  // typo must be caught
    }
    REQUIRE_THROWS_WITH(config::load_run_config(tmp.string()),
                        Catch::Matchers::ContainsSubstring("n_camras"));
    {
        std::ofstream os(tmp);
        os << R"({"training": {"regime": "bogus"}})";
    }
    REQUIRE_THROWS(config::load_run_config(tmp.string()));
    fs::remove(tmp);
}
