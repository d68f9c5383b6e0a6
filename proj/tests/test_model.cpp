// Encoder behavior, training loop determinism and regimes, anomaly detector
// causality, diffusion generator invariants, and evaluation properties.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "lanerep/anomaly.hpp"
#include "lanerep/dataset_io.hpp"
#include "lanerep/diffusion.hpp"
#include "lanerep/encoder.hpp"
#include "lanerep/evalkit.hpp"
#include "lanerep/plot.hpp"
#include "lanerep/scene.hpp"
#include "lanerep/train.hpp"

namespace fs = std::filesystem;
using namespace lanerep;
using Catch::Approx;

namespace {

data::Dataset make_dataset(int cameras = 3, uint64_t seed = 77) {
    scene::SceneConfig sc;
    sc.n_cameras = cameras;
    sc.groups_per_camera = 2;
    sc.total_groups = 0;
    sc.lanes_per_group_range = {2, 4};
    sc.frames_per_window = 150;
    sc.n_windows = 3;
    sc.tracklets_per_lane_per_window_range = {3, 5};
    sc.seed = seed;
    auto scene_ds = scene::generate_scene(sc);
    auto built = data::build_dataset(scene_ds);
    data::Dataset ds;
    ds.config_echo = data::scene_config_to_json(sc);
    ds.records = std::move(built.records);
    ds.discarded_tracklets = built.discarded_tracklets;
    return ds;
}

model::EncoderConfig tiny_encoder_config() {
    model::EncoderConfig ec;
    ec.transformer_layers = 1;
    ec.attention_heads = 2;
    ec.ffn_dim = 32;
    return ec;
}

}  // namespace

TEST_CASE("encoder forward: shapes, window validity, geometry-dropped queries") {
    auto ds = make_dataset();
    model::LaneEncoder enc(tiny_encoder_config());
    std::vector<model::LaneInput> lanes;
    for (size_t i = 0; i < 4; ++i) lanes.push_back(model::make_lane_input(ds.records[i]));

    ad::Tape t;
    auto out = enc.forward(t, lanes, false, nullptr);
    REQUIRE(out.pooled.size() == 4);
    REQUIRE(out.projection.size() == 4);
    REQUIRE(out.rank_logits->val.rows() == 4);
    REQUIRE(out.edge_logits->val.cols() == 2);
    for (size_t i = 0; i < 4; ++i) {
        REQUIRE(out.pooled[i]->val.cols() == 128);
        REQUIRE(out.projection[i]->val.cols() == 64);
        REQUIRE(out.projection[i]->val.norm() == Approx(1.0).margin(1e-9));
        for (size_t w = 0; w < lanes[i].windows.size(); ++w)
            REQUIRE((out.z[i][w] != nullptr) == lanes[i].windows[w].valid);
    }

    // query-side geometry omission zeroes the geometry stream embedding
    auto dropped = lanes;
    for (auto& l : dropped) l.drop_geometry = true;
    ad::Tape t2;
    auto out2 = enc.forward(t2, dropped, false, nullptr);
    for (size_t i = 0; i < 4; ++i) REQUIRE(out2.f_geom[i]->val.norm() == 0.0);
}

TEST_CASE("stream-disable flags make the encoder blind to that stream") {
    auto ds = make_dataset();
    model::LaneEncoder enc(tiny_encoder_config());
    enc.disable_geometry = true;
    auto a = model::make_lane_input(ds.records[0]);
    auto b = a;
    b.geometry.array() += 0.05;  // different annotation, same behavior
    ad::Tape t;
    auto out = enc.forward(t, {a, b}, false, nullptr);
    REQUIRE((out.pooled[0]->val - out.pooled[1]->val).norm() == Approx(0.0).margin(1e-12));
}

TEST_CASE("encoder checkpoint round trip preserves eval embeddings") {
    auto ds = make_dataset();
    model::LaneEncoder enc(tiny_encoder_config());
    auto ck = enc.to_checkpoint({{"note", "test"}});
    fs::path tmp = fs::temp_directory_path() / "lanerep_enc.ckpt";
    nn::save_checkpoint(ck, tmp.string());
    model::LaneEncoder enc2(tiny_encoder_config());
    enc2.load_from(nn::load_checkpoint(tmp.string()));
    auto e1 = eval::encode_dataset(enc, ds);
    auto e2 = eval::encode_dataset(enc2, ds);
    for (const auto& [id, le] : e1)
        REQUIRE((le.pooled - e2.at(id).pooled).cwiseAbs().maxCoeff() < 1e-5);  // float32 storage
    fs::remove(tmp);
}

TEST_CASE("training runs are deterministic and freezing stops encoder updates") {
    auto ds = make_dataset();
    train::TrainConfig tc;
    tc.epochs = 2;
    tc.batch_groups = 4;

    auto run_once = [&]() {
        model::LaneEncoder enc(tiny_encoder_config());
        anomaly::Detector det(anomaly::DetectorConfig{});
        train::Trainer tr(tc, &enc, &det, &ds);
        auto res = tr.run("", "");
        return std::tuple{res.curves.back().pos_sim, res.curves.back().neg_sim,
                          enc.fuse1.W.value.sum()};
    };
    auto [p1, n1, w1] = run_once();
    auto [p2, n2, w2] = run_once();
    REQUIRE(p1 == p2);
    REQUIRE(n1 == n2);
    REQUIRE(w1 == w2);

    // two-stage: after the split epoch the encoder is frozen
    model::LaneEncoder enc(tiny_encoder_config());
    anomaly::Detector det{anomaly::DetectorConfig{}};
    train::TrainConfig ts = tc;
    ts.epochs = 4;
    ts.two_stage_split = 0.5;
    ts.regime = train::Regime::two_stage_frozen;
    train::Trainer tr(ts, &enc, &det, &ds);
    tr.run("", "");
    Eigen::MatrixXd frozen_w = enc.fuse1.W.value;
    REQUIRE(enc.fuse1.W.frozen);

    // baseline regime trains nothing
    train::TrainConfig tb = tc;
    tb.regime = train::Regime::traj_stats_baseline;
    model::LaneEncoder enc3(tiny_encoder_config());
    anomaly::Detector det3{anomaly::DetectorConfig{}};
    REQUIRE_THROWS(train::Trainer(tb, &enc3, &det3, &ds).run("", ""));
}

TEST_CASE("detector is causal and masks invalid windows") {
    anomaly::DetectorConfig dc;
    anomaly::Detector det(dc);
    Rng rng(8);
    auto row = [&](uint64_t s) {
        Rng r(s);
        Eigen::RowVectorXd v(128);
        for (int i = 0; i < 128; ++i) v(i) = r.normal();
        return v;
    };
    std::vector<Eigen::RowVectorXd> z{row(1), row(2), row(3), row(4)};
    std::vector<bool> valid{true, true, false, true};
    auto p1 = det.detect_sequence(z, valid);
    REQUIRE(p1.size() == 4);
    REQUIRE(p1[2] == 0.0);  // masked
    // changing a later window must not change earlier probabilities
    auto z2 = z;
    z2[3] = row(99);
    auto p2 = det.detect_sequence(z2, valid);
    REQUIRE(p1[0] == p2[0]);
    REQUIRE(p1[1] == p2[1]);
    REQUIRE(p1[3] != p2[3]);
    // an invalid window passes hidden state through: window 3 still sees 0..1
    std::vector<bool> all_valid{true, true, true, true};
    auto p3 = det.detect_sequence(z, all_valid);
    REQUIRE(p3[3] != p1[3]);
}

TEST_CASE("anchor canonicalization: round trip and similarity invariance") {
    auto ds = make_dataset();
    const auto& g = ds.records[0].geometry;
    auto [w, frame] = gen::canonicalize_anchor(g);
    REQUIRE(w.size() == 32);
    Eigen::MatrixX2d back = gen::decanonicalize(w, frame);
    REQUIRE((back - g).cwiseAbs().maxCoeff() < 1e-9);

    // canonical form is invariant to rotation + translation + scale
    double th = 0.7, s = 2.3;
    Eigen::Matrix2d R;
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    Eigen::MatrixX2d g2 = (s * (g * R.transpose())).rowwise() + Eigen::RowVector2d(0.4, -1.2);
    auto [w2, frame2] = gen::canonicalize_anchor(g2);
    REQUIRE((w2 - w).cwiseAbs().maxCoeff() < 1e-6);

    REQUIRE_THROWS(gen::canonicalize_anchor(Eigen::MatrixX2d::Zero(16, 2)));
    REQUIRE_THROWS(gen::canonicalize_anchor(Eigen::MatrixX2d::Random(7, 2)));
}

TEST_CASE("warm-start sampling: determinism, ordering, and the t0=0 identity") {
    auto ds = make_dataset();
    model::LaneEncoder enc(tiny_encoder_config());
    gen::DiffusionConfig dc;
    dc.T_diff = 20;
    dc.t0 = 6;
    dc.denoiser_hidden = 64;
    dc.denoiser_layers = 2;
    dc.n_candidates = 4;
    gen::Denoiser den(dc);

    gen::GenerationSpec spec;
    spec.anchor = ds.records[0].geometry;
    spec.group_id = ds.records[0].group_id;
    spec.target_embedding = Eigen::VectorXd::Ones(128).normalized();
    auto c1 = gen::sample(spec, dc, den, enc, 42);
    auto c2 = gen::sample(spec, dc, den, enc, 42);
    REQUIRE(c1.size() == 4);
    for (size_t i = 0; i < c1.size(); ++i) {
        REQUIRE((c1[i].points - c2[i].points).cwiseAbs().maxCoeff() == 0.0);
        if (i) REQUIRE(c1[i].cosine_score <= c1[i - 1].cosine_score);  // ranked
        REQUIRE(c1[i].points.allFinite());
    }
    auto c3 = gen::sample(spec, dc, den, enc, 43);
    REQUIRE((c1[0].points - c3[0].points).cwiseAbs().maxCoeff() > 0.0);

    gen::DiffusionConfig d0 = dc;
    d0.t0 = 0;  // no noising: candidates must reproduce the anchor exactly
    for (const auto& c : gen::sample(spec, d0, den, enc, 42))
        REQUIRE((c.points - spec.anchor).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("candidate export round trips through json + binary") {
    std::vector<gen::Candidate> cands(3);
    Rng rng(3);
    for (auto& c : cands) {
        c.points = Eigen::MatrixX2d::Zero(16, 2);
        for (int i = 0; i < 16; ++i) c.points.row(i) << rng.uniform(0, 1), rng.uniform(0, 1);
        c.cosine_score = rng.uniform(-1, 1);
        c.smoothness = rng.uniform(0, 2);
        c.spec_role = gen::SpecRole::merge;
        c.group_id = "g7";
    }
    fs::path tmp = fs::temp_directory_path() / "lanerep_cands";
    fs::create_directories(tmp);
    gen::save_candidates(cands, (tmp / "c.json").string(), (tmp / "c.bin").string());
    auto back = gen::load_candidates((tmp / "c.json").string(), (tmp / "c.bin").string());
    REQUIRE(back.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        REQUIRE((back[i].points - cands[i].points).cwiseAbs().maxCoeff() < 1e-6);
        REQUIRE(back[i].group_id == "g7");
        REQUIRE(back[i].spec_role == gen::SpecRole::merge);
    }
    fs::remove_all(tmp);
}

TEST_CASE("LOCO matching never matches within the held-out camera") {
    auto ds = make_dataset(4);
    model::LaneEncoder enc(tiny_encoder_config());
    for (auto mode : {eval::QueryMode::with_geometry, eval::QueryMode::geometry_dropped}) {
        auto results = eval::loco_sweep(ds, enc, mode);
        REQUIRE(results.size() == ds.records.size());  // every lane queried once
        auto cam_of = [&](const std::string& id) {
            return ds.find(id)->camera_id;
        };
        for (const auto& m : results) REQUIRE(cam_of(m.query_id) != cam_of(m.matched_id));
    }
    REQUIRE_THROWS(eval::loco_match(ds, enc, "no_such_camera", eval::QueryMode::with_geometry));
}

TEST_CASE("matching metrics micro-F1 hand case") {
    std::vector<eval::MatchResult> rs(3);
    // lane 0: query L, matched L and R-mismatch
    rs[0].query_leftmost = true;
    rs[0].ref_leftmost = true;   // TP
    rs[0].query_rightmost = false;
    rs[0].ref_rightmost = true;  // FP
    rs[1].query_leftmost = true;
    rs[1].ref_leftmost = false;  // FN
    rs[2].query_rightmost = true;
    rs[2].ref_rightmost = true;  // TP
    for (auto& r : rs) {
        r.rank_diff = 0.1;
        r.similarity = 0.9;
    }
    auto m = eval::matching_metrics(rs);
    // micro: TP=2, FP=1, FN=1 -> P=2/3, R=2/3, F1=2/3
    REQUIRE(m.edge_f1 == Approx(2.0 / 3.0).margin(1e-12));
    REQUIRE(m.rank_mae == Approx(0.1).margin(1e-12));
    REQUIRE(m.mean_similarity == Approx(0.9).margin(1e-12));
}

TEST_CASE("trajectory-stats baseline matches on behavior alone") {
    auto ds = make_dataset(4);
    auto results = eval::traj_stats_sweep(ds);
    REQUIRE(results.size() == ds.records.size());
    for (const auto& m : results)
        REQUIRE(ds.find(m.query_id)->camera_id != ds.find(m.matched_id)->camera_id);
}

TEST_CASE("generation evaluation classifies landing spots by role") {
    auto ds = make_dataset();
    // synthetic candidates sitting exactly on real lanes
    std::vector<gen::Candidate> cands;
    int expected_hits = 0, total = 0;
    for (const auto& r : ds.records) {
        if (r.role_class != scene::RoleClass::leftmost && r.role_class != scene::RoleClass::rightmost)
            continue;
        gen::Candidate c;
        c.points = r.geometry;
        c.group_id = r.group_id;
        c.spec_role = r.role_class == scene::RoleClass::leftmost ? gen::SpecRole::leftmost
                                                                 : gen::SpecRole::rightmost;
        c.smoothness = geom::curvature_smoothness(geom::to_polyline(r.geometry));
        cands.push_back(c);
        ++expected_hits;
        ++total;
        if (total >= 8) break;
    }
    REQUIRE(total > 0);
    auto tbl = eval::generation_eval(cands, ds);
    REQUIRE(tbl.spec_accuracy.at("edge") == Approx(1.0));
    for (const auto& [k, v] : tbl.per_spec_chamfer) REQUIRE(v == Approx(0.0).margin(1e-12));
    REQUIRE(tbl.outlier_rate <= 0.5);  // real lanes are not outliers vs themselves
}

TEST_CASE("plots are written as valid BMP files") {
    fs::path tmp = fs::temp_directory_path() / "lanerep_plot.bmp";
    plot::Series s;
    s.x = {0, 1, 2, 3};
    s.y = {0, 1, 0, 1};
    plot::line_chart({s}, tmp.string(), 320, 200);
    std::ifstream is(tmp, std::ios::binary);
    REQUIRE(is.good());
    char hdr[2];
    is.read(hdr, 2);
    REQUIRE(hdr[0] == 'B');
    REQUIRE(hdr[1] == 'M');
    is.seekg(0, std::ios::end);
    // 24-bit rows padded to 4 bytes: 320*3 = 960, header 54 bytes
    REQUIRE(static_cast<long>(is.tellg()) == 54 + 960 * 200);
    fs::remove(tmp);
}

TEST_CASE("csv writers emit stable headers") {
    fs::path tmp = fs::temp_directory_path() / "lanerep_csv_test";
    fs::create_directories(tmp);
    eval::MatchResult m;
    m.query_id = "a";
    m.matched_id = "b";
    eval::write_match_csv({m}, (tmp / "m.csv").string());
    std::ifstream is(tmp / "m.csv");
    std::string header;
    std::getline(is, header);
    REQUIRE(header == "query_id,matched_id,similarity,rank_diff,query_rank,ref_rank,left_agree,right_agree");

    train::CurveRow row;
    train::write_curves_csv({row}, (tmp / "c.csv").string());
    std::ifstream ic(tmp / "c.csv");
    std::getline(ic, header);
    REQUIRE(header == "epoch,pos_sim,neg_sim,anomaly_acc,l_ctr,l_role,l_group,l_temp,w_ctr,w_role");
    fs::remove_all(tmp);
}
