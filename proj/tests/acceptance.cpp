// End-to-end acceptance harness: builds the default synthetic scene, trains
// every regime on the same data and seed, and prints one PASS/FAIL line per
// criterion. Exit code = number of failed criteria.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lanerep/dataset_io.hpp"
#include "lanerep/diffusion.hpp"
#include "lanerep/harness.hpp"
#include "lanerep/scene.hpp"
#include "lanerep/train.hpp"

namespace fs = std::filesystem;
using namespace lanerep;

namespace {

int g_failures = 0;

void report(int n, bool ok, const std::string& detail) {
    std::cout << "CRITERION " << n << ": " << (ok ? "PASS" : "FAIL") << " - " << detail
              << std::endl;
    if (!ok) ++g_failures;
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

struct RegimeRun {
    model::LaneEncoder enc;
    anomaly::Detector det;
    train::TrainResult result;
};

std::unique_ptr<RegimeRun> run_regime(train::Regime regime, int epochs, const data::Dataset& ds) {
    auto run = std::make_unique<RegimeRun>();
    train::TrainConfig tc;
    tc.regime = regime;
    tc.epochs = epochs;
    tc.learning_rate = 2e-4;      // 1e-3 diverges on the InfoNCE term at tau=0.07
    tc.weights.alpha = 3.0;       // temporal emphasis; contrastive_only ignores it
    tc.corruption_fraction = 0.35;
    train::Trainer trainer(tc, &run->enc, &run->det, &ds);
    auto t0 = std::chrono::steady_clock::now();
    run->result = trainer.run();
    auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& last = run->result.curves.back();
    std::cerr << "[train " << train::regime_name(regime) << "] epochs=" << epochs
              << " pos=" << fmt(last.pos_sim) << " neg=" << fmt(last.neg_sim)
              << " acc=" << fmt(last.anomaly_acc) << " (" << fmt(secs, 1) << "s)" << std::endl;
    return run;
}

// recursive byte comparison of two directories (same relative file set)
bool dirs_identical(const fs::path& a, const fs::path& b, std::string& why) {
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file() && !fs::exists(a / fs::relative(e.path(), b))) {
            why = "extra file " + fs::relative(e.path(), b).string();
            return false;
        }
    for (const auto& r : rel) {
        std::ifstream fa(a / r, std::ios::binary), fb(b / r, std::ios::binary);
        if (!fa || !fb) {
            why = "missing " + r.string();
            return false;
        }
        std::ostringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        if (sa.str() != sb.str()) {
            why = "bytes differ: " + r.string();
            return false;
        }
    }
    return true;
}

}  // namespace

int main(int, char** argv) {
    std::cout.setf(std::ios::fixed);

    // ---- criterion 1: oracle + gradient suites -----------------------------
    {
        fs::path bindir = fs::absolute(fs::path(argv[0])).parent_path();
        auto run_suite = [&](const char* name) {
            std::string cmd = (bindir / name).string() + " > /dev/null 2>&1";
            return std::system(cmd.c_str()) == 0;
        };
        bool oracles = run_suite("test_oracles");
        bool grads = run_suite("test_grad");
        report(1, oracles && grads,
               std::string("oracle suite ") + (oracles ? "green" : "RED") +
                   ", gradient checks " + (grads ? "green" : "RED"));
    }

    // ---- shared data: the default synthetic scene ---------------------------
    scene::SceneConfig sc;  // 16 cameras, 38 groups, 300-frame windows, seed 7
    auto scene_ds = scene::generate_scene(sc);
    auto built = data::build_dataset(scene_ds, data::kDefaultAssignThreshold);
    data::Dataset ds;
    ds.config_echo = data::scene_config_to_json(sc);
    ds.assign_threshold = data::kDefaultAssignThreshold;
    ds.records = std::move(built.records);
    std::cerr << "[data] " << ds.records.size() << " lanes, " << ds.camera_ids().size()
              << " cameras" << std::endl;

    const int kMainEpochs = 80;      // joint and two-stage (criteria 2, 4-9)
    const int kAblationEpochs = 30;  // regime comparison (criterion 3)

    auto joint = run_regime(train::Regime::joint, kMainEpochs, ds);
    auto two_stage = run_regime(train::Regime::two_stage_frozen, kMainEpochs, ds);
    auto contrastive = run_regime(train::Regime::contrastive_only, kAblationEpochs, ds);
    auto geom_only = run_regime(train::Regime::geometry_only, kAblationEpochs, ds);
    auto traj_only = run_regime(train::Regime::trajectory_only, kAblationEpochs, ds);

    // ---- criterion 2: LOCO per fold, geometry-dropped queries ---------------
    {
        double worst_mae = 0.0, worst_f1 = 1.0;
        std::string worst_cam;
        for (const auto& cam : ds.camera_ids()) {
            auto fold = eval::loco_match(ds, joint->enc, cam, eval::QueryMode::geometry_dropped);
            auto m = eval::matching_metrics(fold);
            if (m.rank_mae > worst_mae) worst_mae = m.rank_mae;
            if (m.edge_f1 < worst_f1) {
                worst_f1 = m.edge_f1;
                worst_cam = cam;
            }
        }
        report(2, worst_mae <= 0.05 && worst_f1 >= 0.95,
               "worst fold over 16 cameras: rank MAE " + fmt(worst_mae) + " (limit 0.05), edge F1 " +
                   fmt(worst_f1) + " (limit 0.95, fold " + worst_cam + ")");
    }

    // ---- criterion 3: ablation ordering --------------------------------------
    {
        auto agg = [&](model::LaneEncoder& enc) {
            return eval::matching_metrics(eval::loco_sweep(ds, enc, eval::QueryMode::with_geometry));
        };
        auto mj = agg(joint->enc);
        auto mc = agg(contrastive->enc);
        auto mg = agg(geom_only->enc);
        auto mt = agg(traj_only->enc);
        bool weak = mg.edge_f1 <= 0.60 && mt.edge_f1 <= 0.60 && mg.rank_mae >= 0.15 &&
                    mt.rank_mae >= 0.15;
        bool ordered = mg.edge_f1 < mc.edge_f1 && mg.edge_f1 < mj.edge_f1 &&
                       mt.edge_f1 < mc.edge_f1 && mt.edge_f1 < mj.edge_f1 &&
                       mg.rank_mae > mc.rank_mae && mg.rank_mae > mj.rank_mae &&
                       mt.rank_mae > mc.rank_mae && mt.rank_mae > mj.rank_mae;
        report(3, weak && ordered,
               "edge F1 geom-only " + fmt(mg.edge_f1) + ", traj-only " + fmt(mt.edge_f1) +
                   " (limit 0.60) vs contrastive " + fmt(mc.edge_f1) + ", joint " + fmt(mj.edge_f1) +
                   "; rank MAE geom-only " + fmt(mg.rank_mae) + ", traj-only " + fmt(mt.rank_mae) +
                   " (floor 0.15) vs contrastive " + fmt(mc.rank_mae) + ", joint " + fmt(mj.rank_mae));
    }

    // ---- criterion 4: joint beats two-stage; two-stage plateaus --------------
    {
        const auto& jc = joint->result.curves;
        const auto& tc = two_stage->result.curves;
        double j_final = jc.back().anomaly_acc;
        double t_final = tc.back().anomaly_acc;
        size_t q = tc.size() - tc.size() / 4;  // start of the last quarter
        double t_quarter = tc[q].anomaly_acc;
        double improvement = t_final - t_quarter;
        report(4, j_final - t_final >= 0.05 && improvement < 0.01,
               "joint final acc " + fmt(j_final) + " vs two-stage " + fmt(t_final) +
                   " (need +0.05); two-stage last-quarter improvement " + fmt(improvement) +
                   " (need < 0.01)");
    }

    // ---- criterion 5: contrastive health -------------------------------------
    {
        const auto& last = joint->result.curves.back();
        double gap = last.pos_sim - last.neg_sim;
        report(5, last.pos_sim >= 0.5 && last.neg_sim <= 0.1 && gap >= 0.5,
               "final pos cosine " + fmt(last.pos_sim) + " (need >= 0.5), neg " + fmt(last.neg_sim) +
                   " (need <= 0.1), gap " + fmt(gap) + " (need >= 0.5)");
    }

    // ---- criterion 6: anomaly detection at the default window ----------------
    harness::AnomalyEvalResult an300 =
        harness::eval_anomaly_on(joint->enc, joint->det, ds, 21, 0.15);
    report(6, an300.auroc >= 0.95 && an300.at_youden.f1 >= 0.85,
           "AUROC " + fmt(an300.auroc) + " (need >= 0.95), F1 at Youden-J threshold " +
               fmt(an300.at_youden.f1) + " (need >= 0.85)");

    // ---- criterion 7: window-size sweep ---------------------------------------
    {
        const int total_frames = sc.frames_per_window * sc.n_windows;
        std::map<int, harness::AnomalyEvalResult> sweep;
        for (int wf : {60, 300, 600, 900}) {
            scene::SceneConfig wc = sc;
            wc.frames_per_window = wf;
            wc.n_windows = std::max(1, total_frames / wf);
            auto wscene = scene::generate_scene(wc);
            auto wbuilt = data::build_dataset(wscene, ds.assign_threshold);
            data::Dataset wds;
            wds.config_echo = data::scene_config_to_json(wc);
            wds.records = std::move(wbuilt.records);
            anomaly::Detector wdet(joint->det.cfg);
            harness::train_detector_frozen(joint->enc, wdet, wds, 21, 4, 60, 0.3);
            sweep[wf] = harness::eval_anomaly_on(joint->enc, wdet, wds, 21, 0.15);
            std::cerr << "[sweep " << wf << "] auroc=" << fmt(sweep[wf].auroc)
                      << " p=" << fmt(sweep[wf].at_youden.precision)
                      << " r=" << fmt(sweep[wf].at_youden.recall)
                      << " f1=" << fmt(sweep[wf].at_youden.f1) << std::endl;
        }
        double p60 = sweep[60].at_youden.precision, p300 = sweep[300].at_youden.precision;
        double r60 = sweep[60].at_youden.recall, r300 = sweep[300].at_youden.recall;
        double f300 = sweep[300].at_youden.f1;
        double d600 = std::abs(sweep[600].at_youden.f1 - f300);
        double d900 = std::abs(sweep[900].at_youden.f1 - f300);
        bool ok = (p300 - p60 >= 0.10) && r60 >= 0.85 && r300 >= 0.85 && d600 <= 0.05 &&
                  d900 <= 0.05;
        report(7, ok,
               "precision 60f " + fmt(p60) + " vs 300f " + fmt(p300) +
                   " (need gap >= 0.10); recall " + fmt(r60) + "/" + fmt(r300) +
                   " (need >= 0.85); |dF1| at 600f " + fmt(d600) + ", 900f " + fmt(d900) +
                   " (need <= 0.05)");
    }

    // ---- criterion 8: similarity-category structure ---------------------------
    {
        auto emb = eval::encode_dataset(joint->enc, ds);
        auto cat = eval::category_similarity(ds, emb);
        double gap = cat.cross_camera_same_rank - cat.same_group_siblings;
        report(8, gap >= 0.5,
               "median cosine: cross-camera same-rank " + fmt(cat.cross_camera_same_rank) +
                   ", same-group siblings " + fmt(cat.same_group_siblings) + ", gap " + fmt(gap) +
                   " (need >= 0.5)");
    }

    // ---- criterion 9: conditioned generation ----------------------------------
    {
        gen::DiffusionConfig dc;
        auto emb = eval::encode_dataset(joint->enc, ds);
        std::vector<gen::DenoiserItem> items;
        for (const auto& r : ds.records) {
            auto [w, frame] = gen::canonicalize_anchor(r.geometry);
            items.push_back({w, emb.at(r.lane_id).pooled.transpose()});
        }
        gen::Denoiser den(dc);
        gen::DenoiserTrainConfig dtc;
        auto losses = gen::train_denoiser(den, items, dtc);
        std::cerr << "[denoiser] mse " << fmt(losses.front(), 4) << " -> "
                  << fmt(losses.back(), 4) << std::endl;

        std::map<std::string, std::vector<const data::LaneRecord*>> by_group;
        for (const auto& r : ds.records) by_group[r.group_id].push_back(&r);
        std::vector<gen::Candidate> all;
        gen::GenerationSpec first_spec;
        bool have_first = false;
        for (const auto& [gid, lanes] : by_group) {
            for (const char* role_name : {"leftmost", "rightmost", "merge"}) {
                gen::SpecRole role = gen::spec_role_from_name(role_name);
                const data::LaneRecord* ref = nullptr;
                for (const auto* r : lanes)
                    if (eval::role_matches(r->role_class, role)) ref = r;
                if (!ref) continue;
                gen::GenerationSpec spec;
                spec.group_id = gid;
                spec.spec_role = role;
                spec.anchor = ref->geometry;
                spec.target_embedding = emb.at(ref->lane_id).pooled.transpose();
                spec.descriptor = harness::lane_mean_descriptor(*ref);
                if (!have_first) {
                    first_spec = spec;
                    have_first = true;
                }
                uint64_t spec_seed = Rng(77).substream(gid).substream(role_name).next_u64();
                auto cands = gen::sample(spec, dc, den, joint->enc, spec_seed);
                all.insert(all.end(), cands.begin(), cands.end());
            }
        }
        auto tbl = eval::generation_eval(all, ds);
        double edge = tbl.spec_accuracy.count("edge") ? tbl.spec_accuracy.at("edge") : 0.0;
        double merge = tbl.spec_accuracy.count("merge") ? tbl.spec_accuracy.at("merge") : 0.0;

        // t0 = 0 must return the anchor exactly
        gen::DiffusionConfig ic = dc;
        ic.t0 = 0;
        auto idc = gen::sample(first_spec, ic, den, joint->enc, 99);
        bool identity = !idc.empty();
        for (const auto& c : idc)
            identity = identity && (c.points - first_spec.anchor).cwiseAbs().maxCoeff() == 0.0;

        bool ok = edge >= 0.85 && merge < edge && tbl.diversity > 0.01 && tbl.outlier_rate <= 0.15 &&
                  identity;
        report(9, ok,
               "edge spec accuracy " + fmt(edge) + " (need >= 0.85), merge " + fmt(merge) +
                   " (need < edge), diversity " + fmt(tbl.diversity, 4) +
                   " (need > 0.01), outlier rate " + fmt(tbl.outlier_rate) +
                   " (need <= 0.15), t0=0 identity " + (identity ? "exact" : "BROKEN"));
    }

    // ---- criterion 10: byte-identical rerun -----------------------------------
    {
        fs::path root = fs::temp_directory_path() / "lanerep_acceptance_rerun";
        fs::remove_all(root);
        auto pipeline = [&](const fs::path& out) {
            scene::SceneConfig c;  // reduced profile; the code path is identical
            c.n_cameras = 5;
            c.groups_per_camera = 2;
            c.total_groups = 8;
            c.n_windows = 4;
            auto s = scene::generate_scene(c);
            data::save_scene(s, (out / "scene").string());
            auto b = data::build_dataset(s, data::kDefaultAssignThreshold);
            data::Dataset d;
            d.config_echo = data::scene_config_to_json(c);
            d.assign_threshold = data::kDefaultAssignThreshold;
            d.records = std::move(b.records);
            data::save_dataset(d, (out / "dataset").string());
            model::LaneEncoder enc;
            anomaly::Detector det;
            train::TrainConfig tc;
            tc.epochs = 8;
            tc.learning_rate = 2e-4;
            train::Trainer trainer(tc, &enc, &det, &d);
            trainer.run((out / "curves.csv").string(), out.string());
            auto matches = eval::loco_sweep(d, enc, eval::QueryMode::geometry_dropped);
            eval::write_match_csv(matches, (out / "match.csv").string());
        };
        pipeline(root / "a");
        pipeline(root / "b");
        std::string why;
        bool same = dirs_identical(root / "a", root / "b", why);
        report(10, same, same ? "dataset, checkpoint, and CSV bytes identical across reruns"
                              : ("rerun differs: " + why));
        fs::remove_all(root);
    }

    std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES: " + std::to_string(g_failures))
              << std::endl;
    return g_failures;
}
