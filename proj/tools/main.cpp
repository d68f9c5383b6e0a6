// lanerep: synthetic multi-camera lane scenes, a behavior-grounded lane
// encoder, anomaly detection, lane generation, and evaluation reports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lanerep/anomaly.hpp"
#include "lanerep/config.hpp"
#include "lanerep/dataset_io.hpp"
#include "lanerep/diffusion.hpp"
#include "lanerep/encoder.hpp"
#include "lanerep/evalkit.hpp"
#include "lanerep/harness.hpp"
#include "lanerep/plot.hpp"
#include "lanerep/scene.hpp"
#include "lanerep/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lanerep;
using namespace lanerep::harness;

namespace {

config::RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return config::RunConfig{};
    return config::load_run_config(path);
}

void write_json(const json& j, const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return json::parse(is);
}

json anomaly_result_json(const AnomalyEvalResult& r, int window_frames) {
    return {{"window_frames", window_frames},
            {"auroc", r.auroc},
            {"youden_threshold", r.youden_threshold},
            {"n_windows", r.n_windows},
            {"at_default", eval::threshold_metrics_json(r.at_default)},
            {"at_youden", eval::threshold_metrics_json(r.at_youden)}};
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_scenegen(const std::string& config_path, const std::string& out_dir) {
    auto cfg = load_config_or_default(config_path);
    auto ds = scene::generate_scene(cfg.scene);
    data::save_scene(ds, out_dir);
    std::cout << "scenegen: " << ds.lanes.size() << " lanes, " << ds.tracklets.size()
              << " tracklets -> " << out_dir << '\n';
    return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir, double threshold) {
    auto scene_ds = data::load_scene(in_dir);
    auto built = data::build_dataset(scene_ds, threshold);
    data::Dataset ds;
    ds.config_echo = data::scene_config_to_json(scene_ds.config);
    ds.assign_threshold = threshold;
    ds.discarded_tracklets = built.discarded_tracklets;
    ds.records = std::move(built.records);
    data::save_dataset(ds, out_dir);
    std::cout << "preprocess: " << ds.records.size() << " lane records, "
              << ds.discarded_tracklets << " tracklets discarded -> " << out_dir << '\n';
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& regime_override,
              const std::string& dataset_dir, const std::string& checkpoint_dir, int epochs_override) {
    auto cfg = load_config_or_default(config_path);
    if (!regime_override.empty()) cfg.training.regime = train::regime_from_name(regime_override);
    if (epochs_override > 0) cfg.training.epochs = epochs_override;
    if (cfg.training.regime == train::Regime::traj_stats_baseline)
        throw std::runtime_error("train: regime traj_stats_baseline trains nothing; use eval-loco --baseline");
    auto ds = data::load_dataset(dataset_dir);
    model::LaneEncoder enc(cfg.encoder);
    anomaly::Detector det(cfg.detector);
    train::Trainer trainer(cfg.training, &enc, &det, &ds);
    fs::create_directories(checkpoint_dir);
    std::string curves = checkpoint_dir + "/curves_" + regime_name(cfg.training.regime) + ".csv";
    auto result = trainer.run(curves, checkpoint_dir);
    const auto& last = result.curves.back();
    std::cout << "train[" << regime_name(cfg.training.regime) << "]: " << cfg.training.epochs
              << " epochs, pos_sim=" << last.pos_sim << " neg_sim=" << last.neg_sim
              << " anomaly_acc=" << last.anomaly_acc << " -> " << checkpoint_dir << "/final.ckpt\n";
    return 0;
}

int cmd_eval_loco(const std::string& ckpt_path, const std::string& dataset_dir,
                  const std::string& out_dir, bool geometry_dropped, bool baseline) {
    auto ds = data::load_dataset(dataset_dir);
    fs::create_directories(out_dir);
    std::vector<eval::MatchResult> results;
    std::string tag;
    if (baseline) {
        results = eval::traj_stats_sweep(ds);
        tag = "traj_stats";
    } else {
        auto ckpt = nn::load_checkpoint(ckpt_path);
        model::LaneEncoder enc(encoder_config_from_checkpoint(ckpt));
        enc.load_from(ckpt);
        auto mode = geometry_dropped ? eval::QueryMode::geometry_dropped : eval::QueryMode::with_geometry;
        results = eval::loco_sweep(ds, enc, mode);
        tag = ckpt.config.value("regime", "model");
        if (geometry_dropped) tag += "_nogeo";

        auto emb = eval::encode_dataset(enc, ds);
        auto cat = eval::category_similarity(ds, emb);
        write_json({{"cross_camera_same_rank", cat.cross_camera_same_rank},
                    {"same_group_siblings", cat.same_group_siblings},
                    {"same_camera_other_group", cat.same_camera_other_group},
                    {"cross_camera_other_rank", cat.cross_camera_other_rank}},
                   fs::path(out_dir) / ("category_" + tag + ".json"));
    }
    auto metrics = eval::matching_metrics(results);
    eval::write_match_csv(results, (fs::path(out_dir) / ("match_" + tag + ".csv")).string());
    json j = eval::matching_metrics_json(metrics);
    j["n_results"] = results.size();
    j["tag"] = tag;
    write_json(j, fs::path(out_dir) / ("matching_" + tag + ".json"));
    std::cout << "eval-loco[" << tag << "]: n=" << results.size()
              << " mean_sim=" << metrics.mean_similarity << " rank_mae=" << metrics.rank_mae
              << " edge_f1=" << metrics.edge_f1 << '\n';
    return 0;
}

int cmd_eval_anomaly(const std::string& ckpt_path, const std::string& dataset_dir,
                     const std::string& out_dir, const std::vector<int>& window_frames,
                     double corruption_prob, int sweep_detector_epochs) {
    auto ds = data::load_dataset(dataset_dir);
    auto ckpt = nn::load_checkpoint(ckpt_path);
    model::LaneEncoder enc(encoder_config_from_checkpoint(ckpt));
    enc.load_from(ckpt);
    anomaly::Detector det(detector_config_from_checkpoint(ckpt));
    det.load_from(ckpt.tensors);
    fs::create_directories(out_dir);

    auto base = eval_anomaly_on(enc, det, ds, ckpt.seed, corruption_prob);
    int base_frames = ds.config_echo.value("frames_per_window", 300);
    write_json(anomaly_result_json(base, base_frames), fs::path(out_dir) / "anomaly.json");
    {
        std::ofstream roc(fs::path(out_dir) / "roc.csv");
        roc.precision(10);
        roc << "fpr,tpr\n";
        for (auto [f, t] : base.roc) roc << f << ',' << t << '\n';
    }
    // clean/corrupted timelines for the first few lanes
    Rng trng = Rng(ckpt.seed).substream("timeline");
    for (size_t i = 0; i < std::min<size_t>(3, ds.records.size()); ++i) {
        const auto& rec = ds.records[i];
        data::LaneRecord corr = corrupt_lane(rec, 0.4, trng);
        anomaly::Timeline tl;
        tl.lane_id = rec.lane_id;
        std::vector<Eigen::RowVectorXd> z;
        std::vector<bool> valid;
        embed_lane_windows(enc, rec, z, valid);
        tl.clean_prob = det.detect_sequence(z, valid);
        embed_lane_windows(enc, corr, z, valid);
        tl.corrupted_prob = det.detect_sequence(z, valid);
        for (size_t w = 0; w < rec.windows.size(); ++w) {
            tl.injected.push_back(corr.windows[w].anomaly_label == 1);
            tl.valid.push_back(valid[w]);
        }
        anomaly::write_timeline_csv(tl, (fs::path(out_dir) / ("timeline_" + rec.lane_id + ".csv")).string());
    }
    std::cout << "eval-anomaly: auroc=" << base.auroc << " f1@J=" << base.at_youden.f1
              << " (threshold " << base.youden_threshold << ")\n";

    if (!window_frames.empty()) {
        // re-window the scene, retrain a fresh detector on the frozen
        // encoder per window size, and report the sweep
        auto scfg = data::scene_config_from_json(ds.config_echo);
        int total_frames = scfg.frames_per_window * scfg.n_windows;
        std::ofstream sw(fs::path(out_dir) / "window_sweep.csv");
        sw.precision(10);
        sw << "window_frames,auroc,precision,recall,f1,threshold\n";
        for (int wf : window_frames) {
            if (wf < 1 || wf > total_frames)
                throw std::runtime_error("eval-anomaly: window-frames out of range");
            scene::SceneConfig sc = scfg;
            sc.frames_per_window = wf;
            sc.n_windows = std::max(1, total_frames / wf);
            auto scene_ds = scene::generate_scene(sc);
            auto built = data::build_dataset(scene_ds, ds.assign_threshold);
            data::Dataset wds;
            wds.records = std::move(built.records);
            wds.config_echo = data::scene_config_to_json(sc);
            anomaly::Detector wdet(det.cfg);
            train_detector_frozen(enc, wdet, wds, ckpt.seed, 4, sweep_detector_epochs,
                                  corruption_prob * 2.0);
            auto r = eval_anomaly_on(enc, wdet, wds, ckpt.seed, corruption_prob);
            sw << wf << ',' << r.auroc << ',' << r.at_youden.precision << ','
               << r.at_youden.recall << ',' << r.at_youden.f1 << ',' << r.youden_threshold << '\n';
            std::cout << "  sweep window_frames=" << wf << " precision=" << r.at_youden.precision
                      << " recall=" << r.at_youden.recall << " f1=" << r.at_youden.f1 << '\n';
        }
    }
    return 0;
}

int cmd_train_generator(const std::string& ckpt_path, const std::string& dataset_dir,
                        const std::string& config_path, const std::string& out_path) {
    auto cfg = load_config_or_default(config_path);
    auto ds = data::load_dataset(dataset_dir);
    if (ds.records.empty()) throw std::runtime_error("train-generator: empty dataset");
    auto ckpt = nn::load_checkpoint(ckpt_path);
    model::LaneEncoder enc(encoder_config_from_checkpoint(ckpt));
    enc.load_from(ckpt);
    auto emb = eval::encode_dataset(enc, ds);
    std::vector<gen::DenoiserItem> items;
    for (const auto& r : ds.records) {
        auto [w, frame] = gen::canonicalize_anchor(r.geometry);
        items.push_back({w, emb.at(r.lane_id).pooled.transpose()});
    }
    gen::Denoiser den(cfg.diffusion);
    auto losses = gen::train_denoiser(den, items, cfg.denoiser_training);
    json echo = {{"kind", "denoiser"},
                 {"T_diff", cfg.diffusion.T_diff},
                 {"beta_start", cfg.diffusion.beta_start},
                 {"beta_end", cfg.diffusion.beta_end},
                 {"t0", cfg.diffusion.t0},
                 {"denoiser_hidden", cfg.diffusion.denoiser_hidden},
                 {"denoiser_layers", cfg.diffusion.denoiser_layers},
                 {"time_embed_dim", cfg.diffusion.time_embed_dim},
                 {"n_candidates", cfg.diffusion.n_candidates},
                 {"seed", cfg.diffusion.seed}};
    auto c = den.to_checkpoint(echo);
    nn::save_checkpoint(c, out_path);
    std::cout << "train-generator: " << items.size() << " lanes, denoise MSE "
              << losses.front() << " -> " << losses.back() << ", saved " << out_path << '\n';
    return 0;
}

int cmd_generate(const std::string& enc_ckpt_path, const std::string& den_ckpt_path,
                 const std::string& dataset_dir, const std::string& out_dir,
                 const std::vector<std::string>& roles, bool relational, int t0_override,
                 uint64_t seed) {
    auto ds = data::load_dataset(dataset_dir);
    auto eckpt = nn::load_checkpoint(enc_ckpt_path);
    model::LaneEncoder enc(encoder_config_from_checkpoint(eckpt));
    enc.load_from(eckpt);
    auto dckpt = nn::load_checkpoint(den_ckpt_path);
    gen::DiffusionConfig dc = diffusion_config_from_checkpoint(dckpt);
    if (t0_override >= 0) dc.t0 = t0_override;
    gen::Denoiser den(dc);
    den.load_from(dckpt);

    auto emb = eval::encode_dataset(enc, ds);
    std::map<std::string, std::vector<const data::LaneRecord*>> by_group;
    for (const auto& r : ds.records) by_group[r.group_id].push_back(&r);

    std::vector<gen::Candidate> all;
    int skipped = 0;
    for (const auto& [gid, lanes] : by_group) {
        for (const auto& role_name : roles) {
            gen::SpecRole role = gen::spec_role_from_name(role_name);
            const data::LaneRecord* ref = nullptr;
            for (const auto* r : lanes)
                if (eval::role_matches(r->role_class, role)) ref = r;
            if (!ref) {
                ++skipped;
                continue;
            }
            gen::GenerationSpec spec;
            spec.group_id = gid;
            spec.spec_role = role;
            spec.anchor = ref->geometry;
            spec.target_embedding = relational ? emb.at(ref->lane_id).attended.transpose()
                                               : emb.at(ref->lane_id).pooled.transpose();
            spec.descriptor = lane_mean_descriptor(*ref);
            uint64_t spec_seed = Rng(seed).substream(gid).substream(role_name).next_u64();
            auto cands = gen::sample(spec, dc, den, enc, spec_seed);
            all.insert(all.end(), cands.begin(), cands.end());
        }
    }
    if (all.empty()) throw std::runtime_error("generate: no candidates (no matching roles in any group)");
    fs::create_directories(out_dir);
    auto tbl = eval::generation_eval(all, ds);
    // persist outlier flags determined by the evaluation threshold
    for (auto& c : all)
        c.outlier = geom::curvature_smoothness(geom::to_polyline(c.points)) > tbl.outlier_threshold;
    gen::save_candidates(all, (fs::path(out_dir) / "candidates.json").string(),
                         (fs::path(out_dir) / "candidates.bin").string());
    json j = eval::generation_table_json(tbl);
    j["relational"] = relational;
    j["skipped_group_roles"] = skipped;
    write_json(j, fs::path(out_dir) / "generation.json");
    std::cout << "generate: " << all.size() << " candidates, edge acc="
              << (tbl.spec_accuracy.count("edge") ? tbl.spec_accuracy.at("edge") : 0.0)
              << " diversity=" << tbl.diversity << " outlier_rate=" << tbl.outlier_rate << '\n';
    return 0;
}

// small CSV reader for report assembly (no quoting; our own files only)
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

int cmd_report(const std::string& in_dir, const std::string& out_dir, const std::string& dataset_dir) {
    fs::path in(in_dir), out(out_dir);
    fs::create_directories(out / "tables");
    fs::create_directories(out / "plots");
    json summary{{"schema_version", 1}};

    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());

    for (const auto& f : files) {
        std::string name = f.filename().string();
        if (f.extension() == ".csv") fs::copy_file(f, out / "tables" / name, fs::copy_options::overwrite_existing);

        if (name.rfind("matching_", 0) == 0 && f.extension() == ".json") {
            summary["matching"][read_json(f).value("tag", name)] = read_json(f);
        } else if (name.rfind("category_", 0) == 0 && f.extension() == ".json") {
            summary["category"][name.substr(9, name.size() - 14)] = read_json(f);
        } else if (name == "anomaly.json") {
            summary["anomaly"] = read_json(f);
        } else if (name == "generation.json") {
            summary["generation"] = read_json(f);
        } else if (name == "roc.csv") {
            auto rows = read_csv(f);
            std::vector<double> fpr, tpr;
            for (size_t i = 1; i < rows.size(); ++i) {
                fpr.push_back(std::stod(rows[i][0]));
                tpr.push_back(std::stod(rows[i][1]));
            }
            plot::roc_plot(fpr, tpr, (out / "plots" / "roc.bmp").string());
        } else if (name.rfind("curves_", 0) == 0 && f.extension() == ".csv") {
            auto rows = read_csv(f);
            plot::Series pos, neg, acc;
            pos.color = plot::kBlue;
            neg.color = plot::kRed;
            acc.color = plot::kGreen;
            for (size_t i = 1; i < rows.size(); ++i) {
                double e = std::stod(rows[i][0]);
                pos.x.push_back(e);
                pos.y.push_back(std::stod(rows[i][1]));
                neg.x.push_back(e);
                neg.y.push_back(std::stod(rows[i][2]));
                acc.x.push_back(e);
                acc.y.push_back(std::stod(rows[i][3]));
            }
            std::string stem = f.stem().string();
            plot::line_chart({pos, neg}, (out / "plots" / (stem + "_similarity.bmp")).string());
            plot::line_chart({acc}, (out / "plots" / (stem + "_anomaly_acc.bmp")).string());
            summary["curves"][stem] = {{"final_pos_sim", pos.y.back()},
                                       {"final_neg_sim", neg.y.back()},
                                       {"final_anomaly_acc", acc.y.back()}};
        } else if (name.rfind("match_", 0) == 0 && f.extension() == ".csv") {
            auto rows = read_csv(f);
            std::vector<double> qr, rr;
            for (size_t i = 1; i < rows.size(); ++i) {
                qr.push_back(std::stod(rows[i][4]));
                rr.push_back(std::stod(rows[i][5]));
            }
            plot::scatter(qr, rr, (out / "plots" / (f.stem().string() + "_rank_scatter.bmp")).string(),
                          480, 480, true);
        } else if (name.rfind("timeline_", 0) == 0 && f.extension() == ".csv") {
            auto rows = read_csv(f);
            plot::Series clean, corr, marks;
            clean.color = plot::kBlue;
            corr.color = plot::kRed;
            marks.color = plot::kBlack;
            marks.markers = true;
            for (size_t i = 1; i < rows.size(); ++i) {
                double w = std::stod(rows[i][0]);
                clean.x.push_back(w);
                clean.y.push_back(std::stod(rows[i][1]));
                corr.x.push_back(w);
                corr.y.push_back(std::stod(rows[i][2]));
                if (rows[i][3] == "1") {
                    marks.x.push_back(w);
                    marks.y.push_back(1.0);
                }
            }
            plot::line_chart({clean, corr, marks}, (out / "plots" / (f.stem().string() + ".bmp")).string());
        } else if (name == "window_sweep.csv") {
            auto rows = read_csv(f);
            plot::Series prec, rec;
            prec.color = plot::kBlue;
            prec.markers = true;
            rec.color = plot::kRed;
            rec.markers = true;
            json sweep = json::array();
            for (size_t i = 1; i < rows.size(); ++i) {
                double wf = std::stod(rows[i][0]);
                prec.x.push_back(wf);
                prec.y.push_back(std::stod(rows[i][2]));
                rec.x.push_back(wf);
                rec.y.push_back(std::stod(rows[i][3]));
                sweep.push_back({{"window_frames", wf},
                                 {"auroc", std::stod(rows[i][1])},
                                 {"precision", std::stod(rows[i][2])},
                                 {"recall", std::stod(rows[i][3])},
                                 {"f1", std::stod(rows[i][4])}});
            }
            plot::line_chart({prec, rec}, (out / "plots" / "window_sweep.bmp").string());
            summary["window_sweep"] = sweep;
        } else if (name == "candidates.json" && !dataset_dir.empty()) {
            auto cands = gen::load_candidates(f.string(), (f.parent_path() / "candidates.bin").string());
            auto ds = data::load_dataset(dataset_dir);
            std::map<std::string, std::vector<const data::LaneRecord*>> by_group;
            for (const auto& r : ds.records) by_group[r.group_id].push_back(&r);
            // overlays for the first few groups present in the export
            std::set<std::string> done;
            for (const auto& c : cands) {
                if (done.size() >= 4 || done.count(c.group_id)) continue;
                done.insert(c.group_id);
                std::vector<plot::Series> series;
                for (const auto* r : by_group.at(c.group_id)) {
                    plot::Series s;
                    s.color = plot::kGray;
                    for (Eigen::Index p = 0; p < r->geometry.rows(); ++p) {
                        s.x.push_back(r->geometry(p, 0));
                        s.y.push_back(r->geometry(p, 1));
                    }
                    series.push_back(std::move(s));
                }
                size_t ci = 0;
                for (const auto& c2 : cands) {
                    if (c2.group_id != c.group_id) continue;
                    plot::Series s;
                    s.color = plot::palette()[ci++ % plot::palette().size()];
                    for (Eigen::Index p = 0; p < c2.points.rows(); ++p) {
                        s.x.push_back(c2.points(p, 0));
                        s.y.push_back(c2.points(p, 1));
                    }
                    series.push_back(std::move(s));
                }
                plot::geometry_overlay(series,
                                       (out / "plots" / ("generation_" + c.group_id + ".bmp")).string());
            }
        }
    }
    // note on conventions that differ from external baselines
    summary["notes"] = {
        "similarity is always reported for every matching row",
        "spatial coherence uses one-directional candidate-to-group chamfer",
    };
    write_json(summary, out / "summary.json");
    std::cout << "report: wrote " << (out / "summary.json").string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"behavior-grounded lane representation pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, in_dir, dataset_dir, ckpt_path, den_path, regime;
    double threshold = data::kDefaultAssignThreshold;
    double corruption_prob = 0.15;
    bool geometry_dropped = false, baseline = false, relational = false;
    std::vector<int> window_frames;
    std::vector<std::string> roles{"leftmost", "rightmost", "merge"};
    int epochs_override = 0, t0_override = -1, sweep_detector_epochs = 30;
    uint64_t gen_seed = 77;

    auto* sg = app.add_subcommand("scenegen", "generate a synthetic multi-camera scene");
    sg->add_option("--config", config_path, "run config JSON");
    sg->add_option("--out", out_dir, "output scene directory")->required();

    auto* pp = app.add_subcommand("preprocess", "build a model-ready dataset from a raw scene");
    pp->add_option("--in", in_dir, "raw scene directory")->required();
    pp->add_option("--out", out_dir, "dataset directory")->required();
    pp->add_option("--threshold", threshold, "tracklet assignment distance threshold");

    auto* tr = app.add_subcommand("train", "train encoder and anomaly detector");
    tr->add_option("--config", config_path, "run config JSON");
    tr->add_option("--regime", regime, "joint|two_stage_frozen|contrastive_only|geometry_only|trajectory_only");
    tr->add_option("--dataset", dataset_dir, "dataset directory")->required();
    tr->add_option("--checkpoint-dir", out_dir, "checkpoint output directory")->required();
    tr->add_option("--epochs", epochs_override, "override epoch count");

    auto* el = app.add_subcommand("eval-loco", "leave-one-camera-out matching evaluation");
    el->add_option("--checkpoint", ckpt_path, "trained checkpoint");
    el->add_option("--dataset", dataset_dir, "dataset directory")->required();
    el->add_option("--out", out_dir, "output directory")->required();
    el->add_flag("--geometry-dropped", geometry_dropped, "encode queries without geometry");
    el->add_flag("--baseline", baseline, "trajectory-stats nearest-neighbor baseline");

    auto* ea = app.add_subcommand("eval-anomaly", "anomaly detection evaluation");
    ea->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    ea->add_option("--dataset", dataset_dir, "dataset directory")->required();
    ea->add_option("--out", out_dir, "output directory")->required();
    ea->add_option("--window-frames", window_frames, "window sizes for the sweep (repeatable)");
    ea->add_option("--corruption-prob", corruption_prob, "per-window corruption probability");
    ea->add_option("--sweep-detector-epochs", sweep_detector_epochs, "detector retraining epochs per sweep point");

    auto* tg = app.add_subcommand("train-generator", "train the diffusion denoiser");
    tg->add_option("--checkpoint", ckpt_path, "encoder checkpoint")->required();
    tg->add_option("--dataset", dataset_dir, "dataset directory")->required();
    tg->add_option("--config", config_path, "run config JSON");
    tg->add_option("--out", out_dir, "denoiser checkpoint path")->required();

    auto* ge = app.add_subcommand("generate", "sample and rank lane candidates");
    ge->add_option("--encoder", ckpt_path, "encoder checkpoint")->required();
    ge->add_option("--denoiser", den_path, "denoiser checkpoint")->required();
    ge->add_option("--dataset", dataset_dir, "dataset directory")->required();
    ge->add_option("--out", out_dir, "output directory")->required();
    ge->add_option("--roles", roles, "spec roles to generate");
    ge->add_flag("--relational", relational, "condition on the attention-refined embedding");
    ge->add_option("--t0", t0_override, "warm-start step override");
    ge->add_option("--seed", gen_seed, "sampling seed");

    auto* rp = app.add_subcommand("report", "assemble tables and plots from eval outputs");
    rp->add_option("--in", in_dir, "directory holding eval outputs")->required();
    rp->add_option("--out", out_dir, "report output directory")->required();
    rp->add_option("--dataset", dataset_dir, "dataset directory (for generation overlays)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sg->parsed()) return cmd_scenegen(config_path, out_dir);
        if (pp->parsed()) return cmd_preprocess(in_dir, out_dir, threshold);
        if (tr->parsed()) return cmd_train(config_path, regime, dataset_dir, out_dir, epochs_override);
        if (el->parsed()) return cmd_eval_loco(ckpt_path, dataset_dir, out_dir, geometry_dropped, baseline);
        if (ea->parsed())
            return cmd_eval_anomaly(ckpt_path, dataset_dir, out_dir, window_frames, corruption_prob,
                                    sweep_detector_epochs);
        if (tg->parsed()) return cmd_train_generator(ckpt_path, dataset_dir, config_path, out_dir);
        if (ge->parsed())
            return cmd_generate(ckpt_path, den_path, dataset_dir, out_dir, roles, relational,
                                t0_override, gen_seed);
        if (rp->parsed()) return cmd_report(in_dir, out_dir, dataset_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
