#pragma once

// JSON run configuration. Every key maps to a module-level default; unknown
// keys are rejected with an exhaustive listing.

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lanerep/anomaly.hpp"
#include "lanerep/diffusion.hpp"
#include "lanerep/encoder.hpp"
#include "lanerep/scene.hpp"
#include "lanerep/train.hpp"

namespace lanerep::config {

using nlohmann::json;

namespace detail {

class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw std::invalid_argument("config: section '" + name_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (j_.contains(key)) out = j_.at(key).get<T>();
    }

    json subsection(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? j_.at(key) : json::object();
    }

    void finish() const {
        std::string unknown;
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        if (!unknown.empty())
            throw std::invalid_argument("config: unknown key(s) in '" + name_ + "': " + unknown);
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace detail

struct RunConfig {
    scene::SceneConfig scene;
    model::EncoderConfig encoder;
    train::TrainConfig training;
    anomaly::DetectorConfig detector;
    gen::DiffusionConfig diffusion;
    gen::DenoiserTrainConfig denoiser_training;
    std::string dataset_dir = "dataset";
    std::string checkpoint_dir = "checkpoints";
    std::string report_dir = "report";
    uint64_t seed = 7;
};

inline scene::SceneConfig parse_scene(const json& j) {
    scene::SceneConfig c;
    detail::Section s(j, "scene");
    s.get("n_cameras", c.n_cameras);
    s.get("groups_per_camera", c.groups_per_camera);
    s.get("total_groups", c.total_groups);
    s.get("lanes_per_group_min", c.lanes_per_group_range.first);
    s.get("lanes_per_group_max", c.lanes_per_group_range.second);
    s.get("merge_fraction", c.merge_fraction);
    s.get("frames_per_window", c.frames_per_window);
    s.get("n_windows", c.n_windows);
    s.get("tracklets_min", c.tracklets_per_lane_per_window_range.first);
    s.get("tracklets_max", c.tracklets_per_lane_per_window_range.second);
    s.get("observation_noise_std", c.observation_noise_std);
    s.get("annotation_noise_std", c.annotation_noise_std);
    s.get("speed_jitter_std", c.kinematics.speed_jitter_std);
    s.get("seed", c.seed);
    s.finish();
    c.validate();
    return c;
}

inline model::EncoderConfig parse_encoder(const json& j) {
    model::EncoderConfig c;
    detail::Section s(j, "encoder");
    s.get("transformer_layers", c.transformer_layers);
    s.get("attention_heads", c.attention_heads);
    s.get("ffn_dim", c.ffn_dim);
    s.get("dropout_rate", c.dropout_rate);
    s.get("geometry_dropout_p", c.geometry_dropout_p);
    s.get("seed", c.seed);
    s.finish();
    c.validate();
    return c;
}

inline train::TrainConfig parse_training(const json& j) {
    train::TrainConfig c;
    detail::Section s(j, "training");
    s.get("epochs", c.epochs);
    s.get("batch_groups", c.batch_groups);
    s.get("learning_rate", c.learning_rate);
    s.get("corruption_fraction", c.corruption_fraction);
    s.get("eval_corruption_prob", c.eval_corruption_prob);
    s.get("val_fraction", c.val_fraction);
    s.get("two_stage_split", c.two_stage_split);
    s.get("checkpoint_every", c.checkpoint_every);
    s.get("seed", c.seed);
    s.get("tau", c.weights.tau);
    s.get("alpha", c.weights.alpha);
    s.get("beta", c.weights.beta);
    s.get("group_consistency_weight", c.weights.group_consistency_weight);
    std::string regime;
    s.get("regime", regime);
    if (!regime.empty()) c.regime = train::regime_from_name(regime);
    s.finish();
    c.validate();
    return c;
}

inline anomaly::DetectorConfig parse_detector(const json& j) {
    anomaly::DetectorConfig c;
    detail::Section s(j, "detector");
    s.get("gru_hidden", c.gru_hidden);
    s.get("head_hidden", c.head_hidden);
    s.get("threshold", c.threshold);
    s.get("seed", c.seed);
    s.finish();
    c.validate();
    return c;
}

inline gen::DiffusionConfig parse_diffusion(const json& j) {
    gen::DiffusionConfig c;
    detail::Section s(j, "diffusion");
    s.get("T_diff", c.T_diff);
    s.get("beta_start", c.beta_start);
    s.get("beta_end", c.beta_end);
    s.get("t0", c.t0);
    s.get("denoiser_hidden", c.denoiser_hidden);
    s.get("denoiser_layers", c.denoiser_layers);
    s.get("time_embed_dim", c.time_embed_dim);
    s.get("n_candidates", c.n_candidates);
    s.get("seed", c.seed);
    s.finish();
    c.validate();
    return c;
}

inline gen::DenoiserTrainConfig parse_denoiser_training(const json& j) {
    gen::DenoiserTrainConfig c;
    detail::Section s(j, "denoiser_training");
    s.get("epochs", c.epochs);
    s.get("batch_size", c.batch_size);
    s.get("learning_rate", c.learning_rate);
    s.get("cosine_decay", c.cosine_decay);
    s.get("seed", c.seed);
    s.finish();
    return c;
}

inline RunConfig parse_run_config(const json& j) {
    RunConfig c;
    detail::Section s(j, "<root>");
    c.scene = parse_scene(s.subsection("scene"));
    c.encoder = parse_encoder(s.subsection("encoder"));
    c.training = parse_training(s.subsection("training"));
    c.detector = parse_detector(s.subsection("detector"));
    c.diffusion = parse_diffusion(s.subsection("diffusion"));
    c.denoiser_training = parse_denoiser_training(s.subsection("denoiser_training"));
    json paths = s.subsection("paths");
    {
        detail::Section p(paths, "paths");
        p.get("dataset_dir", c.dataset_dir);
        p.get("checkpoint_dir", c.checkpoint_dir);
        p.get("report_dir", c.report_dir);
        p.finish();
    }
    s.get("seed", c.seed);
    s.finish();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    return parse_run_config(json::parse(is));
}

}  // namespace lanerep::config
