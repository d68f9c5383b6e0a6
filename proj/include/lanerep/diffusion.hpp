#pragma once

// Behavior-conditioned lane synthesis: warm-start DDPM over canonicalized
// 16x2 centerlines with a FiLM-conditioned MLP denoiser, candidate ensembles,
// and re-encode ranking.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanerep/array_io.hpp"
#include "lanerep/checkpoint.hpp"
#include "lanerep/encoder.hpp"
#include "lanerep/geom.hpp"
#include "lanerep/nn.hpp"

namespace lanerep::gen {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct DiffusionConfig {
    int T_diff = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int t0 = 30;  // warm-start step, default 0.3 * T_diff
    int denoiser_hidden = 256;
    int denoiser_layers = 4;
    int time_embed_dim = 32;
    int n_candidates = 5;
    int cond_dim = 128;
    uint64_t seed = 33;

    void validate() const {
        if (T_diff < 1) throw std::invalid_argument("DiffusionConfig: T_diff must be >= 1");
        if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
            throw std::invalid_argument("DiffusionConfig: need 0 < beta_start <= beta_end < 1");
        if (t0 < 0 || t0 > T_diff) throw std::invalid_argument("DiffusionConfig: t0 must be in [0, T_diff]");
        if (n_candidates < 1 || denoiser_layers < 1 || denoiser_hidden < 1)
            throw std::invalid_argument("DiffusionConfig: bad sizes");
    }
};

struct Schedule {
    Eigen::VectorXd beta;       // [T], beta_1..beta_T
    Eigen::VectorXd alpha_bar;  // [T+1], alpha_bar[0] = 1
};

inline Schedule beta_schedule(const DiffusionConfig& cfg) {
    cfg.validate();
    Schedule s;
    const int T = cfg.T_diff;
    s.beta.resize(T);
    for (int t = 0; t < T; ++t)
        s.beta[t] = (T == 1) ? cfg.beta_start
                             : cfg.beta_start + (cfg.beta_end - cfg.beta_start) * t / (T - 1);
    s.alpha_bar.resize(T + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= T; ++t) s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t - 1]);
    return s;
}

// canonical frame: centroid at origin, principal axis along +x (oriented so
// travel runs toward +x), unit arc length
struct Frame {
    Eigen::Vector2d centroid;
    Eigen::Matrix2d rot;  // canonical -> world rotation
    double scale = 1.0;   // original arc length
};

inline std::pair<Eigen::VectorXd, Frame> canonicalize_anchor(const Eigen::MatrixX2d& g) {
    if (g.rows() != data::kGeomPoints) throw std::invalid_argument("canonicalize_anchor: expected 16x2");
    double len = geom::arc_length(geom::to_polyline(g));
    if (len <= 1e-12) throw std::invalid_argument("canonicalize_anchor: degenerate anchor");
    Frame f;
    f.centroid = g.colwise().mean().transpose();
    Eigen::MatrixX2d c = g.rowwise() - f.centroid.transpose();
    Eigen::Matrix2d cov = c.transpose() * c / static_cast<double>(g.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    Eigen::Vector2d axis = es.eigenvectors().col(1);  // dominant direction
    // orient so the endpoint-to-start chord points along +axis
    Eigen::Vector2d chord = (g.row(g.rows() - 1) - g.row(0)).transpose();
    if (chord.dot(axis) < 0.0) axis = -axis;
    f.rot.col(0) = axis;
    f.rot.col(1) = Eigen::Vector2d(-axis.y(), axis.x());
    f.scale = len;
    Eigen::MatrixX2d canon = (c * f.rot) / f.scale;  // world -> canonical
    Eigen::VectorXd w(2 * g.rows());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        w[2 * i] = canon(i, 0);
        w[2 * i + 1] = canon(i, 1);
    }
    return {w, f};
}

inline Eigen::MatrixX2d decanonicalize(const Eigen::VectorXd& w, const Frame& f) {
    if (w.size() % 2 != 0) throw std::invalid_argument("decanonicalize: odd length");
    Eigen::MatrixX2d canon(w.size() / 2, 2);
    for (Eigen::Index i = 0; i < canon.rows(); ++i) canon.row(i) << w[2 * i], w[2 * i + 1];
    Eigen::MatrixX2d world = (canon * f.scale) * f.rot.transpose();
    return world.rowwise() + f.centroid.transpose();
}

inline Eigen::VectorXd forward_diffuse(const Eigen::VectorXd& w_s, int t0, const Schedule& s,
                                       const Eigen::VectorXd& noise) {
    if (t0 < 0 || t0 >= s.alpha_bar.size()) throw std::invalid_argument("forward_diffuse: t0 out of range");
    double ab = s.alpha_bar[t0];
    return std::sqrt(ab) * w_s + std::sqrt(1.0 - ab) * noise;
}

// FiLM-conditioned MLP denoiser over the flattened 32-dim geometry
class Denoiser {
public:
    DiffusionConfig cfg;
    nn::Linear input;                       // (32 + time_embed) -> hidden
    std::vector<nn::Linear> hidden;         // hidden -> hidden
    std::vector<nn::LayerNorm> norms;       // per layer (incl. input layer)
    std::vector<nn::Linear> film_gamma, film_beta;  // cond -> hidden, zero-init
    nn::Linear output;                      // hidden -> 32
    Mat time_table;                         // [T+1, time_embed] sinusoidal

    explicit Denoiser(const DiffusionConfig& c = {}) : cfg(c) {
        cfg.validate();
        Rng rng(cfg.seed);
        const int D = 2 * data::kGeomPoints;
        input = nn::Linear("denoiser.in", D + cfg.time_embed_dim, cfg.denoiser_hidden, rng);
        for (int l = 0; l < cfg.denoiser_layers; ++l) {
            std::string nm = "denoiser.l" + std::to_string(l);
            if (l > 0) hidden.emplace_back(nm + ".fc", cfg.denoiser_hidden, cfg.denoiser_hidden, rng);
            norms.emplace_back(nm + ".ln", cfg.denoiser_hidden);
            film_gamma.emplace_back(nm + ".gamma", cfg.cond_dim, cfg.denoiser_hidden, rng);
            film_beta.emplace_back(nm + ".beta", cfg.cond_dim, cfg.denoiser_hidden, rng);
            film_gamma.back().W.value.setZero();
            film_gamma.back().b.value.setZero();
            film_beta.back().W.value.setZero();
            film_beta.back().b.value.setZero();
        }
        output = nn::Linear("denoiser.out", cfg.denoiser_hidden, D, rng);
        time_table = nn::sinusoidal_encoding(cfg.T_diff + 1, cfg.time_embed_dim);
    }

    std::vector<ad::Param*> params() {
        std::vector<ad::Param*> ps;
        input.collect(ps);
        for (auto& l : hidden) l.collect(ps);
        for (auto& l : norms) l.collect(ps);
        for (auto& l : film_gamma) l.collect(ps);
        for (auto& l : film_beta) l.collect(ps);
        output.collect(ps);
        return ps;
    }

    // x_t rows: B x 32; t per row; cond rows: B x 128 -> predicted noise B x 32
    Var forward(Tape& t, Var x_t, const std::vector<int>& steps, Var cond) {
        const Eigen::Index B = x_t->val.rows();
        if (static_cast<Eigen::Index>(steps.size()) != B || cond->val.rows() != B)
            throw std::invalid_argument("Denoiser::forward: shape mismatch");
        Mat te(B, cfg.time_embed_dim);
        for (Eigen::Index i = 0; i < B; ++i) {
            int s = steps[static_cast<size_t>(i)];
            if (s < 0 || s > cfg.T_diff) throw std::invalid_argument("Denoiser::forward: step out of range");
            te.row(i) = time_table.row(s);
        }
        Var h = input(t, ad::concat_cols(t, {x_t, t.constant(te)}));
        Var one = nullptr;
        for (int l = 0; l < cfg.denoiser_layers; ++l) {
            if (l > 0) h = hidden[static_cast<size_t>(l - 1)](t, h);
            Var g = film_gamma[static_cast<size_t>(l)](t, cond);
            Var b = film_beta[static_cast<size_t>(l)](t, cond);
            if (!one) one = t.constant(Mat::Ones(B, cfg.denoiser_hidden));
            Var ln = norms[static_cast<size_t>(l)](t, h);
            h = ad::gelu(t, ad::add(t, ad::cmul(t, ln, ad::add(t, one, g)), b));
        }
        return output(t, h);
    }

    // value-only single-sample call used by the sampler
    Eigen::VectorXd predict_noise(const Eigen::VectorXd& x_t, int step, const Eigen::VectorXd& cond) {
        Tape t;
        Mat xm(1, x_t.size());
        xm.row(0) = x_t.transpose();
        Mat cm(1, cond.size());
        cm.row(0) = cond.transpose();
        Var out = forward(t, t.constant(xm), {step}, t.constant(cm));
        return out->val.row(0).transpose();
    }

    nn::Checkpoint to_checkpoint(const nlohmann::json& config_echo) {
        nn::Checkpoint c;
        c.config = config_echo;
        c.seed = cfg.seed;
        for (ad::Param* p : params()) c.tensors[p->name] = p->value;
        return c;
    }

    void load_from(const nn::Checkpoint& c) {
        for (ad::Param* p : params()) {
            auto it = c.tensors.find(p->name);
            if (it == c.tensors.end()) throw std::runtime_error("checkpoint missing tensor " + p->name);
            p->value = it->second;
        }
    }
};

// one training item: canonicalized geometry conditioned on its own embedding
struct DenoiserItem {
    Eigen::VectorXd w_s;   // 32
    Eigen::VectorXd cond;  // 128
};

struct DenoiserTrainConfig {
    int epochs = 2000;
    int batch_size = 32;
    double learning_rate = 1e-3;
    bool cosine_decay = true;  // anneal lr to 0 over the run
    uint64_t seed = 34;
};

inline std::vector<double> train_denoiser(Denoiser& den, const std::vector<DenoiserItem>& items,
                                          const DenoiserTrainConfig& tc) {
    if (items.empty()) throw std::invalid_argument("train_denoiser: empty dataset");
    Schedule sched = beta_schedule(den.cfg);
    auto params = den.params();
    nn::Adam opt;
    opt.lr = tc.learning_rate;
    Rng rng(tc.seed);
    const int D = 2 * data::kGeomPoints;
    std::vector<double> epoch_losses;
    std::vector<size_t> order(items.size());
    for (size_t i = 0; i < items.size(); ++i) order[i] = i;
    for (int e = 0; e < tc.epochs; ++e) {
        if (tc.cosine_decay)
            opt.lr = tc.learning_rate * 0.5 * (1.0 + std::cos(M_PI * e / tc.epochs));
        rng.shuffle(order);
        double total = 0;
        int n_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
            const Eigen::Index B = static_cast<Eigen::Index>(end - start);
            Mat x(B, D), cond(B, den.cfg.cond_dim), eps(B, D);
            std::vector<int> steps;
            for (Eigen::Index b = 0; b < B; ++b) {
                const auto& it = items[order[start + static_cast<size_t>(b)]];
                int step = static_cast<int>(rng.uniform_int(1, den.cfg.T_diff));
                steps.push_back(step);
                for (int d = 0; d < D; ++d) eps(b, d) = rng.normal();
                double ab = sched.alpha_bar[step];
                x.row(b) = std::sqrt(ab) * it.w_s.transpose() +
                           std::sqrt(1.0 - ab) * eps.row(b);
                cond.row(b) = it.cond.transpose();
            }
            Tape t;
            Var pred = den.forward(t, t.constant(x), steps, t.constant(cond));
            Var diff = ad::sub(t, pred, t.constant(eps));
            Var loss = ad::mean_all(t, ad::cmul(t, diff, diff));
            nn::Adam::zero_grad(params);
            t.backward(loss);
            opt.step(params);
            total += loss->val(0, 0);
            ++n_batches;
        }
        epoch_losses.push_back(total / n_batches);
    }
    return epoch_losses;
}

// re-encode a bare geometry (no tracklets) through the frozen encoder:
// geometry stream active, trajectory stream zeroed pre-BN, descriptor given
inline Eigen::VectorXd encode_geometry_only(model::LaneEncoder& enc, const Eigen::MatrixX2d& g,
                                            const Eigen::Matrix<double, 9, 1>& descriptor) {
    Tape t;
    Var fg = enc.bn_geom(t, enc.encode_polyline_tokens(t, g, true), false);
    Var fx = enc.bn_traj(t, t.constant(Mat::Zero(1, enc.cfg.stream_dim)), false);
    Mat d(1, 9);
    d.row(0) = descriptor.transpose();
    Var fs = enc.bn_desc(t, enc.encode_descriptor_raw(t, t.constant(d), false), false);
    Var z = enc.fuse(t, fg, fx, fs, false, nullptr);
    return z->val.row(0).transpose();
}

enum class SpecRole { leftmost, rightmost, merge };

inline const char* spec_role_name(SpecRole r) {
    switch (r) {
        case SpecRole::leftmost: return "leftmost";
        case SpecRole::rightmost: return "rightmost";
        case SpecRole::merge: return "merge";
    }
    throw std::invalid_argument("spec_role_name: unknown role");
}

inline SpecRole spec_role_from_name(const std::string& s) {
    for (SpecRole r : {SpecRole::leftmost, SpecRole::rightmost, SpecRole::merge})
        if (s == spec_role_name(r)) return r;
    throw std::invalid_argument("unknown spec role: " + s);
}

struct GenerationSpec {
    Eigen::VectorXd target_embedding;  // 128
    Eigen::MatrixX2d anchor;           // 16x2
    SpecRole spec_role = SpecRole::leftmost;
    std::string group_id;
    Eigen::Matrix<double, 9, 1> descriptor = Eigen::Matrix<double, 9, 1>::Zero();  // for re-encoding

    void validate() const {
        if (anchor.rows() != data::kGeomPoints) throw std::invalid_argument("GenerationSpec: anchor must be 16x2");
        if (target_embedding.size() != 128 || !target_embedding.allFinite())
            throw std::invalid_argument("GenerationSpec: bad target embedding");
    }
};

struct Candidate {
    Eigen::MatrixX2d points;  // 16x2, anchor frame, arc-length resampled
    double cosine_score = 0.0;
    double smoothness = 0.0;
    SpecRole spec_role = SpecRole::leftmost;
    std::string group_id;
    bool outlier = false;  // filled by the evaluation pass
};

namespace detail {

inline Eigen::VectorXd sample_one(Denoiser& den, const Schedule& sched,
                                  const Eigen::VectorXd& w_s, const Eigen::VectorXd& cond, int t0,
                                  Rng& rng) {
    const int D = static_cast<int>(w_s.size());
    Eigen::VectorXd eps(D);
    for (int d = 0; d < D; ++d) eps[d] = rng.normal();
    Eigen::VectorXd x = forward_diffuse(w_s, t0, sched, eps);
    for (int step = t0; step >= 1; --step) {
        Eigen::VectorXd pred = den.predict_noise(x, step, cond);
        double beta = sched.beta[step - 1];
        double alpha = 1.0 - beta;
        double ab = sched.alpha_bar[step];
        Eigen::VectorXd mean = (x - (beta / std::sqrt(1.0 - ab)) * pred) / std::sqrt(alpha);
        if (step > 1) {
            double ab_prev = sched.alpha_bar[step - 1];
            double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
            Eigen::VectorXd z(D);
            for (int d = 0; d < D; ++d) z[d] = rng.normal();
            x = mean + sigma * z;
        } else {
            x = mean;
        }
    }
    return x;
}

}  // namespace detail

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double na = a.norm(), nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return a.dot(b) / (na * nb);
}

// ranked candidate ensemble; highest cosine to the target embedding first
inline std::vector<Candidate> sample(const GenerationSpec& spec, const DiffusionConfig& cfg,
                                     Denoiser& den, model::LaneEncoder& enc, uint64_t seed) {
    spec.validate();
    cfg.validate();
    Schedule sched = beta_schedule(cfg);
    auto [w_s, frame] = canonicalize_anchor(spec.anchor);
    std::vector<Candidate> out;
    for (int c = 0; c < cfg.n_candidates; ++c) {
        Rng crng = Rng(seed).substream("candidate").substream(static_cast<uint64_t>(c));
        Eigen::VectorXd x;
        bool ok = false;
        for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
            x = detail::sample_one(den, sched, w_s, spec.target_embedding, cfg.t0, crng);
            ok = x.allFinite();
        }
        if (!ok) throw std::runtime_error("sample: candidate produced non-finite geometry twice");
        Candidate cand;
        if (cfg.t0 == 0) {
            // no noising, no denoising: the warm start is the anchor itself
            cand.points = spec.anchor;
        } else {
            Eigen::MatrixX2d world = decanonicalize(x, frame);
            cand.points = geom::resample_arclength(geom::to_polyline(world), data::kGeomPoints);
        }
        cand.spec_role = spec.spec_role;
        cand.group_id = spec.group_id;
        Eigen::VectorXd z = encode_geometry_only(enc, cand.points, spec.descriptor);
        cand.cosine_score = cosine(z, spec.target_embedding);
        cand.smoothness = geom::curvature_smoothness(geom::to_polyline(cand.points));
        out.push_back(std::move(cand));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Candidate& a, const Candidate& b) { return a.cosine_score > b.cosine_score; });
    return out;
}

// candidate export in the dataset array format: json index + arrays.bin
inline void save_candidates(const std::vector<Candidate>& cands, const std::string& json_path,
                            const std::string& bin_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("save_candidates: cannot write " + bin_path);
    nlohmann::json idx = nlohmann::json::array();
    for (const auto& c : cands) {
        uint64_t offset = static_cast<uint64_t>(bin.tellp());
        io::write_block(bin, io::from_matrix(c.points));
        idx.push_back({{"spec_role", spec_role_name(c.spec_role)},
                       {"group_id", c.group_id},
                       {"cosine_score", c.cosine_score},
                       {"smoothness", c.smoothness},
                       {"outlier", c.outlier},
                       {"points_offset", offset}});
    }
    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("save_candidates: cannot write " + json_path);
    js << idx.dump(2) << '\n';
}

inline std::vector<Candidate> load_candidates(const std::string& json_path, const std::string& bin_path) {
    std::ifstream js(json_path);
    if (!js) throw std::runtime_error("load_candidates: cannot open " + json_path);
    nlohmann::json idx = nlohmann::json::parse(js);
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("load_candidates: cannot open " + bin_path);
    std::vector<Candidate> out;
    for (const auto& e : idx) {
        Candidate c;
        c.spec_role = spec_role_from_name(e.at("spec_role").get<std::string>());
        c.group_id = e.at("group_id").get<std::string>();
        c.cosine_score = e.at("cosine_score").get<double>();
        c.smoothness = e.at("smoothness").get<double>();
        c.outlier = e.at("outlier").get<bool>();
        auto blk = io::read_block(bin, e.at("points_offset").get<uint64_t>());
        c.points = io::to_matrix(blk);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace lanerep::gen
