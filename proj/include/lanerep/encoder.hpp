#pragma once

// Three-stream lane encoder: geometry / trajectory / descriptor streams,
// fusion to per-window embeddings, pooling over valid windows, cross-lane
// attention with pairwise relative-feature bias, projection and role heads,
// and geometry dropout.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanerep/ad.hpp"
#include "lanerep/checkpoint.hpp"
#include "lanerep/dataset.hpp"
#include "lanerep/nn.hpp"
#include "lanerep/rng.hpp"

namespace lanerep::model {

using ad::Mat;
using ad::Param;
using ad::Tape;
using ad::Var;

struct EncoderConfig {
    int K = 16;
    int stream_dim = 64;
    int embed_dim = 128;
    int fusion_hidden = 256;
    int transformer_layers = 2;
    int attention_heads = 4;
    int ffn_dim = 128;
    double dropout_rate = 0.1;
    double geometry_dropout_p = 0.3;
    int projection_dim = 64;
    uint64_t seed = 1;

    void validate() const {
        if (geometry_dropout_p < 0.0 || geometry_dropout_p >= 1.0)
            throw std::invalid_argument("EncoderConfig: geometry_dropout_p must be in [0,1)");
        if (3 * stream_dim != 192 || embed_dim != 128)
            throw std::invalid_argument("EncoderConfig: stream/embed dims are fixed by the fusion shape");
        if (stream_dim % attention_heads != 0 || embed_dim % attention_heads != 0)
            throw std::invalid_argument("EncoderConfig: heads must divide stream and embed dims");
    }
};

// one lane's inputs for a batched forward pass
struct WindowInput {
    std::vector<const Eigen::MatrixX2d*> tracklets;  // resampled 16x2 each
    std::vector<bool> mask;                          // valid flags per slot
    Eigen::Matrix<double, 9, 1> descriptor;
    bool valid = false;
    int anomaly_label = 0;
};

struct LaneInput {
    std::string lane_id;
    std::string group_id;
    Eigen::MatrixX2d geometry;     // 16x2
    std::vector<WindowInput> windows;
    bool drop_geometry = false;    // query-side geometry-absent encoding
};

// pairwise relative features for one group (n x n x 3, flattened row-major)
inline Mat pairwise_features(const std::vector<Eigen::Vector4d>& lane_stats, double eps = 1e-6) {
    const int n = static_cast<int>(lane_stats.size());
    Mat phi(n * n, 3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double d_lat = lane_stats[i][2] - lane_stats[j][2];
            double d_spd = lane_stats[i][0] - lane_stats[j][0];
            double rho = lane_stats[i][3] / (lane_stats[j][3] + eps);
            rho = std::clamp(rho, -10.0, 10.0);
            phi.row(i * n + j) << d_lat, d_spd, rho;
        }
    return phi;
}

struct EncodeOutput {
    // per lane
    std::vector<Var> f_geom;            // 1 x 64, post-BN post-dropout
    std::vector<std::vector<Var>> z;    // per window 1 x 128 (nullptr = invalid window)
    std::vector<Var> pooled;            // zbar, 1 x 128
    std::vector<bool> pooled_valid;
    std::vector<Var> attended;          // ztilde, 1 x 128
    std::vector<Var> projection;        // unit-norm 1 x 64
    Var rank_logits = nullptr;          // L x 1 (from pooled)
    Var edge_logits = nullptr;          // L x 2
    Var size_logits = nullptr;          // L x 1
};

class LaneEncoder {
public:
    EncoderConfig cfg;
    Mat pe;  // sinusoidal position code over K tokens

    nn::Linear geom_in;
    std::vector<nn::TransformerLayer> geom_tf;
    nn::BatchNorm bn_geom;
    nn::Linear traj_in;
    std::vector<nn::TransformerLayer> traj_tf;
    nn::BatchNorm bn_traj;
    nn::BatchNorm bn_desc_in;  // raw stats span ~5 orders of magnitude
    nn::Linear desc1, desc2;
    nn::BatchNorm bn_desc;
    nn::Linear fuse1, fuse2;
    nn::MultiHeadAttention xattn;
    nn::Linear xattn_bias;  // 3 -> heads, zero-initialized
    nn::LayerNorm xattn_ln;
    nn::Linear proj1, proj2;
    nn::BatchNorm bn_proj;
    nn::Linear rank1, rank2, edge_head, size_head;

    // regime switches: zero a stream's embedding entirely
    bool disable_geometry = false;
    bool disable_trajectory = false;
    bool disable_descriptor = false;

    explicit LaneEncoder(const EncoderConfig& c = {}) : cfg(c) {
        cfg.validate();
        Rng rng(cfg.seed);
        const int d = cfg.stream_dim;
        pe = nn::sinusoidal_encoding(cfg.K, d);
        geom_in = nn::Linear("geom.in", 2, d, rng);
        traj_in = nn::Linear("traj.in", 2, d, rng);
        for (int l = 0; l < cfg.transformer_layers; ++l) {
            geom_tf.emplace_back("geom.tf" + std::to_string(l), d, cfg.ffn_dim, cfg.attention_heads, rng);
            traj_tf.emplace_back("traj.tf" + std::to_string(l), d, cfg.ffn_dim, cfg.attention_heads, rng);
        }
        bn_geom = nn::BatchNorm("geom.bn", d);
        bn_traj = nn::BatchNorm("traj.bn", d);
        bn_desc_in = nn::BatchNorm("desc.bn_in", 9);
        bn_desc = nn::BatchNorm("desc.bn", d);
        desc1 = nn::Linear("desc.fc1", 9, d, rng);
        desc2 = nn::Linear("desc.fc2", d, d, rng);
        fuse1 = nn::Linear("fuse.fc1", 3 * d, cfg.fusion_hidden, rng);
        fuse2 = nn::Linear("fuse.fc2", cfg.fusion_hidden, cfg.embed_dim, rng);
        xattn = nn::MultiHeadAttention("xattn", cfg.embed_dim, cfg.attention_heads, rng);
        xattn_bias = nn::Linear("xattn.bias", 3, cfg.attention_heads, rng);
        xattn_bias.W.value.setZero();  // training starts from unbiased attention
        xattn_bias.b.value.setZero();
        xattn_ln = nn::LayerNorm("xattn.ln", cfg.embed_dim);
        proj1 = nn::Linear("proj.fc1", cfg.embed_dim, cfg.embed_dim, rng);
        proj2 = nn::Linear("proj.fc2", cfg.embed_dim, cfg.projection_dim, rng);
        bn_proj = nn::BatchNorm("proj.bn", cfg.projection_dim);
        rank1 = nn::Linear("head.rank1", cfg.embed_dim, 32, rng);
        rank2 = nn::Linear("head.rank2", 32, 1, rng);
        edge_head = nn::Linear("head.edge", cfg.embed_dim, 2, rng);
        size_head = nn::Linear("head.size", cfg.embed_dim, 1, rng);
    }

    std::vector<Param*> params() {
        std::vector<Param*> ps;
        geom_in.collect(ps);
        traj_in.collect(ps);
        for (auto& l : geom_tf) l.collect(ps);
        for (auto& l : traj_tf) l.collect(ps);
        bn_geom.collect(ps);
        bn_traj.collect(ps);
        bn_desc_in.collect(ps);
        bn_desc.collect(ps);
        desc1.collect(ps);
        desc2.collect(ps);
        fuse1.collect(ps);
        fuse2.collect(ps);
        xattn.collect(ps);
        xattn_bias.collect(ps);
        xattn_ln.collect(ps);
        proj1.collect(ps);
        proj2.collect(ps);
        bn_proj.collect(ps);
        rank1.collect(ps);
        rank2.collect(ps);
        edge_head.collect(ps);
        size_head.collect(ps);
        return ps;
    }

    void set_frozen(bool frozen) {
        for (Param* p : params()) p->frozen = frozen;
    }

    // batch-norm running statistics, for checkpointing
    std::map<std::string, Mat*> buffers() {
        return {{"geom.bn.running_mean", &bn_geom.running_mean},
                {"geom.bn.running_var", &bn_geom.running_var},
                {"traj.bn.running_mean", &bn_traj.running_mean},
                {"traj.bn.running_var", &bn_traj.running_var},
                {"desc.bn_in.running_mean", &bn_desc_in.running_mean},
                {"desc.bn_in.running_var", &bn_desc_in.running_var},
                {"desc.bn.running_mean", &bn_desc.running_mean},
                {"desc.bn.running_var", &bn_desc.running_var},
                {"proj.bn.running_mean", &bn_proj.running_mean},
                {"proj.bn.running_var", &bn_proj.running_var}};
    }

    // --- single-item stream encoders (pre batch-norm) ---

    Var encode_polyline_tokens(Tape& t, const Eigen::MatrixX2d& pts, bool geometry_stream) {
        if (!pts.allFinite()) throw std::invalid_argument("encode: non-finite input");
        if (pts.rows() != cfg.K) throw std::invalid_argument("encode: expected K x 2 input");
        Var x = t.constant(pts);
        Var h = geometry_stream ? geom_in(t, x) : traj_in(t, x);
        h = ad::add(t, h, t.constant(pe));
        auto& layers = geometry_stream ? geom_tf : traj_tf;
        for (auto& l : layers) h = l(t, h);
        return ad::mean_rows(t, h);  // 1 x 64
    }

    // masked mean over valid tracklet slots; pre batch-norm. Returns nullptr
    // when no slot is valid (invalid window).
    Var encode_trajectory_set(Tape& t, const std::vector<const Eigen::MatrixX2d*>& tracklets,
                              const std::vector<bool>& mask) {
        if (tracklets.size() != mask.size())
            throw std::invalid_argument("encode_trajectory_set: mask shape mismatch");
        std::vector<Var> rows;
        for (size_t i = 0; i < tracklets.size(); ++i)
            if (mask[i]) rows.push_back(encode_polyline_tokens(t, *tracklets[i], false));
        if (rows.empty()) return nullptr;
        if (rows.size() == 1) return rows[0];
        return ad::mean_rows(t, ad::concat_rows(t, rows));
    }

    Var encode_descriptor_raw(Tape& t, Var d9, bool training) {  // rows x 9 -> rows x 64
        Var n = bn_desc_in(t, d9, training);
        return ad::gelu(t, desc2(t, ad::gelu(t, desc1(t, n))));
    }

    Var fuse(Tape& t, Var fg, Var fx, Var fs, bool training, Rng* rng) {
        Var c = ad::concat_cols(t, {fg, fx, fs});
        Var h = ad::gelu(t, fuse1(t, c));
        if (training && cfg.dropout_rate > 0.0 && rng) {
            Mat mask(h->val.rows(), h->val.cols());
            for (Eigen::Index r = 0; r < mask.rows(); ++r)
                for (Eigen::Index col = 0; col < mask.cols(); ++col)
                    mask(r, col) = rng->bernoulli(cfg.dropout_rate) ? 0.0 : 1.0 / (1.0 - cfg.dropout_rate);
            h = ad::cmul(t, h, t.constant(mask));
        }
        return fuse2(t, h);
    }

    Var project(Tape& t, Var ztilde, bool training) {
        Var p = proj2(t, ad::gelu(t, proj1(t, ztilde)));
        p = bn_proj(t, p, training);
        return ad::l2_normalize_rows(t, p);
    }

    // role heads attach to the pre-attention pooled embedding
    std::tuple<Var, Var, Var> role_heads(Tape& t, Var zbar_rows) {
        Var r = rank2(t, ad::gelu(t, rank1(t, zbar_rows)));
        Var e = edge_head(t, zbar_rows);
        Var s = size_head(t, zbar_rows);
        return {r, e, s};
    }

    // cross-lane attention over one group; pad_mask: true = real lane
    Var cross_lane_attention(Tape& t, Var group_rows, const Mat& phi,
                             const std::vector<bool>& pad_mask) {
        const Eigen::Index n = group_rows->val.rows();
        bool any_real = false;
        for (bool m : pad_mask) any_real |= m;
        if (!any_real) throw std::invalid_argument("cross_lane_attention: all-padded group");
        Var bias_flat = xattn_bias(t, t.constant(phi));  // n^2 x heads
        std::vector<Var> bias;
        for (int h = 0; h < cfg.attention_heads; ++h)
            bias.push_back(ad::reshape_rm(t, ad::slice_cols(t, bias_flat, h, 1), n, n));
        Var attn_out = xattn(t, group_rows, &bias, &pad_mask);
        Var out = xattn_ln(t, ad::add(t, group_rows, attn_out));
        // padded slots emit zero rows and exert no influence
        Mat rowmask = Mat::Zero(n, 1);
        for (Eigen::Index i = 0; i < n; ++i) rowmask(i, 0) = pad_mask[static_cast<size_t>(i)] ? 1.0 : 0.0;
        Var maskv = t.constant(rowmask.replicate(1, out->val.cols()));
        return ad::cmul(t, out, maskv);
    }

    // --- full batched forward ---
    //
    // Encodes every lane of the batch: stream embeddings are batch-normalized
    // across the whole batch, per-window embeddings fused, pooled over valid
    // windows, then attention runs per group over pooled embeddings.
    EncodeOutput forward(Tape& t, const std::vector<LaneInput>& lanes, bool training, Rng* rng) {
        if (lanes.empty()) throw std::invalid_argument("forward: empty batch");
        const size_t L = lanes.size();

        // geometry stream
        std::vector<Var> g_rows;
        for (const auto& lane : lanes) g_rows.push_back(encode_polyline_tokens(t, lane.geometry, true));
        Var G = g_rows.size() == 1 ? g_rows[0] : ad::concat_rows(t, g_rows);
        if (disable_geometry) G = ad::scale(t, G, 0.0);
        G = bn_geom(t, G, training);
        // geometry dropout / query-side geometry omission
        {
            Mat mask(G->val.rows(), 1);
            for (size_t i = 0; i < L; ++i) {
                double m = 1.0;
                if (lanes[i].drop_geometry)
                    m = 0.0;
                else if (training && cfg.geometry_dropout_p > 0.0 && rng)
                    m = rng->bernoulli(cfg.geometry_dropout_p) ? 0.0
                                                               : 1.0 / (1.0 - cfg.geometry_dropout_p);
                mask(static_cast<Eigen::Index>(i), 0) = m;
            }
            G = ad::cmul(t, G, t.constant(mask.replicate(1, G->val.cols())));
        }

        // trajectory + descriptor streams over valid (lane, window) items
        struct Item {
            size_t lane;
            size_t window;
        };
        std::vector<Item> items;
        std::vector<Var> x_rows;
        Mat desc_rows_v;
        {
            std::vector<Eigen::Matrix<double, 9, 1>> descs;
            for (size_t i = 0; i < L; ++i)
                for (size_t w = 0; w < lanes[i].windows.size(); ++w) {
                    const auto& win = lanes[i].windows[w];
                    if (!win.valid) continue;
                    Var fx = encode_trajectory_set(t, win.tracklets, win.mask);
                    if (fx == nullptr) continue;
                    items.push_back({i, w});
                    x_rows.push_back(fx);
                    descs.push_back(win.descriptor);
                }
            desc_rows_v.resize(static_cast<Eigen::Index>(descs.size()), 9);
            for (size_t k = 0; k < descs.size(); ++k)
                desc_rows_v.row(static_cast<Eigen::Index>(k)) = descs[k].transpose();
        }

        EncodeOutput out;
        out.f_geom.resize(L);
        out.z.resize(L);
        for (size_t i = 0; i < L; ++i)
            out.z[i].assign(lanes[i].windows.size(), nullptr);

        for (size_t i = 0; i < L; ++i) out.f_geom[i] = ad::slice_rows(t, G, static_cast<Eigen::Index>(i), 1);

        if (!items.empty()) {
            Var X = x_rows.size() == 1 ? x_rows[0] : ad::concat_rows(t, x_rows);
            if (disable_trajectory) X = ad::scale(t, X, 0.0);
            X = bn_traj(t, X, training);
            Var S = encode_descriptor_raw(t, t.constant(desc_rows_v), training);
            if (disable_descriptor) S = ad::scale(t, S, 0.0);
            S = bn_desc(t, S, training);

            for (size_t k = 0; k < items.size(); ++k) {
                Var fx = ad::slice_rows(t, X, static_cast<Eigen::Index>(k), 1);
                Var fs = ad::slice_rows(t, S, static_cast<Eigen::Index>(k), 1);
                Var z = fuse(t, out.f_geom[items[k].lane], fx, fs, training, rng);
                out.z[items[k].lane][items[k].window] = z;
            }
        }

        // pooled per-lane embedding over valid windows
        out.pooled.resize(L);
        out.pooled_valid.resize(L);
        for (size_t i = 0; i < L; ++i) {
            std::vector<Var> valid_z;
            for (Var z : out.z[i])
                if (z) valid_z.push_back(z);
            if (valid_z.empty()) {
                out.pooled[i] = t.constant(Mat::Zero(1, cfg.embed_dim));
                out.pooled_valid[i] = false;
            } else {
                out.pooled[i] = valid_z.size() == 1 ? valid_z[0]
                                                    : ad::mean_rows(t, ad::concat_rows(t, valid_z));
                out.pooled_valid[i] = true;
            }
        }

        // cross-lane attention per group
        out.attended.resize(L);
        std::map<std::string, std::vector<size_t>> groups;
        for (size_t i = 0; i < L; ++i) groups[lanes[i].group_id].push_back(i);
        for (const auto& [gid, members] : groups) {
            std::vector<Var> rows;
            std::vector<Eigen::Vector4d> lane_stats;
            std::vector<bool> pad_mask;
            for (size_t i : members) {
                rows.push_back(out.pooled[i]);
                // per-lane aggregate stats over valid windows (constant inputs)
                Eigen::Vector4d s = Eigen::Vector4d::Zero();
                int nv = 0;
                for (const auto& w : lanes[i].windows)
                    if (w.valid) {
                        s += w.descriptor.head<4>();
                        ++nv;
                    }
                if (nv > 0) s /= nv;
                lane_stats.push_back(s);
                pad_mask.push_back(true);
            }
            Var group_rows = rows.size() == 1 ? rows[0] : ad::concat_rows(t, rows);
            Var attended = cross_lane_attention(t, group_rows, pairwise_features(lane_stats), pad_mask);
            for (size_t k = 0; k < members.size(); ++k)
                out.attended[members[k]] = ad::slice_rows(t, attended, static_cast<Eigen::Index>(k), 1);
        }

        // projection head (on attended) and role heads (on pooled)
        std::vector<Var> pooled_rows = out.pooled;
        Var ZB = pooled_rows.size() == 1 ? pooled_rows[0] : ad::concat_rows(t, pooled_rows);
        std::tie(out.rank_logits, out.edge_logits, out.size_logits) = role_heads(t, ZB);

        std::vector<Var> att_rows = out.attended;
        Var ZT = att_rows.size() == 1 ? att_rows[0] : ad::concat_rows(t, att_rows);
        Var P = project(t, ZT, training);
        out.projection.resize(L);
        for (size_t i = 0; i < L; ++i)
            out.projection[i] = ad::slice_rows(t, P, static_cast<Eigen::Index>(i), 1);
        return out;
    }

    // --- checkpointing ---

    nn::Checkpoint to_checkpoint(const nlohmann::json& config_echo) {
        nn::Checkpoint c;
        c.config = config_echo;
        c.seed = cfg.seed;
        for (Param* p : params()) c.tensors[p->name] = p->value;
        for (auto& [name, buf] : buffers()) c.tensors[name] = *buf;
        return c;
    }

    void load_from(const nn::Checkpoint& c) {
        for (Param* p : params()) {
            auto it = c.tensors.find(p->name);
            if (it == c.tensors.end())
                throw std::runtime_error("checkpoint missing tensor " + p->name);
            if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
                throw std::runtime_error("checkpoint shape mismatch for " + p->name);
            p->value = it->second;
        }
        for (auto& [name, buf] : buffers()) {
            auto it = c.tensors.find(name);
            if (it == c.tensors.end()) throw std::runtime_error("checkpoint missing buffer " + name);
            *buf = it->second;
        }
    }
};

// standalone inverted-dropout op on a stream embedding, used by tests and by
// query-side encoding (inference + drop requested => zero vector)
inline Eigen::VectorXd apply_geometry_dropout(const Eigen::VectorXd& f_g, double p, bool training,
                                              Rng& rng, bool query_drop = false) {
    if (p >= 1.0 || p < 0.0) throw std::invalid_argument("apply_geometry_dropout: p must be in [0,1)");
    if (!training) return query_drop ? Eigen::VectorXd::Zero(f_g.size()).eval() : f_g;
    if (p == 0.0) return f_g;
    if (rng.bernoulli(p)) return Eigen::VectorXd::Zero(f_g.size());
    return f_g / (1.0 - p);
}

// helper: build LaneInput from a LaneRecord (no corruption)
inline LaneInput make_lane_input(const data::LaneRecord& rec, bool drop_geometry = false) {
    LaneInput in;
    in.lane_id = rec.lane_id;
    in.group_id = rec.group_id;
    in.geometry = rec.geometry;
    in.drop_geometry = drop_geometry;
    for (size_t w = 0; w < rec.windows.size(); ++w) {
        WindowInput wi;
        const auto& win = rec.windows[w];
        for (size_t ti = 0; ti < win.tracklets.size(); ++ti) {
            wi.tracklets.push_back(&win.tracklets[ti]);
            wi.mask.push_back(win.valid_mask[ti]);
        }
        wi.descriptor = rec.fused_descriptor(static_cast<int>(w));
        wi.valid = win.is_valid;
        wi.anomaly_label = win.anomaly_label;
        in.windows.push_back(std::move(wi));
    }
    return in;
}

}  // namespace lanerep::model
