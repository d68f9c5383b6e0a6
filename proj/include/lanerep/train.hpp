#pragma once

// Training loop: regime handling, per-epoch corruption resampling, phase
// scheduling, curve logging, and checkpointing.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lanerep/anomaly.hpp"
#include "lanerep/checkpoint.hpp"
#include "lanerep/dataset_io.hpp"
#include "lanerep/encoder.hpp"
#include "lanerep/losses.hpp"
#include "lanerep/nn.hpp"

namespace lanerep::train {

struct TrainConfig {
    int epochs = 200;
    int batch_groups = 8;
    double learning_rate = 1e-3;
    double corruption_fraction = 0.2;   // of valid training windows, per epoch
    double eval_corruption_prob = 0.15; // validation-split corruption rate
    double val_fraction = 0.15;         // held-out fraction of groups
    double two_stage_split = 0.5;       // fraction of epochs in stage 1
    int checkpoint_every = 0;           // 0 = final only
    int negative_pair_sample = 512;
    uint64_t seed = 21;
    LossWeights weights;
    Regime regime = Regime::joint;

    void validate() const {
        weights.validate();
        if (epochs < 1 || batch_groups < 1) throw std::invalid_argument("TrainConfig: bad sizes");
        if (val_fraction < 0.0 || val_fraction >= 1.0)
            throw std::invalid_argument("TrainConfig: val_fraction must be in [0,1)");
        if (corruption_fraction < 0.0 || corruption_fraction > 1.0 ||
            eval_corruption_prob < 0.0 || eval_corruption_prob > 1.0)
            throw std::invalid_argument("TrainConfig: corruption rates must be in [0,1]");
        if (two_stage_split <= 0.0 || two_stage_split >= 1.0)
            throw std::invalid_argument("TrainConfig: two_stage_split must be in (0,1)");
    }
};

struct CurveRow {
    int epoch = 0;
    double pos_sim = 0, neg_sim = 0, anomaly_acc = 0;
    double l_ctr = 0, l_role = 0, l_group = 0, l_temp = 0;
    double w_ctr = 0, w_role = 0;
};

inline void write_curves_csv(const std::vector<CurveRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_curves_csv: cannot write " + path);
    os.precision(10);
    os << "epoch,pos_sim,neg_sim,anomaly_acc,l_ctr,l_role,l_group,l_temp,w_ctr,w_role\n";
    for (const auto& r : rows)
        os << r.epoch << ',' << r.pos_sim << ',' << r.neg_sim << ',' << r.anomaly_acc << ','
           << r.l_ctr << ',' << r.l_role << ',' << r.l_group << ',' << r.l_temp << ','
           << r.w_ctr << ',' << r.w_role << '\n';
}

struct TrainResult {
    std::vector<CurveRow> curves;
    std::vector<std::string> train_lane_ids, val_lane_ids;
    int skipped_anchors = 0;  // anchors without an in-batch positive, summed
};

namespace detail {

// corrupt a random subset of a lane's valid windows on a working copy
inline model::LaneInput corrupted_input(const data::LaneRecord& rec, double frac, Rng& rng,
                                        data::LaneRecord& scratch) {
    scratch = rec;
    for (auto& w : scratch.windows) {
        if (!w.is_valid || !rng.bernoulli(frac)) continue;
        auto kind = anomaly::choose_kind(w, rng);
        anomaly::inject(w, anomaly::default_spec(kind), scratch.centerline_cam, rng);
    }
    return model::make_lane_input(scratch);
}

inline std::vector<std::vector<std::string>> partition_groups(std::vector<std::string> groups,
                                                              int per_batch, Rng& rng) {
    rng.shuffle(groups);
    std::vector<std::vector<std::string>> batches;
    for (size_t i = 0; i < groups.size(); i += static_cast<size_t>(per_batch)) {
        size_t e = std::min(groups.size(), i + static_cast<size_t>(per_batch));
        batches.emplace_back(groups.begin() + static_cast<long>(i), groups.begin() + static_cast<long>(e));
    }
    return batches;
}

struct PairSims {
    double pos = 0, neg = 0;
};

}  // namespace detail

class Trainer {
public:
    TrainConfig cfg;
    model::LaneEncoder* encoder;
    anomaly::Detector* detector;
    const data::Dataset* dataset;

    Trainer(const TrainConfig& c, model::LaneEncoder* enc, anomaly::Detector* det,
            const data::Dataset* ds)
        : cfg(c), encoder(enc), detector(det), dataset(ds) {
        cfg.validate();
        setup_splits();
        setup_regime();
    }

    TrainResult run(const std::string& curves_path = "", const std::string& checkpoint_dir = "") {
        TrainResult result;
        result.train_lane_ids = train_lane_ids_;
        result.val_lane_ids = val_lane_ids_;
        if (cfg.regime == Regime::traj_stats_baseline)
            throw std::invalid_argument("train: traj_stats_baseline trains nothing");
        if (pairs_.positives.empty() && uses_contrastive())
            throw std::invalid_argument("train: empty positive-pair set under a contrastive regime");

        nn::Adam opt;
        opt.lr = cfg.learning_rate;
        auto enc_params = encoder->params();
        auto det_params = detector->params();
        std::vector<ad::Param*> all_params = enc_params;
        all_params.insert(all_params.end(), det_params.begin(), det_params.end());

        const int stage1_end = (cfg.regime == Regime::two_stage_frozen)
                                   ? std::max(1, static_cast<int>(cfg.epochs * cfg.two_stage_split))
                                   : cfg.epochs;

        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            bool stage2 = epoch >= stage1_end;  // two_stage only
            if (cfg.regime == Regime::two_stage_frozen && epoch == stage1_end)
                encoder->set_frozen(true);

            auto [w_ctr, w_role] = phase_weights(epoch, cfg.epochs);
            double alpha = cfg.weights.alpha, beta = cfg.weights.beta;
            if (cfg.regime == Regime::contrastive_only) alpha = 0.0;
            if (cfg.regime == Regime::two_stage_frozen) {
                if (stage2) {
                    beta = 0.0;  // temporal head only
                } else {
                    alpha = 0.0;  // encoder pretraining
                }
            }

            Rng erng = Rng(cfg.seed).substream("epoch").substream(static_cast<uint64_t>(epoch));
            auto batches = detail::partition_groups(train_groups_, cfg.batch_groups, erng);

            double s_ctr = 0, s_role = 0, s_group = 0, s_temp = 0;
            int n_batches = 0;
            for (const auto& batch_groups : batches) {
                auto [lctr, lrole, lgroup, ltemp] =
                    train_batch(batch_groups, alpha, beta, w_ctr, w_role, erng, opt, all_params,
                                &result.skipped_anchors);
                s_ctr += lctr;
                s_role += lrole;
                s_group += lgroup;
                s_temp += ltemp;
                ++n_batches;
            }

            CurveRow row;
            row.epoch = epoch;
            row.l_ctr = s_ctr / n_batches;
            row.l_role = s_role / n_batches;
            row.l_group = s_group / n_batches;
            row.l_temp = s_temp / n_batches;
            row.w_ctr = w_ctr;
            row.w_role = w_role;
            auto sims = eval_pair_sims();
            row.pos_sim = sims.pos;
            row.neg_sim = sims.neg;
            row.anomaly_acc = eval_anomaly_accuracy();
            result.curves.push_back(row);

            if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
                (epoch + 1) % cfg.checkpoint_every == 0)
                save(checkpoint_dir + "/epoch_" + std::to_string(epoch + 1) + ".ckpt");
        }
        if (!curves_path.empty()) write_curves_csv(result.curves, curves_path);
        if (!checkpoint_dir.empty()) save(checkpoint_dir + "/final.ckpt");
        return result;
    }

    void save(const std::string& path) const {
        nn::Checkpoint c;
        c.config = {{"regime", regime_name(cfg.regime)},
                    {"epochs", cfg.epochs},
                    {"tau", cfg.weights.tau},
                    {"alpha", cfg.weights.alpha},
                    {"beta", cfg.weights.beta},
                    {"encoder",
                     {{"transformer_layers", encoder->cfg.transformer_layers},
                      {"attention_heads", encoder->cfg.attention_heads},
                      {"ffn_dim", encoder->cfg.ffn_dim},
                      {"dropout_rate", encoder->cfg.dropout_rate},
                      {"geometry_dropout_p", encoder->cfg.geometry_dropout_p},
                      {"seed", encoder->cfg.seed}}},
                    {"detector",
                     {{"gru_hidden", detector->cfg.gru_hidden},
                      {"head_hidden", detector->cfg.head_hidden},
                      {"threshold", detector->cfg.threshold},
                      {"seed", detector->cfg.seed}}}};
        c.seed = cfg.seed;
        auto* enc = const_cast<model::LaneEncoder*>(encoder);
        auto* det = const_cast<anomaly::Detector*>(detector);
        for (ad::Param* p : enc->params()) c.tensors[p->name] = p->value;
        for (auto& [name, buf] : enc->buffers()) c.tensors[name] = *buf;
        for (ad::Param* p : det->params()) c.tensors[p->name] = p->value;
        nn::save_checkpoint(c, path);
    }

    // encode every lane in eval mode; returns pooled/attended/projection rows
    struct EvalEmbeddings {
        std::map<std::string, Eigen::RowVectorXd> pooled, attended, projection;
    };

    EvalEmbeddings eval_embeddings() {
        EvalEmbeddings out;
        // batch per camera to bound tape size; eval mode uses running BN stats
        for (const auto& cam : dataset->camera_ids()) {
            ad::Tape t;
            std::vector<model::LaneInput> lanes;
            std::vector<const data::LaneRecord*> recs;
            for (const auto& r : dataset->records)
                if (r.camera_id == cam) {
                    lanes.push_back(model::make_lane_input(r));
                    recs.push_back(&r);
                }
            if (lanes.empty()) continue;
            auto enc = encoder->forward(t, lanes, false, nullptr);
            for (size_t i = 0; i < recs.size(); ++i) {
                out.pooled[recs[i]->lane_id] = enc.pooled[i]->val.row(0);
                out.attended[recs[i]->lane_id] = enc.attended[i]->val.row(0);
                out.projection[recs[i]->lane_id] = enc.projection[i]->val.row(0);
            }
        }
        return out;
    }

    const data::PairSet& pairs() const { return pairs_; }

private:
    std::vector<std::string> train_groups_, val_groups_;
    std::vector<std::string> train_lane_ids_, val_lane_ids_;
    std::map<std::string, std::vector<const data::LaneRecord*>> by_group_;
    std::map<std::string, std::vector<const data::LaneRecord*>> partners_;
    data::PairSet pairs_;
    std::vector<std::pair<std::string, std::string>> neg_pairs_;
    // fixed-corruption validation copies for the per-epoch anomaly metric
    std::vector<data::LaneRecord> val_corrupted_;

    bool uses_contrastive() const {
        return cfg.regime != Regime::traj_stats_baseline;
    }

    void setup_splits() {
        std::set<std::string> group_set;
        for (const auto& r : dataset->records) group_set.insert(r.group_id);
        std::vector<std::string> groups(group_set.begin(), group_set.end());
        Rng rng = Rng(cfg.seed).substream("valsplit");
        rng.shuffle(groups);
        size_t n_val = static_cast<size_t>(cfg.val_fraction * static_cast<double>(groups.size()));
        if (n_val == 0 && groups.size() > 1 && cfg.val_fraction > 0.0) n_val = 1;
        for (size_t i = 0; i < groups.size(); ++i)
            (i < n_val ? val_groups_ : train_groups_).push_back(groups[i]);
        std::sort(train_groups_.begin(), train_groups_.end());
        std::sort(val_groups_.begin(), val_groups_.end());

        for (const auto& r : dataset->records) by_group_[r.group_id].push_back(&r);
        std::set<std::string> val_set(val_groups_.begin(), val_groups_.end());
        std::vector<const data::LaneRecord*> train_recs;
        for (const auto& r : dataset->records)
            if (val_set.count(r.group_id))
                val_lane_ids_.push_back(r.lane_id);
            else {
                train_lane_ids_.push_back(r.lane_id);
                train_recs.push_back(&r);
            }
        pairs_ = data::mine_positive_pairs(train_recs);
        std::map<std::string, const data::LaneRecord*> rec_by_id;
        for (const auto* r : train_recs) rec_by_id[r->lane_id] = r;
        for (const auto& [a, b] : pairs_.positives) {
            partners_[a].push_back(rec_by_id.at(b));
            partners_[b].push_back(rec_by_id.at(a));
        }

        // fixed sample of cross-lane non-positive pairs for the neg_sim curve
        std::set<std::pair<std::string, std::string>> pos_set(pairs_.positives.begin(), pairs_.positives.end());
        Rng nrng = Rng(cfg.seed).substream("negpairs");
        int guard = 0;
        while (static_cast<int>(neg_pairs_.size()) < cfg.negative_pair_sample &&
               guard++ < cfg.negative_pair_sample * 50) {
            const auto* a = train_recs[static_cast<size_t>(nrng.uniform_int(0, static_cast<int>(train_recs.size()) - 1))];
            const auto* b = train_recs[static_cast<size_t>(nrng.uniform_int(0, static_cast<int>(train_recs.size()) - 1))];
            if (a->lane_id == b->lane_id) continue;
            auto key = std::minmax(a->lane_id, b->lane_id);
            if (pos_set.count({key.first, key.second})) continue;
            neg_pairs_.emplace_back(key.first, key.second);
        }

        // fixed validation corruption so the accuracy curve tracks learning,
        // not resampled noise
        Rng crng = Rng(cfg.seed).substream("valcorrupt");
        for (const auto& lane_id : val_lane_ids_) {
            data::LaneRecord copy = *dataset->find(lane_id);
            for (auto& w : copy.windows) {
                if (!w.is_valid || !crng.bernoulli(cfg.eval_corruption_prob)) continue;
                auto kind = anomaly::choose_kind(w, crng);
                anomaly::inject(w, anomaly::default_spec(kind), copy.centerline_cam, crng);
            }
            val_corrupted_.push_back(std::move(copy));
        }
    }

    void setup_regime() {
        encoder->disable_geometry = (cfg.regime == Regime::trajectory_only);
        encoder->disable_trajectory = (cfg.regime == Regime::geometry_only);
        encoder->disable_descriptor =
            (cfg.regime == Regime::geometry_only || cfg.regime == Regime::trajectory_only);
    }

    std::tuple<double, double, double, double> train_batch(
        const std::vector<std::string>& batch_groups, double alpha, double beta, double w_ctr,
        double w_role, Rng& erng, nn::Adam& opt, std::vector<ad::Param*>& all_params,
        int* skipped_anchors) {
        ad::Tape t;
        std::vector<const data::LaneRecord*> recs;
        std::set<std::string> in_batch;
        for (const auto& g : batch_groups)
            for (const auto* r : by_group_.at(g)) {
                recs.push_back(r);
                in_batch.insert(r->lane_id);
            }
        // group-sampled batches rarely contain a lane's cross-camera partner,
        // which starves the contrastive term; pull one mined positive in for
        // every anchor that lacks one
        const size_t n_base = recs.size();
        for (size_t i = 0; i < n_base; ++i) {
            auto it = partners_.find(recs[i]->lane_id);
            if (it == partners_.end()) continue;
            bool present = std::any_of(it->second.begin(), it->second.end(),
                                       [&](const data::LaneRecord* p) { return in_batch.count(p->lane_id) > 0; });
            if (present) continue;
            const auto* p = it->second[static_cast<size_t>(
                erng.uniform_int(0, static_cast<int>(it->second.size()) - 1))];
            recs.push_back(p);
            in_batch.insert(p->lane_id);
        }

        std::vector<model::LaneInput> lanes;
        std::vector<data::LaneRecord> scratch;
        // reserve so pointers held inside LaneInput stay stable
        scratch.reserve(recs.size());
        for (const auto* r : recs) {
            scratch.emplace_back();
            lanes.push_back(detail::corrupted_input(*r, cfg.corruption_fraction, erng, scratch.back()));
        }
        Rng drng = erng.substream("dropout");
        auto out = encoder->forward(t, lanes, true, &drng);
        const int B = static_cast<int>(lanes.size());

        // contrastive term
        std::map<std::string, int> idx_of;
        for (int i = 0; i < B; ++i) idx_of[recs[static_cast<size_t>(i)]->lane_id] = i;
        std::vector<int> positive(static_cast<size_t>(B), -1);
        for (int i = 0; i < B; ++i) {
            auto it = partners_.find(recs[static_cast<size_t>(i)]->lane_id);
            if (it == partners_.end()) continue;
            std::vector<int> candidates;
            for (const auto* p : it->second) {
                auto f = idx_of.find(p->lane_id);
                if (f != idx_of.end()) candidates.push_back(f->second);
            }
            if (candidates.empty()) continue;
            // rotate the designated positive across epochs instead of pinning
            // the first mined partner
            positive[static_cast<size_t>(i)] = candidates[static_cast<size_t>(
                erng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
        }
        bool any_pos = std::any_of(positive.begin(), positive.end(), [](int p) { return p >= 0; });
        ad::Var l_ctr = nullptr;
        if (any_pos) {
            std::vector<ad::Var> proj_rows = out.projection;
            ad::Var P = ad::concat_rows(t, proj_rows);
            int skipped = 0;
            l_ctr = info_nce(t, P, positive, cfg.weights.tau, &skipped);
            if (skipped_anchors) *skipped_anchors += skipped;
        }

        // role + group terms
        ad::Mat rank_t(B, 1), edge_t(B, 2), size_t_(B, 1);
        for (int i = 0; i < B; ++i) {
            const auto* r = recs[static_cast<size_t>(i)];
            rank_t(i, 0) = r->truth_rank;
            edge_t(i, 0) = r->truth_leftmost ? 1.0 : 0.0;
            edge_t(i, 1) = r->truth_rightmost ? 1.0 : 0.0;
            size_t_(i, 0) = std::min(1.0, r->truth_group_size / data::kGroupSizeDivisor);
        }
        RoleLoss rl = role_loss(t, out.rank_logits, rank_t, out.edge_logits, edge_t,
                                out.size_logits, size_t_);
        std::vector<std::vector<int>> group_idx;
        {
            std::map<std::string, std::vector<int>> gm;
            for (int i = 0; i < B; ++i) gm[recs[static_cast<size_t>(i)]->group_id].push_back(i);
            for (auto& [g, v] : gm) group_idx.push_back(v);
        }
        ad::Var l_group = group_consistency_loss(t, out.rank_logits, group_idx);

        // temporal term
        ad::Var l_temp = nullptr;
        if (alpha > 0.0) {
            std::vector<ad::Var> lane_terms;
            for (int i = 0; i < B; ++i) {
                auto logits = detector->sequence_logits(t, out.z[static_cast<size_t>(i)]);
                std::vector<ad::Var> wl;
                std::vector<double> labels;
                std::vector<bool> valid;
                for (size_t w = 0; w < logits.size(); ++w) {
                    if (!logits[w]) continue;
                    wl.push_back(logits[w]);
                    labels.push_back(lanes[static_cast<size_t>(i)].windows[w].anomaly_label);
                    valid.push_back(true);
                }
                if (wl.empty()) continue;
                lane_terms.push_back(temporal_loss(t, wl, labels, valid));
            }
            if (!lane_terms.empty()) l_temp = ad::mean_all(t, ad::concat_rows(t, lane_terms));
        }

        // L = alpha * L_temp + beta * (w_ctr * L_ctr + w_role * (L_role + gcw * L_group))
        ad::Var total = nullptr;
        auto acc = [&](ad::Var v, double w) {
            if (!v || w == 0.0) return;
            ad::Var term = ad::scale(t, v, w);
            total = total ? ad::add(t, total, term) : term;
        };
        acc(l_ctr, beta * w_ctr);
        acc(rl.combined, beta * w_role);
        acc(l_group, beta * w_role * cfg.weights.group_consistency_weight);
        acc(l_temp, alpha);
        if (total) {
            nn::Adam::zero_grad(all_params);
            t.backward(total);
            opt.step(all_params);
        }
        return {l_ctr ? l_ctr->val(0, 0) : 0.0, rl.combined->val(0, 0), l_group->val(0, 0),
                l_temp ? l_temp->val(0, 0) : 0.0};
    }

    detail::PairSims eval_pair_sims() {
        auto emb = eval_embeddings();
        detail::PairSims s;
        int np = 0, nn_ = 0;
        for (const auto& [a, b] : pairs_.positives) {
            s.pos += emb.projection.at(a).dot(emb.projection.at(b));
            ++np;
        }
        for (const auto& [a, b] : neg_pairs_) {
            s.neg += emb.projection.at(a).dot(emb.projection.at(b));
            ++nn_;
        }
        if (np) s.pos /= np;
        if (nn_) s.neg /= nn_;
        return s;
    }

    double eval_anomaly_accuracy() {
        if (val_corrupted_.empty()) return 0.0;
        long correct = 0, total = 0;
        for (const auto& rec : val_corrupted_) {
            ad::Tape t;
            std::vector<model::LaneInput> one{model::make_lane_input(rec)};
            auto enc = encoder->forward(t, one, false, nullptr);
            std::vector<Eigen::RowVectorXd> z;
            std::vector<bool> valid;
            for (auto* zw : enc.z[0]) {
                z.emplace_back(zw ? Eigen::RowVectorXd(zw->val.row(0))
                                  : Eigen::RowVectorXd::Zero(encoder->cfg.embed_dim).eval());
                valid.push_back(zw != nullptr);
            }
            auto probs = detector->detect_sequence(z, valid);
            for (size_t w = 0; w < probs.size(); ++w) {
                if (!valid[w]) continue;
                int pred = probs[w] > detector->cfg.threshold ? 1 : 0;
                if (pred == rec.windows[w].anomaly_label) ++correct;
                ++total;
            }
        }
        return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    }
};

}  // namespace lanerep::train
