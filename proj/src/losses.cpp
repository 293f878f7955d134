#include "ccaf/losses.hpp"

#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace ccaf {

Var similarity_matrix(const Var& a, const Var& b, const SimilarityConfig& sim) {
    if (sim.temperature <= 0.0)
        throw std::invalid_argument("similarity: temperature must be positive");
    Var s = matmul(row_normalize(a), transpose(row_normalize(b)));
    return scale(s, 1.0 / sim.temperature);
}

// mean of -entries(i, pick[i]) over rows of a log-probability matrix
static Var mean_neg_picked(const Var& log_probs, const std::vector<int>& pick) {
    int n = static_cast<int>(log_probs->value.rows());
    Mat onehot = Mat::Zero(n, log_probs->value.cols());
    for (int i = 0; i < n; ++i) {
        if (pick[i] < 0 || pick[i] >= log_probs->value.cols())
            throw std::out_of_range("label " + std::to_string(pick[i]) + " out of range");
        onehot(i, pick[i]) = 1.0;
    }
    return scale(sum_all(mul(log_probs, constant(onehot))), -1.0 / n);
}

Var ce_loss(const Var& logits, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != logits->value.rows())
        throw std::invalid_argument("ce_loss: labels/logits size mismatch");
    if (!logits->value.allFinite())
        throw std::invalid_argument("ce_loss: non-finite logits");
    return mean_neg_picked(log_softmax_rows(logits), labels);
}

Var triplet_loss(const Var& features, const std::vector<int>& labels, double margin) {
    int n = static_cast<int>(features->value.rows());
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("triplet_loss: labels size mismatch");
    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2)
        throw std::invalid_argument("triplet_loss: batch needs >= 2 identities");

    // mining on values; the selected distances re-enter the graph
    const Mat& f = features->value;
    std::vector<int> hard_pos(n), hard_neg(n);
    for (int i = 0; i < n; ++i) {
        double dp = -1.0, dn = std::numeric_limits<double>::infinity();
        int pi = -1, ni = -1;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double d = (f.row(i) - f.row(j)).norm();
            if (labels[j] == labels[i]) {
                if (d > dp) { dp = d; pi = j; }
            } else if (d < dn) {
                dn = d; ni = j;
            }
        }
        if (pi < 0)
            throw std::invalid_argument("triplet_loss: anchor without positive (identity " +
                                        std::to_string(labels[i]) + ")");
        hard_pos[i] = pi;
        hard_neg[i] = ni;
    }
    Var dp = rowwise_norm(sub(features, rows_subset(features, hard_pos)));
    Var dn = rowwise_norm(sub(features, rows_subset(features, hard_neg)));
    return mean_all(relu(add_scalar(sub(dp, dn), margin)));
}

Var prompt_contrastive_loss(const Var& image_feats, const Var& prompt_feats,
                            const std::vector<int>& pos_index, Direction dir,
                            const SimilarityConfig& sim) {
    int n = static_cast<int>(image_feats->value.rows());
    if (static_cast<int>(pos_index.size()) != n)
        throw std::invalid_argument("prompt_contrastive_loss: pos_index size mismatch");
    Var s = similarity_matrix(image_feats, prompt_feats, sim);  // n x u
    if (dir == Direction::kImageToText)
        return mean_neg_picked(log_softmax_rows(s), pos_index);
    // t2i: softmax over the image axis of the sample's own prompt column
    Var st = log_softmax_rows(transpose(s));  // u x n
    Mat onehot = Mat::Zero(st->value.rows(), n);
    for (int i = 0; i < n; ++i) onehot(pos_index[i], i) = 1.0;
    return scale(sum_all(mul(st, constant(onehot))), -1.0 / n);
}

Var i2tce_loss(const Var& image_feats, const Var& all_prompt_feats,
               const std::vector<int>& labels, const SimilarityConfig& sim) {
    for (int l : labels)
        if (l < 0 || l >= all_prompt_feats->value.rows())
            throw std::out_of_range("i2tce_loss: label without prompt: " + std::to_string(l));
    Var s = similarity_matrix(image_feats, all_prompt_feats, sim);
    return mean_neg_picked(log_softmax_rows(s), labels);
}

Var centroid_consistency_loss(const Var& raw_feats, const Var& shield_feats,
                              const std::vector<int>& labels) {
    int n = static_cast<int>(raw_feats->value.rows());
    if (shield_feats->value.rows() != n ||
        static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("centroid_loss: size mismatch");
    // group samples by identity; a PK batch has equal-sized groups
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[labels[i]].push_back(i);
    size_t k_p = groups.begin()->second.size();
    for (auto& [_, g] : groups)
        if (g.size() != k_p)
            throw std::invalid_argument("centroid_loss: not a PK batch (unequal identity counts)");
    int P = static_cast<int>(groups.size());
    Mat A = Mat::Zero(P, n);
    int row = 0;
    for (auto& [_, g] : groups) {
        for (int i : g) A(row, i) = 1.0 / static_cast<double>(k_p);
        ++row;
    }
    Var avg = constant(A);
    Var diff = sub(matmul(avg, raw_feats), matmul(avg, shield_feats));
    return scale(sum_all(mul(diff, diff)), 1.0 / P);
}

Var disentangle_loss(const Var& ped_feats, const Var& clothes_feats) {
    if (ped_feats->value.rows() != clothes_feats->value.rows() ||
        ped_feats->value.cols() != clothes_feats->value.cols())
        throw std::invalid_argument("disentangle_loss: shape mismatch");
    if ((ped_feats->value.rowwise().norm().array() < 1e-12).any() ||
        (clothes_feats->value.rowwise().norm().array() < 1e-12).any())
        throw std::invalid_argument("disentangle_loss: zero-norm feature vector");
    // clothes features are held fixed; only the pedestrian stream moves
    Var cos = mul(row_normalize(ped_feats), row_normalize(detach(clothes_feats)));
    int n = static_cast<int>(ped_feats->value.rows());
    return scale(sum_all(cos), 1.0 / n);
}

std::pair<Var, LossReport> stage1_total(const Stage1Terms& t) {
    Var total = add(add(t.i2t, t.t2i), add(t.i2t_c, t.t2i_c));
    LossReport r{"stage1_total", total->scalar(), {"prompt_bank"}};
    return {total, r};
}

std::pair<Var, LossReport> stage2_total(const Stage2Terms& t, double lambda1,
                                        double lambda2) {
    Var total = add(t.id, t.i2tce);
    total = add(total, add(t.id_s, t.i2tce_s));
    total = add(total, t.i2tce_c);
    total = add(total, scale(t.con, lambda1));
    total = add(total, scale(t.dis, lambda2));
    LossReport r{"stage2_total", total->scalar(),
                 {"raw_encoder", "shield_encoder", "head_id", "head_id_s", "proj_c"}};
    return {total, r};
}

}  // namespace ccaf
