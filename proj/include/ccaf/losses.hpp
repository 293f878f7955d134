#ifndef CCAF_LOSSES_HPP
#define CCAF_LOSSES_HPP

#include <string>
#include <vector>

#include "ccaf/autodiff.hpp"

namespace ccaf {

// similarities are cosine on L2-normalized vectors divided by temperature
struct SimilarityConfig {
    double temperature = 0.07;
};

enum class Direction { kImageToText, kTextToImage };

struct LossReport {
    std::string name;
    double value = 0.0;
    std::vector<std::string> grad_targets;
};

// mean over batch of -log softmax(logits) at label
Var ce_loss(const Var& logits, const std::vector<int>& labels);

// batch-hard triplet: hardest positive / hardest negative per anchor
Var triplet_loss(const Var& features, const std::vector<int>& labels, double margin);

// prompt-image contrastive loss over the unique identities present in the
// batch. prompt_feats has one row per unique label; pos_index[i] is the
// prompt row of sample i. i2t: softmax over prompts; t2i: softmax over images.
Var prompt_contrastive_loss(const Var& image_feats, const Var& prompt_feats,
                            const std::vector<int>& pos_index, Direction dir,
                            const SimilarityConfig& sim);

// cross-entropy of an image feature against the full prompt vocabulary
Var i2tce_loss(const Var& image_feats, const Var& all_prompt_feats,
               const std::vector<int>& labels, const SimilarityConfig& sim);

// squared L2 between per-identity centroids of the two streams, mean over P
Var centroid_consistency_loss(const Var& raw_feats, const Var& shield_feats,
                              const std::vector<int>& labels);

// mean cosine between pedestrian features and (detached) clothes features;
// minimized to push pedestrian features out of the clothes subspace
Var disentangle_loss(const Var& ped_feats, const Var& clothes_feats);

struct Stage1Terms {
    Var i2t, t2i, i2t_c, t2i_c;
};
std::pair<Var, LossReport> stage1_total(const Stage1Terms& t);

struct Stage2Terms {
    Var id;        // L_ce + L_tri, raw stream
    Var i2tce;     // raw vs identity prompts
    Var id_s;      // shielding stream
    Var i2tce_s;   // shielding vs identity prompts
    Var i2tce_c;   // projected clothes vs clothes prompts (proj_c only)
    Var con;       // centroid consistency
    Var dis;       // disentanglement
};
std::pair<Var, LossReport> stage2_total(const Stage2Terms& t, double lambda1,
                                        double lambda2);

// helper shared by losses and evaluation: n x m matrix of cosine/temperature
Var similarity_matrix(const Var& a, const Var& b, const SimilarityConfig& sim);

}  // namespace ccaf

#endif
