#ifndef CCAF_EVAL_HPP
#define CCAF_EVAL_HPP

#include <string>
#include <vector>

#include "ccaf/data.hpp"
#include "ccaf/model.hpp"

namespace ccaf {

enum class Protocol { kGeneral, kSameClothes, kClothChanging };
Protocol protocol_from_name(const std::string& name);  // throws on unknown
std::string protocol_name(Protocol p);

// gallery entry j is excluded from ranking for query q under the protocol
bool is_junk(const Sample& query, const Sample& gallery, Protocol p);
// valid match (same identity, not junk)
bool is_positive(const Sample& query, const Sample& gallery, Protocol p);

struct RetrievalResult {
    Mat distance;                          // n_q x n_g, 1 - cosine
    std::vector<std::vector<int>> ranked;  // per scored query, junk removed
    std::vector<double> ap;                // per scored query
    std::vector<double> cmc;               // cmc[k] = CMC@(k+1)
    double mAP = 0.0;
    int skipped_queries = 0;  // queries with no valid positive

    double cmc_at(int rank) const;  // rank is 1-based; clamps to list end
};

RetrievalResult score(const Mat& query_feats, const Mat& gallery_feats,
                      const std::vector<Sample>& query_meta,
                      const std::vector<Sample>& gallery_meta, Protocol p);

// inference-mode feature extraction with the raw-stream encoder
Mat extract_features(const ToyEncoder& encoder, const std::vector<Sample>& samples,
                     int target_h, int target_w, int batch_size = 64);

// feature cache: named-tensor archive keyed by sample-path hash
void save_feature_cache(const Mat& features, const std::vector<Sample>& samples,
                        const std::string& path);
Mat load_feature_cache(const std::vector<Sample>& samples, const std::string& path);

// machine-parseable metric=value report
std::string format_report(const RetrievalResult& r, Protocol p);

// intra/inter identity distance rows: "kind,distance"
std::string distance_histogram_csv(const Mat& feats, const std::vector<Sample>& meta);

}  // namespace ccaf

#endif
