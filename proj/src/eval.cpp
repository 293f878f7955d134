#include "ccaf/eval.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ccaf {

Protocol protocol_from_name(const std::string& name) {
    if (name == "general") return Protocol::kGeneral;
    if (name == "same-clothes") return Protocol::kSameClothes;
    if (name == "cloth-changing") return Protocol::kClothChanging;
    throw std::runtime_error("unknown protocol: " + name);
}

std::string protocol_name(Protocol p) {
    switch (p) {
        case Protocol::kGeneral: return "general";
        case Protocol::kSameClothes: return "same-clothes";
        case Protocol::kClothChanging: return "cloth-changing";
    }
    return "?";
}

bool is_junk(const Sample& q, const Sample& g, Protocol p) {
    if (q.identity != g.identity) return false;
    switch (p) {
        case Protocol::kGeneral:
            return q.camera_id == g.camera_id;
        case Protocol::kClothChanging:
            return q.camera_id == g.camera_id || q.clothes_id == g.clothes_id;
        case Protocol::kSameClothes:
            return q.camera_id == g.camera_id || q.clothes_id != g.clothes_id;
    }
    return false;
}

bool is_positive(const Sample& q, const Sample& g, Protocol p) {
    return q.identity == g.identity && !is_junk(q, g, p);
}

double RetrievalResult::cmc_at(int rank) const {
    if (cmc.empty()) return 0.0;
    int k = std::min<int>(rank, static_cast<int>(cmc.size())) - 1;
    return cmc[std::max(0, k)];
}

RetrievalResult score(const Mat& query_feats, const Mat& gallery_feats,
                      const std::vector<Sample>& query_meta,
                      const std::vector<Sample>& gallery_meta, Protocol p) {
    int n_q = static_cast<int>(query_feats.rows());
    int n_g = static_cast<int>(gallery_feats.rows());
    if (n_q == 0 || n_g == 0) throw std::runtime_error("score: empty query or gallery");
    if (static_cast<int>(query_meta.size()) != n_q ||
        static_cast<int>(gallery_meta.size()) != n_g)
        throw std::runtime_error("score: metadata size mismatch");

    Mat qn = query_feats, gn = gallery_feats;
    for (int i = 0; i < n_q; ++i) qn.row(i) /= std::max(qn.row(i).norm(), 1e-12);
    for (int j = 0; j < n_g; ++j) gn.row(j) /= std::max(gn.row(j).norm(), 1e-12);

    RetrievalResult r;
    r.distance = Mat::Ones(n_q, n_g) - (qn * gn.transpose());
    std::vector<double> cmc_acc(n_g, 0.0);
    for (int q = 0; q < n_q; ++q) {
        std::vector<int> keep;
        for (int j = 0; j < n_g; ++j)
            if (!is_junk(query_meta[q], gallery_meta[j], p)) keep.push_back(j);
        bool has_pos = false;
        for (int j : keep)
            has_pos = has_pos || is_positive(query_meta[q], gallery_meta[j], p);
        if (!has_pos) {
            ++r.skipped_queries;
            continue;
        }
        std::stable_sort(keep.begin(), keep.end(), [&](int a, int b) {
            return r.distance(q, a) < r.distance(q, b);
        });
        int hits = 0, first_hit = -1;
        double ap = 0.0;
        for (size_t k = 0; k < keep.size(); ++k) {
            if (is_positive(query_meta[q], gallery_meta[keep[k]], p)) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(k + 1);
                if (first_hit < 0) first_hit = static_cast<int>(k);
            }
        }
        ap /= hits;
        for (int k = first_hit; k < n_g; ++k) cmc_acc[k] += 1.0;
        r.ap.push_back(ap);
        r.ranked.push_back(std::move(keep));
    }
    if (r.ap.empty()) throw std::runtime_error("score: no query has a valid positive");
    int scored = static_cast<int>(r.ap.size());
    r.mAP = std::accumulate(r.ap.begin(), r.ap.end(), 0.0) / scored;
    r.cmc.resize(n_g);
    for (int k = 0; k < n_g; ++k) r.cmc[k] = cmc_acc[k] / scored;
    return r;
}

Mat extract_features(const ToyEncoder& encoder, const std::vector<Sample>& samples,
                     int target_h, int target_w, int batch_size) {
    Mat out(static_cast<int>(samples.size()), encoder.feature_dim());
    for (size_t start = 0; start < samples.size(); start += batch_size) {
        size_t end = std::min(samples.size(), start + batch_size);
        std::vector<Image> images;
        for (size_t i = start; i < end; ++i)
            images.push_back(load_image(samples[i].image_path, target_h, target_w));
        Var f = encoder.encode(images, /*with_grad=*/false);
        out.middleRows(static_cast<int>(start), static_cast<int>(end - start)) = f->value;
    }
    return out;
}

static std::string path_key(const std::string& path) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(path.data(), path.size())));
    return buf;
}

void save_feature_cache(const Mat& features, const std::vector<Sample>& samples,
                        const std::string& path) {
    TensorArchive ar;
    ar.metadata_json = "{\"kind\":\"feature_cache\"}";
    for (size_t i = 0; i < samples.size(); ++i)
        ar.tensors[path_key(samples[i].image_path)] = features.row(static_cast<int>(i));
    ar.save(path);
}

Mat load_feature_cache(const std::vector<Sample>& samples, const std::string& path) {
    TensorArchive ar = TensorArchive::load(path);
    if (ar.tensors.empty()) throw std::runtime_error("feature cache empty: " + path);
    int c = static_cast<int>(ar.tensors.begin()->second.cols());
    Mat out(static_cast<int>(samples.size()), c);
    for (size_t i = 0; i < samples.size(); ++i) {
        auto it = ar.tensors.find(path_key(samples[i].image_path));
        if (it == ar.tensors.end())
            throw std::runtime_error("feature cache missing " + samples[i].image_path);
        out.row(static_cast<int>(i)) = it->second;
    }
    return out;
}

std::string format_report(const RetrievalResult& r, Protocol p) {
    std::ostringstream ss;
    ss << "protocol=" << protocol_name(p) << '\n';
    ss << "rank1=" << r.cmc_at(1) << '\n';
    ss << "rank5=" << r.cmc_at(5) << '\n';
    ss << "rank10=" << r.cmc_at(10) << '\n';
    ss << "map=" << r.mAP << '\n';
    ss << "skipped_queries=" << r.skipped_queries << '\n';
    return ss.str();
}

std::string distance_histogram_csv(const Mat& feats, const std::vector<Sample>& meta) {
    Mat fn = feats;
    for (int i = 0; i < fn.rows(); ++i) fn.row(i) /= std::max(fn.row(i).norm(), 1e-12);
    std::ostringstream ss;
    ss << "kind,distance\n";
    for (int i = 0; i < fn.rows(); ++i)
        for (int j = i + 1; j < fn.rows(); ++j) {
            double d = 1.0 - fn.row(i).dot(fn.row(j));
            ss << (meta[i].identity == meta[j].identity ? "intra" : "inter") << ','
               << d << '\n';
        }
    return ss.str();
}

}  // namespace ccaf
