#include "ccaf/data.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ccaf/rng.hpp"

namespace fs = std::filesystem;

namespace ccaf {

std::string split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kQuery: return "query";
        case Split::kGallery: return "gallery";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "query") return Split::kQuery;
    if (name == "gallery") return Split::kGallery;
    throw std::runtime_error("unknown split: " + name);
}

std::vector<int> DatasetManifest::split_indices(Split s) const {
    std::vector<int> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].split == s) out.push_back(static_cast<int>(i));
    return out;
}

static std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// densify labels in place; returns old->new map (empty when already dense)
static std::map<int, int> densify(std::vector<int*> labels) {
    std::set<int> present;
    for (int* p : labels) present.insert(*p);
    std::map<int, int> remap;
    int next = 0;
    bool gap = false;
    for (int v : present) {
        if (v != next) gap = true;
        remap[v] = next++;
    }
    if (!gap) return {};
    for (int* p : labels) *p = remap[*p];
    return remap;
}

DatasetManifest load_manifest(const std::string& path, bool check_files) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    DatasetManifest m;
    m.name = fs::path(path).stem().string();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_tabs(line);
        if (f.size() != 6)
            throw std::runtime_error("manifest: parse error at line " +
                                     std::to_string(lineno) + ": expected 6 fields, got " +
                                     std::to_string(f.size()));
        Sample s;
        try {
            s.image_path = f[0];
            s.identity = std::stoi(f[1]);
            s.clothes_id = std::stoi(f[2]);
            s.camera_id = std::stoi(f[3]);
            s.parsing_path = f[4];
            s.split = split_from_name(f[5]);
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest: parse error at line " +
                                     std::to_string(lineno) + ": " + e.what());
        }
        if (s.identity < 0 || s.clothes_id < 0 || s.camera_id < 0)
            throw std::runtime_error("manifest: negative label at line " +
                                     std::to_string(lineno));
        m.records.push_back(std::move(s));
    }
    if (m.records.empty()) throw std::runtime_error("manifest: no records in " + path);

    if (check_files) {
        std::string missing;
        for (const auto& r : m.records) {
            if (!fs::exists(r.image_path)) missing += "\n  " + r.image_path;
            if (!fs::exists(r.parsing_path)) missing += "\n  " + r.parsing_path;
        }
        if (!missing.empty())
            throw std::runtime_error("manifest: missing referenced files:" + missing);
    }

    std::vector<int*> ids, clothes;
    for (auto& r : m.records) {
        ids.push_back(&r.identity);
        clothes.push_back(&r.clothes_id);
    }
    m.identity_remap = densify(ids);
    m.clothes_remap = densify(clothes);
    if (!m.identity_remap.empty() || !m.clothes_remap.empty()) {
        std::ofstream out(path + ".remap");
        for (auto& [o, n] : m.identity_remap) out << "identity\t" << o << '\t' << n << '\n';
        for (auto& [o, n] : m.clothes_remap) out << "clothes\t" << o << '\t' << n << '\n';
    }
    for (const auto& r : m.records) {
        m.K = std::max(m.K, r.identity + 1);
        m.K_c = std::max(m.K_c, r.clothes_id + 1);
    }

    // a clothes instance belongs to exactly one identity
    std::map<int, int> owner;
    for (const auto& r : m.records) {
        if (r.split != Split::kTrain) continue;
        auto it = owner.find(r.clothes_id);
        if (it == owner.end()) owner[r.clothes_id] = r.identity;
        else if (it->second != r.identity)
            throw std::runtime_error("manifest: clothes_id " + std::to_string(r.clothes_id) +
                                     " shared across identities " + std::to_string(it->second) +
                                     " and " + std::to_string(r.identity));
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    for (const auto& r : m.records)
        out << r.image_path << '\t' << r.identity << '\t' << r.clothes_id << '\t'
            << r.camera_id << '\t' << r.parsing_path << '\t' << split_name(r.split)
            << '\n';
}

Image load_image(const std::string& path, int target_h, int target_w) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw std::runtime_error("image: decode failure: " + path);
    if (target_h <= 0 || target_w <= 0) {
        target_h = bgr.rows;
        target_w = bgr.cols;
    }
    if (bgr.rows != target_h || bgr.cols != target_w)
        cv::resize(bgr, bgr, cv::Size(target_w, target_h), 0, 0, cv::INTER_LINEAR);
    Image img;
    for (auto& c : img) c = Mat(target_h, target_w);
    for (int y = 0; y < target_h; ++y)
        for (int x = 0; x < target_w; ++x) {
            auto px = bgr.at<cv::Vec3b>(y, x);
            img[0](y, x) = px[2];
            img[1](y, x) = px[1];
            img[2](y, x) = px[0];
        }
    return img;
}

ParsingMap load_parsing(const std::string& path, int target_h, int target_w) {
    cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw std::runtime_error("parsing: decode failure: " + path);
    if (target_h <= 0 || target_w <= 0) {
        target_h = gray.rows;
        target_w = gray.cols;
    }
    if (gray.rows != target_h || gray.cols != target_w)
        cv::resize(gray, gray, cv::Size(target_w, target_h), 0, 0, cv::INTER_NEAREST);
    ParsingMap p(target_h, target_w);
    for (int y = 0; y < target_h; ++y)
        for (int x = 0; x < target_w; ++x) p(y, x) = gray.at<uint8_t>(y, x);
    return p;
}

void save_image(const Image& img, const std::string& path) {
    int h = static_cast<int>(img[0].rows()), w = static_cast<int>(img[0].cols());
    cv::Mat bgr(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(
                static_cast<uint8_t>(img[2](y, x)), static_cast<uint8_t>(img[1](y, x)),
                static_cast<uint8_t>(img[0](y, x)));
    if (!cv::imwrite(path, bgr)) throw std::runtime_error("image: cannot write " + path);
}

void save_parsing(const ParsingMap& p, const std::string& path) {
    cv::Mat gray(static_cast<int>(p.rows()), static_cast<int>(p.cols()), CV_8UC1);
    for (int y = 0; y < p.rows(); ++y)
        for (int x = 0; x < p.cols(); ++x)
            gray.at<uint8_t>(y, x) = static_cast<uint8_t>(p(y, x));
    if (!cv::imwrite(path, gray)) throw std::runtime_error("parsing: cannot write " + path);
}

std::pair<Image, ParsingMap> load_sample(const Sample& s, int target_h, int target_w) {
    return {load_image(s.image_path, target_h, target_w),
            load_parsing(s.parsing_path, target_h, target_w)};
}

std::vector<std::vector<int>> make_pk_batches(const DatasetManifest& m, int P,
                                              int K_p, uint64_t seed) {
    std::map<int, std::vector<int>> by_id;
    int n_train = 0;
    for (size_t i = 0; i < m.records.size(); ++i)
        if (m.records[i].split == Split::kTrain) {
            by_id[m.records[i].identity].push_back(static_cast<int>(i));
            ++n_train;
        }
    if (static_cast<int>(by_id.size()) < P)
        throw std::runtime_error("pk_batches: P=" + std::to_string(P) +
                                 " exceeds identity count " + std::to_string(by_id.size()));
    std::vector<int> ids;
    for (auto& [id, _] : by_id) ids.push_back(id);

    Rng rng(seed);
    int n_batches = std::max(1, n_train / (P * K_p));
    std::vector<std::vector<int>> batches;
    std::vector<int> pool;  // cyclic shuffled identity pool
    size_t pool_pos = 0;
    for (int b = 0; b < n_batches; ++b) {
        std::vector<int> batch;
        std::set<int> used;
        while (static_cast<int>(used.size()) < P) {
            if (pool_pos >= pool.size()) {
                pool = ids;
                rng.shuffle(pool);
                pool_pos = 0;
            }
            int id = pool[pool_pos++];
            if (used.count(id)) continue;
            used.insert(id);
            auto imgs = by_id[id];
            rng.shuffle(imgs);
            for (int k = 0; k < K_p; ++k) {
                if (k < static_cast<int>(imgs.size()))
                    batch.push_back(imgs[k]);
                else
                    batch.push_back(imgs[rng.next_below(imgs.size())]);
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace ccaf
