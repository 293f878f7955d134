#ifndef CCAF_ARCHIVE_HPP
#define CCAF_ARCHIVE_HPP

// Named-tensor archive used for checkpoints and feature caches.
// Layout: magic, version, metadata (JSON text), tensor table, FNV-1a hash
// of everything preceding it.

#include <cstdint>
#include <map>
#include <string>

#include "ccaf/autodiff.hpp"

namespace ccaf {

struct TensorArchive {
    std::map<std::string, Mat> tensors;
    std::string metadata_json;  // free-form; model code interprets it

    void save(const std::string& path) const;
    static TensorArchive load(const std::string& path);  // throws on hash mismatch

    // hash of the serialized payload (as stored in the file trailer)
    static uint64_t file_hash(const std::string& path);
};

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull);
uint64_t hash_mat(const Mat& m);

}  // namespace ccaf

#endif
