#include "ccaf/archive.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ccaf {

static constexpr char kMagic[8] = {'C', 'C', 'A', 'F', 'T', 'A', 'R', '1'};

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t hash_mat(const Mat& m) {
    return fnv1a(m.data(), sizeof(double) * m.size());
}

template <typename T>
static void put(std::string& buf, const T& v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
static T get(const std::string& buf, size_t& off) {
    if (off + sizeof(T) > buf.size()) throw std::runtime_error("archive: truncated file");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

void TensorArchive::save(const std::string& path) const {
    std::string buf;
    buf.append(kMagic, 8);
    put<uint64_t>(buf, metadata_json.size());
    buf.append(metadata_json);
    put<uint64_t>(buf, tensors.size());
    for (const auto& [name, m] : tensors) {
        put<uint64_t>(buf, name.size());
        buf.append(name);
        put<int64_t>(buf, m.rows());
        put<int64_t>(buf, m.cols());
        buf.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
    }
    uint64_t h = fnv1a(buf.data(), buf.size());
    put<uint64_t>(buf, h);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("archive: cannot write " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

static std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("archive: cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TensorArchive TensorArchive::load(const std::string& path) {
    std::string buf = read_file(path);
    if (buf.size() < 8 + sizeof(uint64_t) || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw std::runtime_error("archive: bad magic in " + path);
    size_t payload = buf.size() - sizeof(uint64_t);
    uint64_t stored;
    std::memcpy(&stored, buf.data() + payload, sizeof(uint64_t));
    if (fnv1a(buf.data(), payload) != stored)
        throw std::runtime_error("archive: hash mismatch, corrupt file " + path);
    size_t off = 8;
    TensorArchive ar;
    uint64_t meta_len = get<uint64_t>(buf, off);
    ar.metadata_json = buf.substr(off, meta_len);
    off += meta_len;
    uint64_t count = get<uint64_t>(buf, off);
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t name_len = get<uint64_t>(buf, off);
        std::string name = buf.substr(off, name_len);
        off += name_len;
        int64_t rows = get<int64_t>(buf, off);
        int64_t cols = get<int64_t>(buf, off);
        Mat m(rows, cols);
        size_t bytes = sizeof(double) * static_cast<size_t>(rows * cols);
        if (off + bytes > payload) throw std::runtime_error("archive: truncated tensor");
        std::memcpy(m.data(), buf.data() + off, bytes);
        off += bytes;
        ar.tensors.emplace(std::move(name), std::move(m));
    }
    return ar;
}

uint64_t TensorArchive::file_hash(const std::string& path) {
    std::string buf = read_file(path);
    if (buf.size() < sizeof(uint64_t)) throw std::runtime_error("archive: truncated " + path);
    uint64_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - sizeof(uint64_t), sizeof(uint64_t));
    return stored;
}

}  // namespace ccaf
