#ifndef CCAF_CONFIG_HPP
#define CCAF_CONFIG_HPP

// Flat sectioned key=value config. Keys are addressed as "section.key".
// Any key can be overridden by an environment variable
// CCAF_<SECTION>_<KEY> (uppercased).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ccaf {

class Config {
public:
    static Config load(const std::string& path);      // throws on parse error
    static Config from_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& def) const;
    std::string require_str(const std::string& key) const;
    double get_double(const std::string& key, double def) const;
    int64_t get_int(const std::string& key, int64_t def) const;
    bool get_bool(const std::string& key, bool def) const;
    void set(const std::string& key, const std::string& value);

    const std::map<std::string, std::string>& entries() const { return kv_; }
    const std::string& raw_text() const { return raw_; }

private:
    std::map<std::string, std::string> kv_;
    std::string raw_;
};

}  // namespace ccaf

#endif
