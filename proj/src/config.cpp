#include "ccaf/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ccaf {

static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

Config Config::from_string(const std::string& text) {
    Config cfg;
    cfg.raw_ = text;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::runtime_error("config: bad section header at line " +
                                         std::to_string(lineno));
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: missing '=' at line " +
                                     std::to_string(lineno));
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config: empty key at line " +
                                     std::to_string(lineno));
        cfg.kv_[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

static std::string env_key(const std::string& key) {
    std::string e = "CCAF_";
    for (char c : key) {
        if (c == '.') e += '_';
        else e += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return e;
}

static const char* env_lookup(const std::string& key) {
    return std::getenv(env_key(key).c_str());
}

bool Config::has(const std::string& key) const {
    return env_lookup(key) != nullptr || kv_.count(key) > 0;
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
    if (const char* e = env_lookup(key)) return e;
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

std::string Config::require_str(const std::string& key) const {
    if (!has(key)) throw std::runtime_error("config: missing required key " + key);
    return get_str(key, "");
}

double Config::get_double(const std::string& key, double def) const {
    if (!has(key)) return def;
    return std::stod(get_str(key, ""));
}

int64_t Config::get_int(const std::string& key, int64_t def) const {
    if (!has(key)) return def;
    return std::stoll(get_str(key, ""));
}

bool Config::get_bool(const std::string& key, bool def) const {
    if (!has(key)) return def;
    std::string v = get_str(key, "");
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": " + v);
}

void Config::set(const std::string& key, const std::string& value) {
    kv_[key] = value;
}

}  // namespace ccaf
