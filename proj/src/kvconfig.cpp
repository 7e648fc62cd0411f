#include "pemsbench/kvconfig.hpp"

#include "pemsbench/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pemsbench {
namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

KvConfig KvConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config \"" + path + "\"");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str());
}

KvConfig KvConfig::from_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": empty key");
        }
        cfg.entries_[key] = value;
    }
    return cfg;
}

bool KvConfig::has(const std::string& key) const {
    return entries_.count(key) != 0;
}

void KvConfig::set(const std::string& key, const std::string& value) {
    entries_[key] = value;
}

void KvConfig::set_double(const std::string& key, double value) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof(buf), value);
    entries_[key] = std::string(buf, r.ptr);
}

void KvConfig::set_int(const std::string& key, std::int64_t value) {
    entries_[key] = std::to_string(value);
}

void KvConfig::set_bool(const std::string& key, bool value) {
    entries_[key] = value ? "true" : "false";
}

std::string KvConfig::get_string(const std::string& key,
                                 const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string& s = it->second;
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw ConfigError("config key \"" + key + "\": cannot parse \"" + s +
                          "\" as a number");
    }
    return v;
}

std::int64_t KvConfig::get_int(const std::string& key,
                               std::int64_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string& s = it->second;
    std::int64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw ConfigError("config key \"" + key + "\": cannot parse \"" + s +
                          "\" as an integer");
    }
    return v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string& s = it->second;
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key \"" + key + "\": cannot parse \"" + s +
                      "\" as a boolean");
}

std::vector<std::string> KvConfig::get_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<std::string> out;
    std::string cur;
    for (char ch : it->second) {
        if (ch == ',') {
            const std::string t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    const std::string t = trim(cur);
    if (!t.empty()) out.push_back(t);
    return out;
}

std::vector<int> KvConfig::get_int_list(const std::string& key,
                                        const std::vector<int>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<int> out;
    for (const auto& s : get_list(key, {})) {
        int v = 0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
            throw ConfigError("config key \"" + key + "\": cannot parse \"" +
                              s + "\" as an integer");
        }
        out.push_back(v);
    }
    return out;
}

void KvConfig::merge(const KvConfig& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KvConfig::to_string() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
    return out.str();
}

void KvConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write \"" + path + "\"");
    out << to_string();
}

} // namespace pemsbench
