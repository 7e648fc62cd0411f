#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pemsbench {

// Flat `key = value` config file: one entry per line, '#' comments and
// blank lines ignored. Values are strings; typed getters parse on demand
// and report the offending key on failure. Emission is sorted by key, so a
// resolved config always serializes to the same bytes.
class KvConfig {
public:
    static KvConfig from_file(const std::string& path);
    static KvConfig from_string(const std::string& text);

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, std::int64_t value);
    void set_bool(const std::string& key, bool value);

    std::string get_string(const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated list; empty value -> empty list.
    std::vector<std::string> get_list(
        const std::string& key, const std::vector<std::string>& fallback) const;
    std::vector<int> get_int_list(const std::string& key,
                                  const std::vector<int>& fallback) const;

    // Overlays every entry of `other` on top of this config.
    void merge(const KvConfig& other);

    std::string to_string() const;
    void save(const std::string& path) const;

    const std::map<std::string, std::string>& entries() const {
        return entries_;
    }

private:
    std::map<std::string, std::string> entries_;
};

} // namespace pemsbench
