#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace focalforge {

/// Plain-text key-value configuration: one `key = value` per line, `#` starts
/// a comment, blank lines ignored.
class KvConfig {
public:
    static KvConfig parse_string(const std::string& text);
    static KvConfig parse_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_str(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    int get_int(const std::string& key, int def) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
};

/// Default seed resolution: explicit flag beats FOCALFORGE_SEED beats fallback.
std::uint64_t resolve_seed(bool flag_given, std::uint64_t flag_value, std::uint64_t fallback);

}  // namespace focalforge
