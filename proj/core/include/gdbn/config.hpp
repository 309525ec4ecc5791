#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gdbn {

/// Sectioned key=value config text:
///   [dataset]
///   m = 10        # trailing or full-line comments with # or ;
///   modes = nl_outer, nl_inner
/// Duplicate keys within a section are rejected. Lists are comma-separated.
class IniConfig {
public:
    static IniConfig parse(const std::string& text);
    static IniConfig load_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    const std::string& get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;

    long get_long(const std::string& section, const std::string& key, long fallback) const;
    uint64_t get_u64(const std::string& section, const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;
    std::vector<long> get_long_list(const std::string& section, const std::string& key) const;
    std::vector<uint64_t> get_u64_list(const std::string& section, const std::string& key) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key) const;

    /// Throws naming the first key in `section` that is not in `allowed`.
    void require_known(const std::string& section, const std::vector<std::string>& allowed) const;
    std::vector<std::string> section_names() const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    std::string to_text() const;

private:
    // section -> ordered (key, value) pairs
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections_;

    const std::string* find(const std::string& section, const std::string& key) const;
};

}  // namespace gdbn
