#include "gdbn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gdbn {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(long line_no, const std::string& why) {
    throw std::invalid_argument("config: line " + std::to_string(line_no) + ": " + why);
}

double parse_double(const std::string& section, const std::string& key, const std::string& v) {
    size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != v.size()) {
        throw std::invalid_argument("config: [" + section + "] " + key + " = '" + v +
                                    "' is not a number");
    }
    return out;
}

long parse_long(const std::string& section, const std::string& key, const std::string& v) {
    size_t pos = 0;
    long out = 0;
    try {
        out = std::stol(v, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != v.size()) {
        throw std::invalid_argument("config: [" + section + "] " + key + " = '" + v +
                                    "' is not an integer");
    }
    return out;
}

uint64_t parse_u64(const std::string& section, const std::string& key, const std::string& v) {
    size_t pos = 0;
    uint64_t out = 0;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != v.size()) {
        throw std::invalid_argument("config: [" + section + "] " + key + " = '" + v +
                                    "' is not an unsigned integer");
    }
    return out;
}

}  // namespace

IniConfig IniConfig::parse(const std::string& text) {
    IniConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const size_t comment = raw.find_first_of("#;");
        std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) fail(line_no, "malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail(line_no, "empty section name");
            cfg.sections_[section];  // register even if empty
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value, got '" + line + "'");
        if (section.empty()) fail(line_no, "key before any [section] header");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        for (const auto& [k, v] : cfg.sections_[section]) {
            if (k == key) fail(line_no, "duplicate key '" + key + "' in section [" + section + "]");
        }
        cfg.sections_[section].emplace_back(key, value);
    }
    return cfg;
}

IniConfig IniConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

const std::string* IniConfig::find(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return nullptr;
    for (const auto& [k, v] : it->second) {
        if (k == key) return &v;
    }
    return nullptr;
}

bool IniConfig::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

const std::string& IniConfig::get(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    if (v == nullptr) {
        throw std::invalid_argument("config: missing required key '" + key + "' in section [" + section + "]");
    }
    return *v;
}

std::string IniConfig::get_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v != nullptr ? *v : fallback;
}

long IniConfig::get_long(const std::string& section, const std::string& key, long fallback) const {
    const std::string* v = find(section, key);
    return v != nullptr ? parse_long(section, key, *v) : fallback;
}

uint64_t IniConfig::get_u64(const std::string& section, const std::string& key, uint64_t fallback) const {
    const std::string* v = find(section, key);
    return v != nullptr ? parse_u64(section, key, *v) : fallback;
}

double IniConfig::get_double(const std::string& section, const std::string& key, double fallback) const {
    const std::string* v = find(section, key);
    return v != nullptr ? parse_double(section, key, *v) : fallback;
}

bool IniConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const std::string* v = find(section, key);
    if (v == nullptr) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw std::invalid_argument("config: [" + section + "] " + key + " = '" + *v + "' is not a boolean");
}

std::vector<std::string> IniConfig::get_list(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    std::vector<std::string> out;
    if (v == nullptr) return out;
    std::istringstream in(*v);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<long> IniConfig::get_long_list(const std::string& section, const std::string& key) const {
    std::vector<long> out;
    for (const std::string& s : get_list(section, key)) out.push_back(parse_long(section, key, s));
    return out;
}

std::vector<uint64_t> IniConfig::get_u64_list(const std::string& section, const std::string& key) const {
    std::vector<uint64_t> out;
    for (const std::string& s : get_list(section, key)) out.push_back(parse_u64(section, key, s));
    return out;
}

std::vector<double> IniConfig::get_double_list(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const std::string& s : get_list(section, key)) out.push_back(parse_double(section, key, s));
    return out;
}

void IniConfig::require_known(const std::string& section, const std::vector<std::string>& allowed) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return;
    for (const auto& [k, v] : it->second) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw std::invalid_argument("config: unknown key '" + k + "' in section [" + section + "]");
        }
    }
}

std::vector<std::string> IniConfig::section_names() const {
    std::vector<std::string> out;
    for (const auto& [name, entries] : sections_) out.push_back(name);
    return out;
}

void IniConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    for (auto& [k, v] : sections_[section]) {
        if (k == key) {
            v = value;
            return;
        }
    }
    sections_[section].emplace_back(key, value);
}

std::string IniConfig::to_text() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& [name, entries] : sections_) {
        if (!first) out << '\n';
        first = false;
        out << '[' << name << "]\n";
        for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
    }
    return out.str();
}

}  // namespace gdbn
