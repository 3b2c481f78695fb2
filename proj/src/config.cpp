#include "cstn/config.hpp"

#include <sstream>

#include "cstn/common.hpp"
#include "cstn/io.hpp"

namespace cstn {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) +
                             " is not key=value: " + line);
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw UsageError("config line " + std::to_string(lineno) + " has an empty key");
        cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    return parse(std::string(bytes.begin(), bytes.end()));
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

void RunConfig::apply_override(const std::string& kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw UsageError("override must be key=value, got: " + kv);
    values_[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
}

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
    seen_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_f64(const std::string& key, double fallback) const {
    seen_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key " + key + " expects a number, got '" + it->second + "'");
    }
}

int64_t RunConfig::get_i64(const std::string& key, int64_t fallback) const {
    seen_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t used = 0;
        long long v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return static_cast<int64_t>(v);
    } catch (const std::exception&) {
        throw UsageError("config key " + key + " expects an integer, got '" + it->second + "'");
    }
}

void RunConfig::reject_unknown() const {
    for (const auto& [k, v] : values_)
        if (!seen_.count(k)) throw UsageError("unknown config key: " + k);
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

}  // namespace cstn
