#pragma once

#include <map>
#include <set>
#include <string>

namespace cstn {

/// Plain key=value settings, '#' starts a comment, keys namespaced like
/// "train.lr". Reads are tracked so a command can reject keys it never
/// consumed, catching typos with the offending name.
class RunConfig {
  public:
    RunConfig() = default;

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);

    /// key=value, overrides any file-provided value
    void set(const std::string& key, const std::string& value);
    void apply_override(const std::string& key_eq_value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_f64(const std::string& key, double fallback) const;
    int64_t get_i64(const std::string& key, int64_t fallback) const;

    /// throws UsageError naming the first key that was never read
    void reject_unknown() const;

    /// canonical text form: sorted keys, key=value lines
    std::string serialize() const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> seen_;
};

}  // namespace cstn
