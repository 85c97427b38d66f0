#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mapsed {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ordered flat key=value list. Lines starting with '#' are comments.
class KeyValues {
public:
    static KeyValues parse(const std::string& text);
    static KeyValues load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    const std::string* find(const std::string& key) const;
    const std::string& get(const std::string& key) const;

    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    std::string serialize() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

double parse_double(const std::string& key, const std::string& text);
long long parse_int(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);
std::vector<std::string> split_list(const std::string& text, char sep = ',');
/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace mapsed
