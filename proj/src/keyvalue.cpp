#include "mapsed/keyvalue.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mapsed {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (kv.has(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv.set(key, trim(t.substr(eq + 1)));
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void KeyValues::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

bool KeyValues::has(const std::string& key) const { return find(key) != nullptr; }

const std::string* KeyValues::find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return &v;
    return nullptr;
}

const std::string& KeyValues::get(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw ConfigError("missing required key '" + key + "'");
    return *v;
}

std::string KeyValues::get_or(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    return v ? parse_double(key, *v) : fallback;
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
    const std::string* v = find(key);
    return v ? parse_int(key, *v) : fallback;
}

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    const long long x = parse_int(key, *v);
    if (x < 0) throw ConfigError("key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(x);
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    return v ? parse_bool(key, *v) : fallback;
}

std::string KeyValues::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
    return out;
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || *end != '\0') throw ConfigError("key '" + key + "': '" + text + "' is not a number");
    return v;
}

long long parse_int(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
        throw ConfigError("key '" + key + "': '" + text + "' is not an integer");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("key '" + key + "': '" + text + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, sep)) {
        const std::string t = trim(cur);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace mapsed
