#pragma once

#include "detpo/csv.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace detpo {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat "key = value" config store with dotted section keys.
// Lines starting with '#' and blank lines are ignored. Keys are unique;
// insertion order is preserved so a saved file diffs cleanly.
class KeyValueConfig {
public:
    static KeyValueConfig parse_string(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = strip(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw config_error("line " + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = strip(stripped.substr(0, eq));
            const std::string value = strip(stripped.substr(eq + 1));
            if (key.empty())
                throw config_error("line " + std::to_string(lineno) + ": empty key");
            cfg.set(key, value);
        }
        return cfg;
    }

    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot read config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str());
    }

    bool has(const std::string& key) const { return find(key) != items_.end(); }

    std::string get_string(const std::string& key) const {
        auto it = find(key);
        if (it == items_.end()) throw config_error("missing config key: " + key);
        return it->second;
    }

    std::optional<std::string> get_optional(const std::string& key) const {
        auto it = find(key);
        if (it == items_.end()) return std::nullopt;
        return it->second;
    }

    double get_double(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw config_error("key '" + key + "': not a number: " + s);
        }
    }

    long get_long(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            std::size_t pos = 0;
            const long v = std::stol(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw config_error("key '" + key + "': not an integer: " + s);
        }
    }

    std::uint64_t get_u64(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw config_error("key '" + key + "': not an unsigned integer: " + s);
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string s = get_string(key);
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        throw config_error("key '" + key + "': expected true/false: " + s);
    }

    // comma-separated unsigned list, e.g. "0,1,2,3"
    std::vector<std::uint64_t> get_u64_list(const std::string& key) const {
        std::vector<std::uint64_t> out;
        std::istringstream in(get_string(key));
        std::string tok;
        while (std::getline(in, tok, ',')) {
            const std::string t = strip(tok);
            if (t.empty()) continue;
            try {
                out.push_back(std::stoull(t));
            } catch (const std::exception&) {
                throw config_error("key '" + key + "': bad list element: " + t);
            }
        }
        return out;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = find(key);
        if (it != items_.end())
            it->second = value;
        else
            items_.emplace_back(key, value);
    }

    void set_double(const std::string& key, double v) { set(key, format_double(v)); }
    void set_long(const std::string& key, long v) { set(key, std::to_string(v)); }
    void set_u64(const std::string& key, std::uint64_t v) { set(key, std::to_string(v)); }
    void set_bool(const std::string& key, bool v) { set(key, v ? "true" : "false"); }

    std::string serialize() const {
        std::ostringstream out;
        for (const auto& [k, v] : items_) out << k << " = " << v << '\n';
        return out.str();
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw config_error("cannot write config file: " + path);
        out << serialize();
    }

    const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

private:
    static std::string strip(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::vector<std::pair<std::string, std::string>>::const_iterator find(const std::string& key) const {
        return std::find_if(items_.begin(), items_.end(),
                            [&](const auto& kv) { return kv.first == key; });
    }
    std::vector<std::pair<std::string, std::string>>::iterator find(const std::string& key) {
        return std::find_if(items_.begin(), items_.end(),
                            [&](const auto& kv) { return kv.first == key; });
    }

    std::vector<std::pair<std::string, std::string>> items_;
};

}  // namespace detpo
