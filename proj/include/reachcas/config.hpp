#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "reachcas/common.hpp"

namespace rcas {

/// Flat `key = value` configuration with typed accessors. Unknown keys are
/// kept verbatim so configs round-trip.
class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open config: " + path);
        Config c;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                if (line.find_first_not_of(" \t\r") != std::string::npos)
                    throw ParseError(path, lineno, "expected 'key = value'");
                continue;
            }
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return c;
    }

    void to_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write config: " + path);
        for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set(const std::string& key, double value) { values_[key] = format_double(value); }
    void set(const std::string& key, std::vector<double> v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += format_double(v[i]);
        }
        values_[key] = s;
    }

    std::string get_string(const std::string& key) const {
        const auto it = values_.find(key);
        require(it != values_.end(), "missing config key: " + key);
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    long get_int(const std::string& key) const {
        const double v = get_double(key);
        require(v == std::floor(v), "config key is not an integer: " + key);
        return long(v);
    }
    long get_int(const std::string& key, long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = get_string(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ContractError("config key is not a boolean: " + key);
    }

    std::vector<double> get_doubles(const std::string& key) const {
        const std::string s = get_string(key);
        std::vector<double> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (!tok.empty()) out.push_back(parse_double(key, tok));
        }
        require(!out.empty(), "empty list for config key: " + key);
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    /// Hash of the canonical key=value text. The thread count is excluded:
    /// results must not depend on it.
    std::uint64_t hash() const {
        std::uint64_t h = 14695981039346656037ull;
        for (const auto& [k, v] : values_) {
            if (k == "threads") continue;
            h = fnv1a(k, h);
            h = fnv1a("=", h);
            h = fnv1a(v, h);
            h = fnv1a("\n", h);
        }
        return h;
    }

private:
    static std::string trim(std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    static double parse_double(const std::string& key, const std::string& s) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            require(pos == s.size() && std::isfinite(v), "bad number");
            return v;
        } catch (const std::exception&) {
            throw ContractError("config key '" + key + "' is not a number: " + s);
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace rcas
