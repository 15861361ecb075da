#pragma once

// Strict JSON accessors. Any type mismatch raises ConfigError with the offending path.

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "riccilab/core/errors.hpp"

namespace riccilab::cli {

using json = nlohmann::json;

class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

    const json& raw() const { return j_; }
    const std::string& path() const { return path_; }

    /// Rejects keys outside the allowed set.
    const Node& allow(const std::vector<std::string>& keys) const {
        if (!j_.is_object()) fail("expected an object");
        const std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : j_.items())
            if (!ok.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
        return *this;
    }

    bool has(const std::string& k) const { return j_.is_object() && j_.contains(k); }

    Node at(const std::string& k) const {
        if (!has(k)) throw ConfigError(path_ + ": missing key '" + k + "'");
        return Node(j_.at(k), path_ + "." + k);
    }

    double number(const std::string& k, double def) const { return has(k) ? at(k).as_number() : def; }
    double number(const std::string& k) const { return at(k).as_number(); }
    int integer(const std::string& k, int def) const { return has(k) ? at(k).as_integer() : def; }
    int integer(const std::string& k) const { return at(k).as_integer(); }
    bool boolean(const std::string& k, bool def) const {
        if (!has(k)) return def;
        const Node n = at(k);
        if (!n.j_.is_boolean()) n.fail("expected a boolean");
        return n.j_.get<bool>();
    }
    std::string string(const std::string& k, const std::string& def) const { return has(k) ? at(k).as_string() : def; }
    std::string choice(const std::string& k, const std::string& def, std::initializer_list<const char*> options) const {
        const std::string v = string(k, def);
        for (const char* o : options)
            if (v == o) return v;
        std::string all;
        for (const char* o : options) all += std::string(all.empty() ? "" : "|") + o;
        throw ConfigError(path_ + "." + k + ": expected one of " + all + ", got '" + v + "'");
    }

    double as_number() const {
        if (!j_.is_number()) fail("expected a number");
        return j_.get<double>();
    }
    int as_integer() const {
        if (!j_.is_number_integer()) fail("expected an integer");
        return j_.get<int>();
    }
    std::string as_string() const {
        if (!j_.is_string()) fail("expected a string");
        return j_.get<std::string>();
    }
    std::vector<Node> items() const {
        if (!j_.is_array()) fail("expected an array");
        std::vector<Node> out;
        for (std::size_t i = 0; i < j_.size(); ++i) out.emplace_back(j_[i], path_ + "[" + std::to_string(i) + "]");
        return out;
    }
    /// Two-element numeric array [lo, hi] with lo < hi.
    std::pair<double, double> interval(const std::string& k, std::pair<double, double> def) const {
        if (!has(k)) return def;
        const auto v = at(k).items();
        if (v.size() != 2) at(k).fail("expected [lo, hi]");
        const double lo = v[0].as_number(), hi = v[1].as_number();
        if (!(lo < hi)) at(k).fail("expected lo < hi");
        return {lo, hi};
    }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_ + ": " + what); }

private:
    const json& j_;
    std::string path_;
};

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

}  // namespace riccilab::cli
