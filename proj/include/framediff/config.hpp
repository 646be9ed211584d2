#pragma once

// Run configuration: INI-style files ([section] then key = value, '#'
// comments) flattened to dotted keys, with command-line overrides of the same
// dotted form. The resolved map can be echoed for provenance.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace fd {

struct Config {
    std::map<std::string, std::string> values;  // dotted key -> raw string

    bool has(const std::string& key) const { return values.count(key) != 0; }
    std::string get_str(const std::string& key, const std::string& def) const;
    long get_int(const std::string& key, long def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;

    void set(const std::string& key, const std::string& value) { values[key] = value; }
    // "a.b=c" form; throws std::invalid_argument when malformed
    void apply_override(const std::string& assignment);

    std::string dump_ini() const;
    nlohmann::json to_json() const;
};

Config parse_config_text(const std::string& text);
Config parse_config_file(const std::string& path);

}  // namespace fd
