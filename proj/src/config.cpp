#include "framediff/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fd {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string Config::get_str(const std::string& key, const std::string& def) const {
    auto it = values.find(key);
    return it == values.end() ? def : it->second;
}

long Config::get_int(const std::string& key, long def) const {
    auto it = values.find(key);
    if (it == values.end()) return def;
    size_t pos = 0;
    long v = std::stol(it->second, &pos);
    if (pos != it->second.size())
        throw std::invalid_argument("config key " + key + ": not an integer: " + it->second);
    return v;
}

double Config::get_double(const std::string& key, double def) const {
    auto it = values.find(key);
    if (it == values.end()) return def;
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size())
        throw std::invalid_argument("config key " + key + ": not a number: " + it->second);
    return v;
}

bool Config::get_bool(const std::string& key, bool def) const {
    auto it = values.find(key);
    if (it == values.end()) return def;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config key " + key + ": not a boolean: " + it->second);
}

void Config::apply_override(const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must be key=value: " + assignment);
    std::string key = trim(assignment.substr(0, eq));
    std::string val = trim(assignment.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("override must be key=value: " + assignment);
    values[key] = val;
}

std::string Config::dump_ini() const {
    // group dotted keys by their first segment
    std::ostringstream out;
    std::string section;
    for (const auto& [key, val] : values) {
        size_t dot = key.find('.');
        std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
        std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
        if (sec != section || out.tellp() == 0) {
            if (out.tellp() != 0) out << "\n";
            if (!sec.empty()) out << "[" << sec << "]\n";
            section = sec;
        }
        out << leaf << " = " << val << "\n";
    }
    return out.str();
}

nlohmann::json Config::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, val] : values) j[key] = val;
    return j;
}

Config parse_config_text(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        cfg.values[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
}

Config parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace fd
