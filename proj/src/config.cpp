#include "m2r/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "m2r/error.hpp"

namespace m2r {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Settings Settings::parse(const std::string& text, const std::string& origin) {
    Settings s;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        if (s.entries_.count(key)) throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        s.entries_[key] = value;
    }
    return s;
}

Settings Settings::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

void Settings::set(const std::string& key, const std::string& value) { entries_[key] = value; }

bool Settings::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string Settings::get_string(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

double Settings::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
}

std::uint64_t Settings::get_uint(const std::string& key) const {
    const std::string v = get_string(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
    }
    return out;
}

bool Settings::get_bool(const std::string& key) const {
    const std::string v = get_string(key);
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::size_t> Settings::get_uint_list(const std::string& key) const {
    const std::string v = get_string(key);
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        Settings one;
        one.set(key, trim(item));
        out.push_back(one.get_uint(key));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
    return out;
}

}  // namespace m2r
