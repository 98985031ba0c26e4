#pragma once
// Line-based `key = value` settings with `#` comments.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace m2r {

class Settings {
public:
    static Settings parse(const std::string& text, const std::string& origin = "<string>");
    static Settings load(const std::filesystem::path& path);

    /// Later values win; used for flag overrides.
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return entries_; }

    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::size_t> get_uint_list(const std::string& key) const;

private:
    std::map<std::string, std::string> entries_;
};

}  // namespace m2r
