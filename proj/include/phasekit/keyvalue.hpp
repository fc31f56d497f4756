#pragma once

// Line-oriented `key = value` files. Values holding several numbers are
// whitespace separated; integer lists also accept `a:b` and `a:b:step` ranges.
// `#` starts a comment.

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace phasekit {

class KeyValueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& in, const std::string& source = "<input>");
    static KeyValueFile load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::string& raw(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<std::int64_t> get_int_list(const std::string& key) const;

    /// Throws naming the first key that no getter has asked for.
    void reject_unused() const;

private:
    std::string source_;
    std::map<std::string, std::string> values_;
    std::map<std::string, int> lines_;
    mutable std::set<std::string> used_;

    [[noreturn]] void fail(const std::string& key, const std::string& what) const;
};

}  // namespace phasekit
