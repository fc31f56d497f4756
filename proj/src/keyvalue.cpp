#include "phasekit/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace phasekit {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> tokens(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

template <typename T>
std::optional<T> parse_number(const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
    return v;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& source) {
    KeyValueFile f;
    f.source_ = source;
    std::string line;
    for (int no = 1; std::getline(in, line); ++no) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw KeyValueError(source + ":" + std::to_string(no) + ": expected `key = value`");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw KeyValueError(source + ":" + std::to_string(no) + ": empty key");
        if (f.values_.count(key)) throw KeyValueError(source + ":" + std::to_string(no) + ": duplicate key " + key);
        f.values_[key] = trim(line.substr(eq + 1));
        f.lines_[key] = no;
    }
    return f;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw KeyValueError("cannot open " + path);
    return parse(in, path);
}

void KeyValueFile::fail(const std::string& key, const std::string& what) const {
    const auto it = lines_.find(key);
    const std::string where = it == lines_.end() ? source_ : source_ + ":" + std::to_string(it->second);
    throw KeyValueError(where + ": " + key + ": " + what);
}

const std::string& KeyValueFile::raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(key, "missing");
    used_.insert(key);
    return it->second;
}

std::string KeyValueFile::get_string(const std::string& key) const {
    const auto& v = raw(key);
    if (v.empty()) fail(key, "empty value");
    return v;
}

std::int64_t KeyValueFile::get_int(const std::string& key) const {
    const auto v = parse_number<std::int64_t>(raw(key));
    if (!v) fail(key, "expected an integer");
    return *v;
}

std::uint64_t KeyValueFile::get_uint(const std::string& key) const {
    const auto v = parse_number<std::uint64_t>(raw(key));
    if (!v) fail(key, "expected a nonnegative integer");
    return *v;
}

double KeyValueFile::get_double(const std::string& key) const {
    const auto v = parse_number<double>(raw(key));
    if (!v || !std::isfinite(*v)) fail(key, "expected a finite number");
    return *v;
}

bool KeyValueFile::get_bool(const std::string& key) const {
    const auto& v = raw(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(key, "expected true or false");
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& t : tokens(raw(key))) {
        const auto v = parse_number<double>(t);
        if (!v || !std::isfinite(*v)) fail(key, "bad number '" + t + "'");
        out.push_back(*v);
    }
    return out;
}

std::vector<std::int64_t> KeyValueFile::get_int_list(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& t : tokens(raw(key))) {
        std::vector<std::int64_t> parts;
        std::size_t start = 0;
        while (true) {
            const auto colon = t.find(':', start);
            const auto v = parse_number<std::int64_t>(t.substr(start, colon - start));
            if (!v) fail(key, "bad integer or range '" + t + "'");
            parts.push_back(*v);
            if (colon == std::string::npos) break;
            start = colon + 1;
        }
        if (parts.size() == 1) {
            out.push_back(parts[0]);
            continue;
        }
        const std::int64_t step = parts.size() == 3 ? parts[2] : 1;
        if (parts.size() > 3 || step <= 0 || parts[1] < parts[0]) fail(key, "bad range '" + t + "'");
        for (std::int64_t v = parts[0]; v <= parts[1]; v += step) out.push_back(v);
    }
    return out;
}

void KeyValueFile::reject_unused() const {
    for (const auto& [key, value] : values_)
        if (!used_.count(key)) fail(key, "unknown key");
}

}  // namespace phasekit
