#include "mbp_cli/toml_lite.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

#include "mbp/errors.hpp"

namespace mbp::cli {

using nlohmann::json;

namespace {

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    json run() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                table = header(root);
            } else {
                key_value(*table);
            }
            end_of_line();
        }
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("toml line " + std::to_string(line_) + ": " + msg);
    }

    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return eof() ? '\0' : text_[pos_]; }
    char get() {
        char c = text_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    void skip_space() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }

    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++pos_;
    }

    void skip_blank_lines() {
        while (!eof()) {
            skip_space();
            skip_comment();
            if (peek() == '\n' || peek() == '\r')
                get();
            else
                break;
        }
    }

    /// Whitespace, comments and newlines inside arrays.
    void skip_all() {
        while (!eof()) {
            skip_space();
            skip_comment();
            if (peek() == '\n' || peek() == '\r')
                get();
            else
                break;
        }
    }

    void end_of_line() {
        skip_space();
        skip_comment();
        if (peek() == '\r') get();
        if (!eof() && peek() != '\n') fail("unexpected text after value");
        if (!eof()) get();
    }

    std::string bare_or_quoted_key() {
        skip_space();
        if (peek() == '"') return quoted();
        std::string k;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
            k += get();
        if (k.empty()) fail("expected a key");
        return k;
    }

    std::vector<std::string> dotted_key() {
        std::vector<std::string> parts{bare_or_quoted_key()};
        skip_space();
        while (peek() == '.') {
            get();
            parts.push_back(bare_or_quoted_key());
            skip_space();
        }
        return parts;
    }

    json* descend(json& root, const std::vector<std::string>& path, std::size_t count) {
        json* t = &root;
        for (std::size_t i = 0; i < count; ++i) {
            json& next = (*t)[path[i]];
            if (next.is_null()) next = json::object();
            if (next.is_array() && !next.empty() && next.back().is_object())
                t = &next.back();
            else if (next.is_object())
                t = &next;
            else
                fail("key '" + path[i] + "' is not a table");
        }
        return t;
    }

    json* header(json& root) {
        get();
        const bool array = peek() == '[';
        if (array) get();
        auto path = dotted_key();
        if (get() != ']') fail("expected ']'");
        if (array && get() != ']') fail("expected ']]'");
        json* parent = descend(root, path, path.size() - 1);
        json& slot = (*parent)[path.back()];
        if (array) {
            if (slot.is_null()) slot = json::array();
            if (!slot.is_array()) fail("'" + path.back() + "' is not an array of tables");
            slot.push_back(json::object());
            return &slot.back();
        }
        if (slot.is_null()) slot = json::object();
        if (!slot.is_object()) fail("'" + path.back() + "' is not a table");
        return &slot;
    }

    void key_value(json& table) {
        auto path = dotted_key();
        skip_space();
        if (get() != '=') fail("expected '='");
        skip_space();
        json* t = descend(table, path, path.size() - 1);
        if (t->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*t)[path.back()] = value();
    }

    std::string quoted() {
        get();
        std::string s;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = get();
            if (c == '"') break;
            if (c == '\\') {
                char e = get();
                switch (e) {
                case 'n': s += '\n'; break;
                case 't': s += '\t'; break;
                case '"': s += '"'; break;
                case '\\': s += '\\'; break;
                default: fail(std::string("unsupported escape \\") + e);
                }
            } else {
                s += c;
            }
        }
        return s;
    }

    json value() {
        char c = peek();
        if (c == '"') return quoted();
        if (c == '\'') {
            get();
            std::string s;
            while (!eof() && peek() != '\'' && peek() != '\n') s += get();
            if (get() != '\'') fail("unterminated literal string");
            return s;
        }
        if (c == '[') {
            get();
            json arr = json::array();
            skip_all();
            while (peek() != ']') {
                arr.push_back(value());
                skip_all();
                if (peek() == ',') {
                    get();
                    skip_all();
                } else if (peek() != ']') {
                    fail("expected ',' or ']' in array");
                }
            }
            get();
            return arr;
        }
        if (c == '{') fail("inline tables are not supported");
        std::string tok;
        while (!eof() && peek() != ',' && peek() != ']' && peek() != '#' && peek() != '\n' && peek() != '\r' &&
               peek() != ' ' && peek() != '\t')
            tok += get();
        if (tok == "true") return true;
        if (tok == "false") return false;
        if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
        if (tok == "-inf") return -std::numeric_limits<double>::infinity();
        if (tok == "nan" || tok == "+nan" || tok == "-nan") return std::numeric_limits<double>::quiet_NaN();
        std::string clean;
        for (char ch : tok)
            if (ch != '_') clean += ch;
        if (clean.empty()) fail("expected a value");
        const char* b = clean.data() + (clean[0] == '+' ? 1 : 0);
        const char* e = clean.data() + clean.size();
        if (clean.find_first_of(".eE") == std::string::npos) {
            long long v = 0;
            auto r = std::from_chars(b, e, v);
            if (r.ec == std::errc() && r.ptr == e) return v;
        }
        double d = 0;
        auto r = std::from_chars(b, e, d);
        if (r.ec != std::errc() || r.ptr != e) fail("cannot parse value '" + tok + "'");
        return d;
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
};

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out += c;
        }
    }
    return out + "\"";
}

std::string key(const std::string& k) {
    bool bare = !k.empty();
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) bare = false;
    return bare ? k : quote(k);
}

std::string scalar(const json& v) {
    if (v.is_string()) return quote(v.get<std::string>());
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) {
        const double d = v.get<double>();
        if (std::isnan(d)) return "nan";
        if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
        std::ostringstream os;
        os << std::setprecision(17) << d;
        std::string s = os.str();
        if (s.find_first_of(".eE") == std::string::npos) s += ".0";
        return s;
    }
    if (v.is_array()) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + scalar(v[i]);
        return s + "]";
    }
    throw Error("value cannot be written as toml: " + v.dump());
}

bool is_table_array(const json& v) {
    return v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_object(); });
}

void emit(std::ostringstream& os, const json& obj, const std::string& prefix) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!it->is_object() && !is_table_array(*it)) os << key(it.key()) << " = " << scalar(*it) << "\n";
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const std::string name = prefix.empty() ? key(it.key()) : prefix + "." + key(it.key());
        if (it->is_object()) {
            os << "\n[" << name << "]\n";
            emit(os, *it, name);
        } else if (is_table_array(*it)) {
            for (const auto& e : *it) {
                os << "\n[[" << name << "]]\n";
                emit(os, e, name);
            }
        }
    }
}

}  // namespace

json parse_toml(const std::string& text) { return Parser(text).run(); }

std::string to_toml(const json& doc) {
    if (!doc.is_object()) throw Error("toml documents must be tables");
    std::ostringstream os;
    emit(os, doc, "");
    return os.str();
}

}  // namespace mbp::cli
