#pragma once

// Chain input. A chain file holds the state count on its first line and then
// one row of space-separated probabilities per line; blank lines and text
// after '#' are ignored. Inline chains separate rows with ';'.

#include "remest/bundled.hpp"
#include "remest/core/chain.hpp"
#include "remest/core/error.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace remest {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == ',')) ++i;
        std::size_t j = i;
        while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\r' || s[j] == ',')) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view tok) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return v;
}

inline std::string_view strip_comment(std::string_view line) {
    const auto hash = line.find('#');
    return hash == std::string_view::npos ? line : line.substr(0, hash);
}

/// Parses one row; `where` prefixes error messages.
inline std::vector<double> parse_row(std::string_view text, std::size_t expected, const std::string& where) {
    const auto toks = split_ws(text);
    if (expected && toks.size() != expected)
        throw Error(Errc::ParseError, where + ": expected " + std::to_string(expected) + " entries, got " +
                                          std::to_string(toks.size()));
    std::vector<double> row;
    for (auto tok : toks) {
        const auto v = parse_double(tok);
        if (!v) throw Error(Errc::ParseError, where + ": '" + std::string(tok) + "' is not a number");
        row.push_back(*v);
    }
    return row;
}

/// validate_chain with the source name prepended to its message.
inline TransitionMatrix validate_named(const std::vector<std::vector<double>>& rows, const std::string& source) {
    try {
        return validate_chain(rows);
    } catch (const Error& e) {
        throw Error(e.code(), source + ": " + e.message());
    }
}

} // namespace detail

/// Parses the matrix-file format. Rows in messages are 0-based; lines are
/// 1-based.
inline TransitionMatrix parse_chain_text(std::string_view text, const std::string& source = "chain") {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0, n = 0;
    bool have_n = false;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::strip_comment(line);
        if (detail::split_ws(body).empty()) continue;
        const std::string where = source + " line " + std::to_string(lineno);
        if (!have_n) {
            const auto toks = detail::split_ws(body);
            const auto v = detail::parse_double(toks[0]);
            if (toks.size() != 1 || !v || *v < 1 || *v != static_cast<double>(static_cast<std::size_t>(*v)))
                throw Error(Errc::ParseError, where + ": first line must be the state count");
            n = static_cast<std::size_t>(*v);
            have_n = true;
            continue;
        }
        if (rows.size() == n) throw Error(Errc::ParseError, where + ": more than " + std::to_string(n) + " rows");
        rows.push_back(detail::parse_row(body, n, where + " (row " + std::to_string(rows.size()) + ")"));
    }
    if (!have_n) throw Error(Errc::ParseError, source + ": empty chain file");
    if (rows.size() != n)
        throw Error(Errc::ParseError, source + ": expected " + std::to_string(n) + " rows, got " +
                                          std::to_string(rows.size()) + " (row " + std::to_string(rows.size()) +
                                          " missing)");
    return detail::validate_named(rows, source);
}

/// Rows separated by ';', entries by spaces or commas.
inline TransitionMatrix parse_inline_chain(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find(';', start);
        if (end == std::string_view::npos) end = text.size();
        const auto part = text.substr(start, end - start);
        if (!detail::split_ws(part).empty())
            rows.push_back(detail::parse_row(part, rows.empty() ? 0 : rows.front().size(),
                                             "inline chain row " + std::to_string(rows.size())));
        start = end + 1;
    }
    return detail::validate_named(rows, "inline chain");
}

inline TransitionMatrix read_chain_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidArgument, "cannot open chain file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_chain_text(ss.str(), path.string());
}

/// Resolves a chain argument: `builtin:NAME` for a bundled chain, an existing
/// file path, or an inline matrix containing ';'.
inline TransitionMatrix load_chain(const std::string& arg) {
    constexpr std::string_view prefix = "builtin:";
    if (arg.starts_with(prefix)) {
        const std::string name = arg.substr(prefix.size());
        for (auto& nc : bundled_chains())
            if (nc.name == name) return nc.chain;
        std::string names;
        for (auto& nc : bundled_chains()) names += (names.empty() ? "" : ", ") + nc.name;
        throw Error(Errc::InvalidArgument, "unknown builtin chain '" + name + "' (have " + names + ")");
    }
    std::error_code ec;
    if (std::filesystem::is_regular_file(arg, ec)) return read_chain_file(arg);
    if (arg.find(';') != std::string::npos) return parse_inline_chain(arg);
    throw Error(Errc::InvalidArgument, "chain '" + arg + "' is neither a file, builtin:NAME nor an inline matrix");
}

/// Writes the matrix-file format with round-trip precision.
inline void write_chain(std::ostream& os, const TransitionMatrix& chain) {
    os << chain.size() << '\n';
    char buf[32];
    for (std::size_t i = 0; i < chain.size(); ++i) {
        for (std::size_t j = 0; j < chain.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", chain(i, j));
            os << (j ? " " : "") << buf;
        }
        os << '\n';
    }
}

} // namespace remest
