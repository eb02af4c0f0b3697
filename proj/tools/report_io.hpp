// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// CSV (RFC 4180), plain PGM and small formatting helpers for the CLI.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "run_spec.hpp"

namespace gtp::cli {

// Quotes a field when it holds a comma, quote or line break.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) line += (i ? "," : "") + csv_field(fields[i]);
    return line + "\r\n";
}

// Shortest text that reads back to the same double.
inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename Range>
std::string join(const Range& xs, const char* sep = " ") {
    std::ostringstream os;
    bool first = true;
    for (const auto& x : xs) {
        os << (first ? "" : sep) << x;
        first = false;
    }
    return os.str();
}

// 64-bit FNV-1a over the raw bytes of the values.
inline std::string checksum(const std::vector<double>& values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        unsigned char bytes[sizeof v];
        std::memcpy(bytes, &v, sizeof v);
        for (unsigned char b : bytes) h = (h ^ b) * 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Plain (P2) greymap: 255 where the token is live, 0 elsewhere.
inline std::string pgm_mask(std::size_t grid, const std::vector<std::size_t>& live_ids) {
    std::vector<int> cells(grid * grid, 0);
    for (std::size_t id : live_ids) cells.at(id) = 255;
    std::ostringstream os;
    os << "P2\n" << grid << ' ' << grid << "\n255\n";
    for (std::size_t r = 0; r < grid; ++r) {
        for (std::size_t c = 0; c < grid; ++c) os << (c ? " " : "") << cells[r * grid + c];
        os << '\n';
    }
    return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw IoError("write to '" + path.string() + "' failed");
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

}  // namespace gtp::cli
