#include "splitkit/image_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "splitkit/error.hpp"
#include "splitkit/model_io.hpp"

namespace splitkit {

namespace fs = std::filesystem;

namespace {

void ensure_parent(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace

void write_pgm(const Tensor& grid, const std::string& path) {
    if (grid.rank() != 2) throw ShapeError("write_pgm: expected an HxW grid");
    double lo = grid[0], hi = grid[0];
    for (std::int64_t i = 0; i < grid.size(); ++i) {
        lo = std::min(lo, grid[i]);
        hi = std::max(hi, grid[i]);
    }
    const double span = hi - lo;
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write PGM '" + path + "'");
    out << "P5\n" << grid.dim(1) << " " << grid.dim(0) << "\n255\n";
    for (std::int64_t i = 0; i < grid.size(); ++i) {
        const double v = span > 0.0 ? (grid[i] - lo) / span : 0.0;
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
}

Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open PGM '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P5") throw LoadError("'" + path + "' is not a binary PGM (P5)");
    auto next_token = [&in, &path]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw LoadError("'" + path + "' has a truncated PGM header");
    };
    const std::int64_t w = std::stoll(next_token());
    const std::int64_t h = std::stoll(next_token());
    const std::int64_t maxval = std::stoll(next_token());
    if (maxval <= 0 || maxval > 255) throw LoadError("'" + path + "' has unsupported maxval");
    in.get();  // single whitespace after header
    std::vector<unsigned char> raw(static_cast<std::size_t>(w * h));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw LoadError("'" + path + "' PGM pixel data truncated");
    }
    Tensor t({h, w});
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<double>(raw[static_cast<std::size_t>(i)]) / static_cast<double>(maxval);
    }
    return t;
}

void write_raw_f64(const Tensor& grid, const std::string& path) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write raw grid '" + path + "'");
    const auto bytes = f64_to_le_bytes(grid.buffer());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

Tensor read_raw_f64(const std::string& path, std::vector<std::int64_t> shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open raw grid '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::int64_t expected = shape_product(shape) * 8;
    if (static_cast<std::int64_t>(bytes.size()) != expected) {
        throw LoadError("raw grid '" + path + "': expected " + std::to_string(expected) +
                        " bytes, found " + std::to_string(bytes.size()));
    }
    return Tensor(std::move(shape), le_bytes_to_f64(bytes.data(), bytes.size()));
}

void write_text_file(const std::string& text, const std::string& path) {
    ensure_parent(path);
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write '" + path + "'");
    out << text;
}

}  // namespace splitkit
