#ifndef SPLITKIT_IMAGE_IO_HPP
#define SPLITKIT_IMAGE_IO_HPP

#include <string>

#include "splitkit/tensor.hpp"

namespace splitkit {

// Binary 8-bit PGM (P5). Values are min-max normalized to [0,255] on write;
// reads return values in [0,1].
void write_pgm(const Tensor& grid, const std::string& path);
Tensor read_pgm(const std::string& path);

// Raw little-endian f64 grid, row-major, no header.
void write_raw_f64(const Tensor& grid, const std::string& path);
Tensor read_raw_f64(const std::string& path, std::vector<std::int64_t> shape);

// Metadata sidecar (method, layer, flags) as JSON text.
void write_text_file(const std::string& text, const std::string& path);

}  // namespace splitkit

#endif
