#ifndef SPLITKIT_MODEL_IO_HPP
#define SPLITKIT_MODEL_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/network.hpp"
#include "splitkit/splitter.hpp"

namespace splitkit {

// Model files come as a JSON manifest (layer list, shapes, tensor table,
// blob checksum) next to a binary blob of f64 little-endian row-major
// tensors concatenated in manifest order. Round-trips are bit-exact.
//
// Split models use the same manifest with "split": true; weight-bearing
// layers then carry the original tensor plus its non-negative +/- parts.

bool manifest_is_split(const std::string& manifest_path);

Network load_model(const std::string& manifest_path);
void save_model(const Network& net, const std::string& manifest_path);

SplitNetwork load_split_model(const std::string& manifest_path);
void save_split_model(const SplitNetwork& snet, const std::string& manifest_path);

std::string sha256_hex(const unsigned char* data, std::size_t len);

std::vector<unsigned char> f64_to_le_bytes(const std::vector<double>& values);
std::vector<double> le_bytes_to_f64(const unsigned char* bytes, std::size_t byte_count);

}  // namespace splitkit

#endif
