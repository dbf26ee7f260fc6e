#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "idan/tensor.hpp"

namespace idan {

// IDTN raw tensor file: magic "IDTN", u16 LE version (=1), u16 LE rank,
// rank x u32 LE dims, then f32 LE payload, row-major, NCHW for rank-4.
void write_idtn(std::ostream& out, const Tensor& t);
Tensor read_idtn(std::istream& in, std::size_t base_offset = 0);

void save_tensor_file(const std::string& path, const Tensor& t);
Tensor load_tensor_file(const std::string& path);

// Checkpoint container: u32 LE entry count, then per entry
// (u16 LE name length, UTF-8 name, IDTN blob).
void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, Tensor>>& entries);
std::vector<std::pair<std::string, Tensor>> load_named_tensors(const std::string& path);

}  // namespace idan
