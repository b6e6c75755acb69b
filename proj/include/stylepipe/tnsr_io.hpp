#pragma once

#include <iosfwd>
#include <string>

#include "stylepipe/tensor.hpp"

namespace stylepipe {

// Binary tensor format "TNSR1": 5 magic bytes, u32 rank, u64 extents,
// little-endian f64 payload. The payload is f64 regardless of the build's
// real type.
void write_tnsr(std::ostream& os, const Tensor& t);
Tensor read_tnsr(std::istream& is);

void save_tnsr(const std::string& path, const Tensor& t);
Tensor load_tnsr(const std::string& path);

}  // namespace stylepipe
