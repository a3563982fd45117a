#pragma once

#include <iosfwd>
#include <string>

#include "tinyvlm/tensor.hpp"

namespace tinyvlm {

// Flat binary tensor container: rank (u64 LE), extents (u64 LE each), dtype
// tag (u32 LE, 0 = f32 / 1 = f64), then the row-major payload.
enum class DType : std::uint32_t { f32 = 0, f64 = 1 };

void write_tensor(std::ostream& os, const Tensor& t, DType dtype = DType::f64);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t, DType dtype = DType::f64);
Tensor load_tensor(const std::string& path);

}  // namespace tinyvlm
