// SPDX-License-Identifier: Apache-2.0
#pragma once
#include <cstdint>
#include <string>

#include "sta/tensor.hpp"

namespace sta {

// On-disk element types for ".tns" files. In memory everything is double;
// narrower dtypes are converted on read and checked on write.
enum class DType : uint8_t {
    F32 = 1,
    F64 = 2,
    U8 = 3,
    I32 = 4,
};

// Layout, little-endian throughout:
//   magic "STAT" (0x53 0x54 0x41 0x54) | version u8 = 1 | dtype u8 | ndim u8 |
//   reserved u8 = 0 | ndim x u32 dims | row-major payload
void write_tns(const std::string& path, const Tensor& t, DType dtype);
Tensor read_tns(const std::string& path);

// dtype stored in the file header, without loading the payload.
DType peek_tns_dtype(const std::string& path);

} // namespace sta
