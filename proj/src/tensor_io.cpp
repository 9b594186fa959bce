// SPDX-License-Identifier: Apache-2.0
#include "sta/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace sta {
namespace {

constexpr unsigned char kMagic[4] = {0x53, 0x54, 0x41, 0x54}; // "STAT"
constexpr uint8_t kVersion = 1;

void put_u32_le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u32_le_bytes(std::string& out, const void* p, std::size_t n) {
    // Host is little-endian on every supported target; memcpy keeps the exact
    // IEEE bit pattern for f32/f64 payloads.
    out.append(static_cast<const char*>(p), n);
}

uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::size_t dtype_size(DType d) {
    switch (d) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::U8: return 1;
        case DType::I32: return 4;
    }
    throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(d)));
}

std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open tensor file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

} // namespace

void write_tns(const std::string& path, const Tensor& t, DType dtype) {
    if (t.ndim() == 0) throw ShapeError("write_tns: empty tensor");
    if (t.ndim() > 255) throw ShapeError("write_tns: too many dimensions");

    std::string out;
    out.reserve(8 + 4 * t.dims.size() + t.size() * dtype_size(dtype));
    out.append(reinterpret_cast<const char*>(kMagic), 4);
    out.push_back(static_cast<char>(kVersion));
    out.push_back(static_cast<char>(dtype));
    out.push_back(static_cast<char>(t.ndim()));
    out.push_back(0); // reserved
    for (int d : t.dims) put_u32_le(out, static_cast<uint32_t>(d));

    switch (dtype) {
        case DType::F32: {
            for (double v : t.data) {
                float f = static_cast<float>(v);
                put_u32_le_bytes(out, &f, 4);
            }
            break;
        }
        case DType::F64: {
            for (double v : t.data) put_u32_le_bytes(out, &v, 8);
            break;
        }
        case DType::U8: {
            for (double v : t.data) {
                if (v != std::floor(v) || v < 0 || v > 255) {
                    throw ContractError("write_tns: value " + std::to_string(v) +
                                        " not representable as uint8 in " + path);
                }
                out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
            }
            break;
        }
        case DType::I32: {
            for (double v : t.data) {
                if (v != std::floor(v) || v < -2147483648.0 || v > 2147483647.0) {
                    throw ContractError("write_tns: value " + std::to_string(v) +
                                        " not representable as int32 in " + path);
                }
                int32_t i = static_cast<int32_t>(v);
                put_u32_le_bytes(out, &i, 4);
            }
            break;
        }
    }

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open for writing: " + path);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw FormatError("short write: " + path);
}

Tensor read_tns(const std::string& path) {
    const std::vector<unsigned char> bytes = read_all(path);
    if (bytes.size() < 8) throw FormatError("truncated tensor header: " + path);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("bad magic (not a .tns tensor file): " + path);
    }
    if (bytes[4] != kVersion) {
        throw FormatError("unsupported tensor format version " + std::to_string(bytes[4]) +
                          " in " + path);
    }
    const uint8_t dtype_code = bytes[5];
    if (dtype_code < 1 || dtype_code > 4) {
        throw FormatError("unknown dtype code " + std::to_string(dtype_code) + " in " + path);
    }
    const DType dtype = static_cast<DType>(dtype_code);
    const int ndim = bytes[6];
    if (ndim == 0) throw FormatError("zero-dimensional tensor in " + path);
    if (bytes[7] != 0) throw FormatError("nonzero reserved byte in " + path);

    const std::size_t header = 8 + 4 * static_cast<std::size_t>(ndim);
    if (bytes.size() < header) throw FormatError("truncated dims in " + path);

    std::vector<int> dims(ndim);
    std::size_t volume = 1;
    for (int i = 0; i < ndim; ++i) {
        const uint32_t d = get_u32_le(bytes.data() + 8 + 4 * i);
        if (d == 0 || d > 0x7fffffff) throw FormatError("invalid dimension in " + path);
        dims[i] = static_cast<int>(d);
        volume *= d;
    }

    const std::size_t expect = header + volume * dtype_size(dtype);
    if (bytes.size() != expect) {
        throw FormatError("payload size mismatch in " + path + ": expected " +
                          std::to_string(expect) + " bytes, file has " +
                          std::to_string(bytes.size()));
    }

    Tensor t;
    t.dims = dims;
    t.data.resize(volume);
    const unsigned char* p = bytes.data() + header;
    switch (dtype) {
        case DType::F32:
            for (std::size_t i = 0; i < volume; ++i) {
                float f;
                std::memcpy(&f, p + 4 * i, 4);
                t.data[i] = static_cast<double>(f);
            }
            break;
        case DType::F64:
            for (std::size_t i = 0; i < volume; ++i) {
                double v;
                std::memcpy(&v, p + 8 * i, 8);
                t.data[i] = v;
            }
            break;
        case DType::U8:
            for (std::size_t i = 0; i < volume; ++i) t.data[i] = static_cast<double>(p[i]);
            break;
        case DType::I32:
            for (std::size_t i = 0; i < volume; ++i) {
                int32_t v;
                std::memcpy(&v, p + 4 * i, 4);
                t.data[i] = static_cast<double>(v);
            }
            break;
    }
    return t;
}

DType peek_tns_dtype(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open tensor file: " + path);
    unsigned char head[8];
    in.read(reinterpret_cast<char*>(head), 8);
    if (in.gcount() != 8) throw FormatError("truncated tensor header: " + path);
    if (std::memcmp(head, kMagic, 4) != 0) {
        throw FormatError("bad magic (not a .tns tensor file): " + path);
    }
    if (head[5] < 1 || head[5] > 4) {
        throw FormatError("unknown dtype code " + std::to_string(head[5]) + " in " + path);
    }
    return static_cast<DType>(head[5]);
}

} // namespace sta
