#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jmsac/tensor.hpp"

namespace jmsac {

// CRC32 (IEEE 802.3 polynomial, zlib-compatible).
uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);
uint32_t crc32_file(const std::string& path);

// Content hash of a serialized container: the CRC over everything before the
// trailing checksum field (hashing the whole buffer would always yield the
// fixed CRC residue).
uint32_t container_crc(const std::vector<uint8_t>& container_bytes);

// Versioned binary tensor container. Layout:
//   magic "JMSC" | u32 version | records | u32 crc32-of-everything-before
// record: u32 name_len | name bytes | u32 rank | u64 extents[rank] | f32 data.
// All integers little-endian.
struct TensorFile {
    std::map<std::string, TensorF> tensors;

    void put(const std::string& name, TensorF t) { tensors[name] = std::move(t); }
    const TensorF& get(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) > 0; }

    void save(const std::string& path) const;
    static TensorFile load(const std::string& path);

    std::vector<uint8_t> serialize() const;
    static TensorFile deserialize(const std::vector<uint8_t>& bytes);
};

} // namespace jmsac
