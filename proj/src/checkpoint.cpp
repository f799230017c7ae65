#include "jmsac/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace jmsac {

namespace {

constexpr uint32_t kFormatVersion = 1;

std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
    }
    return t;
}

const std::array<uint32_t, 256>& crc_table() {
    static const auto t = make_crc_table();
    return t;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::vector<uint8_t>& b, size_t& p) {
    if (p + 4 > b.size()) throw std::runtime_error("tensor container truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[p + i]) << (8 * i);
    p += 4;
    return v;
}

uint64_t get_u64(const std::vector<uint8_t>& b, size_t& p) {
    if (p + 8 > b.size()) throw std::runtime_error("tensor container truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[p + i]) << (8 * i);
    p += 8;
    return v;
}

} // namespace

uint32_t crc32(const void* data, size_t len, uint32_t seed) {
    const auto& table = crc_table();
    uint32_t c = seed ^ 0xffffffffu;
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xff] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

uint32_t crc32_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<char> buf(1 << 16);
    uint32_t c = 0;
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        c = crc32(buf.data(), static_cast<size_t>(f.gcount()), c);
    }
    return c;
}

uint32_t container_crc(const std::vector<uint8_t>& container_bytes) {
    if (container_bytes.size() < 4) throw std::invalid_argument("container too short");
    return crc32(container_bytes.data(), container_bytes.size() - 4);
}

const TensorF& TensorFile::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("tensor not in container: " + name);
    return it->second;
}

std::vector<uint8_t> TensorFile::serialize() const {
    std::vector<uint8_t> out;
    out.push_back('J');
    out.push_back('M');
    out.push_back('S');
    out.push_back('C');
    put_u32(out, kFormatVersion);
    for (const auto& [name, t] : tensors) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<uint32_t>(t.rank()));
        for (int64_t d = 0; d < t.rank(); ++d) put_u64(out, static_cast<uint64_t>(t.extent(d)));
        const size_t off = out.size();
        out.resize(off + static_cast<size_t>(t.numel()) * 4);
        static_assert(sizeof(float) == 4);
        std::memcpy(out.data() + off, t.data(), static_cast<size_t>(t.numel()) * 4);
    }
    put_u32(out, crc32(out.data(), out.size()));
    return out;
}

TensorFile TensorFile::deserialize(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12 || bytes[0] != 'J' || bytes[1] != 'M' || bytes[2] != 'S' ||
        bytes[3] != 'C')
        throw std::runtime_error("tensor container: bad magic");
    const uint32_t stored_crc = [&] {
        size_t p = bytes.size() - 4;
        return get_u32(bytes, p);
    }();
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw std::runtime_error("tensor container: CRC mismatch");
    size_t p = 4;
    const uint32_t version = get_u32(bytes, p);
    if (version != kFormatVersion) throw std::runtime_error("tensor container: unknown version");
    TensorFile tf;
    const size_t end = bytes.size() - 4;
    while (p < end) {
        const uint32_t name_len = get_u32(bytes, p);
        if (p + name_len > end) throw std::runtime_error("tensor container truncated");
        std::string name(reinterpret_cast<const char*>(bytes.data() + p), name_len);
        p += name_len;
        const uint32_t rank = get_u32(bytes, p);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(get_u64(bytes, p));
        TensorF t(shape);
        const size_t nbytes = static_cast<size_t>(t.numel()) * 4;
        if (p + nbytes > end) throw std::runtime_error("tensor container truncated");
        std::memcpy(t.data(), bytes.data() + p, nbytes);
        p += nbytes;
        tf.tensors[name] = std::move(t);
    }
    return tf;
}

void TensorFile::save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

TensorFile TensorFile::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot open " + path);
    const auto size = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw std::runtime_error("short read from " + path);
    return deserialize(bytes);
}

} // namespace jmsac
