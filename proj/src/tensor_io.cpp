#include "idan/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "idan/errors.hpp"

namespace idan {

namespace {

constexpr char kMagic[4] = {'I', 'D', 'T', 'N'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::ostream& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

[[noreturn]] void parse_fail(const std::string& what, std::size_t offset) {
    throw IoError("IDTN parse error at byte " + std::to_string(offset) + ": " + what);
}

void read_bytes(std::istream& in, void* dst, std::size_t n, std::size_t& offset,
                const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        parse_fail(std::string("truncated while reading ") + what, offset);
    offset += n;
}

std::uint16_t get_u16(std::istream& in, std::size_t& offset, const char* what) {
    unsigned char b[2];
    read_bytes(in, b, 2, offset, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, std::size_t& offset, const char* what) {
    unsigned char b[4];
    read_bytes(in, b, 4, offset, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_idtn(std::ostream& out, const Tensor& t) {
    out.write(kMagic, 4);
    put_u16(out, kVersion);
    put_u16(out, static_cast<std::uint16_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) put_f32(out, v);
}

Tensor read_idtn(std::istream& in, std::size_t base_offset) {
    std::size_t offset = base_offset;
    char magic[4];
    read_bytes(in, magic, 4, offset, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) parse_fail("bad magic bytes", base_offset);
    const std::uint16_t version = get_u16(in, offset, "version");
    if (version != kVersion)
        parse_fail("unsupported format version " + std::to_string(version), offset - 2);
    const std::uint16_t rank = get_u16(in, offset, "rank");
    if (rank == 0 || rank > 8) parse_fail("implausible rank " + std::to_string(rank), offset - 2);

    std::vector<int> shape(rank);
    std::int64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
        const std::uint32_t d = get_u32(in, offset, "dimension");
        if (d == 0 || d > (1u << 24)) parse_fail("implausible dimension " + std::to_string(d),
                                                 offset - 4);
        shape[static_cast<std::size_t>(i)] = static_cast<int>(d);
        numel *= d;
    }
    std::vector<float> data(static_cast<std::size_t>(numel));
    for (std::int64_t i = 0; i < numel; ++i) {
        std::uint32_t bits = get_u32(in, offset, "payload");
        std::memcpy(&data[static_cast<std::size_t>(i)], &bits, 4);
    }
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor_file(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_idtn(out, t);
    if (!out) throw IoError("write failed: " + path);
}

Tensor load_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    return read_idtn(in);
}

void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, Tensor>>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, tensor] : entries) {
        if (name.size() > 0xffff) throw IoError("checkpoint entry name too long: " + name);
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_idtn(out, tensor);
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_named_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::size_t offset = 0;
    const std::uint32_t count = get_u32(in, offset, "entry count");
    if (count > (1u << 20)) parse_fail("implausible entry count " + std::to_string(count), 0);
    std::vector<std::pair<std::string, Tensor>> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = get_u16(in, offset, "name length");
        std::string name(len, '\0');
        read_bytes(in, name.data(), len, offset, "name");
        Tensor t = read_idtn(in, offset);
        offset += 8 + 4u * static_cast<std::size_t>(t.rank()) +
                  4u * static_cast<std::size_t>(t.numel());
        entries.emplace_back(std::move(name), std::move(t));
    }
    return entries;
}

}  // namespace idan
