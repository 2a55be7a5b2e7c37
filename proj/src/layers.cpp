#include "gequnet/layers.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>

namespace gequnet {

std::vector<int> spatial_index_map(const Group& group, GroupElement g, int extent) {
    const GroupElement ginv = group.inverse(g);
    std::vector<int> src_of(static_cast<std::size_t>(extent) * extent);
    for (int i = 0; i < extent; ++i)
        for (int j = 0; j < extent; ++j) {
            const GridPoint s = group.act_on_point(ginv, {i, j}, extent);
            src_of[static_cast<std::size_t>(i) * extent + j] = s.i * extent + s.j;
        }
    return src_of;
}

namespace wire {

void write_u8(std::ostream& os, std::uint8_t v) {
    os.put(static_cast<char>(v));
}

void write_u16(std::ostream& os, std::uint16_t v) {
    os.put(static_cast<char>(v & 0xff));
    os.put(static_cast<char>((v >> 8) & 0xff));
}

void write_u32(std::ostream& os, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xff));
}

void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    write_u32(os, bits);
}

std::uint8_t read_u8(std::istream& is) {
    const int c = is.get();
    if (c < 0) throw std::runtime_error("layer blob: unexpected end of stream");
    return static_cast<std::uint8_t>(c);
}

std::uint16_t read_u16(std::istream& is) {
    const std::uint16_t lo = read_u8(is);
    const std::uint16_t hi = read_u8(is);
    return static_cast<std::uint16_t>(lo | (hi << 8));
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(read_u8(is)) << (8 * b);
    return v;
}

float read_f32(std::istream& is) {
    const std::uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace wire
}  // namespace gequnet
