#include "boxlens/protowire.hpp"

#include <bit>
#include <stdexcept>

namespace boxlens::protowire {

void Writer::raw_varint(std::uint64_t value) {
    while (value >= 0x80) {
        buffer_.push_back(static_cast<char>((value & 0x7F) | 0x80));
        value >>= 7;
    }
    buffer_.push_back(static_cast<char>(value));
}

void Writer::tag(std::uint32_t field, WireType type) {
    raw_varint((static_cast<std::uint64_t>(field) << 3) | static_cast<std::uint64_t>(type));
}

void Writer::varint(std::uint32_t field, std::uint64_t value) {
    tag(field, WireType::Varint);
    raw_varint(value);
}

void Writer::fixed32(std::uint32_t field, std::uint32_t value) {
    tag(field, WireType::Fixed32);
    for (int i = 0; i < 4; ++i) {
        buffer_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
}

void Writer::float32(std::uint32_t field, float value) {
    fixed32(field, std::bit_cast<std::uint32_t>(value));
}

void Writer::bytes(std::uint32_t field, std::string_view value) {
    tag(field, WireType::LengthDelimited);
    raw_varint(value.size());
    buffer_.append(value);
}

void Writer::packed_floats(std::uint32_t field, std::span<const float> values) {
    std::string packed;
    packed.reserve(values.size() * 4);
    for (float v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) {
            packed.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
        }
    }
    bytes(field, packed);
}

void Writer::packed_int64(std::uint32_t field, std::span<const std::int64_t> values) {
    Writer packed;
    for (auto v : values) {
        packed.raw_varint(static_cast<std::uint64_t>(v));
    }
    bytes(field, packed.buffer_);
}

std::uint64_t Reader::read_varint() {
    std::uint64_t value = 0;
    for (int shift = 0; shift < 64; shift += 7) {
        if (pos_ >= data_.size()) {
            throw std::runtime_error("truncated varint");
        }
        const auto byte = static_cast<std::uint8_t>(data_[pos_++]);
        value |= static_cast<std::uint64_t>(byte & 0x7F) << shift;
        if ((byte & 0x80) == 0) {
            return value;
        }
    }
    throw std::runtime_error("varint too long");
}

std::optional<Field> Reader::next() {
    if (pos_ >= data_.size()) {
        return std::nullopt;
    }
    const std::uint64_t key = read_varint();
    Field field;
    field.number = static_cast<std::uint32_t>(key >> 3);
    if (field.number == 0) {
        throw std::runtime_error("invalid field number 0");
    }
    switch (key & 0x7) {
    case 0:
        field.type = WireType::Varint;
        field.scalar = read_varint();
        break;
    case 1:
    case 5: {
        const std::size_t width = (key & 0x7) == 1 ? 8 : 4;
        if (data_.size() - pos_ < width) {
            throw std::runtime_error("truncated fixed-width field");
        }
        field.type = width == 8 ? WireType::Fixed64 : WireType::Fixed32;
        for (std::size_t i = 0; i < width; ++i) {
            field.scalar |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_ + i]))
                            << (8 * i);
        }
        pos_ += width;
        break;
    }
    case 2: {
        const std::uint64_t len = read_varint();
        if (len > data_.size() - pos_) {
            throw std::runtime_error("length-delimited field overruns buffer");
        }
        field.type = WireType::LengthDelimited;
        field.payload = data_.substr(pos_, static_cast<std::size_t>(len));
        pos_ += static_cast<std::size_t>(len);
        break;
    }
    default:
        throw std::runtime_error("unsupported wire type");
    }
    return field;
}

}  // namespace boxlens::protowire
