#pragma once

// Minimal protocol-buffers wire-format codec. Enough to walk the header of an
// ONNX ModelProto and to emit small ONNX files; no schema, no reflection.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace boxlens::protowire {

enum class WireType : std::uint8_t {
    Varint = 0,
    Fixed64 = 1,
    LengthDelimited = 2,
    Fixed32 = 5,
};

class Writer {
public:
    void varint(std::uint32_t field, std::uint64_t value);
    void sint64(std::uint32_t field, std::int64_t value) {
        varint(field, static_cast<std::uint64_t>(value));
    }
    void fixed32(std::uint32_t field, std::uint32_t value);
    void float32(std::uint32_t field, float value);
    void bytes(std::uint32_t field, std::string_view value);
    void message(std::uint32_t field, const Writer& nested) { bytes(field, nested.buffer_); }
    void packed_floats(std::uint32_t field, std::span<const float> values);
    void packed_int64(std::uint32_t field, std::span<const std::int64_t> values);

    const std::string& buffer() const noexcept { return buffer_; }

private:
    void raw_varint(std::uint64_t value);
    void tag(std::uint32_t field, WireType type);

    std::string buffer_;
};

struct Field {
    std::uint32_t number = 0;
    WireType type = WireType::Varint;
    std::uint64_t scalar = 0;       // varint / fixed values
    std::string_view payload;       // length-delimited bytes
};

/// Sequential field reader. Throws std::runtime_error on malformed input.
class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::optional<Field> next();

private:
    std::uint64_t read_varint();

    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace boxlens::protowire
