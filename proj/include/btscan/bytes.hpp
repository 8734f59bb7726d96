#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace btscan {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline std::string to_string(BytesView b) {
  return std::string(b.begin(), b.end());
}

// All accessors below use 0-based indices and half-open ranges uniformly.
// Out-of-bounds access is a recoverable range error; analyzers treat it as
// "packet does not match protocol".

inline std::uint8_t byte_at(BytesView data, std::size_t idx) {
  if (idx >= data.size())
    throw std::out_of_range("byte_at: index " + std::to_string(idx) +
                            " out of range (size " + std::to_string(data.size()) + ")");
  return data[idx];
}

inline std::uint16_t read_u16_be(BytesView data, std::size_t offset) {
  if (offset + 2 > data.size())
    throw std::out_of_range("read_u16_be: offset " + std::to_string(offset) +
                            " out of range (size " + std::to_string(data.size()) + ")");
  return static_cast<std::uint16_t>(data[offset] << 8 | data[offset + 1]);
}

inline std::uint32_t read_u32_be(BytesView data, std::size_t offset) {
  if (offset + 4 > data.size())
    throw std::out_of_range("read_u32_be: offset " + std::to_string(offset) +
                            " out of range (size " + std::to_string(data.size()) + ")");
  return (static_cast<std::uint32_t>(data[offset]) << 24) |
         (static_cast<std::uint32_t>(data[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(data[offset + 2]) << 8) |
         static_cast<std::uint32_t>(data[offset + 3]);
}

inline std::uint64_t read_u64_be(BytesView data, std::size_t offset) {
  if (offset + 8 > data.size())
    throw std::out_of_range("read_u64_be: offset " + std::to_string(offset) +
                            " out of range (size " + std::to_string(data.size()) + ")");
  return (static_cast<std::uint64_t>(read_u32_be(data, offset)) << 32) |
         read_u32_be(data, offset + 4);
}

// Half-open [start, end) slice.
inline Bytes slice(BytesView data, std::size_t start, std::size_t end) {
  if (start > end || end > data.size())
    throw std::out_of_range("slice: [" + std::to_string(start) + ", " +
                            std::to_string(end) + ") out of range (size " +
                            std::to_string(data.size()) + ")");
  return Bytes(data.begin() + static_cast<std::ptrdiff_t>(start),
               data.begin() + static_cast<std::ptrdiff_t>(end));
}

inline std::vector<unsigned> bytes_as_uints(BytesView data) {
  return std::vector<unsigned>(data.begin(), data.end());
}

inline void append_u16_be(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline void append_u32_be(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16 & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8 & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline void append_u64_be(Bytes& out, std::uint64_t v) {
  append_u32_be(out, static_cast<std::uint32_t>(v >> 32));
  append_u32_be(out, static_cast<std::uint32_t>(v & 0xffffffffu));
}

// First occurrence of needle in haystack at or after `from`; npos if absent.
inline std::size_t find_bytes(BytesView haystack, BytesView needle, std::size_t from = 0) {
  if (needle.empty()) return from <= haystack.size() ? from : std::string::npos;
  if (needle.size() > haystack.size()) return std::string::npos;
  for (std::size_t i = from; i + needle.size() <= haystack.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i)))
      return i;
  }
  return std::string::npos;
}

}  // namespace btscan
