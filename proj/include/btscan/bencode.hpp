#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "btscan/bytes.hpp"

namespace btscan::bencode {

class Value;
using ValueList = std::vector<Value>;
// Decoder preserves key order as found; the encoder sorts lexicographically.
using DictEntries = std::vector<std::pair<Bytes, Value>>;

class Value {
 public:
  using Storage = std::variant<std::int64_t, Bytes, ValueList, DictEntries>;

  Value() : storage_(std::int64_t{0}) {}
  explicit Value(std::int64_t i) : storage_(i) {}
  explicit Value(Bytes b) : storage_(std::move(b)) {}
  explicit Value(ValueList l) : storage_(std::move(l)) {}
  explicit Value(DictEntries d) : storage_(std::move(d)) {}

  static Value integer(std::int64_t i) { return Value(i); }
  static Value str(std::string_view s) { return Value(to_bytes(s)); }
  static Value bytes(Bytes b) { return Value(std::move(b)); }
  static Value list(ValueList l) { return Value(std::move(l)); }
  static Value dict(DictEntries d) { return Value(std::move(d)); }

  bool is_integer() const { return std::holds_alternative<std::int64_t>(storage_); }
  bool is_bytes() const { return std::holds_alternative<Bytes>(storage_); }
  bool is_list() const { return std::holds_alternative<ValueList>(storage_); }
  bool is_dict() const { return std::holds_alternative<DictEntries>(storage_); }

  std::int64_t as_integer() const { return std::get<std::int64_t>(storage_); }
  const Bytes& as_bytes() const { return std::get<Bytes>(storage_); }
  const ValueList& as_list() const { return std::get<ValueList>(storage_); }
  const DictEntries& as_dict() const { return std::get<DictEntries>(storage_); }

  const Value* find(std::string_view key) const {
    if (!is_dict()) return nullptr;
    Bytes k = to_bytes(key);
    for (const auto& [dk, dv] : as_dict())
      if (dk == k) return &dv;
    return nullptr;
  }

  bool operator==(const Value& other) const { return storage_ == other.storage_; }

 private:
  Storage storage_;
};

struct DecodeError {
  std::size_t offset = 0;
  std::string message;
};

struct DecodeResult {
  std::optional<Value> value;
  std::size_t consumed = 0;
  std::optional<DecodeError> error;

  bool ok() const { return value.has_value(); }
};

namespace detail {

constexpr std::size_t kMaxDepth = 32;

inline bool decode_at(BytesView data, std::size_t& pos, std::size_t depth, Value& out,
                      DecodeError& err) {
  if (depth > kMaxDepth) {
    err = {pos, "nesting depth exceeds limit"};
    return false;
  }
  if (pos >= data.size()) {
    err = {pos, "truncated value"};
    return false;
  }
  std::uint8_t c = data[pos];
  if (c == 'i') {
    std::size_t p = pos + 1;
    bool neg = false;
    if (p < data.size() && data[p] == '-') {
      neg = true;
      ++p;
    }
    std::size_t digit_start = p;
    std::uint64_t mag = 0;
    while (p < data.size() && data[p] >= '0' && data[p] <= '9') {
      std::uint64_t d = data[p] - '0';
      if (mag > (UINT64_MAX - d) / 10) {
        err = {p, "integer overflow"};
        return false;
      }
      mag = mag * 10 + d;
      ++p;
    }
    if (p == digit_start) {
      err = {p, "integer with no digits"};
      return false;
    }
    if (p >= data.size() || data[p] != 'e') {
      err = {p, "unterminated integer"};
      return false;
    }
    // bound to int64; no BitTorrent field needs more
    if (neg) {
      if (mag > static_cast<std::uint64_t>(INT64_MAX) + 1) {
        err = {pos, "integer overflow"};
        return false;
      }
      out = Value::integer(static_cast<std::int64_t>(-static_cast<std::int64_t>(mag - 1) - 1));
    } else {
      if (mag > static_cast<std::uint64_t>(INT64_MAX)) {
        err = {pos, "integer overflow"};
        return false;
      }
      out = Value::integer(static_cast<std::int64_t>(mag));
    }
    pos = p + 1;
    return true;
  }
  if (c >= '0' && c <= '9') {
    std::size_t p = pos;
    std::uint64_t len = 0;
    while (p < data.size() && data[p] >= '0' && data[p] <= '9') {
      std::uint64_t d = data[p] - '0';
      if (len > (UINT64_MAX - d) / 10) {
        err = {p, "string length overflow"};
        return false;
      }
      len = len * 10 + d;
      ++p;
    }
    if (p >= data.size() || data[p] != ':') {
      err = {p, "expected ':' after string length"};
      return false;
    }
    ++p;
    if (len > data.size() - p) {
      err = {p, "string extends past end of input"};
      return false;
    }
    out = Value::bytes(slice(data, p, p + len));
    pos = p + static_cast<std::size_t>(len);
    return true;
  }
  if (c == 'l') {
    std::size_t p = pos + 1;
    ValueList items;
    while (true) {
      if (p >= data.size()) {
        err = {p, "unterminated list"};
        return false;
      }
      if (data[p] == 'e') {
        pos = p + 1;
        out = Value::list(std::move(items));
        return true;
      }
      Value item;
      if (!decode_at(data, p, depth + 1, item, err)) return false;
      items.push_back(std::move(item));
    }
  }
  if (c == 'd') {
    std::size_t p = pos + 1;
    DictEntries entries;
    while (true) {
      if (p >= data.size()) {
        err = {p, "unterminated dictionary"};
        return false;
      }
      if (data[p] == 'e') {
        pos = p + 1;
        out = Value::dict(std::move(entries));
        return true;
      }
      Value key;
      if (!decode_at(data, p, depth + 1, key, err)) return false;
      if (!key.is_bytes()) {
        err = {p, "dictionary key is not a byte string"};
        return false;
      }
      Value val;
      if (!decode_at(data, p, depth + 1, val, err)) return false;
      entries.emplace_back(key.as_bytes(), std::move(val));
    }
  }
  err = {pos, "unexpected byte"};
  return false;
}

}  // namespace detail

// Parses one complete value starting at `offset`; trailing bytes permitted.
inline DecodeResult decode(BytesView data, std::size_t offset = 0) {
  DecodeResult res;
  std::size_t pos = offset;
  Value v;
  DecodeError err;
  if (detail::decode_at(data, pos, 0, v, err)) {
    res.value = std::move(v);
    res.consumed = pos - offset;
  } else {
    res.error = err;
  }
  return res;
}

inline void encode_into(const Value& v, Bytes& out) {
  if (v.is_integer()) {
    std::string s = "i" + std::to_string(v.as_integer()) + "e";
    out.insert(out.end(), s.begin(), s.end());
  } else if (v.is_bytes()) {
    std::string len = std::to_string(v.as_bytes().size()) + ":";
    out.insert(out.end(), len.begin(), len.end());
    out.insert(out.end(), v.as_bytes().begin(), v.as_bytes().end());
  } else if (v.is_list()) {
    out.push_back('l');
    for (const auto& item : v.as_list()) encode_into(item, out);
    out.push_back('e');
  } else {
    out.push_back('d');
    DictEntries sorted = v.as_dict();
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [k, val] : sorted) {
      encode_into(Value::bytes(k), out);
      encode_into(val, out);
    }
    out.push_back('e');
  }
}

// Canonical encoding: dictionary keys in lexicographic byte order.
inline Bytes encode(const Value& v) {
  Bytes out;
  encode_into(v, out);
  return out;
}

// Finds `marker` anywhere in an arbitrary payload (HTTP headers, mid-stream
// data) and decodes the value that follows it. The marker is expected to end
// where a bencoded value begins, e.g. marker "5:peers" is the encoded key and
// the peers value starts right after it.
inline std::optional<std::pair<Value, std::size_t>> scan_for_value(BytesView data,
                                                                   BytesView marker) {
  std::size_t at = 0;
  while ((at = find_bytes(data, marker, at)) != std::string::npos) {
    std::size_t value_off = at + marker.size();
    DecodeResult res = decode(data, value_off);
    if (res.ok()) return std::make_pair(std::move(*res.value), value_off);
    ++at;
  }
  return std::nullopt;
}

}  // namespace btscan::bencode
