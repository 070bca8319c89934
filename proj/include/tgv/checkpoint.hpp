#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tgv/tensor.hpp"

namespace tgv {

/// Single-file binary tensor container.
///
/// Layout (all integers little-endian):
///   magic "TGV1"
///   u64 manifest length, then that many bytes of "key=value\n" text
///   zero or more tensor records until end of file:
///     u64 name length, name bytes,
///     u64 rank, u64 extent per axis,
///     IEEE-754 binary64 little-endian payload (product-of-extents values)
///
/// Round-trips are bitwise lossless.
struct Container {
  std::map<std::string, std::string> manifest;  // written in key order
  std::vector<std::pair<std::string, Tensor>> tensors;  // written in order
};

void write_container(const Container& c, const std::string& path);
Container read_container(const std::string& path);

using Manifest = std::map<std::string, std::string>;

/// Manifest value formatting and strict parsing, shared by every module
/// that writes or reads flat key=value snapshots. Doubles round-trip at
/// full precision (%.17g); booleans are "true"/"false".
std::string manifest_double(double v);
std::string manifest_bool(bool b);
/// Lookups throw IoError when the key is absent and ConfigError when the
/// value does not parse exactly.
std::string manifest_get(const Manifest& m, const std::string& key);
int64_t manifest_int(const Manifest& m, const std::string& key);
uint64_t manifest_u64(const Manifest& m, const std::string& key);
double manifest_real(const Manifest& m, const std::string& key);
bool manifest_flag(const Manifest& m, const std::string& key);

/// Git-style content hash: SHA-1 over "blob <size>\0" + bytes.
std::string git_blob_sha1(const std::vector<uint8_t>& bytes);
std::string git_blob_sha1_file(const std::string& path);

/// Plain SHA-1 of a byte string, hex-encoded (exposed for tests).
std::string sha1_hex(const uint8_t* data, size_t len);

}  // namespace tgv
