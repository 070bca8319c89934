#include "tgv/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tgv {

namespace {

constexpr char kMagic[4] = {'T', 'G', 'V', '1'};

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) const {
    if (pos + n > buf.size()) {
      throw IoError("truncated container: " + path);
    }
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  bool eof() const { return pos == buf.size(); }
};

}  // namespace

void write_container(const Container& c, const std::string& path) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);

  std::string manifest;
  for (const auto& [k, v] : c.manifest) {
    manifest += k;
    manifest += '=';
    manifest += v;
    manifest += '\n';
  }
  put_u64(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());

  for (const auto& [name, t] : c.tensors) {
    put_u64(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, t.shape().size());
    for (int64_t e : t.shape()) put_u64(out, static_cast<uint64_t>(e));
    for (int64_t i = 0; i < t.size(); ++i) put_f64(out, t.data()[i]);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  Reader r{buf, 0, path};

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw IoError("bad magic, not a TGV1 container: " + path);
  }
  r.pos = 4;

  Container c;
  const uint64_t mlen = r.u64();
  std::string manifest = r.bytes(mlen);
  size_t line_start = 0;
  while (line_start < manifest.size()) {
    size_t nl = manifest.find('\n', line_start);
    if (nl == std::string::npos) nl = manifest.size();
    std::string line = manifest.substr(line_start, nl - line_start);
    line_start = nl + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError("malformed manifest line in " + path + ": " + line);
    }
    c.manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }

  while (!r.eof()) {
    const uint64_t nlen = r.u64();
    std::string name = r.bytes(nlen);
    const uint64_t rank = r.u64();
    Shape shape(rank);
    int64_t count = 1;
    for (uint64_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int64_t>(r.u64());
      count *= shape[i];
    }
    std::vector<double> data(static_cast<size_t>(count));
    r.need(static_cast<size_t>(count) * 8);
    for (int64_t i = 0; i < count; ++i) data[static_cast<size_t>(i)] = r.f64();
    c.tensors.emplace_back(std::move(name),
                           Tensor::from_data(std::move(shape), std::move(data)));
  }
  return c;
}

// ---- SHA-1 (FIPS 180-1), enough for content addressing ----

namespace {

struct Sha1 {
  uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u,
                   0xC3D2E1F0u};
  uint64_t total = 0;
  uint8_t block[64];
  size_t fill = 0;

  static uint32_t rol(uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

  void process(const uint8_t* p) {
    uint32_t w[80];
    for (int i = 0; i < 16; ++i) {
      w[i] = (uint32_t(p[4 * i]) << 24) | (uint32_t(p[4 * i + 1]) << 16) |
             (uint32_t(p[4 * i + 2]) << 8) | uint32_t(p[4 * i + 3]);
    }
    for (int i = 16; i < 80; ++i)
      w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int i = 0; i < 80; ++i) {
      uint32_t f, k;
      if (i < 20) {
        f = (b & c) | ((~b) & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      const uint32_t tmp = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = tmp;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
  }

  void update(const uint8_t* data, size_t len) {
    total += len;
    while (len > 0) {
      const size_t take = std::min(len, sizeof(block) - fill);
      std::memcpy(block + fill, data, take);
      fill += take;
      data += take;
      len -= take;
      if (fill == 64) {
        process(block);
        fill = 0;
      }
    }
  }

  std::string finish() {
    const uint64_t bits = total * 8;
    const uint8_t one = 0x80;
    update(&one, 1);
    const uint8_t zero = 0x00;
    while (fill != 56) update(&zero, 1);
    uint8_t len_be[8];
    for (int i = 0; i < 8; ++i)
      len_be[i] = static_cast<uint8_t>(bits >> (8 * (7 - i)));
    update(len_be, 8);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (uint32_t v : h) {
      for (int i = 3; i >= 0; --i) {
        const uint8_t byte = static_cast<uint8_t>(v >> (8 * i));
        out += hex[byte >> 4];
        out += hex[byte & 0xF];
      }
    }
    return out;
  }
};

}  // namespace

std::string sha1_hex(const uint8_t* data, size_t len) {
  Sha1 s;
  s.update(data, len);
  return s.finish();
}

std::string git_blob_sha1(const std::vector<uint8_t>& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size());
  Sha1 s;
  s.update(reinterpret_cast<const uint8_t*>(header.data()), header.size());
  const uint8_t nul = 0;
  s.update(&nul, 1);
  s.update(bytes.data(), bytes.size());
  return s.finish();
}

std::string git_blob_sha1_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  return git_blob_sha1(buf);
}

std::string manifest_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string manifest_bool(bool b) { return b ? "true" : "false"; }

std::string manifest_get(const Manifest& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw IoError("manifest missing key '" + key + "'");
  return it->second;
}

int64_t manifest_int(const Manifest& m, const std::string& key) {
  const std::string s = manifest_get(m, key);
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected an integer for '" + key + "', got '" + s + "'");
  }
}

uint64_t manifest_u64(const Manifest& m, const std::string& key) {
  const std::string s = manifest_get(m, key);
  try {
    size_t pos = 0;
    // stoull silently wraps negatives, so reject them up front.
    if (s.find('-') != std::string::npos) throw std::invalid_argument(s);
    const uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected an unsigned integer for '" + key + "', got '" + s +
                      "'");
  }
}

double manifest_real(const Manifest& m, const std::string& key) {
  const std::string s = manifest_get(m, key);
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected a number for '" + key + "', got '" + s + "'");
  }
}

bool manifest_flag(const Manifest& m, const std::string& key) {
  const std::string s = manifest_get(m, key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected a boolean for '" + key + "', got '" + s + "'");
}

}  // namespace tgv
