#pragma once

// Minimal self-contained PNG codec for 8-bit RGB images.
//
// The encoder always emits the same bytes for the same pixels: one
// fixed-Huffman deflate block with a greedy LZ77 matcher, filter type 0 on
// every scanline. No external compression library is involved, so outputs are
// identical across platforms and library versions.
//
// The decoder handles non-interlaced 8-bit RGB PNGs with any combination of
// stored / fixed / dynamic deflate blocks and scanline filters 0-4, which
// covers files written by this encoder as well as by mainstream tools.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gazelens/core.hpp"

namespace gazelens::png {

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n,
                           std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

inline std::uint32_t adler32(const std::uint8_t* data, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  std::size_t i = 0;
  while (i < n) {
    // 5552 is the largest block size before the sums can overflow 32 bits.
    std::size_t block = std::min<std::size_t>(n - i, 5552);
    for (std::size_t k = 0; k < block; ++k) {
      a += data[i + k];
      b += a;
    }
    a %= 65521;
    b %= 65521;
    i += block;
  }
  return (b << 16) | a;
}

inline constexpr std::uint16_t kLenBase[29] = {
    3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19,  23, 27,
    31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
inline constexpr std::uint8_t kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1,
                                               1, 1, 2, 2, 2, 2, 3, 3, 3, 3,
                                               4, 4, 4, 4, 5, 5, 5, 5, 0};
inline constexpr std::uint16_t kDistBase[30] = {
    1,    2,    3,    4,    5,    7,    9,    13,   17,   25,
    33,   49,   65,   97,   129,  193,  257,  385,  513,  769,
    1025, 1537, 2049, 3073, 4097, 6145, 8193, 12289, 16385, 24577};
inline constexpr std::uint8_t kDistExtra[30] = {
    0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4,  4,  5,  5,  6,
    6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

inline std::uint32_t reverse_bits(std::uint32_t v, int n) {
  std::uint32_t r = 0;
  for (int i = 0; i < n; ++i) {
    r = (r << 1) | (v & 1);
    v >>= 1;
  }
  return r;
}

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  // value's low n bits, LSB first (deflate's default packing).
  void put_bits(std::uint32_t value, int n) {
    buf_ |= static_cast<std::uint64_t>(value) << nbits_;
    nbits_ += n;
    while (nbits_ >= 8) {
      out_.push_back(static_cast<std::uint8_t>(buf_ & 0xffu));
      buf_ >>= 8;
      nbits_ -= 8;
    }
  }

  // Huffman codes are packed MSB first.
  void put_code(std::uint32_t code, int n) { put_bits(reverse_bits(code, n), n); }

  void align_byte() {
    if (nbits_ > 0) {
      out_.push_back(static_cast<std::uint8_t>(buf_ & 0xffu));
      buf_ = 0;
      nbits_ = 0;
    }
  }

 private:
  std::vector<std::uint8_t>& out_;
  std::uint64_t buf_ = 0;
  int nbits_ = 0;
};

inline void put_fixed_litlen(BitWriter& bw, int sym) {
  if (sym < 144)
    bw.put_code(0x30 + sym, 8);
  else if (sym < 256)
    bw.put_code(0x190 + sym - 144, 9);
  else if (sym < 280)
    bw.put_code(sym - 256, 7);
  else
    bw.put_code(0xc0 + sym - 280, 8);
}

// Greedy LZ77 + fixed Huffman codes, emitted as a single final block.
inline void deflate_fixed(const std::uint8_t* data, std::size_t n,
                          std::vector<std::uint8_t>& out) {
  constexpr std::size_t kWindow = 32768;
  constexpr int kMaxChain = 64;
  constexpr int kMinMatch = 3;
  constexpr int kMaxMatch = 258;

  BitWriter bw(out);
  bw.put_bits(1, 1);  // BFINAL
  bw.put_bits(1, 2);  // BTYPE = fixed Huffman

  std::vector<std::int32_t> head(1 << 15, -1);
  std::vector<std::int32_t> prev(n > 0 ? n : 1, -1);
  auto hash_at = [&](std::size_t i) {
    std::uint32_t h = (static_cast<std::uint32_t>(data[i]) << 16) ^
                      (static_cast<std::uint32_t>(data[i + 1]) << 8) ^
                      data[i + 2];
    return (h * 2654435761u) >> 17;
  };

  std::size_t pos = 0;
  while (pos < n) {
    int best_len = 0;
    std::size_t best_dist = 0;
    if (pos + kMinMatch <= n) {
      const std::uint32_t h = hash_at(pos);
      std::int32_t cand = head[h];
      int chain = kMaxChain;
      const int limit =
          static_cast<int>(std::min<std::size_t>(kMaxMatch, n - pos));
      while (cand >= 0 && chain-- > 0) {
        const std::size_t c = static_cast<std::size_t>(cand);
        if (pos - c > kWindow) break;
        int len = 0;
        while (len < limit && data[c + len] == data[pos + len]) ++len;
        if (len > best_len) {
          best_len = len;
          best_dist = pos - c;
          if (len >= limit) break;
        }
        cand = prev[c];
      }
    }

    if (best_len >= kMinMatch) {
      int lcode = 28;
      while (lcode > 0 && kLenBase[lcode] > best_len) --lcode;
      put_fixed_litlen(bw, 257 + lcode);
      bw.put_bits(static_cast<std::uint32_t>(best_len - kLenBase[lcode]),
                  kLenExtra[lcode]);
      int dcode = 29;
      while (dcode > 0 && kDistBase[dcode] > best_dist) --dcode;
      bw.put_code(static_cast<std::uint32_t>(dcode), 5);
      bw.put_bits(static_cast<std::uint32_t>(best_dist - kDistBase[dcode]),
                  kDistExtra[dcode]);
      const std::size_t match_end = pos + static_cast<std::size_t>(best_len);
      for (; pos < match_end; ++pos) {
        if (pos + kMinMatch <= n) {
          const std::uint32_t h = hash_at(pos);
          prev[pos] = head[h];
          head[h] = static_cast<std::int32_t>(pos);
        }
      }
    } else {
      put_fixed_litlen(bw, data[pos]);
      if (pos + kMinMatch <= n) {
        const std::uint32_t h = hash_at(pos);
        prev[pos] = head[h];
        head[h] = static_cast<std::int32_t>(pos);
      }
      ++pos;
    }
  }
  put_fixed_litlen(bw, 256);  // end of block
  bw.align_byte();
}

class BitReader {
 public:
  BitReader(const std::uint8_t* data, std::size_t n) : p_(data), end_(data + n) {}

  std::uint32_t get_bits(int n) {
    while (nbits_ < n) {
      if (p_ >= end_) throw IoError("png: truncated deflate stream");
      buf_ |= static_cast<std::uint64_t>(*p_++) << nbits_;
      nbits_ += 8;
    }
    const std::uint32_t v = static_cast<std::uint32_t>(buf_ & ((1u << n) - 1));
    buf_ >>= n;
    nbits_ -= n;
    return v;
  }

  void align_byte() {
    const int drop = nbits_ & 7;
    buf_ >>= drop;
    nbits_ -= drop;
  }

  const std::uint8_t* raw() const { return p_; }
  std::size_t raw_left() const { return static_cast<std::size_t>(end_ - p_); }
  void raw_advance(std::size_t k) { p_ += k; }

 private:
  const std::uint8_t* p_;
  const std::uint8_t* end_;
  std::uint64_t buf_ = 0;
  int nbits_ = 0;
};

// Canonical Huffman decoder (bit-by-bit, as in RFC 1951 section 3.2.2).
struct Huffman {
  std::array<std::uint16_t, 16> count{};
  std::vector<std::uint16_t> symbol;

  void build(const std::uint8_t* lengths, int n) {
    count.fill(0);
    for (int i = 0; i < n; ++i) ++count[lengths[i]];
    count[0] = 0;
    std::array<std::uint16_t, 16> offs{};
    for (int len = 1; len < 16; ++len) offs[len] = offs[len - 1] + count[len - 1];
    symbol.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i)
      if (lengths[i] != 0) symbol[offs[lengths[i]]++] = static_cast<std::uint16_t>(i);
  }

  int decode(BitReader& br) const {
    int code = 0, first = 0, index = 0;
    for (int len = 1; len < 16; ++len) {
      code |= static_cast<int>(br.get_bits(1));
      const int cnt = count[len];
      if (code - first < cnt) return symbol[index + (code - first)];
      index += cnt;
      first = (first + cnt) << 1;
      code <<= 1;
    }
    throw IoError("png: invalid Huffman code");
  }
};

inline void inflate_block_payload(BitReader& br, const Huffman& lit,
                                  const Huffman& dist,
                                  std::vector<std::uint8_t>& out) {
  for (;;) {
    const int sym = lit.decode(br);
    if (sym < 256) {
      out.push_back(static_cast<std::uint8_t>(sym));
    } else if (sym == 256) {
      return;
    } else {
      const int lcode = sym - 257;
      if (lcode >= 29) throw IoError("png: invalid length code");
      const int len = kLenBase[lcode] + static_cast<int>(br.get_bits(kLenExtra[lcode]));
      const int dcode = dist.decode(br);
      if (dcode >= 30) throw IoError("png: invalid distance code");
      const std::size_t d =
          kDistBase[dcode] + br.get_bits(kDistExtra[dcode]);
      if (d > out.size()) throw IoError("png: distance past window start");
      for (int k = 0; k < len; ++k) out.push_back(out[out.size() - d]);
    }
  }
}

inline std::vector<std::uint8_t> inflate(const std::uint8_t* data, std::size_t n) {
  BitReader br(data, n);
  std::vector<std::uint8_t> out;
  for (;;) {
    const std::uint32_t bfinal = br.get_bits(1);
    const std::uint32_t btype = br.get_bits(2);
    if (btype == 0) {
      br.align_byte();
      const std::uint32_t len = br.get_bits(16);
      const std::uint32_t nlen = br.get_bits(16);
      if ((len ^ 0xffffu) != nlen) throw IoError("png: stored block length check failed");
      if (br.raw_left() < len) throw IoError("png: truncated stored block");
      out.insert(out.end(), br.raw(), br.raw() + len);
      br.raw_advance(len);
    } else if (btype == 1) {
      static const auto tables = [] {
        std::pair<Huffman, Huffman> t;
        std::array<std::uint8_t, 288> ll{};
        for (int i = 0; i < 144; ++i) ll[i] = 8;
        for (int i = 144; i < 256; ++i) ll[i] = 9;
        for (int i = 256; i < 280; ++i) ll[i] = 7;
        for (int i = 280; i < 288; ++i) ll[i] = 8;
        t.first.build(ll.data(), 288);
        std::array<std::uint8_t, 30> dd{};
        dd.fill(5);
        t.second.build(dd.data(), 30);
        return t;
      }();
      inflate_block_payload(br, tables.first, tables.second, out);
    } else if (btype == 2) {
      const int hlit = static_cast<int>(br.get_bits(5)) + 257;
      const int hdist = static_cast<int>(br.get_bits(5)) + 1;
      const int hclen = static_cast<int>(br.get_bits(4)) + 4;
      static constexpr int kOrder[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                         11, 4,  12, 3, 13, 2, 14, 1, 15};
      std::array<std::uint8_t, 19> cl_lengths{};
      for (int i = 0; i < hclen; ++i)
        cl_lengths[kOrder[i]] = static_cast<std::uint8_t>(br.get_bits(3));
      Huffman cl;
      cl.build(cl_lengths.data(), 19);
      std::vector<std::uint8_t> lengths(static_cast<std::size_t>(hlit + hdist), 0);
      int i = 0;
      while (i < hlit + hdist) {
        const int sym = cl.decode(br);
        if (sym < 16) {
          lengths[i++] = static_cast<std::uint8_t>(sym);
        } else if (sym == 16) {
          if (i == 0) throw IoError("png: repeat with no previous length");
          const int rep = 3 + static_cast<int>(br.get_bits(2));
          for (int k = 0; k < rep && i < hlit + hdist; ++k, ++i)
            lengths[i] = lengths[i - 1];
        } else if (sym == 17) {
          i += 3 + static_cast<int>(br.get_bits(3));
        } else {
          i += 11 + static_cast<int>(br.get_bits(7));
        }
      }
      if (i > hlit + hdist) throw IoError("png: code length overrun");
      Huffman lit, dist;
      lit.build(lengths.data(), hlit);
      dist.build(lengths.data() + hlit, hdist);
      inflate_block_payload(br, lit, dist, out);
    } else {
      throw IoError("png: reserved block type");
    }
    if (bfinal) break;
  }
  return out;
}

inline void push_u32_be(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

inline std::uint32_t read_u32_be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::vector<std::uint8_t>& payload) {
  push_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  push_u32_be(out, crc32(body.data(), body.size()));
}

inline int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

inline constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G',
                                               '\r', '\n', 0x1a, '\n'};

// Encodes a row-major RGB8 buffer (w*h*3 bytes) as a PNG byte stream.
inline std::vector<std::uint8_t> encode(int w, int h, const std::uint8_t* rgb) {
  if (w <= 0 || h <= 0) throw Error("png: empty image");
  std::vector<std::uint8_t> out(kSignature, kSignature + 8);

  std::vector<std::uint8_t> ihdr;
  detail::push_u32_be(ihdr, static_cast<std::uint32_t>(w));
  detail::push_u32_be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // colour type: truecolour
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::append_chunk(out, "IHDR", ihdr);

  const std::size_t stride = static_cast<std::size_t>(w) * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb + static_cast<std::size_t>(y) * stride,
               rgb + static_cast<std::size_t>(y + 1) * stride);
  }

  std::vector<std::uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  detail::deflate_fixed(raw.data(), raw.size(), idat);
  detail::push_u32_be(idat, detail::adler32(raw.data(), raw.size()));
  detail::append_chunk(out, "IDAT", idat);

  detail::append_chunk(out, "IEND", {});
  return out;
}

struct Decoded {
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> rgb;  // row-major, w*h*3
};

// Decodes a non-interlaced 8-bit RGB PNG.
inline Decoded decode(const std::uint8_t* bytes, std::size_t n) {
  if (n < 8 || std::memcmp(bytes, kSignature, 8) != 0)
    throw IoError("png: bad signature");
  std::size_t pos = 8;
  Decoded img;
  bool have_ihdr = false;
  std::vector<std::uint8_t> zdata;
  while (pos + 8 <= n) {
    const std::uint32_t len = detail::read_u32_be(bytes + pos);
    if (pos + 12 + len > n) throw IoError("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(bytes + pos + 4);
    const std::uint8_t* payload = bytes + pos + 8;
    const std::uint32_t expect =
        detail::crc32(bytes + pos + 4, static_cast<std::size_t>(len) + 4);
    if (expect != detail::read_u32_be(payload + len))
      throw IoError("png: chunk crc mismatch");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("png: bad IHDR");
      img.w = static_cast<int>(detail::read_u32_be(payload));
      img.h = static_cast<int>(detail::read_u32_be(payload + 4));
      if (payload[8] != 8 || payload[9] != 2 || payload[12] != 0)
        throw IoError("png: only non-interlaced 8-bit RGB is supported");
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      zdata.insert(zdata.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!have_ihdr || img.w <= 0 || img.h <= 0) throw IoError("png: missing IHDR");
  if (zdata.size() < 6) throw IoError("png: missing image data");

  const auto raw = detail::inflate(zdata.data() + 2, zdata.size() - 6);
  const std::size_t stride = static_cast<std::size_t>(img.w) * 3;
  if (raw.size() != (stride + 1) * static_cast<std::size_t>(img.h))
    throw IoError("png: wrong decompressed size");
  if (detail::adler32(raw.data(), raw.size()) !=
      detail::read_u32_be(zdata.data() + zdata.size() - 4))
    throw IoError("png: adler32 mismatch");

  img.rgb.assign(stride * static_cast<std::size_t>(img.h), 0);
  for (int y = 0; y < img.h; ++y) {
    const std::uint8_t filter = raw[(stride + 1) * static_cast<std::size_t>(y)];
    const std::uint8_t* src = raw.data() + (stride + 1) * static_cast<std::size_t>(y) + 1;
    std::uint8_t* dst = img.rgb.data() + stride * static_cast<std::size_t>(y);
    const std::uint8_t* up = y > 0 ? dst - stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? dst[i - 3] : 0;
      const int b = up ? up[i] : 0;
      const int c = (up && i >= 3) ? up[i - 3] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += detail::paeth(a, b, c); break;
        default: throw IoError("png: unknown filter type");
      }
      dst[i] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  return img;
}

inline void write_file(const std::string& path, int w, int h,
                       const std::uint8_t* rgb) {
  const auto bytes = encode(w, h, rgb);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline Decoded read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes.data(), bytes.size());
}

}  // namespace gazelens::png
