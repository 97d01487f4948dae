#include "gyrocomp/flow_io.hpp"

#include "gyrocomp/errors.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace gyrocomp {
namespace {

constexpr const char* kModule = "flow_io";
constexpr std::array<char, 4> kMagic = {'P', 'I', 'E', 'H'};
constexpr std::int32_t kMaxDim = 1 << 16;

template <class T>
void putLittle(std::vector<char>& buf, T value) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

template <class T>
T getLittle(const unsigned char* p) {
  static_assert(sizeof(T) == 4);
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  T value;
  std::memcpy(&value, &bits, 4);
  return value;
}

}  // namespace

void writeFlo(const FlowField& flow, std::ostream& out) {
  std::vector<char> buf;
  buf.reserve(12 + 4 * flow.data().size());
  buf.insert(buf.end(), kMagic.begin(), kMagic.end());
  putLittle(buf, static_cast<std::int32_t>(flow.width()));
  putLittle(buf, static_cast<std::int32_t>(flow.height()));
  for (const double v : flow.data()) putLittle(buf, static_cast<float>(v));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::Io, kModule, "failed to write .flo data");
}

void writeFlo(const FlowField& flow, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string() + " for writing");
  writeFlo(flow, out);
}

FlowField readFlo(std::istream& in) {
  unsigned char header[12];
  if (!in.read(reinterpret_cast<char*>(header), 12)) {
    throw Error(ErrorKind::Parse, kModule, "truncated .flo header");
  }
  if (std::memcmp(header, kMagic.data(), 4) != 0) {
    throw Error(ErrorKind::Parse, kModule, "bad .flo magic (expected PIEH)");
  }
  const auto width = getLittle<std::int32_t>(header + 4);
  const auto height = getLittle<std::int32_t>(header + 8);
  if (width <= 0 || height <= 0 || width > kMaxDim || height > kMaxDim) {
    throw Error(ErrorKind::Parse, kModule,
                "implausible .flo size " + std::to_string(width) + "x" + std::to_string(height));
  }
  FlowField flow(width, height);
  auto data = flow.data();
  std::vector<unsigned char> raw(4 * data.size());
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw Error(ErrorKind::Parse, kModule, "truncated .flo payload");
  }
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = getLittle<float>(raw.data() + 4 * i);
  return flow;
}

FlowField readFlo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string());
  return readFlo(in);
}

}  // namespace gyrocomp
