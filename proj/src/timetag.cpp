#include "emitterforge/timetag.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>

#include "emitterforge/common.hpp"

namespace emitterforge {

std::int64_t TimeTagStream::tick_limit() const {
  return static_cast<std::int64_t>(std::ceil(duration / resolution - 1e-9));
}

std::int64_t TimeTagStream::to_ticks(double seconds) const {
  return static_cast<std::int64_t>(std::floor(seconds / resolution));
}

std::vector<std::int64_t> TimeTagStream::channel(std::uint8_t ch) const {
  std::vector<std::int64_t> out;
  for (const auto& t : tags)
    if (t.channel == ch) out.push_back(t.timestamp);
  return out;
}

std::size_t TimeTagStream::count(std::uint8_t ch) const {
  return static_cast<std::size_t>(
      std::count_if(tags.begin(), tags.end(), [ch](const TimeTag& t) { return t.channel == ch; }));
}

bool TimeTagStream::is_sorted() const {
  return std::is_sorted(tags.begin(), tags.end(), [](const TimeTag& a, const TimeTag& b) {
    return a.timestamp < b.timestamp || (a.timestamp == b.timestamp && a.channel < b.channel);
  });
}

bool TimeTagStream::is_valid() const {
  if (!is_sorted()) return false;
  if (tags.empty()) return true;
  return tags.front().timestamp >= 0 && tags.back().timestamp < tick_limit();
}

TimeTagStream merge_streams(const std::vector<TimeTagStream>& streams) {
  TimeTagStream out;
  if (streams.empty()) return out;
  out.resolution = streams.front().resolution;
  std::size_t total = 0;
  for (const auto& s : streams) {
    if (s.resolution != out.resolution) throw DomainError("merge_streams: resolution mismatch");
    out.duration = std::max(out.duration, s.duration);
    total += s.tags.size();
  }
  out.tags.reserve(total);

  // k-way merge keyed on (timestamp, channel, source index).
  using Key = std::tuple<std::int64_t, std::uint8_t, std::size_t>;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> heap;
  std::vector<std::size_t> pos(streams.size(), 0);
  for (std::size_t i = 0; i < streams.size(); ++i)
    if (!streams[i].tags.empty())
      heap.emplace(streams[i].tags[0].timestamp, streams[i].tags[0].channel, i);
  while (!heap.empty()) {
    const auto [ts, ch, src] = heap.top();
    heap.pop();
    out.tags.push_back({ch, ts});
    const auto& tags = streams[src].tags;
    if (++pos[src] < tags.size()) heap.emplace(tags[pos[src]].timestamp, tags[pos[src]].channel, src);
  }
  return out;
}

TimeTagStream relabel(TimeTagStream stream, std::uint8_t ch) {
  for (auto& t : stream.tags) t.channel = ch;
  return stream;
}

namespace ttg {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> buf{};
  auto v = static_cast<std::uint64_t>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>(v & 0xff);
    v >>= 8;
  }
  out.write(buf.data(), buf.size());
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) return false;
  std::uint64_t v = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) v = (v << 8) | buf[i];
  value = static_cast<T>(v);
  return true;
}

std::uint64_t resolution_ps(double resolution) {
  const double ps = resolution * 1e12;
  const double rounded = std::round(ps);
  if (rounded < 1.0 || std::abs(ps - rounded) > 1e-6 * rounded)
    throw DomainError("TTG1 resolution must be a whole number of picoseconds");
  return static_cast<std::uint64_t>(rounded);
}

}  // namespace

void write(std::ostream& out, const TimeTagStream& stream) {
  if (!stream.is_sorted()) throw DomainError("TTG1 streams must be sorted by timestamp");
  out.write(kMagic, 4);
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint64_t>(out, resolution_ps(stream.resolution));
  put_le<std::uint64_t>(out, stream.tags.size());
  for (const auto& t : stream.tags) {
    if (t.timestamp < 0) throw DomainError("TTG1 timestamps must be >= 0");
    put_le<std::uint8_t>(out, t.channel);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(t.timestamp));
  }
  if (!out) throw IoError("failed writing time-tag stream");
}

void write_file(const std::filesystem::path& path, const TimeTagStream& stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write(out, stream);
}

TimeTagStream read(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kMagic)) throw FormatError(0, "bad magic");
  std::uint16_t version = 0;
  if (!get_le(in, version)) throw FormatError(4, "truncated header");
  if (version != kVersion) throw FormatError(4, "unsupported version " + std::to_string(version));
  std::uint64_t res_ps = 0, count = 0;
  if (!get_le(in, res_ps)) throw FormatError(6, "truncated header");
  if (res_ps == 0) throw FormatError(6, "zero resolution");
  if (!get_le(in, count)) throw FormatError(14, "truncated header");

  TimeTagStream s;
  s.resolution = static_cast<double>(res_ps) * 1e-12;
  s.tags.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  std::uint64_t prev = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t offset = kHeaderBytes + i * kRecordBytes;
    std::uint8_t ch = 0;
    std::uint64_t ts = 0;
    if (!get_le(in, ch) || !get_le(in, ts)) throw FormatError(offset, "truncated record " + std::to_string(i));
    if (ts > static_cast<std::uint64_t>(INT64_MAX)) throw FormatError(offset + 1, "timestamp overflow");
    if (i > 0 && ts < prev) throw FormatError(offset, "timestamp out of order in record " + std::to_string(i));
    prev = ts;
    s.tags.push_back({ch, static_cast<std::int64_t>(ts)});
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(kHeaderBytes + count * kRecordBytes, "trailing bytes after last record");
  s.duration = s.tags.empty() ? 0.0 : s.to_seconds(s.tags.back().timestamp + 1);
  // Records with equal timestamps may come in any channel order; normalize.
  std::stable_sort(s.tags.begin(), s.tags.end(), [](const TimeTag& a, const TimeTag& b) {
    return a.timestamp < b.timestamp || (a.timestamp == b.timestamp && a.channel < b.channel);
  });
  return s;
}

TimeTagStream read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read(in);
}

void write_csv(std::ostream& out, const TimeTagStream& stream) {
  const std::uint64_t ps = resolution_ps(stream.resolution);
  out << "channel,timestamp_ps\n";
  for (const auto& t : stream.tags)
    out << static_cast<int>(t.channel) << ',' << static_cast<std::uint64_t>(t.timestamp) * ps << '\n';
}

}  // namespace ttg
}  // namespace emitterforge
