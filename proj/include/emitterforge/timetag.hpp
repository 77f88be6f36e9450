#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace emitterforge {

struct TimeTag {
  std::uint8_t channel = 0;
  std::int64_t timestamp = 0;  // ticks
  bool operator==(const TimeTag&) const = default;
};

/// Channel-tagged detection times, sorted by (timestamp, channel).
struct TimeTagStream {
  double resolution = 1e-12;  // seconds per tick
  double duration = 0.0;      // seconds
  std::vector<TimeTag> tags;

  std::int64_t tick_limit() const;
  std::int64_t to_ticks(double seconds) const;
  double to_seconds(std::int64_t ticks) const { return static_cast<double>(ticks) * resolution; }

  /// Timestamps of one channel, in order.
  std::vector<std::int64_t> channel(std::uint8_t ch) const;
  std::size_t count(std::uint8_t ch) const;

  bool is_sorted() const;
  /// Sorted, and every timestamp lies in [0, duration / resolution).
  bool is_valid() const;
};

/// Merges streams of equal resolution, ordering ties by channel then by the
/// index of the source stream. Duration is the maximum of the inputs.
TimeTagStream merge_streams(const std::vector<TimeTagStream>& streams);

/// Copy of `stream` with every tag moved to channel `ch`.
TimeTagStream relabel(TimeTagStream stream, std::uint8_t ch);

namespace ttg {

inline constexpr char kMagic[4] = {'T', 'T', 'G', '1'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 2 + 8 + 8;
inline constexpr std::size_t kRecordBytes = 1 + 8;

/// Resolution must be a whole number of picoseconds.
void write(std::ostream& out, const TimeTagStream& stream);
void write_file(const std::filesystem::path& path, const TimeTagStream& stream);

/// Validates magic, version, record count and global timestamp order;
/// throws FormatError with the byte offset of the first problem. The file
/// carries no duration, so it is set to (last timestamp + 1) ticks.
TimeTagStream read(std::istream& in);
TimeTagStream read_file(const std::filesystem::path& path);

/// channel,timestamp_ps
void write_csv(std::ostream& out, const TimeTagStream& stream);

}  // namespace ttg
}  // namespace emitterforge
