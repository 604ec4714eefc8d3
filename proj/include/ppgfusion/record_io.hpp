#pragma once

// On-disk formats. All multi-byte values are little-endian regardless of the
// host. See README.md for the byte layouts.

#include "ppgfusion/signal.hpp"
#include "ppgfusion/templates.hpp"
#include "ppgfusion/training.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ppgfusion {

inline constexpr std::uint16_t kRecordVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A tagged trailing block of a record file.
struct RecordBlock {
  std::array<char, 4> tag{};
  std::vector<std::uint8_t> payload;
};

/// Generic content of a record file: named channels of equal length stored as
/// 32-bit floats, plus trailing blocks.
struct RecordFile {
  std::string subject_id;
  double fs = 128.0;
  std::vector<std::string> channel_names;
  std::vector<Eigen::VectorXf> channels;
  std::vector<RecordBlock> blocks;

  const RecordBlock* find_block(const char (&tag)[5]) const;
};

std::vector<std::uint8_t> encode_record_file(const RecordFile& file);
/// Throws FormatError on a bad magic, version, truncation or a payload whose
/// length disagrees with the header. Unknown blocks are kept, not rejected.
RecordFile decode_record_file(const std::vector<std::uint8_t>& bytes);

/// Channels green, red, ir, ecg; ground truth goes into a "GTRU" block.
RecordFile to_record_file(const MultiChannelRecord& record);
MultiChannelRecord from_record_file(const RecordFile& file);

/// One "reference" channel with its valid span ("RSPN") and the detected R
/// peaks ("RPKS"). Templates are not stored.
RecordFile to_reference_file(const std::string& subject_id, const PreparedReference& ref);
PreparedReference from_reference_file(const RecordFile& file);

/// A single named channel, e.g. a fused output.
RecordFile to_series_file(const std::string& subject_id, const std::string& channel,
                          const TimeSeries& series);
TimeSeries from_series_file(const RecordFile& file);

std::vector<std::uint8_t> encode_checkpoint(const FusionModel<float>& model);
/// Throws FormatError, including when a tensor's name or shape disagrees with
/// the layout implied by the stored configuration.
FusionModel<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Reads a whole file; throws InvalidInput if it cannot be opened.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file then renames it into place. Throws
/// InvalidInput if the file cannot be written.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

void save_record(const std::filesystem::path& path, const MultiChannelRecord& record);
MultiChannelRecord load_record(const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const FusionModel<float>& model);
FusionModel<float> load_checkpoint(const std::filesystem::path& path);

struct ManifestEntry {
  std::string subject_id;
  std::string file;  // relative to the manifest's directory
  std::int64_t samples = 0;
  double fs = 0.0;
};

std::string manifest_to_text(const std::vector<ManifestEntry>& entries);
/// Throws FormatError.
std::vector<ManifestEntry> parse_manifest(const std::string& text);

/// Tab-separated per-epoch history with a header line.
std::string history_to_text(const TrainingHistory& history);

}  // namespace ppgfusion
