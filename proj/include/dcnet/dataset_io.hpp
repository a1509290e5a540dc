#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcnet/rpm/types.hpp"

namespace dcnet::data {

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Header tag describing where the puzzles came from.
enum class SourceTag : std::uint8_t { center = 0, grid2x2 = 1, mixed = 2, external = 3 };

struct Dataset {
  SourceTag source = SourceTag::external;
  std::size_t image_size = 0;
  std::vector<rpm::Puzzle> puzzles;
};

/// Layout (little-endian):
///   "RPMD" | u32 version | u64 count | u32 image_size | u8 source | u8 has_provenance
///   per record: u8 answer | 16 * image_size^2 pixel bytes
///               [u8 present | kProvenanceBytes block]   when has_provenance
/// Every record has the same length, so record i sits at a fixed offset.
inline constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 4 + 1 + 1;
inline constexpr std::size_t kProvenanceBytes = 1 + 1 + 4 * 4 + 9 * 5 + 8 * 5 + 8 * 4;

std::size_t record_bytes(std::size_t image_size, bool has_provenance);

std::vector<std::uint8_t> encode_dataset(const std::vector<rpm::Puzzle>& puzzles);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& context = "dataset");

void save_dataset(const std::string& path, const std::vector<rpm::Puzzle>& puzzles);
Dataset load_dataset(const std::string& path);
/// Reads only record `index` by seeking to its offset.
rpm::Puzzle load_record(const std::string& path, std::size_t index);

/// Area-averaging resize of a square or rectangular 8-bit image to size x size.
rpm::Image resize_area(const std::uint8_t* pixels, std::size_t height, std::size_t width,
                       std::size_t size);

// External import --------------------------------------------------------------

/// One file per puzzle:
///   u32 depth | u32 height | u32 width | depth*height*width pixel bytes
///   | ASCII metadata lines, one of which is "target=<0..7>"
/// Panels 0..7 are the context in row-major order, 8..15 the choices.
std::vector<std::uint8_t> encode_external_record(const std::vector<std::uint8_t>& stack,
                                                 std::uint32_t depth, std::uint32_t height,
                                                 std::uint32_t width, int target);

struct ImportIssue {
  std::string file;
  std::string message;
};

struct ImportReport {
  std::vector<rpm::Puzzle> puzzles;
  std::vector<std::string> imported;  // file names, same order as puzzles
  std::vector<ImportIssue> rejected;
  std::size_t files_seen() const { return imported.size() + rejected.size(); }
};

/// Imports every regular file in `dir` in lexicographic name order. Bad files are
/// listed in the report and skipped; the remaining files are still imported.
ImportReport import_external(const std::filesystem::path& dir, std::size_t image_size);

// Subsampling ------------------------------------------------------------------

/// floor(n * fraction) distinct indices drawn uniformly without replacement, ascending.
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed);
std::vector<rpm::Puzzle> subsample(const std::vector<rpm::Puzzle>& puzzles, double fraction,
                                   std::uint64_t seed);

/// FNV-1a hash of answer and all pixels; identifies puzzle content.
std::uint64_t content_hash(const rpm::Puzzle& puzzle);

}  // namespace dcnet::data
