#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stimusel {

enum class FrameMode { kGray, kRgb };

/// One decoded frame. `gray` is always populated; `rgb` (interleaved
/// R,G,B) is kept only when the sequence was loaded in rgb mode from a
/// color source.
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> gray;  // height*width
  std::vector<std::uint8_t> rgb;   // empty or 3*height*width

  bool has_rgb() const { return !rgb.empty(); }
};

struct VideoFrames {
  std::vector<Frame> frames;
  std::string source_id;

  std::size_t frame_count() const { return frames.size(); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
};

/// Integer BT.601 luma: round(0.299R + 0.587G + 0.114B).
std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Loads every .pgm/.png file in `dir` (case-insensitive extensions),
/// ordered by lexicographic filename. All frames must share one
/// resolution. Errors name the offending file.
VideoFrames load_frame_sequence(const std::filesystem::path& dir, FrameMode mode);

/// Decodes a single image file (PGM P5 or PNG) to a Frame.
Frame decode_image_file(const std::filesystem::path& path, FrameMode mode);

void write_pgm(const std::filesystem::path& path, int height, int width,
               const std::vector<std::uint8_t>& gray);
void write_png_gray(const std::filesystem::path& path, int height, int width,
                    const std::vector<std::uint8_t>& gray);
void write_png_rgb(const std::filesystem::path& path, int height, int width,
                   const std::vector<std::uint8_t>& rgb);

}  // namespace stimusel
