#include "stimusel/frames.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "stimusel/error.hpp"

namespace stimusel {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

// Consumes PGM whitespace/comments between header tokens.
void skip_pgm_separators(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

unsigned read_pgm_uint(std::istream& in, const std::filesystem::path& path, const char* what) {
  skip_pgm_separators(in);
  unsigned value = 0;
  if (!(in >> value)) throw Error("invalid PGM " + std::string(what) + " in " + path.string());
  return value;
}

Frame decode_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open frame file: " + path.string());
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5')
    throw Error("unsupported PGM variant (only binary P5) in " + path.string());
  const unsigned width = read_pgm_uint(in, path, "width");
  const unsigned height = read_pgm_uint(in, path, "height");
  const unsigned maxval = read_pgm_uint(in, path, "maxval");
  if (width == 0 || height == 0) throw Error("zero-sized PGM image: " + path.string());
  if (maxval == 0 || maxval > 255)
    throw Error("PGM maxval " + std::to_string(maxval) + " unsupported (need 1..255) in " + path.string());
  in.get();  // single whitespace byte before the raster

  Frame f;
  f.height = static_cast<int>(height);
  f.width = static_cast<int>(width);
  f.gray.resize(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(f.gray.data()), static_cast<std::streamsize>(f.gray.size()));
  if (in.gcount() != static_cast<std::streamsize>(f.gray.size()))
    throw Error("truncated PGM raster in " + path.string());
  return f;
}

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

Frame decode_png(const std::filesystem::path& path, FrameMode mode) {
  PngReadCloser ctx;
  ctx.fp = std::fopen(path.string().c_str(), "rb");
  if (!ctx.fp) throw Error("cannot open frame file: " + path.string());

  png_byte header[8];
  if (std::fread(header, 1, 8, ctx.fp) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw Error("not a PNG file: " + path.string());

  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw Error("libpng init failed for " + path.string());
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw Error("libpng init failed for " + path.string());
  if (setjmp(png_jmpbuf(ctx.png))) throw Error("undecodable PNG file: " + path.string());

  png_init_io(ctx.png, ctx.fp);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  const png_uint_32 width = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 height = png_get_image_height(ctx.png, ctx.info);
  const int color_type = png_get_color_type(ctx.png, ctx.info);
  const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);

  // Normalize every input to 8-bit RGB or 8-bit gray.
  if (bit_depth == 16) png_set_strip_16(ctx.png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const int channels = png_get_channels(ctx.png, ctx.info);
  if (channels != 1 && channels != 3)
    throw Error("unsupported PNG channel count in " + path.string());

  const std::size_t rowbytes = png_get_rowbytes(ctx.png, ctx.info);
  std::vector<std::uint8_t> raster(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raster.data() + y * rowbytes;
  png_read_image(ctx.png, rows.data());

  Frame f;
  f.height = static_cast<int>(height);
  f.width = static_cast<int>(width);
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  f.gray.resize(pixels);
  if (channels == 1) {
    for (png_uint_32 y = 0; y < height; ++y)
      std::memcpy(f.gray.data() + static_cast<std::size_t>(y) * width, rows[y], width);
    if (mode == FrameMode::kRgb) {
      f.rgb.resize(pixels * 3);
      for (std::size_t i = 0; i < pixels; ++i) {
        f.rgb[3 * i] = f.rgb[3 * i + 1] = f.rgb[3 * i + 2] = f.gray[i];
      }
    }
  } else {
    // Gray always derives from our own integer luma so that flow values
    // do not depend on the decoder's conversion.
    if (mode == FrameMode::kRgb) f.rgb.assign(raster.begin(), raster.end());
    for (std::size_t i = 0; i < pixels; ++i)
      f.gray[i] = luma_bt601(raster[3 * i], raster[3 * i + 1], raster[3 * i + 2]);
  }
  return f;
}

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

void write_png(const std::filesystem::path& path, int height, int width,
               const std::vector<std::uint8_t>& pixels, int color_type, int channels) {
  if (height <= 0 || width <= 0 ||
      pixels.size() != static_cast<std::size_t>(height) * width * channels)
    throw Error("PNG pixel buffer does not match dimensions for " + path.string());

  PngWriteCloser ctx;
  ctx.fp = std::fopen(path.string().c_str(), "wb");
  if (!ctx.fp) throw Error("cannot open file for writing: " + path.string());
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw Error("libpng init failed for " + path.string());
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw Error("libpng init failed for " + path.string());
  if (setjmp(png_jmpbuf(ctx.png))) throw Error("PNG write failed: " + path.string());

  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y)
    png_write_row(ctx.png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * rowbytes));
  png_write_end(ctx.png, nullptr);
}

}  // namespace

std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  const long rounded = std::lround(y);
  return static_cast<std::uint8_t>(std::clamp(rounded, 0L, 255L));
}

Frame decode_image_file(const std::filesystem::path& path, FrameMode mode) {
  const std::string ext = lower_ext(path);
  if (ext == ".pgm") return decode_pgm(path);
  if (ext == ".png") return decode_png(path, mode);
  throw Error("unsupported frame file type: " + path.string());
}

VideoFrames load_frame_sequence(const std::filesystem::path& dir, FrameMode mode) {
  if (!std::filesystem::is_directory(dir))
    throw Error("frame directory does not exist: " + dir.string());

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower_ext(entry.path());
    if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
  }
  if (files.empty())
    throw Error("no .pgm/.png frames found in directory: " + dir.string());

  // Frame order is a pure function of filenames, not of directory listing order.
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  VideoFrames video;
  video.source_id = dir.filename().string().empty() ? dir.string() : dir.filename().string();
  video.frames.reserve(files.size());
  for (const auto& file : files) {
    Frame f = decode_image_file(file, mode);
    if (!video.frames.empty() &&
        (f.height != video.frames.front().height || f.width != video.frames.front().width)) {
      throw Error("mixed frame resolutions: " + file.filename().string() + " is " +
                  std::to_string(f.width) + "x" + std::to_string(f.height) + " but " +
                  files.front().filename().string() + " is " +
                  std::to_string(video.frames.front().width) + "x" +
                  std::to_string(video.frames.front().height));
    }
    video.frames.push_back(std::move(f));
  }
  return video;
}

void write_pgm(const std::filesystem::path& path, int height, int width,
               const std::vector<std::uint8_t>& gray) {
  if (height <= 0 || width <= 0 || gray.size() != static_cast<std::size_t>(height) * width)
    throw Error("PGM pixel buffer does not match dimensions for " + path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open file for writing: " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_png_gray(const std::filesystem::path& path, int height, int width,
                    const std::vector<std::uint8_t>& gray) {
  write_png(path, height, width, gray, PNG_COLOR_TYPE_GRAY, 1);
}

void write_png_rgb(const std::filesystem::path& path, int height, int width,
                   const std::vector<std::uint8_t>& rgb) {
  write_png(path, height, width, rgb, PNG_COLOR_TYPE_RGB, 3);
}

}  // namespace stimusel
