#include "semtrack/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "semtrack/error.hpp"

namespace semtrack {

namespace {

std::vector<float> from_bytes(const unsigned char* bytes, std::size_t n, double maxval) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(bytes[i] / maxval);
  return out;
}

}  // namespace

FrameImage read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path.string() + ": cannot open image");
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (next_token() != "P6") throw FormatError(path.string() + ": not a binary PPM (P6) file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token());
    h = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw FormatError(path.string() + ": unsupported PPM dimensions or maxval");
  }
  ++pos;  // single whitespace before the raster
  if (data.size() < pos + w * h * 3) throw FormatError(path.string() + ": truncated PPM raster");
  return FrameImage(w, h,
                    from_bytes(reinterpret_cast<const unsigned char*>(data.data()) + pos, w * h * 3,
                               static_cast<double>(maxval)));
}

void write_ppm(const FrameImage& image, const std::filesystem::path& path) {
  std::string out = "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  out.reserve(out.size() + image.pixels().size());
  for (float v : image.pixels()) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(path.string() + ": cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(path.string() + ": write failed");
}

FrameImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw FormatError(path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatError(path.string() + ": " + msg);
  }
  return FrameImage(img.width, img.height, from_bytes(buf.data(), buf.size(), 255.0));
}

FrameImage read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  throw FormatError(path.string() + ": unsupported image format '" + ext + "'");
}

}  // namespace semtrack
