#include "loom/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "loom/error.hpp"

namespace loom {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& in) {
  std::string out;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      out.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.peek()) != EOF && !std::isspace(c)) out.push_back(static_cast<char>(in.get()));
  return out;
}

int number(std::istream& in, const std::filesystem::path& path) {
  const std::string t = token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(t, &used);
    if (used == t.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kMalformedRecord, path.string() + ": bad PGM header field '" + t + "'");
}

}  // namespace

Grid2D read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  if (token(in) != "P5") throw Error(ErrorCode::kMalformedRecord, path.string() + ": not a binary PGM");
  const int w = number(in, path);
  const int h = number(in, path);
  const int maxval = number(in, path);
  if (maxval > 65535) throw Error(ErrorCode::kMalformedRecord, path.string() + ": maxval above 65535");
  in.get();  // single whitespace before the raster

  const std::size_t bpp = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * bpp);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": truncated raster");
  }
  std::vector<double> values(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const unsigned v = bpp == 2 ? (raw[2 * i] << 8 | raw[2 * i + 1]) : raw[i];
    values[i] = static_cast<double>(v) / maxval;
  }
  return Grid2D(w, h, 1, std::move(values));
}

void write_pgm(const Grid2D& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "P5\n" << image.width() << ' ' << image.height() << "\n65535\n";
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(image.width()) * image.height() * 2);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto v = static_cast<unsigned>(std::lround(std::clamp(image.at(x, y), 0.0, 1.0) * 65535.0));
      raw.push_back(static_cast<unsigned char>(v >> 8));
      raw.push_back(static_cast<unsigned char>(v & 0xFF));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace loom
