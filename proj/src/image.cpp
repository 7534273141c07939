#include "wbh/image.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "wbh/error.hpp"

namespace wbh {
namespace {

// next whitespace-separated token, skipping '#' comment lines
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  while (true) {
    int c = in.get();
    if (c == EOF)
      throw IoError("truncated PPM header: " + path);
    if (std::isspace(c)) {
      if (!tok.empty())
        return tok;
      continue;
    }
    if (c == '#' && tok.empty()) {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    tok.push_back(char(c));
  }
}

int parse_dim(const std::string& tok, const std::string& path) {
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0)
      throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad PPM header token '" + tok + "': " + path);
  }
}

} // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open: " + path.string());
  char magic[2];
  if (!f.read(magic, 2) || magic[0] != 'P' || magic[1] != '6')
    throw IoError("not a P6 PPM file: " + path.string());
  const int w = parse_dim(next_token(f, path.string()), path.string());
  const int h = parse_dim(next_token(f, path.string()), path.string());
  const int maxval = parse_dim(next_token(f, path.string()), path.string());
  if (maxval != 255)
    throw IoError("unsupported PPM maxval " + std::to_string(maxval) + ": " +
                  path.string());
  // single whitespace byte after maxval already consumed by next_token

  Image img = Image::create(w, h);
  std::vector<std::uint8_t> raw(std::size_t(w) * h * 3);
  if (!f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
    throw IoError("truncated PPM payload: " + path.string());
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.pixels[i] = raw[i] / 255.0;
  return img;
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != std::size_t(img.width) * img.height * 3)
    throw ContractError("write_ppm: malformed image");
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open for write: " + path.string());
  f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = img.pixels[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    raw[i] = std::uint8_t(std::lround(v * 255.0));
  }
  if (!f.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size())))
    throw IoError("write failed: " + path.string());
}

} // namespace wbh
