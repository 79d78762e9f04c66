#include "ctxf/image_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "ctxf/error.hpp"
#include "ctxf/imaging.hpp"

namespace ctxf {

namespace {

constexpr std::array<char, 4> kThmMagic{'T', 'H', 'M', '1'};

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write " + path.string());
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IoError("cannot read image " + path.string());
  if (mat.channels() != 1) mat = cv::imread(path.string(), cv::IMREAD_COLOR | cv::IMREAD_ANYDEPTH);
  const double scale = mat.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  if (mat.depth() != CV_8U && mat.depth() != CV_16U) {
    throw IoError("unsupported sample depth in " + path.string());
  }
  const bool gray = mat.channels() == 1;
  Image img(mat.cols, mat.rows, gray ? ColorSpace::Gray : ColorSpace::RGB);
  cv::Mat f;
  mat.convertTo(f, CV_64F, scale);
  for (int y = 0; y < f.rows; ++y) {
    const double* row = f.ptr<double>(y);
    for (int x = 0; x < f.cols; ++x) {
      if (gray) {
        img.at(x, y) = row[x];
      } else {
        // OpenCV stores BGR.
        img.at(x, y, 0) = row[x * 3 + 2];
        img.at(x, y, 1) = row[x * 3 + 1];
        img.at(x, y, 2) = row[x * 3];
      }
    }
  }
  return img;
}

void write_image(const std::filesystem::path& path, const Image& src) {
  const Image img = src.colorspace == ColorSpace::HSV ? hsv_to_rgb(src) : src;
  const bool gray = img.channels == 1;
  cv::Mat mat(img.height, img.width, gray ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const int dst = gray ? x : x * 3 + (2 - c);
        row[dst] = static_cast<std::uint8_t>(std::lround(std::clamp(img.at(x, y, c), 0.0, 1.0) * 255.0));
      }
    }
  }
  write_or_throw(path, mat);
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat mat(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) mat.at<std::uint8_t>(y, x) = mask.at(x, y) ? 255 : 0;
  }
  write_or_throw(path, mat);
}

Mask read_mask(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw IoError("cannot read mask " + path.string());
  Mask mask(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) mask.at(x, y) = mat.at<std::uint8_t>(y, x) >= 128 ? 1 : 0;
  }
  return mask;
}

void write_heatmap_sidecar(const std::filesystem::path& path, const HeatMap& map) {
  if (map.width > 0xffff || map.height > 0xffff) {
    throw FormatError("heat map too large for the sidecar header");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kThmMagic.data(), kThmMagic.size());
  put_u16(os, static_cast<std::uint16_t>(map.width));
  put_u16(os, static_cast<std::uint16_t>(map.height));
  static_assert(std::endian::native == std::endian::little, "sidecar writer assumes little-endian");
  for (std::size_t i = 0; i < map.pixel_count(); ++i) {
    const float v = map.valid[i] ? static_cast<float>(map.scores[i])
                                 : std::numeric_limits<float>::quiet_NaN();
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  if (!os) throw IoError("short write on " + path.string());
}

HeatMap read_heatmap_sidecar(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::array<unsigned char, 8> header{};
  is.read(reinterpret_cast<char*>(header.data()), header.size());
  if (is.gcount() != 8 || std::memcmp(header.data(), kThmMagic.data(), 4) != 0) {
    throw FormatError("not a THM1 sidecar: " + path.string());
  }
  HeatMap map(get_u16(&header[4]), get_u16(&header[6]));
  std::vector<float> buf(map.pixel_count());
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (static_cast<std::size_t>(is.gcount()) != buf.size() * 4) {
    throw FormatError("truncated THM1 sidecar: " + path.string());
  }
  for (std::size_t i = 0; i < buf.size(); ++i) {
    map.valid[i] = std::isnan(buf[i]) ? 0 : 1;
    map.scores[i] = map.valid[i] ? buf[i] : 0.0;
  }
  return map;
}

void write_heatmap_png(const std::filesystem::path& path, const HeatMap& map) {
  cv::Mat mat(map.height, map.width, CV_16UC1);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const double s = map.is_valid(x, y) ? std::clamp(map.at(x, y), 0.0, 1.0) : 0.0;
      mat.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(std::lround(s * 65535.0));
    }
  }
  write_or_throw(path, mat);
}

}  // namespace ctxf
