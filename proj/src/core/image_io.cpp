#include "phaseseg/core/image_io.hpp"

#include "phaseseg/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <array>
#include <cstring>
#include <fstream>

namespace phaseseg {

namespace fs = std::filesystem;

namespace {

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

}  // namespace

Image read_image(const fs::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) fail(ErrorKind::io, "cannot read image " + path.string());
  Image out(mat.cols, mat.rows, 3);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      out.at(y, x, 0) = row[x][2];
      out.at(y, x, 1) = row[x][1];
      out.at(y, x, 2) = row[x][0];
    }
  }
  return out;
}

void write_image(const fs::path& path, const Image& image) {
  ensure_parent(path);
  cv::Mat mat;
  if (image.channels() == 1) {
    mat = cv::Mat(image.height(), image.width(), CV_8UC1);
    std::memcpy(mat.data, image.data().data(), image.data().size());
  } else if (image.channels() == 3) {
    mat = cv::Mat(image.height(), image.width(), CV_8UC3);
    for (int y = 0; y < image.height(); ++y) {
      auto* row = mat.ptr<cv::Vec3b>(y);
      for (int x = 0; x < image.width(); ++x)
        row[x] = cv::Vec3b(image.at(y, x, 2), image.at(y, x, 1), image.at(y, x, 0));
    }
  } else {
    fail(ErrorKind::invalid_argument, "unsupported channel count for " + path.string());
  }
  if (!cv::imwrite(path.string(), mat)) fail(ErrorKind::io, "cannot write " + path.string());
}

LabelMap read_label_map(const fs::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) fail(ErrorKind::io, "cannot read label map " + path.string());
  if (mat.type() != CV_8UC1) {
    fail(ErrorKind::parse, "label map " + path.string() + " is not 8-bit single-channel");
  }
  LabelMap out(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y)
    std::memcpy(&out(y, 0), mat.ptr<std::uint8_t>(y), static_cast<std::size_t>(mat.cols));
  return out;
}

void write_label_map(const fs::path& path, const LabelMap& labels) {
  ensure_parent(path);
  cv::Mat mat(labels.height(), labels.width(), CV_8UC1);
  std::memcpy(mat.data, labels.data().data(), labels.data().size());
  if (!cv::imwrite(path.string(), mat)) fail(ErrorKind::io, "cannot write " + path.string());
}

std::pair<int, int> png_dimensions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::array<unsigned char, 24> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  static constexpr std::array<unsigned char, 8> kSignature = {0x89, 'P', 'N', 'G',
                                                              '\r', '\n', 0x1a, '\n'};
  if (in.gcount() != 24 || std::memcmp(header.data(), kSignature.data(), 8) != 0 ||
      std::memcmp(header.data() + 12, "IHDR", 4) != 0) {
    fail(ErrorKind::parse, path.string() + " is not a PNG file");
  }
  auto be32 = [&](int off) {
    return (static_cast<int>(header[off]) << 24) | (header[off + 1] << 16) |
           (header[off + 2] << 8) | header[off + 3];
  };
  return {be32(16), be32(20)};
}

}  // namespace phaseseg
