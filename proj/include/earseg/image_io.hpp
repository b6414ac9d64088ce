#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <stdexcept>
#include <string>

#include "earseg/image.hpp"
#include "earseg/mask.hpp"

namespace earseg {

// Raster file I/O (PNG/JPEG). Only the codecs are delegated; all pixel
// processing elsewhere works on the project's own containers.

inline ImageU8 load_image_rgb(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw std::runtime_error("cannot decode image '" + path + "'");
  }
  ImageU8 img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2];
      img.at(y, x, 1) = row[x][1];
      img.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

inline void save_image_rgb(const std::string& path, const ImageU8& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x][2] = img.at(y, x, 0);
      row[x][1] = img.at(y, x, 1);
      row[x][0] = img.at(y, x, 2);
    }
  }
  if (!cv::imwrite(path, bgr)) {
    throw std::runtime_error("cannot write image '" + path + "'");
  }
}

// Loads an 8-bit single-channel raster as a binary mask: any nonzero value
// is ear.
inline LabelMask load_mask(const std::string& path) {
  cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (gray.empty()) {
    throw std::runtime_error("cannot decode mask '" + path + "'");
  }
  LabelMask mask(gray.cols, gray.rows);
  for (int y = 0; y < gray.rows; ++y) {
    const std::uint8_t* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) {
      mask.values[static_cast<std::size_t>(y) * gray.cols + x] = row[x] ? 1 : 0;
    }
  }
  return mask;
}

// Writes a mask as an 8-bit single-channel PNG with values 0/255.
inline void save_mask(const std::string& path, const LabelMask& mask) {
  cv::Mat gray(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    std::uint8_t* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width; ++x) {
      row[x] = mask.at(y, x) ? 255 : 0;
    }
  }
  if (!cv::imwrite(path, gray)) {
    throw std::runtime_error("cannot write mask '" + path + "'");
  }
}

}  // namespace earseg
