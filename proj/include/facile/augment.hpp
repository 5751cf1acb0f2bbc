#pragma once

// Image and feature-space augmentations. Images are flat channel-planar
// buffers (C x H x W, the CIFAR file order) with values in [0, 1].

#include <span>
#include <vector>

#include "facile/datasets.hpp"
#include "facile/rng.hpp"

namespace facile {

struct SimpleAugmentOptions {
  double min_scale = 0.2;  // crop area fraction
  double max_scale = 1.0;
  double min_ratio = 3.0 / 4.0;  // crop aspect ratio (width / height)
  double max_ratio = 4.0 / 3.0;
  double flip_prob = 0.5;
};

struct StrongAugmentOptions {
  SimpleAugmentOptions simple;
  double jitter_prob = 0.8;
  double brightness = 0.8;
  double contrast = 0.8;
  double saturation = 0.8;
  double hue = 0.2;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  std::size_t blur_kernel = 5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double solarize_prob = 0.2;
  double solarize_threshold = 128.0 / 255.0;

  // Milder jitter (0.4 / 0.1) used for SimSiam.
  static StrongAugmentOptions simsiam();
};

// Random resized crop, bilinear resize back to the input size, then a
// horizontal flip with probability flip_prob.
std::vector<double> augment_simple(std::span<const double> image, ImageShape shape, Rng& rng,
                                   const SimpleAugmentOptions& options = {});

// augment_simple, then color jitter, grayscale, Gaussian blur and
// solarization, each applied with its own probability. Requires 3 channels.
std::vector<double> augment_strong(std::span<const double> image, ImageShape shape, Rng& rng,
                                   const StrongAugmentOptions& options = {});

std::vector<double> horizontal_flip(std::span<const double> image, ImageShape shape);

// Crops [top, top + crop_h) x [left, left + crop_w) and resizes bilinearly to shape.
std::vector<double> resized_crop(std::span<const double> image, ImageShape shape, double top,
                                 double left, double crop_h, double crop_w);

std::vector<double> to_grayscale(std::span<const double> image, ImageShape shape);
std::vector<double> gaussian_blur(std::span<const double> image, ImageShape shape,
                                  std::size_t kernel, double sigma);
std::vector<double> solarize(std::span<const double> image, double threshold);

// Additive Gaussian noise plus random feature dropout, for non-image features.
struct NoiseAugmentOptions {
  double sigma = 0.1;
  double drop_prob = 0.1;
};

std::vector<double> augment_noise(std::span<const double> features, Rng& rng,
                                  const NoiseAugmentOptions& options = {});

}  // namespace facile
