#include "facile/augment.hpp"

#include <algorithm>
#include <cmath>

#include "facile/error.hpp"

namespace facile {

namespace {

void require_shape(std::span<const double> image, ImageShape shape, const char* op) {
  if (!shape.is_image() || image.size() != shape.numel()) {
    throw DimensionError(std::string(op) + ": buffer of " + std::to_string(image.size()) +
                         " values does not match image shape " + std::to_string(shape.channels) +
                         "x" + std::to_string(shape.height) + "x" + std::to_string(shape.width));
  }
}

void require_rgb(ImageShape shape, const char* op) {
  if (shape.channels != 3) throw ContractError(std::string(op) + ": needs a 3-channel image");
}

void clamp01(std::vector<double>& v) {
  for (double& x : v) x = std::clamp(x, 0.0, 1.0);
}

double gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  v = mx;
  s = mx > 0.0 ? delta / mx : 0.0;
  if (delta == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) {
    h = (g - b) / delta;
  } else if (mx == g) {
    h = 2.0 + (b - r) / delta;
  } else {
    h = 4.0 + (r - g) / delta;
  }
  h /= 6.0;
  h -= std::floor(h);
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double h6 = h * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

void color_jitter(std::vector<double>& img, ImageShape shape, Rng& rng,
                  const StrongAugmentOptions& o) {
  const std::size_t plane = shape.height * shape.width;
  double* R = img.data();
  double* G = R + plane;
  double* B = G + plane;
  const double bf = uniform(rng, std::max(0.0, 1.0 - o.brightness), 1.0 + o.brightness);
  const double cf = uniform(rng, std::max(0.0, 1.0 - o.contrast), 1.0 + o.contrast);
  const double sf = uniform(rng, std::max(0.0, 1.0 - o.saturation), 1.0 + o.saturation);
  const double hf = uniform(rng, -o.hue, o.hue);

  for (double& x : img) x *= bf;
  clamp01(img);

  double mean_gray = 0.0;
  for (std::size_t p = 0; p < plane; ++p) mean_gray += gray(R[p], G[p], B[p]);
  mean_gray /= static_cast<double>(plane);
  for (double& x : img) x = (x - mean_gray) * cf + mean_gray;
  clamp01(img);

  for (std::size_t p = 0; p < plane; ++p) {
    const double l = gray(R[p], G[p], B[p]);
    R[p] = (R[p] - l) * sf + l;
    G[p] = (G[p] - l) * sf + l;
    B[p] = (B[p] - l) * sf + l;
  }
  clamp01(img);

  for (std::size_t p = 0; p < plane; ++p) {
    double h, s, v;
    rgb_to_hsv(R[p], G[p], B[p], h, s, v);
    h += hf;
    h -= std::floor(h);
    hsv_to_rgb(h, s, v, R[p], G[p], B[p]);
  }
  clamp01(img);
}

}  // namespace

StrongAugmentOptions StrongAugmentOptions::simsiam() {
  StrongAugmentOptions o;
  o.brightness = o.contrast = o.saturation = 0.4;
  o.hue = 0.1;
  return o;
}

std::vector<double> horizontal_flip(std::span<const double> image, ImageShape shape) {
  require_shape(image, shape, "horizontal_flip");
  std::vector<double> out(image.size());
  const std::size_t H = shape.height, W = shape.width;
  for (std::size_t c = 0; c < shape.channels; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        out[(c * H + y) * W + x] = image[(c * H + y) * W + (W - 1 - x)];
      }
    }
  }
  return out;
}

std::vector<double> resized_crop(std::span<const double> image, ImageShape shape, double top,
                                 double left, double crop_h, double crop_w) {
  require_shape(image, shape, "resized_crop");
  const std::size_t H = shape.height, W = shape.width;
  crop_h = std::max(crop_h, 1.0);
  crop_w = std::max(crop_w, 1.0);
  std::vector<double> out(image.size());
  const double sy = crop_h / static_cast<double>(H);
  const double sx = crop_w / static_cast<double>(W);
  for (std::size_t y = 0; y < H; ++y) {
    // Pixel-center alignment; an uncropped full window maps every pixel onto itself.
    double fy = top + (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(H - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < W; ++x) {
      double fx = left + (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(W - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < shape.channels; ++c) {
        const double* p = image.data() + c * H * W;
        const double top_v = p[y0 * W + x0] * (1.0 - wx) + p[y0 * W + x1] * wx;
        const double bot_v = p[y1 * W + x0] * (1.0 - wx) + p[y1 * W + x1] * wx;
        out[(c * H + y) * W + x] = top_v * (1.0 - wy) + bot_v * wy;
      }
    }
  }
  return out;
}

std::vector<double> augment_simple(std::span<const double> image, ImageShape shape, Rng& rng,
                                   const SimpleAugmentOptions& options) {
  require_shape(image, shape, "augment_simple");
  const double H = static_cast<double>(shape.height), W = static_cast<double>(shape.width);
  const double area = H * W;
  const double scale = uniform(rng, options.min_scale, options.max_scale);
  const double log_ratio = uniform(rng, std::log(options.min_ratio), std::log(options.max_ratio));
  const double ratio = std::exp(log_ratio);
  double crop_w = std::round(std::sqrt(area * scale * ratio));
  double crop_h = std::round(std::sqrt(area * scale / ratio));
  crop_w = std::clamp(crop_w, 1.0, W);
  crop_h = std::clamp(crop_h, 1.0, H);
  const double top = std::floor(uniform(rng, 0.0, H - crop_h + 1.0));
  const double left = std::floor(uniform(rng, 0.0, W - crop_w + 1.0));
  std::vector<double> out = resized_crop(image, shape, std::min(top, H - crop_h),
                                         std::min(left, W - crop_w), crop_h, crop_w);
  if (bernoulli(rng, options.flip_prob)) out = horizontal_flip(out, shape);
  return out;
}

std::vector<double> to_grayscale(std::span<const double> image, ImageShape shape) {
  require_shape(image, shape, "to_grayscale");
  require_rgb(shape, "to_grayscale");
  const std::size_t plane = shape.height * shape.width;
  std::vector<double> out(image.size());
  for (std::size_t p = 0; p < plane; ++p) {
    const double l = gray(image[p], image[plane + p], image[2 * plane + p]);
    out[p] = out[plane + p] = out[2 * plane + p] = l;
  }
  return out;
}

std::vector<double> gaussian_blur(std::span<const double> image, ImageShape shape,
                                  std::size_t kernel, double sigma) {
  require_shape(image, shape, "gaussian_blur");
  if (kernel % 2 == 0) throw ContractError("gaussian_blur: kernel size must be odd");
  const auto radius = static_cast<std::ptrdiff_t>(kernel / 2);
  std::vector<double> weights(kernel);
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    weights[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : weights) w /= total;
  const auto H = static_cast<std::ptrdiff_t>(shape.height);
  const auto W = static_cast<std::ptrdiff_t>(shape.width);
  auto reflect = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return std::ptrdiff_t{0};
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  std::vector<double> tmp(image.size()), out(image.size());
  for (std::size_t c = 0; c < shape.channels; ++c) {
    const double* src = image.data() + c * shape.height * shape.width;
    double* mid = tmp.data() + c * shape.height * shape.width;
    double* dst = out.data() + c * shape.height * shape.width;
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        double s = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          s += weights[static_cast<std::size_t>(k + radius)] * src[y * W + reflect(x + k, W)];
        }
        mid[y * W + x] = s;
      }
    }
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        double s = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          s += weights[static_cast<std::size_t>(k + radius)] * mid[reflect(y + k, H) * W + x];
        }
        dst[y * W + x] = s;
      }
    }
  }
  return out;
}

std::vector<double> solarize(std::span<const double> image, double threshold) {
  std::vector<double> out(image.begin(), image.end());
  for (double& x : out) {
    if (x >= threshold) x = 1.0 - x;
  }
  return out;
}

std::vector<double> augment_strong(std::span<const double> image, ImageShape shape, Rng& rng,
                                   const StrongAugmentOptions& options) {
  require_shape(image, shape, "augment_strong");
  require_rgb(shape, "augment_strong");
  std::vector<double> out = augment_simple(image, shape, rng, options.simple);
  if (bernoulli(rng, options.jitter_prob)) color_jitter(out, shape, rng, options);
  if (bernoulli(rng, options.grayscale_prob)) out = to_grayscale(out, shape);
  if (bernoulli(rng, options.blur_prob)) {
    const double sigma = uniform(rng, options.blur_sigma_min, options.blur_sigma_max);
    out = gaussian_blur(out, shape, options.blur_kernel, sigma);
  }
  if (bernoulli(rng, options.solarize_prob)) out = solarize(out, options.solarize_threshold);
  clamp01(out);
  return out;
}

std::vector<double> augment_noise(std::span<const double> features, Rng& rng,
                                  const NoiseAugmentOptions& options) {
  std::vector<double> out(features.begin(), features.end());
  for (double& x : out) {
    if (bernoulli(rng, options.drop_prob)) {
      x = 0.0;
    } else {
      x += options.sigma * standard_normal(rng);
    }
  }
  return out;
}

}  // namespace facile
