#include "evloop/image.hpp"

#include <algorithm>
#include <cmath>

EVLOOP_NAMESPACE_BEGIN

namespace {

Real clamp01(double v) { return static_cast<Real>(std::clamp(v, 0.0, 1.0)); }

// Bilinear sampling of a single plane of size (h, w) into (oh, ow).
void resample_plane(const Real* src, std::size_t h, std::size_t w, Real* dst, std::size_t oh,
                    std::size_t ow) {
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1];
      const double bot = (1.0 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1];
      dst[y * ow + x] = static_cast<Real>((1.0 - wy) * top + wy * bot);
    }
  }
}

std::size_t reflect101(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto m = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * (m - 1) - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

Image::Image(std::size_t height, std::size_t width, Real fill)
    : planes_({kChannels, height, width}, std::clamp(fill, Real(0), Real(1))) {}

Image::Image(Tensor planes) : planes_(std::move(planes)) {
  if (planes_.rank() != 3 || planes_.dim(0) != kChannels) {
    throw ShapeError("image tensor must be (3, H, W), got " + shape_to_string(planes_.shape()));
  }
  clamp();
}

Real Image::intensity(std::size_t y, std::size_t x) const {
  return (at(0, y, x) + at(1, y, x) + at(2, y, x)) / Real(3);
}

void Image::clamp() {
  for (auto& v : planes_.values()) {
    v = std::isfinite(v) ? std::clamp(v, Real(0), Real(1)) : Real(0);
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
  if (other.height_ != height_ || other.width_ != width_) {
    throw ShapeError("mask dimensions differ");
  }
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
  return *this;
}

void PreprocessSpec::validate() const {
  if (target_size < 32) throw ArgumentError("target_size must be >= 32");
  if (!(blur_sigma_fraction > 0)) throw ArgumentError("blur_sigma_fraction must be > 0");
  if (!(border_fraction >= 0 && border_fraction < 1)) {
    throw ArgumentError("border_fraction must be in [0, 1)");
  }
}

FovBox extract_fov_bbox(const Image& image, double threshold) {
  if (image.empty()) throw ArgumentError("empty image");
  const std::size_t h = image.height(), w = image.width();
  FovBox box{h, w, 0, 0};
  bool found = false;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (image.intensity(y, x) > threshold) {
        found = true;
        box.top = std::min(box.top, y);
        box.bottom = std::max(box.bottom, y);
        box.left = std::min(box.left, x);
        box.right = std::max(box.right, x);
      }
    }
  }
  if (!found) return FovBox{0, 0, h - 1, w - 1};
  return box;
}

SquareCrop square_crop_for(const FovBox& box) {
  const std::size_t side = std::max(box.height(), box.width());
  SquareCrop c;
  c.side = side;
  c.top = static_cast<std::ptrdiff_t>(box.top) -
          static_cast<std::ptrdiff_t>((side - box.height()) / 2);
  c.left = static_cast<std::ptrdiff_t>(box.left) -
           static_cast<std::ptrdiff_t>((side - box.width()) / 2);
  return c;
}

Image crop(const Image& image, const SquareCrop& c) {
  Image out(c.side, c.side, Real(0));
  const auto h = static_cast<std::ptrdiff_t>(image.height());
  const auto w = static_cast<std::ptrdiff_t>(image.width());
  for (std::size_t ch = 0; ch < Image::kChannels; ++ch) {
    for (std::size_t y = 0; y < c.side; ++y) {
      const std::ptrdiff_t sy = c.top + static_cast<std::ptrdiff_t>(y);
      if (sy < 0 || sy >= h) continue;
      for (std::size_t x = 0; x < c.side; ++x) {
        const std::ptrdiff_t sx = c.left + static_cast<std::ptrdiff_t>(x);
        if (sx < 0 || sx >= w) continue;
        out.at(ch, y, x) = image.at(ch, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  }
  return out;
}

BinaryMask crop(const BinaryMask& mask, const SquareCrop& c) {
  BinaryMask out(c.side, c.side);
  const auto h = static_cast<std::ptrdiff_t>(mask.height());
  const auto w = static_cast<std::ptrdiff_t>(mask.width());
  for (std::size_t y = 0; y < c.side; ++y) {
    const std::ptrdiff_t sy = c.top + static_cast<std::ptrdiff_t>(y);
    if (sy < 0 || sy >= h) continue;
    for (std::size_t x = 0; x < c.side; ++x) {
      const std::ptrdiff_t sx = c.left + static_cast<std::ptrdiff_t>(x);
      if (sx < 0 || sx >= w) continue;
      out.set(y, x, mask.get(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)));
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ArgumentError("resize target must be >= 1");
  if (image.empty()) throw ArgumentError("cannot resize an empty image");
  if (height == image.height() && width == image.width()) return image;
  Tensor out({Image::kChannels, height, width});
  const std::size_t h = image.height(), w = image.width();
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    resample_plane(image.tensor().data() + c * h * w, h, w, out.data() + c * height * width,
                   height, width);
  }
  return Image(std::move(out));
}

Tensor resize_plane_bilinear(const Tensor& plane, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ArgumentError("resize target must be >= 1");
  if (plane.rank() != 2) throw ShapeError("expected an (H, W) plane");
  if (plane.dim(0) == height && plane.dim(1) == width) return plane;
  Tensor out({height, width});
  resample_plane(plane.data(), plane.dim(0), plane.dim(1), out.data(), height, width);
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ArgumentError("resize target must be >= 1");
  if (height == mask.height() && width == mask.width()) return mask;
  BinaryMask out(height, width);
  const double sy = static_cast<double>(mask.height()) / static_cast<double>(height);
  const double sx = static_cast<double>(mask.width()) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const auto iy = std::min(static_cast<std::size_t>((static_cast<double>(y) + 0.5) * sy),
                             mask.height() - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const auto ix = std::min(static_cast<std::size_t>((static_cast<double>(x) + 0.5) * sx),
                               mask.width() - 1);
      out.set(y, x, mask.get(iy, ix));
    }
  }
  return out;
}

Tensor gaussian_blur_plane(const Tensor& plane, double sigma) {
  if (!(sigma > 0)) throw ArgumentError("blur sigma must be > 0");
  const std::size_t h = plane.dim(0), w = plane.dim(1);
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = v;
    norm += v;
  }
  for (auto& v : kernel) v /= norm;

  std::vector<double> tmp(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        s += kernel[static_cast<std::size_t>(k + radius)] *
             plane[y * w + reflect101(static_cast<std::ptrdiff_t>(x) + k, w)];
      }
      tmp[y * w + x] = s;
    }
  }
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        s += kernel[static_cast<std::size_t>(k + radius)] *
             tmp[reflect101(static_cast<std::ptrdiff_t>(y) + k, h) * w + x];
      }
      out[y * w + x] = static_cast<Real>(s);
    }
  }
  return out;
}

FovCircle frame_fov(std::size_t height, std::size_t width) {
  return FovCircle{(static_cast<double>(height) - 1.0) / 2.0,
                   (static_cast<double>(width) - 1.0) / 2.0,
                   static_cast<double>(std::min(height, width)) / 2.0};
}

Image contrast_enhance(const Image& image, const PreprocessSpec& spec, const FovCircle& fov) {
  spec.validate();
  const std::size_t h = image.height(), w = image.width();
  const double sigma = spec.blur_sigma_fraction * fov.radius;
  const double inner = fov.radius * (1.0 - spec.border_fraction);
  Tensor out({Image::kChannels, h, w});
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    Tensor plane({h, w});
    std::copy_n(image.tensor().data() + c * h * w, h * w, plane.data());
    const Tensor blurred = gaussian_blur_plane(plane, sigma);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - fov.center_y;
        const double dx = static_cast<double>(x) - fov.center_x;
        const double d = std::sqrt(dy * dy + dx * dx);
        double enh = spec.graham_alpha * plane[y * w + x] +
                     spec.graham_beta * blurred[y * w + x] + spec.graham_gamma;
        double weight = 0.0;
        if (d >= fov.radius) {
          weight = 1.0;
        } else if (d > inner) {
          weight = (d - inner) / (fov.radius - inner);
        }
        enh = (1.0 - weight) * enh + weight * 0.5;
        out[(c * h + y) * w + x] = clamp01(enh);
      }
    }
  }
  return Image(std::move(out));
}

PreprocessGeometry preprocess_geometry(const Image& raw, const PreprocessSpec& spec) {
  spec.validate();
  return PreprocessGeometry{square_crop_for(extract_fov_bbox(raw, spec.fov_threshold)),
                            spec.target_size};
}

Image preprocess(const Image& raw, const PreprocessSpec& spec) {
  const PreprocessGeometry g = preprocess_geometry(raw, spec);
  const Image resized = resize_bilinear(crop(raw, g.crop), g.target_size, g.target_size);
  return contrast_enhance(resized, spec, frame_fov(g.target_size, g.target_size));
}

BinaryMask apply_geometry(const BinaryMask& mask, const PreprocessGeometry& geometry) {
  return resize_nearest(crop(mask, geometry.crop), geometry.target_size, geometry.target_size);
}

EVLOOP_NAMESPACE_END
