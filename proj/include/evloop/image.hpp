#pragma once

#include <cstdint>
#include <vector>

#include "evloop/error.hpp"
#include "evloop/explanation_map.hpp"
#include "evloop/tensor.hpp"

EVLOOP_NAMESPACE_BEGIN

/// RGB image with values in [0, 1], stored planar as a (3, H, W) tensor so it
/// can be fed to a network directly.
class Image {
 public:
  static constexpr std::size_t kChannels = 3;

  Image() = default;
  Image(std::size_t height, std::size_t width, Real fill = Real(0));
  /// Takes a (3, H, W) tensor; values are clamped to [0, 1].
  explicit Image(Tensor planes);

  std::size_t height() const { return planes_.empty() ? 0 : planes_.dim(1); }
  std::size_t width() const { return planes_.empty() ? 0 : planes_.dim(2); }
  bool empty() const { return planes_.empty(); }

  Real& at(std::size_t c, std::size_t y, std::size_t x) { return planes_.at(c, y, x); }
  Real at(std::size_t c, std::size_t y, std::size_t x) const { return planes_.at(c, y, x); }
  /// Mean over the three channels.
  Real intensity(std::size_t y, std::size_t x) const;

  const Tensor& tensor() const noexcept { return planes_; }
  Tensor& mutable_tensor() noexcept { return planes_; }
  void clamp();

  friend bool operator==(const Image& a, const Image& b) = default;

 private:
  Tensor planes_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, bool fill = false)
      : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  bool get(std::size_t y, std::size_t x) const { return bits_[y * width_ + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v = true) { bits_[y * width_ + x] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t count() const;
  bool any() const { return count() > 0; }

  BinaryMask& operator|=(const BinaryMask& other);
  friend bool operator==(const BinaryMask& a, const BinaryMask& b) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Inclusive pixel bounds.
struct FovBox {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t bottom = 0;
  std::size_t right = 0;

  std::size_t height() const { return bottom - top + 1; }
  std::size_t width() const { return right - left + 1; }
  friend bool operator==(const FovBox&, const FovBox&) = default;
};

struct FovCircle {
  double center_y = 0;
  double center_x = 0;
  double radius = 0;
};

struct PreprocessSpec {
  std::size_t target_size = 128;
  double fov_threshold = 0.06;
  double graham_alpha = 4.0;
  double graham_beta = -4.0;
  double graham_gamma = 0.5;
  double blur_sigma_fraction = 1.0 / 30.0;
  /// Outer fraction of the FOV radius blended to mid-gray.
  double border_fraction = 0.05;

  void validate() const;
};

/// Tight bounding box of pixels whose mean intensity exceeds `threshold`; the
/// full frame when no pixel does.
FovBox extract_fov_bbox(const Image& image, double threshold);

/// Square box centred on `box`, side = max(height, width). May extend past the
/// frame; pixels outside read as zero when cropped.
struct SquareCrop {
  std::ptrdiff_t top = 0;
  std::ptrdiff_t left = 0;
  std::size_t side = 0;
};
SquareCrop square_crop_for(const FovBox& box);
Image crop(const Image& image, const SquareCrop& crop);
BinaryMask crop(const BinaryMask& mask, const SquareCrop& crop);

/// Half-pixel-centre bilinear resampling with edge clamping.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
/// Same for a single (H, W) plane.
Tensor resize_plane_bilinear(const Tensor& plane, std::size_t height, std::size_t width);
/// Nearest-neighbour resize for label masks.
BinaryMask resize_nearest(const BinaryMask& mask, std::size_t height, std::size_t width);

/// Separable Gaussian blur of every channel (reflecting borders).
Tensor gaussian_blur_plane(const Tensor& plane, double sigma);

/// Largest centred disc of a square-cropped, resized frame.
FovCircle frame_fov(std::size_t height, std::size_t width);

/// out = clamp(alpha*I + beta*G_sigma(I) + gamma), sigma = fraction * FOV
/// radius; the outer border ring of the FOV and everything outside it fade to
/// mid-gray.
Image contrast_enhance(const Image& image, const PreprocessSpec& spec, const FovCircle& fov);

/// Geometry of the FOV crop applied by `preprocess`, reusable for masks.
struct PreprocessGeometry {
  SquareCrop crop;
  std::size_t target_size = 0;
};
PreprocessGeometry preprocess_geometry(const Image& raw, const PreprocessSpec& spec);
/// FOV crop, resize to target_size, contrast enhancement.
Image preprocess(const Image& raw, const PreprocessSpec& spec);
BinaryMask apply_geometry(const BinaryMask& mask, const PreprocessGeometry& geometry);

struct OtsuResult {
  BinaryMask mask;
  /// Threshold on the min-max normalised map; mask = value >= th_bin.
  Real th_bin = 0;
  /// Histogram cut index in [1, 255]: class "high" holds bins >= cut.
  std::size_t cut = 0;
  /// Constant map (or empty region): empty mask, no threshold.
  bool degenerate = false;
};

inline constexpr std::size_t kOtsuBins = 256;

/// Histogram bin of a normalised value in [0, 1].
std::size_t otsu_bin(double normalized);

/// Otsu binarisation of an explanation map. When `region` is given, only its
/// pixels contribute to the histogram and only they can be selected.
OtsuResult binarize_otsu(const ExplanationMap& map, const BinaryMask* region = nullptr);

class FullCoverageError : public Error {
 public:
  using Error::Error;
};

struct InpaintOptions {
  double tolerance = 1e-4;
  std::size_t max_sweeps = 500;
};

struct InpaintResult {
  Image image;
  std::size_t sweeps = 0;
  /// Largest per-pixel change in the final sweep (0 when nothing was masked).
  double final_update = 0;
};

/// Fills masked pixels channel by channel: an inward march seeds each pixel
/// from first-order extrapolation of known pixels within `radius`, then sweeps
/// transport the Laplacian along isophotes with anisotropic diffusion until
/// the largest update drops below the tolerance. Unmasked pixels are copied
/// bitwise.
InpaintResult inpaint_detailed(const Image& image, const BinaryMask& mask, std::size_t radius,
                               const InpaintOptions& options = {});
Image inpaint(const Image& image, const BinaryMask& mask, std::size_t radius,
              const InpaintOptions& options = {});

EVLOOP_NAMESPACE_END
