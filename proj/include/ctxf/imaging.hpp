#pragma once

#include "ctxf/geometry.hpp"
#include "ctxf/image.hpp"

namespace ctxf {

/// BT.601 luma of an RGB image. Throws TypeError for any other colorspace.
Image to_luma(const Image& img);

/// Hexcone HSV with all channels in [0,1] (hue divided by 360 degrees).
Image rgb_to_hsv(const Image& img);
Image hsv_to_rgb(const Image& img);

/// Separable Gaussian blur.
///
/// Kernel truncated at radius ceil(3 sigma) and renormalized to unit sum;
/// borders replicate the edge sample. Any output pixel whose support touches
/// an invalid input pixel is marked invalid.
Image gaussian_blur(const Image& img, double sigma);

/// The normalized 1-D kernel used by gaussian_blur (length 2*radius+1).
std::vector<double> gaussian_kernel(double sigma);

/// Inverse-mapped bilinear warp of `img` by `transform` into an
/// out_width x out_height frame. Output pixels whose preimage lies outside
/// the source raster (or touches an invalid source pixel) are invalid and 0.
Image warp_affine(const Image& img, const AffineTransform& transform, int out_width,
                  int out_height);

/// Bilinear sample of channel `c` at continuous coordinates. Returns false
/// when (x, y) lies outside the sample grid [0, w-1] x [0, h-1] or a
/// contributing sample is invalid.
bool sample_bilinear(const Image& img, double x, double y, int c, double& out);

/// Grayscale input returned as-is, RGB reduced with to_luma.
Image luminance(const Image& img);

/// Clamp every sample to [0,1].
void clamp_unit(Image& img);

}  // namespace ctxf
