// Copyright 2026 The WarpAdapt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "warpadapt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "warpadapt/parallel.hpp"

namespace warpadapt {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void require_rank(const std::string& op, const Variable& v, std::size_t rank, const char* name) {
  if (!v.defined()) shape_error(op, std::string(name) + " is undefined");
  if (v.value().rank() != rank) {
    shape_error(op, std::string(name) + " must be rank " + std::to_string(rank) + ", got " +
                        shape_to_string(v.shape()));
  }
}

void require_finite(const std::string& op, const Tensor& t) {
  if (!t.all_finite()) throw NumericalError(op + ": non-finite value in output");
}

// Geometry shared by the standard and the deformable convolution.
struct ConvDims {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kernel, out_height, out_width;
  std::size_t taps() const { return kernel * kernel; }
  std::size_t positions() const { return out_height * out_width; }
  std::size_t col_rows() const { return channels * taps(); }
};

ConvDims conv_dims(const std::string& op, const Variable& input, const Variable& weight, const Variable& bias,
                   const ConvGeometry& g) {
  require_rank(op, input, 4, "input");
  require_rank(op, weight, 4, "weight");
  if (g.stride < 1 || g.dilation < 1 || g.padding < 0) {
    shape_error(op, "stride and dilation must be >= 1 and padding >= 0");
  }
  ConvDims d{};
  d.batch = input.shape()[0];
  d.channels = input.shape()[1];
  d.height = input.shape()[2];
  d.width = input.shape()[3];
  d.out_channels = weight.shape()[0];
  d.kernel = weight.shape()[2];
  if (weight.shape()[1] != d.channels) {
    shape_error(op, "weight " + shape_to_string(weight.shape()) + " does not match input channels " +
                        std::to_string(d.channels));
  }
  if (weight.shape()[3] != d.kernel) shape_error(op, "kernel must be square");
  if (d.kernel % 2 == 0) shape_error(op, "kernel size must be odd, got " + std::to_string(d.kernel));
  if (bias.defined() && (bias.value().rank() != 1 || bias.shape()[0] != d.out_channels)) {
    shape_error(op, "bias " + shape_to_string(bias.shape()) + " does not match " +
                        std::to_string(d.out_channels) + " output channels");
  }
  d.out_height = conv_output_extent(d.height, d.kernel, g);
  d.out_width = conv_output_extent(d.width, d.kernel, g);
  return d;
}

void im2col(const double* image, const ConvDims& d, const ConvGeometry& g, double* col) {
  const std::size_t k = d.kernel;
  const std::size_t P = d.positions();
  for (std::size_t c = 0; c < d.channels; ++c) {
    const double* plane = image + c * d.height * d.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = col + ((c * k + ki) * k + kj) * P;
        for (std::size_t oh = 0; oh < d.out_height; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride - g.padding + static_cast<long>(ki) * g.dilation;
          double* dst = row + oh * d.out_width;
          if (ih < 0 || ih >= static_cast<long>(d.height)) {
            std::fill(dst, dst + d.out_width, 0.0);
            continue;
          }
          const double* src = plane + ih * d.width;
          for (std::size_t ow = 0; ow < d.out_width; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride - g.padding + static_cast<long>(kj) * g.dilation;
            dst[ow] = (iw >= 0 && iw < static_cast<long>(d.width)) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvDims& d, const ConvGeometry& g, double* image) {
  const std::size_t k = d.kernel;
  const std::size_t P = d.positions();
  for (std::size_t c = 0; c < d.channels; ++c) {
    double* plane = image + c * d.height * d.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = col + ((c * k + ki) * k + kj) * P;
        for (std::size_t oh = 0; oh < d.out_height; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride - g.padding + static_cast<long>(ki) * g.dilation;
          if (ih < 0 || ih >= static_cast<long>(d.height)) continue;
          double* dst = plane + ih * d.width;
          const double* src = row + oh * d.out_width;
          for (std::size_t ow = 0; ow < d.out_width; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride - g.padding + static_cast<long>(kj) * g.dilation;
            if (iw >= 0 && iw < static_cast<long>(d.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Bilinear footprint of one sampling location: four neighbor indices into a
// plane (or -1 when outside) and the interpolation fractions.
struct Footprint {
  long idx[4];
  double fx, fy;

  double weight(int n) const {
    switch (n) {
      case 0: return (1.0 - fy) * (1.0 - fx);
      case 1: return (1.0 - fy) * fx;
      case 2: return fy * (1.0 - fx);
      default: return fy * fx;
    }
  }
};

Footprint footprint(std::size_t height, std::size_t width, double u, double v) {
  Footprint fp{};
  const double x0f = std::floor(u);
  const double y0f = std::floor(v);
  fp.fx = u - x0f;
  fp.fy = v - y0f;
  const long H = static_cast<long>(height);
  const long W = static_cast<long>(width);
  // Coordinates far outside the plane contribute nothing; clamp before the
  // integer conversion so huge offsets cannot overflow.
  const double lim = static_cast<double>(std::max(H, W)) + 2.0;
  const long x0 = static_cast<long>(std::clamp(x0f, -lim, lim));
  const long y0 = static_cast<long>(std::clamp(y0f, -lim, lim));
  const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int n = 0; n < 4; ++n) {
    fp.idx[n] = (xs[n] >= 0 && xs[n] < W && ys[n] >= 0 && ys[n] < H) ? ys[n] * W + xs[n] : -1;
  }
  return fp;
}

inline double sample(const double* plane, const Footprint& fp) {
  double acc = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (fp.idx[n] >= 0) acc += fp.weight(n) * plane[fp.idx[n]];
  }
  return acc;
}

// d(sample)/du and d(sample)/dv with missing neighbors read as zero.
inline void sample_coord_grad(const double* plane, const Footprint& fp, double& du, double& dv) {
  const double m00 = fp.idx[0] >= 0 ? plane[fp.idx[0]] : 0.0;
  const double m01 = fp.idx[1] >= 0 ? plane[fp.idx[1]] : 0.0;
  const double m10 = fp.idx[2] >= 0 ? plane[fp.idx[2]] : 0.0;
  const double m11 = fp.idx[3] >= 0 ? plane[fp.idx[3]] : 0.0;
  du = (1.0 - fp.fy) * (m01 - m00) + fp.fy * (m11 - m10);
  dv = (1.0 - fp.fx) * (m10 - m00) + fp.fx * (m11 - m01);
}

inline void scatter(double* plane, const Footprint& fp, double g) {
  for (int n = 0; n < 4; ++n) {
    if (fp.idx[n] >= 0) plane[fp.idx[n]] += fp.weight(n) * g;
  }
}

Footprint deform_footprint(const ConvDims& d, const ConvGeometry& g, const double* offsets, std::size_t t,
                           std::size_t p) {
  const std::size_t P = d.positions();
  const std::size_t oh = p / d.out_width;
  const std::size_t ow = p % d.out_width;
  const std::size_t ki = t / d.kernel;
  const std::size_t kj = t % d.kernel;
  const double u = static_cast<double>(static_cast<long>(ow) * g.stride - g.padding +
                                       static_cast<long>(kj) * g.dilation) +
                   offsets[(2 * t) * P + p];
  const double v = static_cast<double>(static_cast<long>(oh) * g.stride - g.padding +
                                       static_cast<long>(ki) * g.dilation) +
                   offsets[(2 * t + 1) * P + p];
  return footprint(d.height, d.width, u, v);
}

void deform_im2col(const double* image, const double* offsets, const ConvDims& d, const ConvGeometry& g,
                   double* col) {
  const std::size_t P = d.positions();
  const std::size_t T = d.taps();
  const std::size_t plane_size = d.height * d.width;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < P; ++p) {
      const Footprint fp = deform_footprint(d, g, offsets, t, p);
      for (std::size_t c = 0; c < d.channels; ++c) {
        col[(c * T + t) * P + p] = sample(image + c * plane_size, fp);
      }
    }
  }
}

void add_bias(const Variable& bias, const ConvDims& d, double* out) {
  if (!bias.defined()) return;
  const std::size_t P = d.positions();
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    const double b = bias.value()[o];
    double* row = out + o * P;
    for (std::size_t p = 0; p < P; ++p) row[p] += b;
  }
}

void accumulate_bias_grad(Variable bias, const Tensor& grad_out, const ConvDims& d) {
  const std::size_t P = d.positions();
  Tensor& gb = bias.grad();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      const double* row = grad_out.ptr() + (n * d.out_channels + o) * P;
      double s = 0.0;
      for (std::size_t p = 0; p < P; ++p) s += row[p];
      gb[o] += s;
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g) {
  const long span = static_cast<long>(g.dilation) * (static_cast<long>(kernel) - 1) + 1;
  const long padded = static_cast<long>(in) + 2L * g.padding;
  if (padded < span) {
    throw std::invalid_argument("convolution input extent " + std::to_string(in) + " too small for kernel " +
                                std::to_string(kernel) + " with dilation " + std::to_string(g.dilation));
  }
  return static_cast<std::size_t>((padded - span) / g.stride + 1);
}

Variable conv2d(Tape& tape, const Variable& input, const Variable& weight, const Variable& bias,
                const ConvGeometry& geometry) {
  const ConvDims d = conv_dims("conv2d", input, weight, bias, geometry);
  const std::size_t P = d.positions();
  const std::size_t R = d.col_rows();
  const bool record = tape.should_record({&input, &weight, &bias});
  const bool keep_cols = record && weight.requires_grad();

  Tensor out({d.batch, d.out_channels, d.out_height, d.out_width});
  auto cols = std::make_shared<std::vector<std::vector<double>>>(keep_cols ? d.batch : 0);
  ConstMapMatrix w(weight.value().ptr(), static_cast<long>(d.out_channels), static_cast<long>(R));

  parallel_for(d.batch, [&](std::size_t n) {
    std::vector<double> col(R * P);
    im2col(input.value().ptr() + n * d.channels * d.height * d.width, d, geometry, col.data());
    MapMatrix y(out.ptr() + n * d.out_channels * P, static_cast<long>(d.out_channels), static_cast<long>(P));
    y.noalias() = w * ConstMapMatrix(col.data(), static_cast<long>(R), static_cast<long>(P));
    add_bias(bias, d, y.data());
    if (keep_cols) (*cols)[n] = std::move(col);
  });
  require_finite("conv2d", out);

  Variable result(std::move(out), record);
  if (!record) return result;

  tape.record([result, input, weight, bias, geometry, d, cols]() mutable {
    if (!result.has_grad()) return;
    const Tensor& gy = result.grad();
    const std::size_t P = d.positions();
    const std::size_t R = d.col_rows();
    const long O = static_cast<long>(d.out_channels);
    if (bias.requires_grad()) accumulate_bias_grad(bias, gy, d);
    if (weight.requires_grad()) {
      std::vector<RowMatrix> partial(d.batch);
      parallel_for(d.batch, [&](std::size_t n) {
        ConstMapMatrix gyn(gy.ptr() + n * d.out_channels * P, O, static_cast<long>(P));
        ConstMapMatrix col((*cols)[n].data(), static_cast<long>(R), static_cast<long>(P));
        partial[n].noalias() = gyn * col.transpose();
      });
      MapMatrix gw(weight.grad().ptr(), O, static_cast<long>(R));
      for (const auto& p : partial) gw += p;
    }
    if (input.requires_grad()) {
      Tensor& gx = input.grad();
      ConstMapMatrix w(weight.value().ptr(), O, static_cast<long>(R));
      parallel_for(d.batch, [&](std::size_t n) {
        ConstMapMatrix gyn(gy.ptr() + n * d.out_channels * P, O, static_cast<long>(P));
        RowMatrix gcol = w.transpose() * gyn;
        col2im_add(gcol.data(), d, geometry, gx.ptr() + n * d.channels * d.height * d.width);
      });
    }
  });
  return result;
}

Variable deform_conv2d(Tape& tape, const Variable& input, const Variable& offsets, const Variable& weight,
                       const Variable& bias, const ConvGeometry& geometry) {
  const ConvDims d = conv_dims("deform_conv2d", input, weight, bias, geometry);
  require_rank("deform_conv2d", offsets, 4, "offsets");
  const Shape expected{d.batch, 2 * d.taps(), d.out_height, d.out_width};
  if (offsets.shape() != expected) {
    shape_error("deform_conv2d", "offsets " + shape_to_string(offsets.shape()) + " expected " +
                                     shape_to_string(expected));
  }
  const std::size_t P = d.positions();
  const std::size_t R = d.col_rows();
  const bool record = tape.should_record({&input, &offsets, &weight, &bias});
  const bool keep_cols = record && weight.requires_grad();

  Tensor out({d.batch, d.out_channels, d.out_height, d.out_width});
  auto cols = std::make_shared<std::vector<std::vector<double>>>(keep_cols ? d.batch : 0);
  ConstMapMatrix w(weight.value().ptr(), static_cast<long>(d.out_channels), static_cast<long>(R));

  parallel_for(d.batch, [&](std::size_t n) {
    std::vector<double> col(R * P);
    deform_im2col(input.value().ptr() + n * d.channels * d.height * d.width,
                  offsets.value().ptr() + n * 2 * d.taps() * P, d, geometry, col.data());
    MapMatrix y(out.ptr() + n * d.out_channels * P, static_cast<long>(d.out_channels), static_cast<long>(P));
    y.noalias() = w * ConstMapMatrix(col.data(), static_cast<long>(R), static_cast<long>(P));
    add_bias(bias, d, y.data());
    if (keep_cols) (*cols)[n] = std::move(col);
  });
  require_finite("deform_conv2d", out);

  Variable result(std::move(out), record);
  if (!record) return result;

  tape.record([result, input, offsets, weight, bias, geometry, d, cols]() mutable {
    if (!result.has_grad()) return;
    const Tensor& gy = result.grad();
    const std::size_t P = d.positions();
    const std::size_t R = d.col_rows();
    const std::size_t T = d.taps();
    const std::size_t plane_size = d.height * d.width;
    const long O = static_cast<long>(d.out_channels);
    if (bias.requires_grad()) accumulate_bias_grad(bias, gy, d);
    if (weight.requires_grad()) {
      std::vector<RowMatrix> partial(d.batch);
      parallel_for(d.batch, [&](std::size_t n) {
        ConstMapMatrix gyn(gy.ptr() + n * d.out_channels * P, O, static_cast<long>(P));
        ConstMapMatrix col((*cols)[n].data(), static_cast<long>(R), static_cast<long>(P));
        partial[n].noalias() = gyn * col.transpose();
      });
      MapMatrix gw(weight.grad().ptr(), O, static_cast<long>(R));
      for (const auto& p : partial) gw += p;
    }
    const bool want_x = input.requires_grad();
    const bool want_off = offsets.requires_grad();
    if (!want_x && !want_off) return;
    double* gx = want_x ? input.grad().ptr() : nullptr;
    double* goff = want_off ? offsets.grad().ptr() : nullptr;
    ConstMapMatrix w(weight.value().ptr(), O, static_cast<long>(R));
    parallel_for(d.batch, [&](std::size_t n) {
      ConstMapMatrix gyn(gy.ptr() + n * d.out_channels * P, O, static_cast<long>(P));
      RowMatrix gcol = w.transpose() * gyn;
      const double* x = input.value().ptr() + n * d.channels * plane_size;
      const double* off = offsets.value().ptr() + n * 2 * T * P;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t p = 0; p < P; ++p) {
          const Footprint fp = deform_footprint(d, geometry, off, t, p);
          double du = 0.0;
          double dv = 0.0;
          for (std::size_t c = 0; c < d.channels; ++c) {
            const double g = gcol(static_cast<long>(c * T + t), static_cast<long>(p));
            if (g == 0.0) continue;
            if (gx) scatter(gx + (n * d.channels + c) * plane_size, fp, g);
            if (goff) {
              double su = 0.0;
              double sv = 0.0;
              sample_coord_grad(x + c * plane_size, fp, su, sv);
              du += g * su;
              dv += g * sv;
            }
          }
          if (goff) {
            goff[n * 2 * T * P + (2 * t) * P + p] += du;
            goff[n * 2 * T * P + (2 * t + 1) * P + p] += dv;
          }
        }
      }
    });
  });
  return result;
}

double bilinear_value(const double* plane, std::size_t height, std::size_t width, double u, double v) {
  return sample(plane, footprint(height, width, u, v));
}

Variable bilinear_sample(Tape& tape, const Variable& map, const Variable& u, const Variable& v) {
  require_rank("bilinear_sample", map, 3, "map");
  if (!u.defined() || !v.defined() || u.value().numel() != 1 || v.value().numel() != 1) {
    shape_error("bilinear_sample", "coordinates must be scalars");
  }
  const std::size_t C = map.shape()[0];
  const std::size_t H = map.shape()[1];
  const std::size_t W = map.shape()[2];
  const Footprint fp = footprint(H, W, u.value()[0], v.value()[0]);
  Tensor out({C});
  for (std::size_t c = 0; c < C; ++c) out[c] = sample(map.value().ptr() + c * H * W, fp);
  require_finite("bilinear_sample", out);
  const bool record = tape.should_record({&map, &u, &v});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, map, u, v, fp, C, H, W]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    if (map.requires_grad()) {
      Tensor& gm = map.grad();
      for (std::size_t c = 0; c < C; ++c) scatter(gm.ptr() + c * H * W, fp, g[c]);
    }
    if (u.requires_grad() || v.requires_grad()) {
      double du = 0.0;
      double dv = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        double su = 0.0;
        double sv = 0.0;
        sample_coord_grad(map.value().ptr() + c * H * W, fp, su, sv);
        du += g[c] * su;
        dv += g[c] * sv;
      }
      if (u.requires_grad()) u.grad()[0] += du;
      if (v.requires_grad()) v.grad()[0] += dv;
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Batch normalization

BNState BNState::fresh(std::size_t channels) {
  BNState s;
  s.running_mean = Tensor({channels}, 0.0);
  s.running_var = Tensor({channels}, 1.0);
  return s;
}

Variable batchnorm2d(Tape& tape, const Variable& input, const Variable& gamma, const Variable& beta,
                     BNState& state, bool training) {
  require_rank("batchnorm2d", input, 4, "input");
  const std::size_t B = input.shape()[0];
  const std::size_t C = input.shape()[1];
  const std::size_t HW = input.shape()[2] * input.shape()[3];
  const Shape per_channel{C};
  if (gamma.shape() != per_channel || beta.shape() != per_channel || state.running_mean.shape() != per_channel ||
      state.running_var.shape() != per_channel) {
    shape_error("batchnorm2d", "per-channel parameters must have shape " + shape_to_string(per_channel));
  }
  const std::size_t m = B * HW;
  if (training && m < 2) {
    throw std::invalid_argument("batchnorm2d: training mode needs at least 2 values per channel, got " +
                                std::to_string(m));
  }
  const Tensor& x = input.value();
  Tensor out(x.shape());
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<Tensor>(per_channel);

  for (std::size_t c = 0; c < C; ++c) {
    double mean;
    double var;
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = x.ptr() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      mean = s / static_cast<double>(m);
      double q = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = x.ptr() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) q += (p[i] - mean) * (p[i] - mean);
      }
      var = q / static_cast<double>(m);
      const double unbiased = q / static_cast<double>(m - 1);
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + state.eps);
    (*inv_std)[c] = is;
    const double gm = gamma.value()[c];
    const double bt = beta.value()[c];
    for (std::size_t b = 0; b < B; ++b) {
      const double* p = x.ptr() + (b * C + c) * HW;
      double* xh = xhat->ptr() + (b * C + c) * HW;
      double* o = out.ptr() + (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        xh[i] = (p[i] - mean) * is;
        o[i] = xh[i] * gm + bt;
      }
    }
  }
  require_finite("batchnorm2d", out);
  const bool record = tape.should_record({&input, &gamma, &beta});
  Variable result(std::move(out), record);
  if (!record) return result;

  tape.record([result, input, gamma, beta, xhat, inv_std, training, B, C, HW, m]() mutable {
    if (!result.has_grad()) return;
    const Tensor& gy = result.grad();
    Tensor* gx = input.requires_grad() ? &input.grad() : nullptr;
    for (std::size_t c = 0; c < C; ++c) {
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* g = gy.ptr() + (b * C + c) * HW;
        const double* xh = xhat->ptr() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          sum_g += g[i];
          sum_gx += g[i] * xh[i];
        }
      }
      if (gamma.requires_grad()) gamma.grad()[c] += sum_gx;
      if (beta.requires_grad()) beta.grad()[c] += sum_g;
      if (!gx) continue;
      const double scale = gamma.value()[c] * (*inv_std)[c];
      const double mean_g = sum_g / static_cast<double>(m);
      const double mean_gx = sum_gx / static_cast<double>(m);
      for (std::size_t b = 0; b < B; ++b) {
        const double* g = gy.ptr() + (b * C + c) * HW;
        const double* xh = xhat->ptr() + (b * C + c) * HW;
        double* dst = gx->ptr() + (b * C + c) * HW;
        if (training) {
          for (std::size_t i = 0; i < HW; ++i) dst[i] += scale * (g[i] - mean_g - xh[i] * mean_gx);
        } else {
          for (std::size_t i = 0; i < HW; ++i) dst[i] += scale * g[i];
        }
      }
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Pointwise and structural ops

Variable relu(Tape& tape, const Variable& input) {
  if (!input.defined()) shape_error("relu", "input is undefined");
  Tensor out(input.shape());
  const Tensor& x = input.value();
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] < 0.0 ? 0.0 : x[i];  // NaN passes through
  require_finite("relu", out);
  const bool record = tape.should_record({&input});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, input]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    const Tensor& x = input.value();
    Tensor& gx = input.grad();
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (x[i] > 0.0) gx[i] += g[i];
    }
  });
  return result;
}

namespace {

// Source rows/cols and weights for half-pixel 2x upsampling along one axis.
struct UpTap {
  std::size_t lo, hi;
  double w_lo, w_hi;
};

std::vector<UpTap> upsample_taps(std::size_t n) {
  std::vector<UpTap> taps(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t prev = i == 0 ? 0 : i - 1;
    const std::size_t next = i + 1 < n ? i + 1 : n - 1;
    taps[2 * i] = {prev, i, 0.25, 0.75};
    taps[2 * i + 1] = {i, next, 0.75, 0.25};
  }
  return taps;
}

}  // namespace

Variable upsample_bilinear2x(Tape& tape, const Variable& input) {
  require_rank("upsample_bilinear2x", input, 4, "input");
  const std::size_t B = input.shape()[0];
  const std::size_t C = input.shape()[1];
  const std::size_t H = input.shape()[2];
  const std::size_t W = input.shape()[3];
  const auto ty = upsample_taps(H);
  const auto tx = upsample_taps(W);
  Tensor out({B, C, 2 * H, 2 * W});
  const Tensor& x = input.value();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* src = x.ptr() + bc * H * W;
    double* dst = out.ptr() + bc * 4 * H * W;
    for (std::size_t oy = 0; oy < 2 * H; ++oy) {
      const UpTap& a = ty[oy];
      const double* r0 = src + a.lo * W;
      const double* r1 = src + a.hi * W;
      for (std::size_t ox = 0; ox < 2 * W; ++ox) {
        const UpTap& b = tx[ox];
        dst[oy * 2 * W + ox] = a.w_lo * (b.w_lo * r0[b.lo] + b.w_hi * r0[b.hi]) +
                               a.w_hi * (b.w_lo * r1[b.lo] + b.w_hi * r1[b.hi]);
      }
    }
  }
  const bool record = tape.should_record({&input});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, input, ty, tx, B, C, H, W]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    Tensor& gx = input.grad();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const double* src = g.ptr() + bc * 4 * H * W;
      double* dst = gx.ptr() + bc * H * W;
      for (std::size_t oy = 0; oy < 2 * H; ++oy) {
        const UpTap& a = ty[oy];
        for (std::size_t ox = 0; ox < 2 * W; ++ox) {
          const UpTap& b = tx[ox];
          const double v = src[oy * 2 * W + ox];
          dst[a.lo * W + b.lo] += a.w_lo * b.w_lo * v;
          dst[a.lo * W + b.hi] += a.w_lo * b.w_hi * v;
          dst[a.hi * W + b.lo] += a.w_hi * b.w_lo * v;
          dst[a.hi * W + b.hi] += a.w_hi * b.w_hi * v;
        }
      }
    }
  });
  return result;
}

Variable softmax(Tape& tape, const Variable& input) {
  if (!input.defined() || input.value().rank() == 0) shape_error("softmax", "input is undefined");
  const Tensor& x = input.value();
  std::size_t outer = 1;
  std::size_t classes = x.dim(0);
  std::size_t inner = 1;
  if (x.rank() >= 2) {
    outer = x.dim(0);
    classes = x.dim(1);
    inner = x.numel() / (outer * classes);
  }
  Tensor out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * classes * inner + i;
      double mx = x[base];
      for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, x[base + c * inner]);
      double z = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        out[base + c * inner] = std::exp(x[base + c * inner] - mx);
        z += out[base + c * inner];
      }
      for (std::size_t c = 0; c < classes; ++c) out[base + c * inner] /= z;
    }
  }
  require_finite("softmax", out);
  const bool record = tape.should_record({&input});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, input, outer, classes, inner]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    const Tensor& y = result.value();
    Tensor& gx = input.grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * classes * inner + i;
        double dot = 0.0;
        for (std::size_t c = 0; c < classes; ++c) dot += y[base + c * inner] * g[base + c * inner];
        for (std::size_t c = 0; c < classes; ++c) {
          gx[base + c * inner] += y[base + c * inner] * (g[base + c * inner] - dot);
        }
      }
    }
  });
  return result;
}

Variable add(Tape& tape, const Variable& a, const Variable& b) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
    shape_error("add", "operand shapes differ");
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  require_finite("add", out);
  const bool record = tape.should_record({&a, &b});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, a, b]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    if (a.requires_grad()) {
      Tensor& ga = a.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = b.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  });
  return result;
}

Variable mul(Tape& tape, const Variable& a, const Variable& b) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
    shape_error("mul", "operand shapes differ");
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  require_finite("mul", out);
  const bool record = tape.should_record({&a, &b});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, a, b]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    if (a.requires_grad()) {
      Tensor& ga = a.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = b.grad();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
  return result;
}

Variable scale(Tape& tape, const Variable& a, double factor) {
  if (!a.defined()) shape_error("scale", "input is undefined");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  require_finite("scale", out);
  const bool record = tape.should_record({&a});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, a, factor]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    Tensor& ga = a.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
  });
  return result;
}

Variable reshape(Tape& tape, const Variable& a, Shape shape) {
  if (!a.defined()) shape_error("reshape", "input is undefined");
  Tensor out = a.value().reshaped(std::move(shape));
  const bool record = tape.should_record({&a});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, a]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    Tensor& ga = a.grad();
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
  return result;
}

Variable sum(Tape& tape, const Variable& a) {
  if (!a.defined()) shape_error("sum", "input is undefined");
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  Tensor out({1}, s);
  require_finite("sum", out);
  const bool record = tape.should_record({&a});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, a]() mutable {
    if (!result.has_grad()) return;
    const double g = result.grad()[0];
    Tensor& ga = a.grad();
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
  return result;
}

Variable concat_channels(Tape& tape, const Variable& a, const Variable& b) {
  require_rank("concat_channels", a, 4, "a");
  require_rank("concat_channels", b, 4, "b");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    shape_error("concat_channels", shape_to_string(sa) + " vs " + shape_to_string(sb));
  }
  const std::size_t B = sa[0];
  const std::size_t HW = sa[2] * sa[3];
  const std::size_t ca = sa[1];
  const std::size_t cb = sb[1];
  Tensor out({B, ca + cb, sa[2], sa[3]});
  for (std::size_t n = 0; n < B; ++n) {
    std::copy_n(a.value().ptr() + n * ca * HW, ca * HW, out.ptr() + n * (ca + cb) * HW);
    std::copy_n(b.value().ptr() + n * cb * HW, cb * HW, out.ptr() + (n * (ca + cb) + ca) * HW);
  }
  const bool record = tape.should_record({&a, &b});
  Variable result(std::move(out), record);
  if (!record) return result;
  tape.record([result, a, b, B, HW, ca, cb]() mutable {
    if (!result.has_grad()) return;
    const Tensor& g = result.grad();
    for (std::size_t n = 0; n < B; ++n) {
      if (a.requires_grad()) {
        double* dst = a.grad().ptr() + n * ca * HW;
        const double* src = g.ptr() + n * (ca + cb) * HW;
        for (std::size_t i = 0; i < ca * HW; ++i) dst[i] += src[i];
      }
      if (b.requires_grad()) {
        double* dst = b.grad().ptr() + n * cb * HW;
        const double* src = g.ptr() + (n * (ca + cb) + ca) * HW;
        for (std::size_t i = 0; i < cb * HW; ++i) dst[i] += src[i];
      }
    }
  });
  return result;
}

}  // namespace warpadapt
