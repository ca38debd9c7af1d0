#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darkfield/image.hpp"

namespace darkfield {

/// CHW tensor of doubles. Batch handling is done by the caller (gradient
/// accumulation over samples), which keeps the layer code free of a batch
/// dimension.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_),
          v(static_cast<size_t>(c_) * static_cast<size_t>(h_) * static_cast<size_t>(w_), fill) {}

    size_t plane() const { return static_cast<size_t>(h) * static_cast<size_t>(w); }
    size_t size() const { return v.size(); }
    double& at(int ch, int r, int col) { return v[ch * plane() + static_cast<size_t>(r) * w + col]; }
    double at(int ch, int r, int col) const {
        return v[ch * plane() + static_cast<size_t>(r) * w + col];
    }
    double* plane_ptr(int ch) { return v.data() + ch * plane(); }
    const double* plane_ptr(int ch) const { return v.data() + ch * plane(); }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    static Tensor from_image(const Image2D& img);
    Image2D to_image(int ch = 0) const;
};

/// Named view onto one parameter block (weights or biases) and its gradient.
struct ParamRef {
    std::string name;
    std::vector<double>* w = nullptr;
    std::vector<double>* g = nullptr;
};

/// 2-D convolution (zero padding), im2col + GEMM, with explicit backward.
/// forward() caches its input; backward() must follow the matching forward.
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(int in_c, int out_c, int kernel, int stride, int pad, std::string name);

    void init_he(uint64_t seed, double weight_scale = 1.0);

    Tensor forward(const Tensor& x);
    /// Returns dL/dx and accumulates dL/dW, dL/db.
    Tensor backward(const Tensor& grad_out);

    void zero_grad();
    std::vector<ParamRef> params();

    /// With caching off, forward() skips storing its input (saves memory on
    /// large inputs) and backward() is unavailable until re-enabled.
    void set_cache_inputs(bool enabled);

    int in_channels() const { return in_c_; }
    int out_channels() const { return out_c_; }
    int out_extent(int n) const { return (n + 2 * pad_ - kernel_) / stride_ + 1; }

    std::vector<double>& weights() { return w_; }
    std::vector<double>& bias() { return b_; }

  private:
    int in_c_ = 0, out_c_ = 0, kernel_ = 0, stride_ = 1, pad_ = 0;
    bool cache_inputs_ = true;
    std::string name_;
    std::vector<double> w_, b_, gw_, gb_;
    Tensor x_cache_;
};

class LeakyReLU {
  public:
    explicit LeakyReLU(double slope = 0.0) : slope_(slope) {}
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;
    void set_cache(bool enabled) { cache_ = enabled; }

  private:
    double slope_;
    bool cache_ = true;
    Tensor x_cache_;
};

/// Inverted dropout. The mask is drawn from the seed set via set_seed, so a
/// pass is reproducible; rate 0 is an exact identity. Active whenever rate>0
/// (training and inference alike: this is the MC-dropout mechanism).
class Dropout {
  public:
    explicit Dropout(double rate = 0.0) : rate_(rate) {}
    void set_rate(double rate) { rate_ = rate; }
    double rate() const { return rate_; }
    void set_seed(uint64_t seed) { seed_ = seed; }
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;
    void set_cache(bool enabled) { cache_ = enabled; }

  private:
    double rate_ = 0.0;
    bool cache_ = true;
    uint64_t seed_ = 0;
    std::vector<double> mask_;
};

/// Nearest-neighbour 2x upsampling; backward is the 2x2 gradient sum.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& grad, int c_a, Tensor* grad_a, Tensor* grad_b);

/// Adam over an explicit parameter list. State (m, v) exists only for the
/// parameters handed in, never for frozen blocks.
class Adam {
  public:
    Adam(std::vector<ParamRef> params, double beta1, double beta2, double eps = 1e-8);

    void zero_grad();
    void step(double lr);
    size_t state_elements() const;

  private:
    std::vector<ParamRef> params_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace darkfield
