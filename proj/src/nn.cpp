#include "darkfield/nn.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "darkfield/rng.hpp"

namespace darkfield {

namespace {

using MatCM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;  // column-major
using MapRM =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MapRMStride =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Eigen::OuterStride<>>;

// Row blocks keep the im2col buffer bounded for large (full-resolution) maps.
int rows_per_block(int ow) { return std::max(1, 8192 / std::max(ow, 1)); }

}  // namespace

Tensor Tensor::from_image(const Image2D& img) {
    Tensor t(1, img.height, img.width);
    t.v = img.data;
    return t;
}

Image2D Tensor::to_image(int ch) const {
    Image2D img(h, w);
    const double* p = plane_ptr(ch);
    std::copy(p, p + plane(), img.data.begin());
    return img;
}

Conv2d::Conv2d(int in_c, int out_c, int kernel, int stride, int pad, std::string name)
    : in_c_(in_c), out_c_(out_c), kernel_(kernel), stride_(stride), pad_(pad),
      name_(std::move(name)) {
    const size_t n = static_cast<size_t>(out_c) * in_c * kernel * kernel;
    w_.assign(n, 0.0);
    b_.assign(out_c, 0.0);
    gw_.assign(n, 0.0);
    gb_.assign(out_c, 0.0);
}

void Conv2d::init_he(uint64_t seed, double weight_scale) {
    Rng rng(mix_seed(seed, splitmix64(std::hash<std::string>{}(name_))));
    const double std_dev =
        weight_scale * std::sqrt(2.0 / (static_cast<double>(in_c_) * kernel_ * kernel_));
    for (double& w : w_) w = std_dev * rng.normal();
    std::fill(b_.begin(), b_.end(), 0.0);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.c != in_c_) {
        throw std::invalid_argument(name_ + ": expected " + std::to_string(in_c_) +
                                    " input channels, got " + std::to_string(x.c));
    }
    if (cache_inputs_) {
        x_cache_ = x;
    } else {
        x_cache_ = Tensor();
    }
    const int oh = out_extent(x.h), ow = out_extent(x.w);
    const int ickk = in_c_ * kernel_ * kernel_;
    Tensor out(out_c_, oh, ow);

    MapRM wm(w_.data(), out_c_, ickk);
    const int blk = rows_per_block(ow);
    MatCM cols(ickk, static_cast<Eigen::Index>(blk) * ow);

    for (int y0 = 0; y0 < oh; y0 += blk) {
        const int y1 = std::min(oh, y0 + blk);
        const int npix = (y1 - y0) * ow;
        // im2col for output rows [y0, y1)
        for (int oy = y0; oy < y1; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int col = (oy - y0) * ow + ox;
                double* dst = cols.data() + static_cast<size_t>(col) * ickk;
                int r = 0;
                for (int ic = 0; ic < in_c_; ++ic) {
                    const double* plane = x.plane_ptr(ic);
                    for (int ky = 0; ky < kernel_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        for (int kx = 0; kx < kernel_; ++kx, ++r) {
                            const int ix = ox * stride_ - pad_ + kx;
                            dst[r] = (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                                         ? plane[static_cast<size_t>(iy) * x.w + ix]
                                         : 0.0;
                        }
                    }
                }
            }
        }
        MapRMStride om(out.v.data() + static_cast<size_t>(y0) * ow, out_c_, npix,
                       Eigen::OuterStride<>(static_cast<Eigen::Index>(oh) * ow));
        om.noalias() = wm * cols.leftCols(npix);
    }
    for (int oc = 0; oc < out_c_; ++oc) {
        double* p = out.plane_ptr(oc);
        const double bias = b_[oc];
        for (size_t i = 0; i < out.plane(); ++i) p[i] += bias;
    }
    return out;
}

void Conv2d::set_cache_inputs(bool enabled) {
    cache_inputs_ = enabled;
    if (!enabled) x_cache_ = Tensor();
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    if (x_cache_.size() == 0) {
        throw std::logic_error(name_ + ": backward without a cached forward");
    }
    const Tensor& x = x_cache_;
    const int oh = out_extent(x.h), ow = out_extent(x.w);
    if (grad_out.c != out_c_ || grad_out.h != oh || grad_out.w != ow) {
        throw std::invalid_argument(name_ + ": backward shape mismatch");
    }
    const int ickk = in_c_ * kernel_ * kernel_;
    Tensor dx(in_c_, x.h, x.w, 0.0);

    MapRM wm(w_.data(), out_c_, ickk);
    MapRM gwm(gw_.data(), out_c_, ickk);
    const int blk = rows_per_block(ow);
    MatCM cols(ickk, static_cast<Eigen::Index>(blk) * ow);
    MatCM dcols(ickk, static_cast<Eigen::Index>(blk) * ow);

    for (int y0 = 0; y0 < oh; y0 += blk) {
        const int y1 = std::min(oh, y0 + blk);
        const int npix = (y1 - y0) * ow;
        // rebuild im2col for this block (cheaper to recompute than to cache)
        for (int oy = y0; oy < y1; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int col = (oy - y0) * ow + ox;
                double* dst = cols.data() + static_cast<size_t>(col) * ickk;
                int r = 0;
                for (int ic = 0; ic < in_c_; ++ic) {
                    const double* plane = x.plane_ptr(ic);
                    for (int ky = 0; ky < kernel_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        for (int kx = 0; kx < kernel_; ++kx, ++r) {
                            const int ix = ox * stride_ - pad_ + kx;
                            dst[r] = (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                                         ? plane[static_cast<size_t>(iy) * x.w + ix]
                                         : 0.0;
                        }
                    }
                }
            }
        }
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                   0, Eigen::OuterStride<>>
            gom(grad_out.v.data() + static_cast<size_t>(y0) * ow, out_c_, npix,
                Eigen::OuterStride<>(static_cast<Eigen::Index>(oh) * ow));

        gwm.noalias() += gom * cols.leftCols(npix).transpose();
        dcols.leftCols(npix).noalias() = wm.transpose() * gom;

        // col2im scatter-add
        for (int oy = y0; oy < y1; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int col = (oy - y0) * ow + ox;
                const double* src = dcols.data() + static_cast<size_t>(col) * ickk;
                int r = 0;
                for (int ic = 0; ic < in_c_; ++ic) {
                    double* plane = dx.plane_ptr(ic);
                    for (int ky = 0; ky < kernel_; ++ky) {
                        const int iy = oy * stride_ - pad_ + ky;
                        for (int kx = 0; kx < kernel_; ++kx, ++r) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) {
                                plane[static_cast<size_t>(iy) * x.w + ix] += src[r];
                            }
                        }
                    }
                }
            }
        }
    }
    for (int oc = 0; oc < out_c_; ++oc) {
        const double* p = grad_out.plane_ptr(oc);
        double acc = 0.0;
        for (size_t i = 0; i < grad_out.plane(); ++i) acc += p[i];
        gb_[oc] += acc;
    }
    return dx;
}

void Conv2d::zero_grad() {
    std::fill(gw_.begin(), gw_.end(), 0.0);
    std::fill(gb_.begin(), gb_.end(), 0.0);
}

std::vector<ParamRef> Conv2d::params() {
    return {{name_ + ".W", &w_, &gw_}, {name_ + ".b", &b_, &gb_}};
}

Tensor LeakyReLU::forward(const Tensor& x) {
    if (cache_) {
        x_cache_ = x;
    } else {
        x_cache_ = Tensor();
    }
    Tensor out = x;
    for (double& v : out.v) {
        if (v < 0.0) v *= slope_;
    }
    return out;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) const {
    Tensor dx = grad_out;
    for (size_t i = 0; i < dx.v.size(); ++i) {
        if (x_cache_.v[i] < 0.0) dx.v[i] *= slope_;
    }
    return dx;
}

Tensor Dropout::forward(const Tensor& x) {
    if (rate_ <= 0.0) {
        mask_.clear();
        return x;
    }
    Rng rng(mix_seed(seed_, 0xd20907ULL));
    const double keep = 1.0 - rate_;
    const double scale = 1.0 / keep;
    Tensor out = x;
    if (cache_) {
        mask_.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            mask_[i] = rng.uniform() < keep ? scale : 0.0;
            out.v[i] *= mask_[i];
        }
    } else {
        mask_.clear();
        for (size_t i = 0; i < x.size(); ++i) {
            out.v[i] *= rng.uniform() < keep ? scale : 0.0;
        }
    }
    return out;
}

Tensor Dropout::backward(const Tensor& grad_out) const {
    if (mask_.empty()) return grad_out;
    Tensor dx = grad_out;
    for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= mask_[i];
    return dx;
}

Tensor upsample2x(const Tensor& x) {
    Tensor out(x.c, x.h * 2, x.w * 2);
    for (int ch = 0; ch < x.c; ++ch) {
        for (int r = 0; r < out.h; ++r) {
            for (int col = 0; col < out.w; ++col) {
                out.at(ch, r, col) = x.at(ch, r / 2, col / 2);
            }
        }
    }
    return out;
}

Tensor upsample2x_backward(const Tensor& grad_out) {
    Tensor dx(grad_out.c, grad_out.h / 2, grad_out.w / 2, 0.0);
    for (int ch = 0; ch < grad_out.c; ++ch) {
        for (int r = 0; r < grad_out.h; ++r) {
            for (int col = 0; col < grad_out.w; ++col) {
                dx.at(ch, r / 2, col / 2) += grad_out.at(ch, r, col);
            }
        }
    }
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w) {
        throw std::invalid_argument("concat_channels: spatial shape mismatch");
    }
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

void split_channels(const Tensor& grad, int c_a, Tensor* grad_a, Tensor* grad_b) {
    *grad_a = Tensor(c_a, grad.h, grad.w);
    *grad_b = Tensor(grad.c - c_a, grad.h, grad.w);
    std::copy(grad.v.begin(), grad.v.begin() + grad_a->size(), grad_a->v.begin());
    std::copy(grad.v.begin() + grad_a->size(), grad.v.end(), grad_b->v.begin());
}

Adam::Adam(std::vector<ParamRef> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.w->size(), 0.0);
        v_.emplace_back(p.w->size(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) std::fill(p.g->begin(), p.g->end(), 0.0);
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t k = 0; k < params_.size(); ++k) {
        auto& w = *params_[k].w;
        auto& g = *params_[k].g;
        auto& m = m_[k];
        auto& v = v_[k];
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            w[i] -= lr * mh / (std::sqrt(vh) + eps_);
        }
    }
}

size_t Adam::state_elements() const {
    size_t n = 0;
    for (const auto& m : m_) n += m.size();
    return 2 * n;
}

}  // namespace darkfield
