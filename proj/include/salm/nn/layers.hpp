#pragma once

#include <cstdint>
#include <vector>

#include "salm/blas.hpp"
#include "salm/common.hpp"
#include "salm/tensor.hpp"

namespace salm::nn {

/// Activation tensors are {B, C, Z, Y, X}, x fastest.
struct ConvDims {
    std::int64_t b, cin, z, y, x;
    std::int64_t cout, zo, yo, xo;
};

namespace detail {

inline std::int64_t col_chunk_slices(std::int64_t K, std::int64_t plane) {
    const std::int64_t budget = 12 * 1024 * 1024;  // elements per scratch buffer
    return std::max<std::int64_t>(1, budget / std::max<std::int64_t>(1, K * plane));
}

}  // namespace detail

/// 3D convolution lowered to GEMM through im2col, chunked over output
/// z-slices to bound scratch memory. Weight layout {Cout, Cin, kz, ky, kx}
/// matches the im2col row order.
template <class T>
struct Conv3d {
    Tensor<T> w;  // {Cout, Cin, k, k, k}
    Tensor<T> b;  // {Cout}
    Tensor<T> dw, db;
    int kernel = 3, stride = 1, pad = 1;

    Conv3d() = default;
    Conv3d(std::int64_t cin, std::int64_t cout, int kernel_, int stride_, int pad_)
        : kernel(kernel_), stride(stride_), pad(pad_) {
        w.resize({cout, cin, kernel, kernel, kernel});
        b.resize({cout});
        dw.resize(w.shape());
        db.resize(b.shape());
    }

    ConvDims dims_for(const Tensor<T>& x) const {
        ConvDims d{};
        d.b = x.dim(0);
        d.cin = x.dim(1);
        d.z = x.dim(2);
        d.y = x.dim(3);
        d.x = x.dim(4);
        d.cout = w.dim(0);
        d.zo = (d.z + 2 * pad - kernel) / stride + 1;
        d.yo = (d.y + 2 * pad - kernel) / stride + 1;
        d.xo = (d.x + 2 * pad - kernel) / stride + 1;
        return d;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const ConvDims d = dims_for(x);
        check(d.cin == w.dim(1), "conv input channel mismatch");
        Tensor<T> y({d.b, d.cout, d.zo, d.yo, d.xo});
        if (kernel == 1 && stride == 1 && pad == 0) {
            const std::int64_t N = d.zo * d.yo * d.xo;
            for (std::int64_t bi = 0; bi < d.b; ++bi)
                blas::gemm(false, false, int(d.cout), int(N), int(d.cin), T(1), w.data(),
                           int(d.cin), x.data() + bi * d.cin * N, int(N), T(0),
                           y.data() + bi * d.cout * N, int(N));
        } else {
            forward_im2col(x, d, y);
        }
        const std::int64_t plane = d.xo * d.yo;
        for (std::int64_t bi = 0; bi < d.b; ++bi)
            for (std::int64_t c = 0; c < d.cout; ++c) {
                T* out = y.data() + (bi * d.cout + c) * d.zo * plane;
                const T bias = b[c];
                for (std::int64_t i = 0; i < d.zo * plane; ++i) out[i] += bias;
            }
        return y;
    }

    /// Accumulates dw/db and returns dx. `x` must be the forward input.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
        const ConvDims d = dims_for(x);
        Tensor<T> dx(x.shape());
        if (kernel == 1 && stride == 1 && pad == 0) {
            const std::int64_t N = d.zo * d.yo * d.xo;
            for (std::int64_t bi = 0; bi < d.b; ++bi) {
                const T* gy = dy.data() + bi * d.cout * N;
                blas::gemm(false, true, int(d.cout), int(d.cin), int(N), T(1), gy, int(N),
                           x.data() + bi * d.cin * N, int(N), T(1), dw.data(), int(d.cin));
                blas::gemm(true, false, int(d.cin), int(N), int(d.cout), T(1), w.data(),
                           int(d.cin), gy, int(N), T(0), dx.data() + bi * d.cin * N, int(N));
            }
        } else {
            backward_im2col(x, dy, d, dx);
        }
        const std::int64_t plane = d.xo * d.yo;
        for (std::int64_t bi = 0; bi < d.b; ++bi)
            for (std::int64_t c = 0; c < d.cout; ++c) {
                const T* gy = dy.data() + (bi * d.cout + c) * d.zo * plane;
                T acc = 0;
                for (std::int64_t i = 0; i < d.zo * plane; ++i) acc += gy[i];
                db[c] += acc;
            }
        return dx;
    }

    void zero_grad() {
        dw.zero();
        db.zero();
    }

private:
    // ---- im2col path -------------------------------------------------------
    //
    // Chunked by y-row ranges inside one output z-slice so the column panel
    // stays cache-resident; large streamed panels run several times slower
    // than resident ones on bandwidth-starved hosts.

    std::int64_t rows_per_chunk(const ConvDims& d) const {
        const std::int64_t K = d.cin * kernel * kernel * kernel;
        const std::int64_t budget = 1024 * 1024;  // elements per column panel
        return std::max<std::int64_t>(1, budget / std::max<std::int64_t>(1, K * d.xo));
    }

    void forward_im2col(const Tensor<T>& x, const ConvDims& d, Tensor<T>& y) const {
        const std::int64_t K = d.cin * kernel * kernel * kernel;
        const std::int64_t ny = rows_per_chunk(d);
        std::vector<T> col(static_cast<std::size_t>(K * ny * d.xo));
        for (std::int64_t bi = 0; bi < d.b; ++bi)
            for (std::int64_t zo = 0; zo < d.zo; ++zo)
                for (std::int64_t y0 = 0; y0 < d.yo; y0 += ny) {
                    const std::int64_t yn = std::min(ny, d.yo - y0);
                    const std::int64_t N = yn * d.xo;
                    im2col(x, d, bi, zo, y0, yn, col.data());
                    T* out = y.data() + ((bi * d.cout * d.zo + zo) * d.yo + y0) * d.xo;
                    blas::gemm(false, false, int(d.cout), int(N), int(K), T(1), w.data(), int(K),
                               col.data(), int(N), T(0), out, int(d.zo * d.yo * d.xo));
                }
    }

    void backward_im2col(const Tensor<T>& x, const Tensor<T>& dy, const ConvDims& d,
                         Tensor<T>& dx) {
        const std::int64_t K = d.cin * kernel * kernel * kernel;
        const std::int64_t ny = rows_per_chunk(d);
        std::vector<T> col(static_cast<std::size_t>(K * ny * d.xo));
        std::vector<T> colg(col.size());
        for (std::int64_t bi = 0; bi < d.b; ++bi)
            for (std::int64_t zo = 0; zo < d.zo; ++zo)
                for (std::int64_t y0 = 0; y0 < d.yo; y0 += ny) {
                    const std::int64_t yn = std::min(ny, d.yo - y0);
                    const std::int64_t N = yn * d.xo;
                    im2col(x, d, bi, zo, y0, yn, col.data());
                    const T* gy = dy.data() + ((bi * d.cout * d.zo + zo) * d.yo + y0) * d.xo;
                    const int ld_gy = int(d.zo * d.yo * d.xo);
                    blas::gemm(false, true, int(d.cout), int(K), int(N), T(1), gy, ld_gy,
                               col.data(), int(N), T(1), dw.data(), int(K));
                    blas::gemm(true, false, int(K), int(N), int(d.cout), T(1), w.data(), int(K),
                               gy, ld_gy, T(0), colg.data(), int(N));
                    col2im_add(dx, d, bi, zo, y0, yn, colg.data());
                }
    }

    void im2col(const Tensor<T>& x, const ConvDims& d, std::int64_t bi, std::int64_t zo,
                std::int64_t y0, std::int64_t yn, T* col) const {
        const std::int64_t N = yn * d.xo;
        const T* xb = x.data() + bi * d.cin * d.z * d.y * d.x;
        std::int64_t r = 0;
        for (std::int64_t ci = 0; ci < d.cin; ++ci) {
            const T* xc = xb + ci * d.z * d.y * d.x;
            for (int kz = 0; kz < kernel; ++kz) {
                const std::int64_t z = zo * stride - pad + kz;
                const bool zin = (z >= 0 && z < d.z);
                for (int ky = 0; ky < kernel; ++ky)
                    for (int kx = 0; kx < kernel; ++kx, ++r) {
                        T* dst = col + r * N;
                        if (!zin) {
                            std::fill_n(dst, N, T(0));
                            continue;
                        }
                        const std::int64_t lead =
                            (stride == 1) ? std::max<std::int64_t>(0, pad - kx) : 0;
                        const std::int64_t tail =
                            (stride == 1) ? std::min(d.xo, d.x + pad - kx) : 0;
                        for (std::int64_t yo = y0; yo < y0 + yn; ++yo, dst += d.xo) {
                            const std::int64_t y = yo * stride - pad + ky;
                            if (y < 0 || y >= d.y) {
                                std::fill_n(dst, d.xo, T(0));
                                continue;
                            }
                            const T* src = xc + (z * d.y + y) * d.x;
                            if (stride == 1) {
                                std::fill_n(dst, lead, T(0));
                                std::copy_n(src + (lead - pad + kx), tail - lead, dst + lead);
                                std::fill_n(dst + tail, d.xo - tail, T(0));
                            } else {
                                for (std::int64_t xo = 0; xo < d.xo; ++xo) {
                                    const std::int64_t xi = xo * stride - pad + kx;
                                    dst[xo] = (xi >= 0 && xi < d.x) ? src[xi] : T(0);
                                }
                            }
                        }
                    }
            }
        }
    }

    void col2im_add(Tensor<T>& dx, const ConvDims& d, std::int64_t bi, std::int64_t zo,
                    std::int64_t y0, std::int64_t yn, const T* colg) const {
        const std::int64_t N = yn * d.xo;
        T* xb = dx.data() + bi * d.cin * d.z * d.y * d.x;
        std::int64_t r = 0;
        for (std::int64_t ci = 0; ci < d.cin; ++ci) {
            T* xc = xb + ci * d.z * d.y * d.x;
            for (int kz = 0; kz < kernel; ++kz) {
                const std::int64_t z = zo * stride - pad + kz;
                const bool zin = (z >= 0 && z < d.z);
                for (int ky = 0; ky < kernel; ++ky)
                    for (int kx = 0; kx < kernel; ++kx, ++r) {
                        if (!zin) continue;
                        const T* src = colg + r * N;
                        const std::int64_t lead =
                            (stride == 1) ? std::max<std::int64_t>(0, pad - kx) : 0;
                        const std::int64_t tail =
                            (stride == 1) ? std::min(d.xo, d.x + pad - kx) : 0;
                        for (std::int64_t yo = y0; yo < y0 + yn; ++yo, src += d.xo) {
                            const std::int64_t y = yo * stride - pad + ky;
                            if (y < 0 || y >= d.y) continue;
                            T* dst = xc + (z * d.y + y) * d.x;
                            if (stride == 1) {
                                T* out = dst + (kx - pad);  // out[xo] is x index xo - pad + kx
                                for (std::int64_t xo = lead; xo < tail; ++xo) out[xo] += src[xo];
                            } else {
                                for (std::int64_t xo = 0; xo < d.xo; ++xo) {
                                    const std::int64_t xi = xo * stride - pad + kx;
                                    if (xi >= 0 && xi < d.x) dst[xi] += src[xo];
                                }
                            }
                        }
                    }
            }
        }
    }
};

/// Spatial batch normalization over (B, Z, Y, X) per channel.
template <class T>
struct BatchNorm3d {
    Tensor<T> gamma, beta;
    Tensor<T> dgamma, dbeta;
    Tensor<T> running_mean, running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    struct Cache {
        Tensor<T> mean, invstd;  // {C}, batch statistics used in forward
    };

    BatchNorm3d() = default;
    explicit BatchNorm3d(std::int64_t c) {
        gamma.resize({c});
        beta.resize({c});
        dgamma.resize({c});
        dbeta.resize({c});
        running_mean.resize({c});
        running_var.resize({c});
        gamma.fill(T(1));
        running_var.fill(T(1));
    }

    std::int64_t channels() const { return gamma.size(); }

    Tensor<T> forward(const Tensor<T>& x, bool training, Cache* cache) {
        const std::int64_t B = x.dim(0), C = x.dim(1);
        const std::int64_t S = x.dim(2) * x.dim(3) * x.dim(4);
        check(C == channels(), "batchnorm channel mismatch");
        Tensor<T> y(x.shape());
        Tensor<T> mean({C}), invstd({C});
        if (training) {
            const T n = T(B * S);
            for (std::int64_t c = 0; c < C; ++c) {
                double acc = 0;
                for (std::int64_t bi = 0; bi < B; ++bi) {
                    const T* xc = x.data() + (bi * C + c) * S;
                    for (std::int64_t i = 0; i < S; ++i) acc += double(xc[i]);
                }
                const double mu = acc / double(n);
                double var = 0;
                for (std::int64_t bi = 0; bi < B; ++bi) {
                    const T* xc = x.data() + (bi * C + c) * S;
                    for (std::int64_t i = 0; i < S; ++i) {
                        const double dxv = double(xc[i]) - mu;
                        var += dxv * dxv;
                    }
                }
                var /= double(n);
                mean[c] = T(mu);
                invstd[c] = T(1.0 / std::sqrt(var + double(eps)));
                running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * T(mu);
                running_var[c] = (T(1) - momentum) * running_var[c] + momentum * T(var);
            }
        } else {
            for (std::int64_t c = 0; c < C; ++c) {
                mean[c] = running_mean[c];
                invstd[c] = T(1) / std::sqrt(running_var[c] + eps);
            }
        }
        for (std::int64_t bi = 0; bi < B; ++bi)
            for (std::int64_t c = 0; c < C; ++c) {
                const T* xc = x.data() + (bi * C + c) * S;
                T* yc = y.data() + (bi * C + c) * S;
                const T mu = mean[c], is = invstd[c], g = gamma[c], be = beta[c];
                for (std::int64_t i = 0; i < S; ++i) yc[i] = (xc[i] - mu) * is * g + be;
            }
        if (cache) {
            cache->mean = std::move(mean);
            cache->invstd = std::move(invstd);
        }
        return y;
    }

    /// Training-mode backward (gradients flow through the batch statistics).
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, const Cache& cache) {
        const std::int64_t B = x.dim(0), C = x.dim(1);
        const std::int64_t S = x.dim(2) * x.dim(3) * x.dim(4);
        Tensor<T> dx(x.shape());
        const T n = T(B * S);
        for (std::int64_t c = 0; c < C; ++c) {
            const T mu = cache.mean[c], is = cache.invstd[c];
            double sum_dy = 0, sum_dy_xhat = 0;
            for (std::int64_t bi = 0; bi < B; ++bi) {
                const T* xc = x.data() + (bi * C + c) * S;
                const T* gc = dy.data() + (bi * C + c) * S;
                for (std::int64_t i = 0; i < S; ++i) {
                    const double xhat = double((xc[i] - mu) * is);
                    sum_dy += double(gc[i]);
                    sum_dy_xhat += double(gc[i]) * xhat;
                }
            }
            dbeta[c] += T(sum_dy);
            dgamma[c] += T(sum_dy_xhat);
            const double m_dy = sum_dy / double(n);
            const double m_dy_xhat = sum_dy_xhat / double(n);
            const T g = gamma[c];
            for (std::int64_t bi = 0; bi < B; ++bi) {
                const T* xc = x.data() + (bi * C + c) * S;
                const T* gc = dy.data() + (bi * C + c) * S;
                T* dc = dx.data() + (bi * C + c) * S;
                for (std::int64_t i = 0; i < S; ++i) {
                    const double xhat = double((xc[i] - mu) * is);
                    dc[i] = T(double(g) * double(is) *
                              (double(gc[i]) - m_dy - xhat * m_dy_xhat));
                }
            }
        }
        return dx;
    }

    void zero_grad() {
        dgamma.zero();
        dbeta.zero();
    }
};

template <class T>
inline Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

template <class T>
inline Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
    return dx;
}

/// 2x max pooling with stride 2; input extents must be even. Ties route to
/// the first maximal element so backward is deterministic.
template <class T>
struct MaxPool2 {
    struct Cache {
        std::vector<std::int64_t> argmax;  // flat input index per output element
    };

    static Tensor<T> forward(const Tensor<T>& x, Cache* cache) {
        const std::int64_t B = x.dim(0), C = x.dim(1), Z = x.dim(2), Y = x.dim(3), X = x.dim(4);
        check(Z % 2 == 0 && Y % 2 == 0 && X % 2 == 0, "maxpool input extents must be even");
        Tensor<T> y({B, C, Z / 2, Y / 2, X / 2});
        if (cache) cache->argmax.assign(static_cast<std::size_t>(y.size()), 0);
        std::int64_t o = 0;
        for (std::int64_t bc = 0; bc < B * C; ++bc) {
            const T* xc = x.data() + bc * Z * Y * X;
            for (std::int64_t z = 0; z < Z; z += 2)
                for (std::int64_t yy = 0; yy < Y; yy += 2)
                    for (std::int64_t xx = 0; xx < X; xx += 2, ++o) {
                        T best = xc[(z * Y + yy) * X + xx];
                        std::int64_t best_i = (z * Y + yy) * X + xx;
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dyy = 0; dyy < 2; ++dyy)
                                for (int dxx = 0; dxx < 2; ++dxx) {
                                    const std::int64_t i =
                                        ((z + dz) * Y + yy + dyy) * X + xx + dxx;
                                    if (xc[i] > best) {
                                        best = xc[i];
                                        best_i = i;
                                    }
                                }
                        y[o] = best;
                        if (cache) cache->argmax[static_cast<std::size_t>(o)] = bc * Z * Y * X + best_i;
                    }
        }
        return y;
    }

    static Tensor<T> backward(const std::vector<std::int64_t>& x_shape, const Tensor<T>& dy,
                              const Cache& cache) {
        Tensor<T> dx(x_shape);
        for (std::int64_t o = 0; o < dy.size(); ++o)
            dx[cache.argmax[static_cast<std::size_t>(o)]] += dy[o];
        return dx;
    }
};

/// Channel concatenation of two {B,C,Z,Y,X} tensors along C.
template <class T>
inline Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const std::int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const std::int64_t S = a.dim(2) * a.dim(3) * a.dim(4);
    Tensor<T> y({B, Ca + Cb, a.dim(2), a.dim(3), a.dim(4)});
    for (std::int64_t bi = 0; bi < B; ++bi) {
        std::copy_n(a.data() + bi * Ca * S, Ca * S, y.data() + bi * (Ca + Cb) * S);
        std::copy_n(b.data() + bi * Cb * S, Cb * S, y.data() + (bi * (Ca + Cb) + Ca) * S);
    }
    return y;
}

template <class T>
inline void split_channels_backward(const Tensor<T>& dy, Tensor<T>& da, Tensor<T>& db) {
    const std::int64_t B = da.dim(0), Ca = da.dim(1), Cb = db.dim(1);
    const std::int64_t S = da.dim(2) * da.dim(3) * da.dim(4);
    for (std::int64_t bi = 0; bi < B; ++bi) {
        std::copy_n(dy.data() + bi * (Ca + Cb) * S, Ca * S, da.data() + bi * Ca * S);
        std::copy_n(dy.data() + (bi * (Ca + Cb) + Ca) * S, Cb * S, db.data() + bi * Cb * S);
    }
}

}  // namespace salm::nn
