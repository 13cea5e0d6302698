#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "salm/coarse_net.hpp"
#include "salm/common.hpp"
#include "salm/nn/layers.hpp"
#include "salm/params.hpp"
#include "salm/tensor.hpp"

namespace salm {

/// Visual feature encoder: four (conv k=4 s=2 p=1, batch-norm, ReLU) blocks
/// taking a unified 32^3 patch through 16->8->4->2, then a global average
/// pool to an m-vector. Filter widths are m/8, m/4, m/2, m.
template <class T>
class PatchEncoder {
public:
    struct Cache {
        Tensor<T> input;  // {B,1,32,32,32}
        typename ConvBnRelu<T>::Cache c1, c2, c3, c4;
        Tensor<T> r1, r2, r3, r4;
    };

    PatchEncoder() = default;
    explicit PatchEncoder(std::int64_t m) : m_(m) {
        check(m >= 8 && m % 8 == 0, "embedding width must be a positive multiple of 8");
        b1_ = ConvBnRelu<T>(1, m / 8, 4, 2, 1);
        b2_ = ConvBnRelu<T>(m / 8, m / 4, 4, 2, 1);
        b3_ = ConvBnRelu<T>(m / 4, m / 2, 4, 2, 1);
        b4_ = ConvBnRelu<T>(m / 2, m, 4, 2, 1);
    }

    std::int64_t embed_dim() const { return m_; }

    void init(std::mt19937_64& rng) {
        b1_.init(rng);
        b2_.init(rng);
        b3_.init(rng);
        b4_.init(rng);
    }

    /// Encodes a batch of patches {B,1,32,32,32} to embeddings {B,m}.
    Tensor<T> forward(Tensor<T> patches, bool training, Cache* c) {
        check(patches.shape().size() == 5 && patches.dim(1) == 1 && patches.dim(2) == 32 &&
                  patches.dim(3) == 32 && patches.dim(4) == 32,
              "encoder expects {B,1,32,32,32} patches");
        Cache local;
        Cache& cc = c ? *c : local;
        cc.input = std::move(patches);
        cc.r1 = b1_.forward(cc.input, training, &cc.c1);
        cc.r2 = b2_.forward(cc.r1, training, &cc.c2);
        cc.r3 = b3_.forward(cc.r2, training, &cc.c3);
        cc.r4 = b4_.forward(cc.r3, training, &cc.c4);
        const std::int64_t B = cc.r4.dim(0);
        Tensor<T> e({B, m_});
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t ch = 0; ch < m_; ++ch) {
                const T* src = cc.r4.data() + (b * m_ + ch) * 8;
                double acc = 0;
                for (int i = 0; i < 8; ++i) acc += double(src[i]);
                e[b * m_ + ch] = T(acc / 8.0);
            }
        return e;
    }

    void backward(const Cache& cc, const Tensor<T>& de) {
        const std::int64_t B = cc.r4.dim(0);
        Tensor<T> d_r4(cc.r4.shape());
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t ch = 0; ch < m_; ++ch) {
                const T g = de[b * m_ + ch] / T(8);
                T* dst = d_r4.data() + (b * m_ + ch) * 8;
                for (int i = 0; i < 8; ++i) dst[i] = g;
            }
        Tensor<T> d_r3 = b4_.backward(cc.r3, cc.c4, d_r4);
        Tensor<T> d_r2 = b3_.backward(cc.r2, cc.c3, d_r3);
        Tensor<T> d_r1 = b2_.backward(cc.r1, cc.c2, d_r2);
        b1_.backward(cc.input, cc.c1, d_r1);  // patches are constants
    }

    void zero_grad() {
        b1_.zero_grad();
        b2_.zero_grad();
        b3_.zero_grad();
        b4_.zero_grad();
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        b1_.collect("encoder.b1", out);
        b2_.collect("encoder.b2", out);
        b3_.collect("encoder.b3", out);
        b4_.collect("encoder.b4", out);
    }

    void collect_buffers(std::vector<BufferRef<T>>& out) {
        b1_.collect_buffers("encoder.b1", out);
        b2_.collect_buffers("encoder.b2", out);
        b3_.collect_buffers("encoder.b3", out);
        b4_.collect_buffers("encoder.b4", out);
    }

private:
    std::int64_t m_ = 0;
    ConvBnRelu<T> b1_, b2_, b3_, b4_;
};

}  // namespace salm
