#pragma once

// Image-to-image U-Net: three stride-2 down blocks, a bottleneck, three
// transposed-conv up blocks with skip connections by concatenation, and a
// tanh output head. One-step refinement of painter outputs.

#include <random>
#include <vector>

#include "fpa/nn.hpp"
#include "fpa/tensor.hpp"

namespace fpa {

template <typename T>
class UNet {
public:
    static constexpr T kLeakySlope = T(0.2);

    UNet() = default;

    UNet(int channels, int base_width, std::mt19937_64& rng) : channels_(channels) {
        int b = base_width;
        down1_ = Conv2d<T>(channels, b, 4, 2, 1, rng);
        down2_ = Conv2d<T>(b, 2 * b, 4, 2, 1, rng);
        down3_ = Conv2d<T>(2 * b, 4 * b, 4, 2, 1, rng);
        mid_ = Conv2d<T>(4 * b, 4 * b, 3, 1, 1, rng);
        up3_ = ConvTranspose2d<T>(8 * b, 2 * b, 4, 2, 1, rng);
        up2_ = ConvTranspose2d<T>(4 * b, b, 4, 2, 1, rng);
        up1_ = ConvTranspose2d<T>(2 * b, b, 4, 2, 1, rng);
        head_ = Conv2d<T>(b, channels, 3, 1, 1, rng);
    }

    // Pre-activation output of the tanh head (used by training losses that
    // must stay clear of tanh saturation).
    Tensor<T> refine_pre(const Tensor<T>& x) const {
        if (x.ndim() != 3 || x.dim(0) != channels_)
            throw std::invalid_argument("unet: input " + shape_str(x.shape()) + " has wrong channel count");
        if (x.dim(1) % 8 != 0 || x.dim(2) % 8 != 0)
            throw std::invalid_argument("unet: resolution " + shape_str(x.shape()) +
                                        " not divisible by 8");
        Tensor<T> d1 = leaky_relu(down1_(x), kLeakySlope);
        Tensor<T> d2 = leaky_relu(down2_(d1), kLeakySlope);
        Tensor<T> d3 = leaky_relu(down3_(d2), kLeakySlope);
        Tensor<T> m = leaky_relu(mid_(d3), kLeakySlope);
        Tensor<T> u3 = leaky_relu(up3_(concat<T>({m, d3})), kLeakySlope);
        Tensor<T> u2 = leaky_relu(up2_(concat<T>({u3, d2})), kLeakySlope);
        Tensor<T> u1 = leaky_relu(up1_(concat<T>({u2, d1})), kLeakySlope);
        return head_(u1);
    }

    Tensor<T> refine(const Tensor<T>& x) const { return tanh(refine_pre(x)); }

    void collect_params(ParamList<T>& out) {
        down1_.collect("unet.down1", out);
        down2_.collect("unet.down2", out);
        down3_.collect("unet.down3", out);
        mid_.collect("unet.mid", out);
        up3_.collect("unet.up3", out);
        up2_.collect("unet.up2", out);
        up1_.collect("unet.up1", out);
        head_.collect("unet.head", out);
    }

private:
    int channels_ = 3;
    Conv2d<T> down1_, down2_, down3_, mid_, head_;
    ConvTranspose2d<T> up3_, up2_, up1_;
};

}  // namespace fpa
