#pragma once

// LightGAN-style discriminator sized for desk-scale resolutions, plus the
// hinge GAN losses and the auxiliary reconstruction loss applied to real
// samples at two downscaled resolutions.

#include <random>
#include <vector>

#include "fpa/nn.hpp"
#include "fpa/tensor.hpp"

namespace fpa {

template <typename T>
struct DiscriminatorOutput {
    Tensor<T> score;    // scalar
    Tensor<T> recon8;   // [c, 8, 8], tanh head
    Tensor<T> recon16;  // [c, 16, 16], tanh head
};

// Stride-2 ladder from the input resolution down to 4x4, widths
// {32, 64, 128, 256} truncated to the ladder length, then a 4x4 conv to the
// scalar score. Two transposed-conv decoders hang off the 8x8 and 4x4
// feature maps. Resolution must be a power-of-two multiple of 16.
template <typename T>
class Discriminator {
public:
    static constexpr T kLeakySlope = T(0.2);

    Discriminator() = default;

    Discriminator(int channels, int resolution, std::mt19937_64& rng)
        : channels_(channels), resolution_(resolution) {
        if (resolution < 16 || (resolution & (resolution - 1)) != 0)
            throw std::invalid_argument("discriminator: resolution must be a power of two >= 16");
        const int widths[4] = {32, 64, 128, 256};
        int in = channels, res = resolution, stage = 0;
        while (res > 4) {
            int out = widths[std::min(stage, 3)];
            ladder_.emplace_back(in, out, 4, 2, 1, rng);
            in = out;
            res /= 2;
            ++stage;
        }
        head_ = Conv2d<T>(in, 1, 4, 1, 0, rng);
        int w8 = ladder_[ladder_.size() - 1].weight.dim(0);   // 4x4 feature width
        int w16 = ladder_[ladder_.size() - 2].weight.dim(0);  // 8x8 feature width
        dec8_up_ = ConvTranspose2d<T>(w8, 16, 4, 2, 1, rng);
        dec8_out_ = Conv2d<T>(16, channels, 3, 1, 1, rng);
        dec16_up_ = ConvTranspose2d<T>(w16, 16, 4, 2, 1, rng);
        dec16_out_ = Conv2d<T>(16, channels, 3, 1, 1, rng);
    }

    int resolution() const { return resolution_; }

    DiscriminatorOutput<T> forward(const Tensor<T>& x) const {
        if (x.ndim() != 3 || x.dim(0) != channels_ || x.dim(1) != resolution_ || x.dim(2) != resolution_)
            throw std::invalid_argument("discriminator: input " + shape_str(x.shape()) +
                                        " does not match configured [" + std::to_string(channels_) +
                                        "," + std::to_string(resolution_) + "," +
                                        std::to_string(resolution_) + "]");
        Tensor<T> h = x;
        Tensor<T> feat8, feat4;
        for (size_t i = 0; i < ladder_.size(); ++i) {
            h = leaky_relu(ladder_[i](h), kLeakySlope);
            if (i + 2 == ladder_.size()) feat8 = h;
            if (i + 1 == ladder_.size()) feat4 = h;
        }
        DiscriminatorOutput<T> out;
        out.score = reshape(head_(feat4), {1});
        out.recon8 = tanh(dec8_out_(leaky_relu(dec8_up_(feat4), kLeakySlope)));
        out.recon16 = tanh(dec16_out_(leaky_relu(dec16_up_(feat8), kLeakySlope)));
        return out;
    }

    void collect_params(ParamList<T>& out) {
        for (size_t i = 0; i < ladder_.size(); ++i)
            ladder_[i].collect("disc.ladder" + std::to_string(i), out);
        head_.collect("disc.head", out);
        dec8_up_.collect("disc.dec8_up", out);
        dec8_out_.collect("disc.dec8_out", out);
        dec16_up_.collect("disc.dec16_up", out);
        dec16_out_.collect("disc.dec16_out", out);
    }

private:
    int channels_ = 3, resolution_ = 16;
    std::vector<Conv2d<T>> ladder_;
    Conv2d<T> head_;
    ConvTranspose2d<T> dec8_up_, dec16_up_;
    Conv2d<T> dec8_out_, dec16_out_;
};

// mean(max(0, 1 - s_real)) + mean(max(0, 1 + s_fake))
template <typename T>
Tensor<T> hinge_d_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
    Tensor<T> ones = Tensor<T>::full(real_scores.shape(), T(1));
    Tensor<T> real_term = mean(relu(sub(ones, real_scores)));
    Tensor<T> ones_f = Tensor<T>::full(fake_scores.shape(), T(1));
    Tensor<T> fake_term = mean(relu(add(ones_f, fake_scores)));
    return add(real_term, fake_term);
}

// -mean(s_fake)
template <typename T>
Tensor<T> hinge_g_loss(const Tensor<T>& fake_scores) {
    return neg(mean(fake_scores));
}

// Sum of the mean absolute errors between each decoder output and the
// box-downsampled real image at its resolution. Real samples only.
template <typename T>
Tensor<T> recon_loss(const Tensor<T>& recon8, const Tensor<T>& recon16, const Tensor<T>& real) {
    int res = real.dim(1);
    if (res % 16 != 0) throw std::invalid_argument("recon_loss: resolution must be divisible by 16");
    Tensor<T> t8 = box_downsample(real, res / 8);
    Tensor<T> t16 = box_downsample(real, res / 16);
    return add(mean(abs(sub(recon8, t8))), mean(abs(sub(recon16, t16))));
}

}  // namespace fpa
