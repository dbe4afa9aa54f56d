#include <gtest/gtest.h>

#include "splatmap/metrics.hpp"
#include "splatmap/rng.hpp"
#include "test_util.hpp"

using namespace splatmap;

namespace {

Image checkerboard(int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = (x + y) % 2 == 0 ? 1.0 : 0.0;
            img.set_pixel(x, y, Vec3(v, v, v));
        }
    }
    return img;
}

Image inverted(const Image& img) {
    Image out = img;
    for (auto& v : out.data) v = 1.0 - v;
    return out;
}

}  // namespace

TEST(SsimMap, IdenticalImagesAreOne) {
    Rng rng(1);
    const Image img = splatmap::testing::random_image(rng, 24, 20, 0.0, 1.0);
    const ScalarImage map = ssim_map(img, img);
    for (const double v : map.data) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(SsimMap, AntiCorrelatedCheckerboardIsNonPositive) {
    const Image img = checkerboard(32, 32);
    const ScalarImage map = ssim_map(img, inverted(img));
    // Every interior window is textured (both values present), so SSIM <= 0.
    for (int y = 6; y < 26; ++y) {
        for (int x = 6; x < 26; ++x) EXPECT_LE(map.at(x, y), 0.0);
    }
}

TEST(SsimMap, ConstantImagesClosedForm) {
    // Constant windows have zero variance, so SSIM collapses to
    // (2 mu_a mu_b + C1) C2 / ((mu_a^2 + mu_b^2 + C1) C2), uniform everywhere.
    const double mu_a = 0.5, mu_b = 0.6;
    const double expected = ((2.0 * mu_a * mu_b + kSsimC1) * kSsimC2) /
                            ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * kSsimC2);
    const Image a = Image::constant(20, 16, Vec3(mu_a, mu_a, mu_a));
    const Image b = Image::constant(20, 16, Vec3(mu_b, mu_b, mu_b));
    const ScalarImage map = ssim_map(a, b);
    for (const double v : map.data) EXPECT_NEAR(v, expected, 1e-12);
}

TEST(SsimMap, DimensionMismatchThrows) {
    EXPECT_THROW(ssim_map(Image(4, 4), Image(5, 4)), dimension_mismatch);
}

TEST(Mae, Examples) {
    Rng rng(2);
    const Image img = splatmap::testing::random_image(rng, 16, 16, 0.0, 0.9);
    EXPECT_DOUBLE_EQ(mae(img, img), 0.0);

    Image offset = img;
    for (auto& v : offset.data) v += 0.1;
    EXPECT_NEAR(mae(img, offset), 0.1, 1e-12);

    const Image cb = checkerboard(16, 16);
    EXPECT_DOUBLE_EQ(mae(cb, inverted(cb)), 1.0);
}

TEST(Psnr, Examples) {
    Rng rng(3);
    const Image img = splatmap::testing::random_image(rng, 16, 16, 0.0, 0.9);
    EXPECT_DOUBLE_EQ(psnr(img, img), kPsnrCap);

    Image offset = img;
    for (auto& v : offset.data) v += 0.1;
    EXPECT_NEAR(psnr(img, offset), 20.0, 1e-9);  // 10*log10(1/0.01)

    const Image cb = checkerboard(16, 16);
    EXPECT_NEAR(psnr(cb, inverted(cb)), 0.0, 1e-12);
}

TEST(PhotometricLoss, IdenticalImagesAreZero) {
    Rng rng(4);
    const Image img = splatmap::testing::random_image(rng, 16, 16, 0.0, 1.0);
    const LossResult res = photometric_loss(img, img, 0.2);
    EXPECT_NEAR(res.loss, 0.0, 1e-12);
    for (const double g : res.grad.data) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(PhotometricLoss, PureL1DerivativeByHand) {
    Rng rng(5);
    const Image observed = splatmap::testing::random_image(rng, 12, 12, 0.0, 0.8);
    Image rendered = observed;
    for (auto& v : rendered.data) v += 0.1;
    const LossResult res = photometric_loss(rendered, observed, 0.0);
    EXPECT_NEAR(res.loss, 0.1, 1e-12);
    const double n = static_cast<double>(rendered.data.size());
    for (const double g : res.grad.data) EXPECT_NEAR(g, 1.0 / n, 1e-15);
}

TEST(PhotometricLoss, GradientMatchesFiniteDifferences) {
    Rng rng(6);
    const int w = 16, h = 16;
    for (int trial = 0; trial < 3; ++trial) {
        const Image observed = splatmap::testing::random_image(rng, w, h, 0.0, 1.0);
        Image rendered = observed;
        // Keep |rendered - observed| away from zero so the L1 kink is not
        // straddled by the FD step.
        for (auto& v : rendered.data) {
            const double delta = rng.uniform(0.02, 0.3) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            v = std::clamp(v + delta, -0.5, 1.5);
        }
        const LossResult res = photometric_loss(rendered, observed, 0.2);

        const double fd_h = 1e-6;
        Rng pick(100 + trial);
        for (int probe = 0; probe < 120; ++probe) {
            const size_t i = pick.uniform_index(rendered.data.size());
            Image plus = rendered, minus = rendered;
            plus.data[i] += fd_h;
            minus.data[i] -= fd_h;
            const double fd = (photometric_loss(plus, observed, 0.2).loss -
                               photometric_loss(minus, observed, 0.2).loss) /
                              (2.0 * fd_h);
            EXPECT_NEAR(res.grad.data[i], fd, 1e-5) << "element " << i;
        }
    }
}

TEST(PhotometricLoss, DimensionMismatchThrows) {
    EXPECT_THROW(photometric_loss(Image(4, 4), Image(4, 5), 0.2), dimension_mismatch);
}
