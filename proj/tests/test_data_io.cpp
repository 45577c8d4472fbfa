#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "fpa/data_io.hpp"

using fpa::DatasetHandle;
using fpa::SynthKind;
using fpa::Tensor;

namespace {

std::string tmp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

Tensor<float> random_image(int c, int res, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> dist(-1.f, 1.f);
    Tensor<float> x({c, res, res});
    for (auto& v : x.mutable_data()) v = dist(rng);
    return x;
}

}  // namespace

TEST_CASE("pixel mapping endpoints and midpoint") {
    CHECK(fpa::dequantize_pixel(255) == doctest::Approx(1.0));
    CHECK(fpa::dequantize_pixel(0) == doctest::Approx(-1.0));
    CHECK(fpa::dequantize_pixel(127) == doctest::Approx(127.0 / 127.5 - 1.0));  // -0.00392...
    CHECK(fpa::quantize_pixel(1.f) == 255);
    CHECK(fpa::quantize_pixel(-1.f) == 0);
    CHECK(fpa::quantize_pixel(0.f) == 128);  // (0+1)*127.5 = 127.5, half rounds up
    CHECK(fpa::quantize_pixel(2.f) == 255);  // clamped
    CHECK(fpa::quantize_pixel(-2.f) == 0);
}

TEST_CASE("round trip error is bounded by one quantisation step") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> dist(-1.f, 1.f);
    for (int i = 0; i < 10000; ++i) {
        float x = dist(rng);
        float back = fpa::dequantize_pixel(fpa::quantize_pixel(x));
        CHECK(std::abs(back - x) <= 1.f / 127.5f);
    }
}

TEST_CASE("png and ppm files survive a write/read round trip") {
    std::mt19937_64 rng(2);
    std::string dir = tmp_dir("fpa_imgio_test");
    for (const char* name : {"a.png", "a.ppm"}) {
        Tensor<float> img = random_image(3, 16, rng);
        fpa::write_image(dir + "/" + name, img);
        Tensor<float> back = fpa::read_image(dir + "/" + name);
        REQUIRE(back.shape() == img.shape());
        for (size_t i = 0; i < img.data().size(); ++i)
            CHECK(std::abs(back.data()[i] - img.data()[i]) <= 1.f / 127.5f);
        // second round trip is exact: quantisation is idempotent
        fpa::write_image(dir + "/b_" + name, back);
        CHECK(fpa::read_image(dir + "/b_" + name).data() == back.data());
    }
    // grayscale png
    Tensor<float> gray = random_image(1, 8, rng);
    fpa::write_image(dir + "/g.png", gray);
    Tensor<float> gback = fpa::read_image(dir + "/g.png");
    CHECK(gback.shape() == gray.shape());
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic images are deterministic and bounded") {
    for (SynthKind kind : {SynthKind::Blobs, SynthKind::Stripes, SynthKind::Squares}) {
        Tensor<float> a = fpa::synth_image(kind, 16, 7, 3);
        Tensor<float> b = fpa::synth_image(kind, 16, 7, 3);
        CHECK(a.data() == b.data());
        Tensor<float> c = fpa::synth_image(kind, 16, 7, 4);
        CHECK(a.data() != c.data());
        for (float v : a.data()) {
            CHECK(v >= -1.f);
            CHECK(v <= 1.f);
        }
        CHECK(a.shape() == std::vector<int>{3, 16, 16});
    }
}

TEST_CASE("blob centres are uniform over the interior (chi-square)") {
    // 10k samples, 8 bins per axis over [0.2, 0.8]*res; p=0.001 cutoff for
    // 63 dof is ~103.4
    const int res = 16, bins = 8;
    std::vector<int> counts(bins * bins, 0);
    int n = 0;
    for (uint64_t idx = 0; n < 10000; ++idx) {
        for (const fpa::BlobSpec& b : fpa::blob_specs(res, 99, idx)) {
            float ux = (b.cx / res - 0.2f) / 0.6f;
            float uy = (b.cy / res - 0.2f) / 0.6f;
            REQUIRE(ux >= 0.f);
            REQUIRE(ux <= 1.f);
            REQUIRE(uy >= 0.f);
            REQUIRE(uy <= 1.f);
            int bx = std::min(bins - 1, static_cast<int>(ux * bins));
            int by = std::min(bins - 1, static_cast<int>(uy * bins));
            ++counts[by * bins + bx];
            ++n;
        }
    }
    double expected = static_cast<double>(n) / (bins * bins);
    double chi2 = 0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 103.4);
}

TEST_CASE("dataset iteration order is deterministic per seed and epoch") {
    DatasetHandle ds = DatasetHandle::synthetic(SynthKind::Blobs, 32, 16, 5);
    CHECK(ds.size() == 32);
    CHECK(ds.epoch_order(1, 0) == ds.epoch_order(1, 0));
    CHECK(ds.epoch_order(1, 0) != ds.epoch_order(1, 1));
    CHECK(ds.epoch_order(1, 0) != ds.epoch_order(2, 0));
    auto order = ds.epoch_order(1, 0);
    std::vector<size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("folder datasets load, repeat, and reject bad inputs") {
    std::mt19937_64 rng(3);
    std::string dir = tmp_dir("fpa_folder_test");
    Tensor<float> img = random_image(3, 16, rng);
    fpa::write_image(dir + "/only.png", img);
    std::ofstream(dir + "/garbage.png") << "not a png";

    DatasetHandle ds = DatasetHandle::from_folder(dir, 16);  // garbage skipped with warning
    CHECK(ds.size() == 1);
    CHECK(ds.image(0).shape() == std::vector<int>{3, 16, 16});
    for (int i = 0; i < 3; ++i) CHECK(ds.image(0).data() == ds.image(0).data());

    CHECK_THROWS_AS(DatasetHandle::from_folder(dir, 32), std::exception);  // wrong resolution
    std::string empty = tmp_dir("fpa_folder_empty");
    CHECK_THROWS_AS(DatasetHandle::from_folder(empty, 16), std::exception);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(empty);
}

TEST_CASE("open_dataset resolves synthetic names and folder paths") {
    DatasetHandle ds = fpa::open_dataset("stripes", 16, 8, 1);
    CHECK(ds.size() == 8);
    CHECK(ds.resolution() == 16);
    CHECK_THROWS_AS(fpa::open_dataset("no_such_thing", 16, 8, 1), std::exception);
}
