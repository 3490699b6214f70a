#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "abip/denoise.hpp"
#include "abip/error.hpp"

using namespace abip;

TEST_CASE("synth_image is deterministic and well-formed") {
  MultispectralImage a = synth_image(32, 48, 5, 9);
  MultispectralImage b = synth_image(32, 48, 5, 9);
  MultispectralImage c = synth_image(32, 48, 5, 10);
  CHECK(a.data == b.data);
  CHECK(!(a.data == c.data));
  for (double v : a.data.flat()) {
    CHECK(v >= 0.0);
    CHECK(v <= 255.0);
  }
  CHECK(synth_image(8, 8, 1, 3).bands == 1);
  CHECK_THROWS_AS(synth_image(4, 64, 3, 1), DimensionError);
}

TEST_CASE("adjacent bands of synthetic scenes correlate above 0.9") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    MultispectralImage img = synth_image(64, 64, 10, seed);
    for (int b = 0; b + 1 < img.bands; ++b) {
      double corr = band_correlation(img, b, b + 1);
      REQUIRE(corr > 0.9);
    }
  }
}

TEST_CASE("add_noise") {
  MultispectralImage img = synth_image(32, 32, 4, 5);

  SUBCASE("sparsity 0 and sigma 0 are bit-exact no-ops") {
    CHECK(add_noise(img, NoiseSpec{0.0, 100.0, 1}).data == img.data);
    CHECK(add_noise(img, NoiseSpec{0.25, 0.0, 1}).data == img.data);
  }

  SUBCASE("corrupts exactly round(sparsity * H * W) pixels per band") {
    MultispectralImage gray;
    gray.height = 32;
    gray.width = 32;
    gray.bands = 4;
    gray.data = Tensor3(32, 32, 4);
    gray.data.fill(128.0);
    MultispectralImage noisy = add_noise(gray, NoiseSpec{0.10, 100.0, 7});
    for (int b = 0; b < 4; ++b) {
      int changed = 0;
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          if (noisy.data(y, x, b) != 128.0) ++changed;
      CHECK(changed == 102);  // round(0.10 * 1024)
    }
  }

  SUBCASE("pure function of image and spec") {
    NoiseSpec spec{0.15, 80.0, 11};
    CHECK(add_noise(img, spec).data == add_noise(img, spec).data);
    CHECK(!(add_noise(img, spec).data == add_noise(img, NoiseSpec{0.15, 80.0, 12}).data));
  }

  SUBCASE("clips to the intensity range") {
    MultispectralImage noisy = add_noise(img, NoiseSpec{0.5, 500.0, 13});
    for (double v : noisy.data.flat()) {
      CHECK(v >= 0.0);
      CHECK(v <= 255.0);
    }
  }

  SUBCASE("invalid specs are rejected") {
    CHECK_THROWS_AS(add_noise(img, NoiseSpec{-0.1, 10.0, 1}), ConfigError);
    CHECK_THROWS_AS(add_noise(img, NoiseSpec{1.5, 10.0, 1}), ConfigError);
    CHECK_THROWS_AS(add_noise(img, NoiseSpec{0.1, -1.0, 1}), ConfigError);
  }
}

TEST_CASE("extract_patches geometry") {
  MultispectralImage small = synth_image(8, 8, 2, 1);
  CHECK(extract_patches(small, small).samples.size() == 1);

  MultispectralImage ten = synth_image(10, 10, 2, 2);
  CHECK(extract_patches(ten, ten).samples.size() == 9);

  // The full-scale geometry: 205 x 205 with hop 1 gives (205-7)^2 patches.
  MultispectralImage big = synth_image(205, 205, 1, 3);
  CHECK(extract_patches(big, big).samples.size() == 39204);

  MultispectralImage other = synth_image(9, 8, 2, 4);
  CHECK_THROWS_AS(extract_patches(small, other), DimensionError);
}

TEST_CASE("patches normalize to [0,1] and denormalize back to intensities") {
  MultispectralImage clean = synth_image(12, 12, 3, 6);
  MultispectralImage noisy = add_noise(clean, NoiseSpec{0.2, 60.0, 7});
  PatchSet set = extract_patches(clean, noisy);
  REQUIRE(set.samples.size() == 25);
  REQUIRE(set.origins.size() == 25);
  for (std::size_t p = 0; p < set.samples.size(); ++p) {
    const Sample& s = set.samples[p];
    const PatchOrigin& o = set.origins[p];
    for (int py = 0; py < 8; ++py)
      for (int px = 0; px < 8; ++px)
        for (int b = 0; b < 3; ++b) {
          double v = s.target(static_cast<std::size_t>(py) * 8 + px, b);
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          REQUIRE(std::abs(v * 255.0 - clean.data(o.row + py, o.col + px, b)) < 1e-12);
          double nv = s.input(static_cast<std::size_t>(py) * 8 + px, b);
          REQUIRE(std::abs(nv * 255.0 - noisy.data(o.row + py, o.col + px, b)) < 1e-12);
        }
  }
}

TEST_CASE("psnr closed forms and edge cases") {
  MultispectralImage ref = synth_image(16, 16, 2, 8);

  SUBCASE("uniform unit error") {
    MultispectralImage test = ref;
    for (double& v : test.data.flat()) v = v <= 254.0 ? v + 1.0 : v - 1.0;
    PsnrResult r = psnr(ref, test);
    REQUIRE(!r.identical);
    CHECK(r.db == doctest::Approx(10.0 * std::log10(255.0 * 255.0)).epsilon(1e-12));
  }

  SUBCASE("full-scale error gives 0 dB") {
    MultispectralImage black = ref, white = ref;
    black.data.fill(0.0);
    white.data.fill(255.0);
    PsnrResult r = psnr(black, white);
    REQUIRE(!r.identical);
    CHECK(r.db == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("identical inputs are a distinguished outcome") {
    CHECK(psnr(ref, ref).identical);
  }

  SUBCASE("scaling the error strictly decreases PSNR") {
    Matrix a(4, 2), small(4, 2), big(4, 2);
    a.fill(0.5);
    for (std::size_t i = 0; i < a.size(); ++i) {
      small.flat()[i] = a.flat()[i] + 0.01 * (i % 2 ? 1 : -1);
      big.flat()[i] = a.flat()[i] + 0.03 * (i % 2 ? 1 : -1);
    }
    PsnrResult ps = psnr_patch(a, small), pb = psnr_patch(a, big);
    CHECK(ps.db > pb.db);
  }

  SUBCASE("shape mismatches are rejected") {
    MultispectralImage other = synth_image(16, 17, 2, 8);
    CHECK_THROWS_AS(psnr(ref, other), DimensionError);
  }
}

TEST_CASE("matched-parameter width for the concat baseline") {
  // The desk-scale configuration: 640-h-h-640 against 124800 parameters.
  std::size_t target = 124800;
  int h = matched_concat_width(640, 640, 2, target);
  CHECK(h == 91);
  CHECK(concat_parameter_count(640, 640, 2, h) >= target);
  CHECK(concat_parameter_count(640, 640, 2, h - 1) < target);

  // General property on a few random-ish targets.
  for (std::size_t t : {1000UL, 54321UL, 250000UL}) {
    int w = matched_concat_width(64, 64, 3, t);
    CHECK(concat_parameter_count(64, 64, 3, w) >= t);
    if (w > 1) CHECK(concat_parameter_count(64, 64, 3, w - 1) < t);
  }
}

TEST_CASE("degenerate noise spec short-circuits the experiment") {
  DenoiseConfig cfg;
  cfg.image = ImageSpec{16, 16, 3, 1, ""};
  cfg.noise = NoiseSpec{0.0, 100.0, 2};
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "abip_degenerate";
  DenoiseReport r = run_denoise_experiment(cfg, dir);
  CHECK(r.degenerate);
  CHECK(r.noisy_psnr.identical);
  CHECK(r.methods.empty());
}

TEST_CASE("tiny end-to-end denoise experiment") {
  DenoiseConfig cfg;
  cfg.image = ImageSpec{16, 16, 3, 1, ""};
  cfg.noise = NoiseSpec{0.15, 120.0, 2};
  cfg.topology = {64, 12, 64};
  cfg.product_name = "circular";
  cfg.init_seed = 3;
  cfg.train.max_epochs = 8;
  cfg.train.patience = 8;
  cfg.train.minibatch_size = 16;
  cfg.train.seed = 4;
  cfg.train_patch_count = 50;
  cfg.test_patch_count = 20;
  cfg.baselines = {"dnn_concat", "dnn_parallel"};
  cfg.dump_bands = true;
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "abip_tiny_denoise";
  std::filesystem::remove_all(dir);
  DenoiseReport r = run_denoise_experiment(cfg, dir);

  CHECK(!r.degenerate);
  CHECK(r.train_patches == 50);
  CHECK(r.test_patches == 20);
  REQUIRE(r.methods.size() == 3);
  CHECK(r.methods[0].name == "abipnn");
  CHECK(r.methods[0].parameter_count == (64 * 12 + 12) * 3 + (12 * 64 + 64) * 3);
  CHECK(std::filesystem::exists(r.methods[0].history_csv));
  CHECK(r.methods[1].name == "dnn_concat");
  CHECK(r.methods[1].parameter_count >= r.methods[0].parameter_count);
  CHECK(r.dnn_concat_hidden_width >= 1);
  CHECK(r.methods[2].name == "dnn_parallel");
  // Parallel nets share the vector topology at N=1, one per band.
  CHECK(r.methods[2].parameter_count == 3 * ((64 * 12 + 12) + (12 * 64 + 64)));
  for (const MethodReport& m : r.methods) {
    CHECK(!m.psnr_identical);
    CHECK(std::isfinite(m.psnr_db));
  }
  CHECK(!r.noisy_psnr.identical);

  // Band dumps: one PGM per band for original, noisy, and denoised.
  for (int b = 0; b < 3; ++b) {
    CHECK(std::filesystem::exists(dir / "bands" / ("original_band" + std::to_string(b) + ".pgm")));
    CHECK(std::filesystem::exists(dir / "bands" / ("noisy_band" + std::to_string(b) + ".pgm")));
    CHECK(std::filesystem::exists(dir / "bands" / ("denoised_band" + std::to_string(b) + ".pgm")));
  }
}
