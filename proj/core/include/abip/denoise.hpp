#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "abip/network.hpp"
#include "abip/train.hpp"

namespace abip {

/// H x W x bands tensor of intensities in [0, 255].
struct MultispectralImage {
  int height = 0;
  int width = 0;
  int bands = 0;
  Tensor3 data;  // height x width x bands

  double at(int y, int x, int b) const { return data(y, x, b); }
};

/// Sparse Gaussian corruption: per band, a fraction of pixels receives
/// additive zero-mean Gaussian noise of the given standard deviation.
struct NoiseSpec {
  double sparsity = 0.0;  // fraction of pixels corrupted per band, [0, 1]
  double sigma = 0.0;     // noise standard deviation, intensity units
  std::uint64_t seed = 0;
};

/// Deterministic synthetic multispectral scene: a shared piecewise-smooth
/// base field with a slowly varying per-band mix, so adjacent bands stay
/// strongly correlated.
MultispectralImage synth_image(int height, int width, int bands, std::uint64_t seed);

/// Pearson correlation between two band slices.
double band_correlation(const MultispectralImage& img, int band_a, int band_b);

/// Corrupts exactly round(sparsity * H * W) distinct pixels per band with
/// N(0, sigma^2) noise, clipping corrupted pixels to [0, 255]. Pure
/// function of (img, spec).
MultispectralImage add_noise(const MultispectralImage& img, const NoiseSpec& spec);

struct PatchOrigin {
  int row = 0;
  int col = 0;
};

/// Aligned noisy/clean patch pairs, normalized to [0, 1]. Sample inputs
/// and targets are patch*patch x bands matrices (row-major spatial
/// flattening).
struct PatchSet {
  Dataset samples;  // input = noisy patch, target = clean patch
  std::vector<PatchOrigin> origins;
  int patch = 8;
  int bands = 0;
};

PatchSet extract_patches(const MultispectralImage& clean, const MultispectralImage& noisy,
                         int patch = 8, int hop = 1);

/// PSNR with peak 255. Identical inputs have no finite PSNR and are
/// reported as the distinguished `identical` outcome instead.
struct PsnrResult {
  bool identical = false;
  double db = 0.0;
};

PsnrResult psnr(const MultispectralImage& reference, const MultispectralImage& test);

/// PSNR of two [0, 1]-normalized patches, computed on the 255 scale.
PsnrResult psnr_patch(const Matrix& reference01, const Matrix& test01);

struct ImageSpec {
  int height = 64;
  int width = 64;
  int bands = 10;
  std::uint64_t seed = 1;
  std::string abtn_path;  // when set, load H x W x bands tensor instead of synthesizing
};

struct DenoiseConfig {
  ImageSpec image;
  NoiseSpec noise{0.10, 100.0, 2};
  std::vector<int> topology{64, 64, 64, 64};
  std::string product_name = "circular";
  std::uint64_t init_seed = 7;
  TrainConfig train{500, 50, 128, 0, 0.1, 5e-4, 1};  // desk-scale budget
  std::size_t train_patch_count = 1200;  // 0 = all but one
  std::size_t test_patch_count = 800;    // 0 = all remaining
  std::uint64_t split_seed = 11;
  std::vector<std::string> baselines;  // "dnn_concat", "dnn_parallel"
  bool dump_bands = false;
};

struct MethodReport {
  std::string name;
  std::size_t parameter_count = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  std::string status;
  bool psnr_identical = false;
  double psnr_db = 0.0;
  std::size_t identical_patches = 0;
  std::string history_csv;
  double train_seconds = 0.0;
};

struct DenoiseReport {
  bool degenerate = false;  // noisy input is bit-identical to the clean image
  PsnrResult noisy_psnr;    // patch-averaged, noisy vs clean
  std::size_t noisy_identical_patches = 0;
  std::size_t train_patches = 0;
  std::size_t test_patches = 0;
  std::vector<MethodReport> methods;
  int dnn_concat_hidden_width = 0;  // matched-parameter width, when that baseline runs
};

/// Full desk-scale protocol: synthesize (or load), corrupt, extract
/// patches, train the vector network and the requested scalar baselines,
/// and evaluate patch-averaged PSNR on held-out patches. Per-method
/// history CSVs (and optional PGM band dumps) land under output_dir.
DenoiseReport run_denoise_experiment(const DenoiseConfig& config,
                                     const std::filesystem::path& output_dir,
                                     bool csv_timings = false);

/// Parameter count of a scalar (N = 1) network with uniform hidden width h
/// and the same layer count as `hidden_layers`, mapping in_w to out_w.
std::size_t concat_parameter_count(int in_w, int out_w, int hidden_layers, int h);

/// Smallest uniform hidden width whose scalar-network parameter count
/// reaches at least `target` (the matched-parameter baseline rule).
int matched_concat_width(int in_w, int out_w, int hidden_layers, std::size_t target);

/// Writes one band slice as a binary 8-bit PGM.
void write_band_pgm(const MultispectralImage& img, int band, const std::filesystem::path& path);

}  // namespace abip
