#include "abip/denoise.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "abip/error.hpp"
#include "abip/rng.hpp"
#include "abip/serialize.hpp"

namespace abip {
namespace {

double clip255(double v) { return std::min(255.0, std::max(0.0, v)); }

// Smooth random field: a handful of Gaussian blobs plus a linear ramp,
// min-max normalized to [0, 1].
std::vector<double> smooth_field(int h, int w, Rng& rng) {
  std::vector<double> f(static_cast<std::size_t>(h) * w, 0.0);
  const double diag = std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
  double ramp_x = rng.uniform(-1.0, 1.0), ramp_y = rng.uniform(-1.0, 1.0);
  struct Blob {
    double cy, cx, amp, inv2s2;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < 6; ++i) {
    double s = rng.uniform(0.10, 0.35) * diag;
    blobs.push_back({rng.uniform(0.0, h - 1.0), rng.uniform(0.0, w - 1.0),
                     rng.uniform(0.4, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0),
                     1.0 / (2.0 * s * s)});
  }
  // One axis-aligned step so the scene is only piecewise smooth.
  int step_row = 2 + static_cast<int>(rng.below(static_cast<std::size_t>(std::max(1, h - 4)))),
      step_col = 2 + static_cast<int>(rng.below(static_cast<std::size_t>(std::max(1, w - 4))));
  double step_amp = rng.uniform(0.3, 0.7);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = ramp_x * x / std::max(1, w - 1) + ramp_y * y / std::max(1, h - 1);
      for (const Blob& b : blobs) {
        double dy = y - b.cy, dx = x - b.cx;
        v += b.amp * std::exp(-(dy * dy + dx * dx) * b.inv2s2);
      }
      if (y >= step_row && x >= step_col) v += step_amp;
      f[static_cast<std::size_t>(y) * w + x] = v;
    }
  auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  double span = *hi - *lo;
  if (span <= 0.0) span = 1.0;
  for (double& v : f) v = (v - *lo) / span;
  return f;
}

Dataset transform_concat(const Dataset& samples, int bands) {
  Dataset out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    const std::size_t pixels = s.input.rows();
    Matrix in(pixels * bands, 1), tg(pixels * bands, 1);
    for (int b = 0; b < bands; ++b)
      for (std::size_t p = 0; p < pixels; ++p) {
        in(static_cast<std::size_t>(b) * pixels + p, 0) = s.input(p, b);
        tg(static_cast<std::size_t>(b) * pixels + p, 0) = s.target(p, b);
      }
    out.push_back(Sample{std::move(in), std::move(tg)});
  }
  return out;
}

Dataset transform_band(const Dataset& samples, int band) {
  Dataset out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    const std::size_t pixels = s.input.rows();
    Matrix in(pixels, 1), tg(pixels, 1);
    for (std::size_t p = 0; p < pixels; ++p) {
      in(p, 0) = s.input(p, band);
      tg(p, 0) = s.target(p, band);
    }
    out.push_back(Sample{std::move(in), std::move(tg)});
  }
  return out;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history,
                       bool timings) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history: " + path.string());
  out << "epoch,train_mse,val_mse,elapsed_seconds\n";
  char buf[64];
  for (const EpochStats& e : history) {
    out << e.epoch << ',';
    std::snprintf(buf, sizeof buf, "%.17g", e.train_mse);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", e.val_mse);
    out << buf << ',';
    if (timings) {
      std::snprintf(buf, sizeof buf, "%.3f", e.elapsed_seconds);
      out << buf;
    }
    out << '\n';
  }
}

struct PatchPsnr {
  PsnrResult mean;
  std::size_t identical = 0;
};

// Patch-averaged PSNR: per test patch against its clean target, averaged
// in dB. Patches with zero error carry no finite PSNR and are counted
// separately instead of entering the mean.
PatchPsnr patch_average_psnr(const std::vector<Matrix>& predictions, const Dataset& refs,
                             std::span<const std::size_t> indices) {
  PatchPsnr result;
  double acc = 0.0;
  std::size_t counted = 0;
  for (std::size_t s = 0; s < indices.size(); ++s) {
    PsnrResult r = psnr_patch(refs[indices[s]].target, predictions[s]);
    if (r.identical) {
      ++result.identical;
    } else {
      acc += r.db;
      ++counted;
    }
  }
  if (counted == 0) {
    result.mean.identical = true;
  } else {
    result.mean.db = acc / static_cast<double>(counted);
  }
  return result;
}

MultispectralImage image_from_config(const ImageSpec& spec) {
  if (!spec.abtn_path.empty()) {
    AbtnTensor t = load_abtn(spec.abtn_path);
    if (t.dims.size() != 3)
      throw DataError("image tensor must have rank 3 (H x W x bands): " + spec.abtn_path);
    MultispectralImage img;
    img.height = static_cast<int>(t.dims[0]);
    img.width = static_cast<int>(t.dims[1]);
    img.bands = static_cast<int>(t.dims[2]);
    img.data = Tensor3(t.dims[0], t.dims[1], t.dims[2]);
    std::copy(t.data.begin(), t.data.end(), img.data.flat().begin());
    for (double v : img.data.flat())
      if (!std::isfinite(v) || v < 0.0 || v > 255.0)
        throw DataError("image intensities must lie in [0, 255]: " + spec.abtn_path);
    return img;
  }
  return synth_image(spec.height, spec.width, spec.bands, spec.seed);
}

}  // namespace

MultispectralImage synth_image(int height, int width, int bands, std::uint64_t seed) {
  if (height < 8 || width < 8) throw DimensionError("synth_image: dims must be >= 8");
  if (bands < 1) throw DimensionError("synth_image: bands must be >= 1");
  Rng rng(seed);
  std::vector<double> base = smooth_field(height, width, rng);
  std::vector<double> aux = smooth_field(height, width, rng);

  MultispectralImage img;
  img.height = height;
  img.width = width;
  img.bands = bands;
  img.data = Tensor3(height, width, bands);
  for (int b = 0; b < bands; ++b) {
    // Mixing weight varies smoothly with the band index, so neighboring
    // bands see nearly the same scene.
    double t = bands == 1 ? 0.0 : static_cast<double>(b) / (bands - 1);
    double g = 0.5 + 0.5 * std::cos(3.14159265358979323846 * t);
    double wb = 0.70 + 0.30 * g;
    double wa = 0.30 * (1.0 - g);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double v = wb * base[static_cast<std::size_t>(y) * width + x] +
                   wa * aux[static_cast<std::size_t>(y) * width + x];
        img.data(y, x, b) = clip255(255.0 * v);
      }
  }
  return img;
}

double band_correlation(const MultispectralImage& img, int band_a, int band_b) {
  const std::size_t pixels = static_cast<std::size_t>(img.height) * img.width;
  double mean_a = 0.0, mean_b = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      mean_a += img.data(y, x, band_a);
      mean_b += img.data(y, x, band_b);
    }
  mean_a /= static_cast<double>(pixels);
  mean_b /= static_cast<double>(pixels);
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double da = img.data(y, x, band_a) - mean_a;
      double db = img.data(y, x, band_b) - mean_b;
      cov += da * db;
      var_a += da * da;
      var_b += db * db;
    }
  if (var_a <= 0.0 || var_b <= 0.0) return 0.0;
  return cov / std::sqrt(var_a * var_b);
}

MultispectralImage add_noise(const MultispectralImage& img, const NoiseSpec& spec) {
  if (spec.sparsity < 0.0 || spec.sparsity > 1.0)
    throw ConfigError("noise sparsity must lie in [0, 1]");
  if (spec.sigma < 0.0) throw ConfigError("noise sigma must be >= 0");

  MultispectralImage out = img;
  const std::size_t pixels = static_cast<std::size_t>(img.height) * img.width;
  const std::size_t count =
      static_cast<std::size_t>(std::llround(spec.sparsity * static_cast<double>(pixels)));
  if (count == 0) return out;

  std::vector<std::size_t> order(pixels);
  for (int b = 0; b < img.bands; ++b) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(b)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `count` entries are a uniform draw
    // of distinct pixels.
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + rng.below(pixels - i);
      std::swap(order[i], order[j]);
    }
    for (std::size_t i = 0; i < count; ++i) {
      int y = static_cast<int>(order[i] / img.width);
      int x = static_cast<int>(order[i] % img.width);
      out.data(y, x, b) = clip255(out.data(y, x, b) + rng.normal(0.0, spec.sigma));
    }
  }
  return out;
}

PatchSet extract_patches(const MultispectralImage& clean, const MultispectralImage& noisy,
                         int patch, int hop) {
  if (clean.height != noisy.height || clean.width != noisy.width || clean.bands != noisy.bands)
    throw DimensionError("extract_patches: clean and noisy shapes differ");
  if (patch < 1 || patch > std::min(clean.height, clean.width))
    throw DimensionError("extract_patches: patch must fit inside the image");
  if (hop < 1) throw DimensionError("extract_patches: hop must be >= 1");

  PatchSet set;
  set.patch = patch;
  set.bands = clean.bands;
  const int n_rows = (clean.height - patch) / hop + 1;
  const int n_cols = (clean.width - patch) / hop + 1;
  set.samples.reserve(static_cast<std::size_t>(n_rows) * n_cols);
  set.origins.reserve(set.samples.capacity());
  const std::size_t rows = static_cast<std::size_t>(patch) * patch;
  for (int r = 0; r < n_rows; ++r)
    for (int col = 0; col < n_cols; ++col) {
      int y0 = r * hop, x0 = col * hop;
      Matrix in(rows, clean.bands), tg(rows, clean.bands);
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px) {
          std::size_t row = static_cast<std::size_t>(py) * patch + px;
          for (int b = 0; b < clean.bands; ++b) {
            in(row, b) = noisy.data(y0 + py, x0 + px, b) / 255.0;
            tg(row, b) = clean.data(y0 + py, x0 + px, b) / 255.0;
          }
        }
      set.samples.push_back(Sample{std::move(in), std::move(tg)});
      set.origins.push_back(PatchOrigin{y0, x0});
    }
  return set;
}

namespace {

PsnrResult psnr_from_sums(double squared_error_sum, std::size_t count) {
  if (squared_error_sum == 0.0) return PsnrResult{true, 0.0};
  double mse = squared_error_sum / static_cast<double>(count);
  return PsnrResult{false, 10.0 * std::log10(255.0 * 255.0 / mse)};
}

}  // namespace

PsnrResult psnr(const MultispectralImage& reference, const MultispectralImage& test) {
  if (reference.height != test.height || reference.width != test.width ||
      reference.bands != test.bands)
    throw DimensionError("psnr: shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    double d = reference.data.flat()[i] - test.data.flat()[i];
    acc += d * d;
  }
  return psnr_from_sums(acc, reference.data.size());
}

PsnrResult psnr_patch(const Matrix& reference01, const Matrix& test01) {
  if (!reference01.same_shape(test01)) throw DimensionError("psnr_patch: shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference01.size(); ++i) {
    double d = 255.0 * (reference01.flat()[i] - test01.flat()[i]);
    acc += d * d;
  }
  return psnr_from_sums(acc, reference01.size());
}

std::size_t concat_parameter_count(int in_w, int out_w, int hidden_layers, int h) {
  std::vector<int> topo;
  topo.push_back(in_w);
  for (int i = 0; i < hidden_layers; ++i) topo.push_back(h);
  topo.push_back(out_w);
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < topo.size(); ++l)
    count += static_cast<std::size_t>(topo[l + 1]) * topo[l] + topo[l + 1];
  return count;
}

int matched_concat_width(int in_w, int out_w, int hidden_layers, std::size_t target) {
  int h = 1;
  while (concat_parameter_count(in_w, out_w, hidden_layers, h) < target) ++h;
  return h;
}

void write_band_pgm(const MultispectralImage& img, int band, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write PGM: " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      int v = static_cast<int>(std::lround(clip255(img.data(y, x, band))));
      out.put(static_cast<char>(v));
    }
}

DenoiseReport run_denoise_experiment(const DenoiseConfig& config,
                                     const std::filesystem::path& output_dir, bool csv_timings) {
  std::filesystem::create_directories(output_dir);
  MultispectralImage clean = image_from_config(config.image);
  MultispectralImage noisy = add_noise(clean, config.noise);

  DenoiseReport report;
  if (noisy.data == clean.data) {
    report.degenerate = true;
    report.noisy_psnr = PsnrResult{true, 0.0};
    return report;
  }

  PatchSet patches = extract_patches(clean, noisy);
  const std::size_t total = patches.samples.size();
  if (total < 2) throw DataError("denoise: image too small to form a train/test split");

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(config.split_seed, 0));
  split_rng.shuffle(order);
  std::size_t train_count = config.train_patch_count == 0
                                ? total - 1
                                : std::min(config.train_patch_count, total - 1);
  std::size_t test_count = total - train_count;
  if (config.test_patch_count != 0) test_count = std::min(test_count, config.test_patch_count);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + train_count);
  std::vector<std::size_t> test_idx(order.begin() + train_count,
                                    order.begin() + train_count + test_count);
  report.train_patches = train_count;
  report.test_patches = test_count;

  // Noisy baseline: the corrupted patches themselves.
  {
    std::vector<Matrix> noisy_inputs;
    noisy_inputs.reserve(test_idx.size());
    for (std::size_t idx : test_idx) noisy_inputs.push_back(patches.samples[idx].input);
    PatchPsnr p = patch_average_psnr(noisy_inputs, patches.samples, test_idx);
    report.noisy_psnr = p.mean;
    report.noisy_identical_patches = p.identical;
  }

  const int bands = patches.bands;
  const int pixels = patches.patch * patches.patch;
  const int hidden_layers = static_cast<int>(config.topology.size()) - 2;

  Dataset train_set;
  train_set.reserve(train_idx.size());
  for (std::size_t idx : train_idx) train_set.push_back(patches.samples[idx]);

  std::vector<Matrix> test_inputs;
  test_inputs.reserve(test_idx.size());
  for (std::size_t idx : test_idx) test_inputs.push_back(patches.samples[idx].input);

  std::size_t abipnn_params = 0;

  auto run_method = [&](const std::string& name, const Network& init, const Dataset& data,
                        auto&& predict) {
    auto t0 = std::chrono::steady_clock::now();
    TrainConfig tc = config.train;
    TrainResult tr = train(init, data, tc);
    MethodReport m;
    m.name = name;
    m.parameter_count = init.parameter_count();
    m.epochs_run = static_cast<int>(tr.history.size());
    m.best_epoch = tr.best_epoch;
    m.status = train_status_name(tr.status);
    std::filesystem::path csv = output_dir / ("history_" + name + ".csv");
    write_history_csv(csv, tr.history, csv_timings);
    m.history_csv = csv.string();
    if (tr.status != TrainStatus::diverged) {
      std::vector<Matrix> preds = predict(tr.network);
      PatchPsnr p = patch_average_psnr(preds, patches.samples, test_idx);
      m.psnr_identical = p.mean.identical;
      m.psnr_db = p.mean.db;
      m.identical_patches = p.identical;
    }
    m.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.methods.push_back(std::move(m));
    return tr;
  };

  // ABIPNN: vector neurons, one per pixel, N = bands.
  std::optional<TrainResult> abipnn_result;
  {
    BilinearProduct product = resolve_product(config.product_name, bands);
    Network init = init_network(config.topology, product, Activation::sigmoid(),
                                Activation::sigmoid(), derive_seed(config.init_seed, 1));
    abipnn_params = init.parameter_count();
    abipnn_result = run_method("abipnn", init, train_set, [&](const Network& net) {
      return predict_batch(net, test_inputs, config.train.threads);
    });
  }

  for (const std::string& baseline : config.baselines) {
    if (baseline == "dnn_concat") {
      int h = matched_concat_width(pixels * bands, pixels * bands, hidden_layers, abipnn_params);
      report.dnn_concat_hidden_width = h;
      std::vector<int> topo;
      topo.push_back(pixels * bands);
      for (int i = 0; i < hidden_layers; ++i) topo.push_back(h);
      topo.push_back(pixels * bands);
      Dataset data = transform_concat(train_set, bands);
      Network init = init_network(topo, builtin_product(ProductKind::scalar),
                                  Activation::sigmoid(), Activation::sigmoid(),
                                  derive_seed(config.init_seed, 2));
      Dataset test_concat = transform_concat(patches.samples, bands);
      run_method("dnn_concat", init, data, [&](const Network& net) {
        std::vector<Matrix> flat_inputs;
        flat_inputs.reserve(test_idx.size());
        for (std::size_t idx : test_idx) flat_inputs.push_back(test_concat[idx].input);
        std::vector<Matrix> flat = predict_batch(net, flat_inputs, config.train.threads);
        // Back to pixels x bands for the PSNR comparison.
        std::vector<Matrix> preds;
        preds.reserve(flat.size());
        for (const Matrix& f : flat) {
          Matrix p(pixels, bands);
          for (int b = 0; b < bands; ++b)
            for (int px = 0; px < pixels; ++px)
              p(px, b) = f(static_cast<std::size_t>(b) * pixels + px, 0);
          preds.push_back(std::move(p));
        }
        return preds;
      });
    } else if (baseline == "dnn_parallel") {
      // One scalar network per band, each with the vector topology.
      auto t0 = std::chrono::steady_clock::now();
      MethodReport m;
      m.name = "dnn_parallel";
      std::vector<Matrix> preds(test_idx.size(), Matrix(pixels, bands));
      int epochs_total = 0;
      bool diverged = false;
      std::size_t params = 0;
      for (int b = 0; b < bands; ++b) {
        Dataset data = transform_band(train_set, b);
        Network init = init_network(config.topology, builtin_product(ProductKind::scalar),
                                    Activation::sigmoid(), Activation::sigmoid(),
                                    derive_seed(config.init_seed, 100 + b));
        params += init.parameter_count();
        TrainResult tr = train(init, data, config.train);
        std::filesystem::path csv =
            output_dir / ("history_dnn_parallel_band" + std::to_string(b) + ".csv");
        write_history_csv(csv, tr.history, csv_timings);
        if (b == 0) m.history_csv = csv.string();
        epochs_total += static_cast<int>(tr.history.size());
        if (tr.status == TrainStatus::diverged) {
          diverged = true;
          continue;
        }
        std::vector<Matrix> band_inputs;
        band_inputs.reserve(test_idx.size());
        for (std::size_t idx : test_idx) {
          Matrix in(pixels, 1);
          for (int px = 0; px < pixels; ++px) in(px, 0) = patches.samples[idx].input(px, b);
          band_inputs.push_back(std::move(in));
        }
        std::vector<Matrix> band_preds =
            predict_batch(tr.network, band_inputs, config.train.threads);
        for (std::size_t s = 0; s < band_preds.size(); ++s)
          for (int px = 0; px < pixels; ++px) preds[s](px, b) = band_preds[s](px, 0);
      }
      m.parameter_count = params;
      m.epochs_run = epochs_total;
      m.status = diverged ? "diverged" : "completed";
      if (!diverged) {
        PatchPsnr p = patch_average_psnr(preds, patches.samples, test_idx);
        m.psnr_identical = p.mean.identical;
        m.psnr_db = p.mean.db;
        m.identical_patches = p.identical;
      }
      m.train_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      report.methods.push_back(std::move(m));
    } else {
      throw ConfigError("unknown baseline: " + baseline);
    }
  }

  if (config.dump_bands && abipnn_result && abipnn_result->status != TrainStatus::diverged) {
    // Reassemble the denoised image by averaging overlapping patch
    // predictions (diagnostic only; the reported PSNR stays patch-based).
    std::vector<Matrix> all_inputs;
    all_inputs.reserve(total);
    for (const Sample& s : patches.samples) all_inputs.push_back(s.input);
    std::vector<Matrix> preds =
        predict_batch(abipnn_result->network, all_inputs, config.train.threads);
    Tensor3 acc(clean.data.dim0(), clean.data.dim1(), clean.data.dim2());
    Tensor3 hits(clean.data.dim0(), clean.data.dim1(), clean.data.dim2());
    for (std::size_t s = 0; s < preds.size(); ++s) {
      const PatchOrigin& o = patches.origins[s];
      for (int py = 0; py < patches.patch; ++py)
        for (int px = 0; px < patches.patch; ++px)
          for (int b = 0; b < bands; ++b) {
            acc(o.row + py, o.col + px, b) +=
                preds[s](static_cast<std::size_t>(py) * patches.patch + px, b);
            hits(o.row + py, o.col + px, b) += 1.0;
          }
    }
    MultispectralImage denoised = clean;
    for (std::size_t i = 0; i < acc.size(); ++i)
      denoised.data.flat()[i] = clip255(255.0 * acc.flat()[i] / std::max(1.0, hits.flat()[i]));
    std::filesystem::path band_dir = output_dir / "bands";
    std::filesystem::create_directories(band_dir);
    for (int b = 0; b < bands; ++b) {
      write_band_pgm(clean, b, band_dir / ("original_band" + std::to_string(b) + ".pgm"));
      write_band_pgm(noisy, b, band_dir / ("noisy_band" + std::to_string(b) + ".pgm"));
      write_band_pgm(denoised, b, band_dir / ("denoised_band" + std::to_string(b) + ".pgm"));
    }
  }

  return report;
}

}  // namespace abip
