#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eagleeye/tensor.hpp"

namespace eagleeye {

/// Labelled image (or point) collection. Pixels live in [-1, 1]; labels are
/// class indices below the consumer's class count.
struct Dataset {
    Tensor images;  // [N, C, H, W] for images, [N, D] for point data
    std::vector<int> labels;
    std::string split;

    int size() const { return images.rank() > 0 ? images.dim(0) : 0; }
    Tensor example(int i) const;
    int label(int i) const { return labels.at(static_cast<std::size_t>(i)); }

    /// First `n` examples as a new dataset (view copy).
    Dataset head(int n) const;
};

/// Big-endian IDX readers/writers (magic 2051 for u8 images, 2049 for u8
/// labels). Pixels map linearly from [0,255] to [-1,1]. Distinct errors for
/// bad magic, truncated payload, and image/label count mismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);

/// 2-D Gaussian blobs, class centers fixed on the unit circle, clipped to
/// [-1,1]^2. Deterministic per seed.
Dataset synth_blobs(int classes, int per_class, double spread, std::uint64_t seed);

/// Procedural 28x28 single-channel digit corpus: vector stroke glyphs for
/// '0'..'9' rasterized with per-sample affine jitter, stroke-width variation
/// and pixel noise, quantized to the u8 grid so IDX round-trips are
/// value-identical. Deterministic per (seed, split label).
Dataset synth_digits(int per_class, std::uint64_t seed, const std::string& split = "train");

}  // namespace eagleeye
