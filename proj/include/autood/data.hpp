#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autood/tensor.hpp"

namespace autood {

// Image dataset with optional binary labels (1 = outlier) and optional
// per-pixel defect masks. Samples are [n, C, H, W] with values in [0,1].
struct Dataset {
    Tensor samples;
    std::vector<int> labels;
    std::vector<Tensor> masks;  // [H,W] each, aligned with samples
    std::string provenance;
    uint64_t seed = 0;

    int size() const { return samples.shape.empty() ? 0 : samples.shape[0]; }
    std::vector<int> sample_shape() const {  // {C,H,W}
        return {samples.shape[1], samples.shape[2], samples.shape[3]};
    }
    bool has_labels() const { return !labels.empty(); }
    bool has_masks() const { return !masks.empty(); }
};

// rows of `samples` selected by index, as a batch tensor
Tensor gather_samples(const Dataset& d, const std::vector<int>& idx);

struct SplitPlan {
    double train_ratio = 0.6;
    double valid_ratio = 0.2;
    double test_ratio = 0.2;
    double contamination = 0.05;
    uint64_t seed = 0;
};

struct Splits {
    Dataset train;  // outlier-free, unlabeled
    Dataset valid;  // labeled
    Dataset test;   // labeled
};

enum class NoiseKind { kGaussian, kUniform };
enum class InDistFamily { kBlobs, kTextures };

// i.i.d. pixel noise; gaussian is mean 0.5, unit variance, clipped to [0,1]
Dataset synth_noise(NoiseKind kind, int n, std::vector<int> shape, uint64_t seed);

// reconstructible in-distribution families for desk-scale experiments
Dataset make_indist(InDistFamily family, int n, std::vector<int> shape, uint64_t seed);

// 6:2:2 split with injected outliers in valid/test; train stays clean
Splits plant_outliers(const Dataset& in_data, const Dataset& out_data, const SplitPlan& plan);

// textures, half clean and half with one contiguous defect patch + mask
Dataset synth_defects(int n, std::vector<int> shape, uint64_t seed);

// IDX (MNIST-style) container: big-endian magic 0x00000801 (u8 vector) or
// 0x00000803 (u8 3-D), big-endian u32 dims, u8 payload scaled to [0,1]
Tensor load_idx(const std::string& path);
void save_idx(const std::string& path, const Tensor& t);

// dataset persisted as IDX payload plus a JSON sidecar manifest
void save_dataset(const std::string& dir, const std::string& name, const Dataset& d);
Dataset load_dataset(const std::string& dir, const std::string& name);

}  // namespace autood
