#include "autood/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "autood/rng.hpp"

namespace autood {

namespace {

void check_image_shape(const std::vector<int>& shape) {
    if (shape.size() != 3) throw ContractError("sample shape must be {C,H,W}");
}

int64_t plane_size(const std::vector<int>& shape) {
    return static_cast<int64_t>(shape[0]) * shape[1] * shape[2];
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
        int j = rng.uniform_int(i + 1);
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
}

}  // namespace

Tensor gather_samples(const Dataset& d, const std::vector<int>& idx) {
    auto s = d.sample_shape();
    int64_t pl = plane_size(s);
    Tensor out({static_cast<int>(idx.size()), s[0], s[1], s[2]});
    for (size_t i = 0; i < idx.size(); ++i) {
        const double* src = d.samples.data.data() + idx[i] * pl;
        std::copy(src, src + pl, out.data.data() + static_cast<int64_t>(i) * pl);
    }
    return out;
}

Dataset synth_noise(NoiseKind kind, int n, std::vector<int> shape, uint64_t seed) {
    if (n < 1) throw ContractError("synth_noise: n must be >= 1");
    check_image_shape(shape);
    Rng rng(seed);
    Dataset d;
    d.samples = Tensor({n, shape[0], shape[1], shape[2]});
    for (auto& v : d.samples.data) {
        if (kind == NoiseKind::kGaussian) {
            v = std::clamp(0.5 + rng.normal(), 0.0, 1.0);
        } else {
            v = rng.uniform();
        }
    }
    d.provenance = kind == NoiseKind::kGaussian ? "gaussian-noise" : "uniform-noise";
    d.seed = seed;
    return d;
}

Dataset make_indist(InDistFamily family, int n, std::vector<int> shape, uint64_t seed) {
    if (n < 1) throw ContractError("make_indist: n must be >= 1");
    check_image_shape(shape);
    Rng rng(seed);
    int C = shape[0], H = shape[1], W = shape[2];
    Dataset d;
    d.samples = Tensor({n, C, H, W});
    for (int i = 0; i < n; ++i) {
        double* img = d.samples.data.data() + static_cast<int64_t>(i) * plane_size(shape);
        if (family == InDistFamily::kBlobs) {
            // one smooth bump per image on a coarse grid of anchor points,
            // continuous jitter keeps the intensity maximum unique
            int gy = i % 3, gx = (i / 3) % 3;
            double cy = (0.25 + 0.25 * gy) * H + rng.uniform(-1.0, 1.0);
            double cx = (0.25 + 0.25 * gx) * W + rng.uniform(-1.0, 1.0);
            double sigma = rng.uniform(H / 8.0, H / 5.0);
            double amp = rng.uniform(0.75, 1.0);
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                        img[(static_cast<int64_t>(c) * H + y) * W + x] =
                            amp * std::exp(-d2 / (2.0 * sigma * sigma));
                    }
        } else {
            // periodic stripes / checks with phase and angle jitter; low
            // frequencies keep the family reconstructible at desk scale
            bool checks = i % 2 == 1;
            double freq = 1.0 + rng.uniform_int(2);
            double theta = (rng.uniform_int(4) * M_PI / 4.0) + rng.uniform(-0.08, 0.08);
            double phase = rng.uniform(0.0, 2.0 * M_PI);
            double phase2 = rng.uniform(0.0, 2.0 * M_PI);
            double ct = std::cos(theta), st = std::sin(theta);
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        double u = (x * ct + y * st) / W;
                        double v = (-x * st + y * ct) / H;
                        double val = std::sin(2.0 * M_PI * freq * u + phase);
                        if (checks) val *= std::sin(2.0 * M_PI * freq * v + phase2);
                        img[(static_cast<int64_t>(c) * H + y) * W + x] = 0.5 + 0.38 * val;
                    }
        }
    }
    d.provenance = family == InDistFamily::kBlobs ? "blobs" : "textures";
    d.seed = seed;
    return d;
}

Splits plant_outliers(const Dataset& in_data, const Dataset& out_data, const SplitPlan& plan) {
    if (in_data.size() < 5) throw ContractError("plant_outliers: in_data too small");
    if (in_data.sample_shape() != out_data.sample_shape())
        throw ContractError("plant_outliers: in/out sample shapes differ");
    double rsum = plan.train_ratio + plan.valid_ratio + plan.test_ratio;
    if (std::fabs(rsum - 1.0) > 1e-9) throw ContractError("plant_outliers: ratios must sum to 1");

    int n = in_data.size();
    int n_train = static_cast<int>(std::floor(plan.train_ratio * n));
    int n_valid = static_cast<int>(std::floor(plan.valid_ratio * n));
    int n_test = static_cast<int>(std::floor(plan.test_ratio * n));
    int k_valid = static_cast<int>(std::floor(plan.contamination * n_valid));
    int k_test = static_cast<int>(std::floor(plan.contamination * n_test));
    if (out_data.size() < k_valid + k_test)
        throw ContractError("plant_outliers: need " + std::to_string(k_valid + k_test) +
                            " outliers, have " + std::to_string(out_data.size()));
    if (n_train + (n_valid - k_valid) + (n_test - k_test) > n)
        throw ContractError("plant_outliers: not enough in-distribution samples");

    Rng rng(plan.seed);
    std::vector<int> in_idx(static_cast<size_t>(n));
    std::iota(in_idx.begin(), in_idx.end(), 0);
    shuffle_indices(in_idx, rng);
    std::vector<int> out_idx(static_cast<size_t>(out_data.size()));
    std::iota(out_idx.begin(), out_idx.end(), 0);
    shuffle_indices(out_idx, rng);

    auto s = in_data.sample_shape();
    int64_t pl = plane_size(s);
    size_t in_cursor = 0, out_cursor = 0;

    auto build_split = [&](int size, int k_out, bool labeled) {
        Dataset split;
        split.samples = Tensor({size, s[0], s[1], s[2]});
        if (labeled) split.labels.assign(static_cast<size_t>(size), 0);
        // interleave positions deterministically
        std::vector<int> pos(static_cast<size_t>(size));
        std::iota(pos.begin(), pos.end(), 0);
        shuffle_indices(pos, rng);
        for (int r = 0; r < size; ++r) {
            int dst = pos[static_cast<size_t>(r)];
            const double* src;
            if (r < k_out) {
                src = out_data.samples.data.data() + out_idx[out_cursor++] * pl;
                split.labels[static_cast<size_t>(dst)] = 1;
            } else {
                src = in_data.samples.data.data() + in_idx[in_cursor++] * pl;
            }
            std::copy(src, src + pl, split.samples.data.data() + static_cast<int64_t>(dst) * pl);
        }
        split.seed = plan.seed;
        return split;
    };

    Splits out;
    out.train = build_split(n_train, 0, false);
    out.train.provenance = in_data.provenance + "/train";
    out.valid = build_split(n_valid, k_valid, true);
    out.valid.provenance = in_data.provenance + "/valid";
    out.test = build_split(n_test, k_test, true);
    out.test.provenance = in_data.provenance + "/test";
    return out;
}

Dataset synth_defects(int n, std::vector<int> shape, uint64_t seed) {
    if (n < 2) throw ContractError("synth_defects: n must be >= 2");
    check_image_shape(shape);
    Dataset d = make_indist(InDistFamily::kTextures, n, shape, seed);
    Rng rng(Rng::mix(seed, 0x5eed));
    int C = shape[0], H = shape[1], W = shape[2];
    d.masks.reserve(static_cast<size_t>(n));
    d.labels.assign(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        Tensor mask({H, W});
        bool defective = i >= n / 2;
        if (defective) {
            // one rectangular patch, 4-15% of the pixels, brightness shift
            int ph = std::max(2, static_cast<int>(std::round(H * rng.uniform(0.22, 0.38))));
            int pw = std::max(2, static_cast<int>(std::round(W * rng.uniform(0.22, 0.38))));
            ph = std::min(ph, H - 1);
            pw = std::min(pw, W - 1);
            int y0 = rng.uniform_int(H - ph);
            int x0 = rng.uniform_int(W - pw);
            double* img = d.samples.data.data() +
                          static_cast<int64_t>(i) * plane_size(shape);
            // intensity shift to a level anchored above the surrounding
            // mean, plus per-pixel speckle: anomalous in level and
            // pattern while staying inside the overall intensity range
            double bg = 0.0;
            int64_t n_out = 0;
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        if (y >= y0 && y < y0 + ph && x >= x0 && x < x0 + pw) continue;
                        bg += img[(static_cast<int64_t>(c) * H + y) * W + x];
                        ++n_out;
                    }
            bg /= static_cast<double>(n_out);
            for (int y = y0; y < y0 + ph; ++y)
                for (int x = x0; x < x0 + pw; ++x) {
                    mask[static_cast<int64_t>(y) * W + x] = 1.0;
                    for (int c = 0; c < C; ++c) {
                        double& px = img[(static_cast<int64_t>(c) * H + y) * W + x];
                        px = std::clamp(bg + 0.3 + 0.12 * (px - bg) + 0.1 * rng.normal(),
                                        0.0, 1.0);
                    }
                }
            d.labels[static_cast<size_t>(i)] = 1;
        }
        d.masks.push_back(std::move(mask));
    }
    d.provenance = "synth-defects";
    d.seed = seed;
    return d;
}

// --- IDX i/o ----------------------------------------------------------------

namespace {

uint32_t read_be_u32(std::ifstream& is, const std::string& path, size_t& offset) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
        throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
    offset += 4;
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_be_u32(std::ofstream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Tensor load_idx(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path + "'");
    size_t offset = 0;
    uint32_t magic = read_be_u32(is, path, offset);
    int rank;
    if (magic == 0x00000801u) {
        rank = 1;
    } else if (magic == 0x00000803u) {
        rank = 3;
    } else {
        throw FormatError(path + ": bad magic at byte offset 0");
    }
    std::vector<int> shape(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) {
        uint32_t d = read_be_u32(is, path, offset);
        if (d == 0 || d > (1u << 28)) throw FormatError(path + ": implausible dimension");
        shape[static_cast<size_t>(i)] = static_cast<int>(d);
    }
    Tensor t(shape);
    std::vector<unsigned char> buf(static_cast<size_t>(t.numel()));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<int64_t>(is.gcount()) != t.numel())
        throw FormatError(path + ": truncated payload at byte offset " +
                          std::to_string(offset + static_cast<size_t>(is.gcount())));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = buf[static_cast<size_t>(i)] / 255.0;
    return t;
}

void save_idx(const std::string& path, const Tensor& t) {
    if (t.rank() != 1 && t.rank() != 3)
        throw ContractError("save_idx: tensor must be rank 1 or 3");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    write_be_u32(os, t.rank() == 1 ? 0x00000801u : 0x00000803u);
    for (int d : t.shape) write_be_u32(os, static_cast<uint32_t>(d));
    std::vector<unsigned char> buf(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) {
        double v = std::clamp(t[i], 0.0, 1.0);
        buf[static_cast<size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw FormatError("write failed for '" + path + "'");
}

// --- persistence ------------------------------------------------------------

void save_dataset(const std::string& dir, const std::string& name, const Dataset& d) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto s = d.sample_shape();
    // IDX 3-D holds [n*C, H, W]; channel count lives in the manifest
    Tensor flat({d.size() * s[0], s[1], s[2]}, d.samples.data);
    save_idx((fs::path(dir) / (name + ".idx")).string(), flat);

    nlohmann::json j;
    j["provenance"] = d.provenance;
    j["seed"] = d.seed;
    j["split"] = name;
    j["channels"] = s[0];
    j["samples_file"] = name + ".idx";
    if (d.has_labels()) j["labels"] = d.labels;
    if (d.has_masks()) {
        Tensor masks({static_cast<int>(d.masks.size()), s[1], s[2]});
        for (size_t i = 0; i < d.masks.size(); ++i)
            std::copy(d.masks[i].data.begin(), d.masks[i].data.end(),
                      masks.data.begin() + static_cast<int64_t>(i) * s[1] * s[2]);
        save_idx((fs::path(dir) / (name + "_masks.idx")).string(), masks);
        j["masks_file"] = name + "_masks.idx";
    }
    std::ofstream os(fs::path(dir) / (name + ".json"));
    os << j.dump(2) << "\n";
    if (!os) throw FormatError("failed to write manifest for '" + name + "'");
}

Dataset load_dataset(const std::string& dir, const std::string& name) {
    namespace fs = std::filesystem;
    std::ifstream is(fs::path(dir) / (name + ".json"));
    if (!is) throw FormatError("missing manifest for dataset '" + name + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset manifest: ") + e.what());
    }
    Dataset d;
    d.provenance = j.value("provenance", "");
    d.seed = j.value("seed", 0ULL);
    int channels = j.value("channels", 1);
    Tensor flat = load_idx((fs::path(dir) / j.at("samples_file").get<std::string>()).string());
    if (flat.rank() != 3 || flat.shape[0] % channels != 0)
        throw FormatError("dataset '" + name + "': payload inconsistent with manifest");
    d.samples = Tensor({flat.shape[0] / channels, channels, flat.shape[1], flat.shape[2]},
                       std::move(flat.data));
    if (j.contains("labels")) d.labels = j.at("labels").get<std::vector<int>>();
    if (j.contains("masks_file")) {
        Tensor masks = load_idx((fs::path(dir) / j.at("masks_file").get<std::string>()).string());
        for (int i = 0; i < masks.shape[0]; ++i) {
            Tensor m({masks.shape[1], masks.shape[2]});
            std::copy(masks.data.begin() + static_cast<int64_t>(i) * m.numel(),
                      masks.data.begin() + static_cast<int64_t>(i + 1) * m.numel(),
                      m.data.begin());
            d.masks.push_back(std::move(m));
        }
    }
    return d;
}

}  // namespace autood
