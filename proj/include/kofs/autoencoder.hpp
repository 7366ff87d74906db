#pragma once

#include <algorithm>
#include <fstream>
#include <span>
#include <vector>

#include "kofs/common.hpp"
#include "kofs/dataset.hpp"
#include "kofs/nn.hpp"
#include "kofs/stats.hpp"

namespace kofs {

// Per-feature summary statistics in a descriptor slot.
constexpr size_t kDescriptorStats = 6;  // mean, std, min, max, skewness, mean |rho| to selected peers

// Fixed-length stand-in for a variable-width feature subset: d slots of
// kDescriptorStats entries each, zeroed for deselected features. Statistics
// are row-permutation invariant, so the descriptor is too.
struct SubsetDescriptor {
    std::vector<double> vec;        // length d * kDescriptorStats
    std::vector<uint8_t> mask;
};

// Column statistics and pairwise |pearson| precomputed over a row view, so a
// descriptor for any mask is assembled in O(d^2) instead of O(d^2 n).
struct DescriptorContext {
    size_t d = 0;
    std::vector<double> mean, sd, min, max, skew;
    Matrix abs_corr;  // |pearson|, zero diagonal
};

inline DescriptorContext make_descriptor_context(const Dataset& ds,
                                                 std::span<const size_t> rows = {},
                                                 const std::vector<uint8_t>* restrict_mask = nullptr) {
    DescriptorContext ctx;
    ctx.d = ds.d;
    ctx.mean.assign(ds.d, 0.0);
    ctx.sd.assign(ds.d, 0.0);
    ctx.min.assign(ds.d, 0.0);
    ctx.max.assign(ds.d, 0.0);
    ctx.skew.assign(ds.d, 0.0);
    ctx.abs_corr = Matrix(ds.d, ds.d);

    const bool all_rows = rows.empty();
    const size_t n = all_rows ? ds.n : rows.size();

    std::vector<std::vector<double>> cols(ds.d);
    for (size_t j = 0; j < ds.d; ++j) {
        if (restrict_mask && !(*restrict_mask)[j]) continue;
        std::vector<double>& col = cols[j];
        col.resize(n);
        for (size_t i = 0; i < n; ++i) col[i] = ds.features(all_rows ? i : rows[i], j);
        ctx.mean[j] = stats::mean(col);
        ctx.sd[j] = stats::stddev(col);
        ctx.min[j] = stats::minimum(col);
        ctx.max[j] = stats::maximum(col);
        ctx.skew[j] = stats::skewness(col);
    }
    for (size_t j = 0; j < ds.d; ++j) {
        if (restrict_mask && !(*restrict_mask)[j]) continue;
        for (size_t k = j + 1; k < ds.d; ++k) {
            if (restrict_mask && !(*restrict_mask)[k]) continue;
            const double r = std::abs(stats::pearson(cols[j], cols[k]));
            ctx.abs_corr(j, k) = r;
            ctx.abs_corr(k, j) = r;
        }
    }
    return ctx;
}

inline SubsetDescriptor build_descriptor(const DescriptorContext& ctx,
                                         const std::vector<uint8_t>& mask) {
    if (mask.size() != ctx.d) throw DataError("descriptor mask length mismatch");
    SubsetDescriptor desc;
    desc.mask = mask;
    desc.vec.assign(ctx.d * kDescriptorStats, 0.0);
    for (size_t j = 0; j < ctx.d; ++j) {
        if (!mask[j]) continue;
        double rho_sum = 0.0;
        size_t peers = 0;
        for (size_t k = 0; k < ctx.d; ++k) {
            if (k == j || !mask[k]) continue;
            rho_sum += ctx.abs_corr(j, k);
            ++peers;
        }
        double* slot = desc.vec.data() + j * kDescriptorStats;
        slot[0] = ctx.mean[j];
        slot[1] = ctx.sd[j];
        slot[2] = ctx.min[j];
        slot[3] = ctx.max[j];
        slot[4] = ctx.skew[j];
        slot[5] = peers ? rho_sum / static_cast<double>(peers) : 0.0;
    }
    return desc;
}

inline SubsetDescriptor build_descriptor(const Dataset& ds, const std::vector<uint8_t>& mask) {
    return build_descriptor(make_descriptor_context(ds), mask);
}

enum class AeProvenance { FullSet, Subset };

// Encoder and decoder stored as one stacked network; the encoder is the
// prefix of encoder_layers layers and its output is the representation.
struct SubsetAutoencoder {
    DenseNet net;
    size_t encoder_layers = 2;
    size_t code_size = 32;
    AeProvenance trained_on = AeProvenance::FullSet;
    std::vector<uint8_t> trained_mask;

    size_t input_size() const { return net.input_size(); }
};

// d*m -> hidden (ReLU) -> k (Tanh) | k -> hidden (ReLU) -> d*m (Identity)
inline SubsetAutoencoder make_autoencoder(size_t input_dim, size_t code = 32, size_t hidden = 64,
                                          uint64_t seed = 0) {
    SubsetAutoencoder ae;
    ae.code_size = code;
    ae.encoder_layers = 2;
    ae.net = DenseNet::make({input_dim, hidden, code, hidden, input_dim},
                            {Activation::ReLU, Activation::Tanh, Activation::ReLU,
                             Activation::Identity},
                            seed);
    return ae;
}

inline std::vector<double> encode(const SubsetAutoencoder& ae, const SubsetDescriptor& desc) {
    if (desc.vec.size() != ae.input_size()) throw NumericError("encode: descriptor length mismatch");
    std::vector<double> x(desc.vec);
    for (size_t l = 0; l < ae.encoder_layers; ++l) {
        const Layer& layer = ae.net.layers()[l];
        std::vector<double> z(layer.fan_out());
        for (size_t i = 0; i < layer.fan_out(); ++i) {
            double acc = layer.b[i];
            const std::span<const double> row = layer.w.row(i);
            for (size_t j = 0; j < layer.fan_in(); ++j) acc += row[j] * x[j];
            z[i] = activate(layer.act, acc);
        }
        x = std::move(z);
    }
    return x;
}

inline double reconstruction_loss(const SubsetAutoencoder& ae, const SubsetDescriptor& desc) {
    const std::vector<double> rec = ae.net.forward(desc.vec);
    return squared_l2(rec, desc.vec);
}

// Row-bootstrap resamples of the masked view give the autoencoder a training
// set with genuine variation in the summary statistics.
inline Matrix bootstrap_descriptors(const Dataset& ds, const std::vector<uint8_t>& mask,
                                    size_t count, Rng& rng) {
    Matrix out(count, ds.d * kDescriptorStats);
    std::vector<size_t> rows(ds.n);
    for (size_t b = 0; b < count; ++b) {
        for (size_t i = 0; i < ds.n; ++i) rows[i] = rng.below(ds.n);
        const DescriptorContext ctx = make_descriptor_context(ds, rows, &mask);
        const SubsetDescriptor desc = build_descriptor(ctx, mask);
        std::copy(desc.vec.begin(), desc.vec.end(), out.data() + b * out.cols());
    }
    return out;
}

// Self-supervised reconstruction training on descriptor samples.
inline std::vector<double> train_autoencoder(SubsetAutoencoder& ae, const Matrix& samples,
                                             const TrainConfig& cfg) {
    if (samples.rows() == 0) throw DataError("train_autoencoder: no samples");
    return fit(ae.net, samples, samples, cfg);
}

inline void dump_encoding_csv(const SubsetAutoencoder& ae, const SubsetDescriptor& desc,
                              const std::string& path) {
    const std::vector<double> code = encode(ae, desc);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(17);
    for (size_t i = 0; i < code.size(); ++i) {
        if (i) out << ',';
        out << "z" << (i + 1);
    }
    out << '\n';
    for (size_t i = 0; i < code.size(); ++i) {
        if (i) out << ',';
        out << code[i];
    }
    out << '\n';
}

}  // namespace kofs
