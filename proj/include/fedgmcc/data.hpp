#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedgmcc/nn.hpp"

namespace fedgmcc {

struct ClientDataset {
    int client_id = 0;
    LabeledBatch batch;

    std::size_t size() const { return batch.size(); }
    bool operator==(const ClientDataset&) const = default;
};

// Invertible feature-space maps acting on batch inputs; labels untouched.
struct FeatureTransform {
    enum class Kind { Rotation, Scale, SignFlip };

    Kind kind = Kind::Rotation;
    std::vector<double> params;

    // Rotation of the first two coordinates by phi (radians) about the origin.
    static FeatureTransform rotation(double phi);
    // Per-coordinate scaling; one nonzero factor per dimension.
    static FeatureTransform scale(std::vector<double> factors);
    // Negation of the listed coordinate indices.
    static FeatureTransform sign_flip(std::vector<int> dims);
};

// Balanced Gaussian-blob classification task: one blob per class, blob
// centers on a circle in the first two coordinates, remaining coordinates
// pure noise. Adjacent centers sit `separation` standard deviations apart.
// Values are rounded through float so the on-disk format is lossless.
LabeledBatch gen_base_task(std::size_t n, int classes, std::uint64_t seed, int dim = 2,
                           double separation = 6.0);

LabeledBatch apply_feature_transform(const LabeledBatch& batch, const FeatureTransform& t);

// Relabels a seeded round(frac * n)-subset of rows by the fixed class
// derangement y -> (y + 1) mod C; inputs untouched.
LabeledBatch apply_concept_shift(const LabeledBatch& batch, double frac, std::uint64_t seed, int classes);

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binary dataset file: magic "FGMC", u32 version, u32 n, u32 dim, u32 C,
// n*dim float32 inputs, n uint16 labels. Little-endian throughout.
void write_dataset(const std::string& path, const ClientDataset& d, int classes);
struct ReadResult {
    ClientDataset dataset;
    int classes = 0;
};
ReadResult read_dataset(const std::string& path, int client_id = 0);

// Shared per-dimension min-max rescale of all batches onto [0,1]^dim.
// Degenerate dimensions map to 0.5.
void normalize_unit_box(std::vector<LabeledBatch*>& batches);

// Seeded shuffle split; train side gets round(train_frac * n) rows, clamped
// so both sides stay nonempty.
std::pair<LabeledBatch, LabeledBatch> split_train_val(const LabeledBatch& batch, double train_frac,
                                                      std::uint64_t seed);

} // namespace fedgmcc
