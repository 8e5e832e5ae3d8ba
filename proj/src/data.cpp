#include "fedgmcc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "fedgmcc/rng.hpp"

namespace fedgmcc {

namespace {

constexpr char kMagic[4] = {'F', 'G', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u16(std::string& out, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    append_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    std::uint32_t u32() {
        if (pos + 4 > buf.size()) throw ParseError("dataset file truncated");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint16_t u16() {
        if (pos + 2 > buf.size()) throw ParseError("dataset file truncated");
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 2;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

double round_through_float(double v) { return static_cast<double>(static_cast<float>(v)); }

} // namespace

FeatureTransform FeatureTransform::rotation(double phi) {
    return FeatureTransform{Kind::Rotation, {phi}};
}

FeatureTransform FeatureTransform::scale(std::vector<double> factors) {
    for (double f : factors)
        if (f == 0.0 || !std::isfinite(f)) throw std::invalid_argument("scale factors must be nonzero and finite");
    return FeatureTransform{Kind::Scale, std::move(factors)};
}

FeatureTransform FeatureTransform::sign_flip(std::vector<int> dims) {
    FeatureTransform t{Kind::SignFlip, {}};
    t.params.reserve(dims.size());
    for (int d : dims) {
        if (d < 0) throw std::invalid_argument("sign flip dimension must be nonnegative");
        t.params.push_back(static_cast<double>(d));
    }
    return t;
}

LabeledBatch gen_base_task(std::size_t n, int classes, std::uint64_t seed, int dim, double separation) {
    if (classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (dim < 2) throw std::invalid_argument("need at least 2 feature dimensions");
    if (n < static_cast<std::size_t>(classes) * 10) throw std::invalid_argument("need at least 10 samples per class");
    if (separation <= 0.0) throw std::invalid_argument("separation must be positive");

    // Unit-sigma blobs; circle radius chosen so adjacent centers sit
    // `separation` sigmas apart.
    const double radius = separation / (2.0 * std::sin(M_PI / classes));
    Rng rng = make_rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    LabeledBatch batch;
    batch.inputs = Matrix(n, dim);
    batch.labels.resize(n);

    const std::size_t base = n / classes;
    const std::size_t rem = n % classes;
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        const double angle = 2.0 * M_PI * c / classes;
        const double cx = radius * std::cos(angle);
        const double cy = radius * std::sin(angle);
        const std::size_t count = base + (static_cast<std::size_t>(c) < rem ? 1 : 0);
        for (std::size_t i = 0; i < count; ++i, ++row) {
            double* x = batch.inputs.row(row);
            x[0] = cx + noise(rng);
            x[1] = cy + noise(rng);
            for (int d = 2; d < dim; ++d) x[d] = noise(rng);
            batch.labels[row] = c;
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    LabeledBatch shuffled;
    shuffled.inputs = Matrix(n, dim);
    shuffled.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* src = batch.inputs.row(order[r]);
        double* dst = shuffled.inputs.row(r);
        for (int d = 0; d < dim; ++d) dst[d] = round_through_float(src[d]);
        shuffled.labels[r] = batch.labels[order[r]];
    }
    return shuffled;
}

LabeledBatch apply_feature_transform(const LabeledBatch& batch, const FeatureTransform& t) {
    const int dim = static_cast<int>(batch.inputs.cols);
    LabeledBatch out = batch;
    switch (t.kind) {
        case FeatureTransform::Kind::Rotation: {
            if (t.params.size() != 1) throw std::invalid_argument("rotation takes one angle");
            if (dim < 2) throw std::invalid_argument("rotation needs at least 2 dimensions");
            const double c = std::cos(t.params[0]);
            const double s = std::sin(t.params[0]);
            for (std::size_t r = 0; r < out.size(); ++r) {
                double* x = out.inputs.row(r);
                const double x0 = x[0], x1 = x[1];
                x[0] = c * x0 - s * x1;
                x[1] = s * x0 + c * x1;
            }
            break;
        }
        case FeatureTransform::Kind::Scale: {
            if (t.params.size() != static_cast<std::size_t>(dim))
                throw std::invalid_argument("scale needs one factor per dimension");
            for (std::size_t r = 0; r < out.size(); ++r) {
                double* x = out.inputs.row(r);
                for (int d = 0; d < dim; ++d) x[d] *= t.params[d];
            }
            break;
        }
        case FeatureTransform::Kind::SignFlip: {
            for (double pd : t.params) {
                const int d = static_cast<int>(pd);
                if (d < 0 || d >= dim) throw std::invalid_argument("sign flip dimension out of range");
                for (std::size_t r = 0; r < out.size(); ++r) out.inputs(r, d) = -out.inputs(r, d);
            }
            break;
        }
    }
    return out;
}

LabeledBatch apply_concept_shift(const LabeledBatch& batch, double frac, std::uint64_t seed, int classes) {
    if (frac < 0.0 || frac > 1.0) throw std::invalid_argument("shift fraction must be in [0,1]");
    if (classes < 2) throw std::invalid_argument("need at least 2 classes");
    const std::size_t n = batch.size();
    const std::size_t m = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    LabeledBatch out = batch;
    for (std::size_t i = 0; i < m; ++i) {
        int& y = out.labels[idx[i]];
        y = (y + 1) % classes;
    }
    return out;
}

void write_dataset(const std::string& path, const ClientDataset& d, int classes) {
    const std::size_t n = d.size();
    const std::size_t dim = d.batch.inputs.cols;
    if (n == 0) throw std::invalid_argument("refusing to write empty dataset");
    if (classes < 2 || classes > 0xffff) throw std::invalid_argument("class count out of range");
    for (int y : d.batch.labels)
        if (y < 0 || y >= classes) throw std::invalid_argument("label out of range for class count");
    for (double v : d.batch.inputs.data)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite input value");

    std::string out;
    out.reserve(20 + n * dim * 4 + n * 2);
    out.append(kMagic, 4);
    append_u32(out, kVersion);
    append_u32(out, static_cast<std::uint32_t>(n));
    append_u32(out, static_cast<std::uint32_t>(dim));
    append_u32(out, static_cast<std::uint32_t>(classes));
    for (double v : d.batch.inputs.data) append_f32(out, static_cast<float>(v));
    for (int y : d.batch.labels) append_u16(out, static_cast<std::uint16_t>(y));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

ReadResult read_dataset(const std::string& path, int client_id) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open dataset file: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.empty()) throw ParseError("empty dataset file: " + path);
    if (buf.size() < 20) throw ParseError("dataset file too short: " + path);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw ParseError("bad magic in dataset file: " + path);

    Reader r{buf, 4};
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw ParseError("unsupported dataset version");
    const std::uint32_t n = r.u32();
    const std::uint32_t dim = r.u32();
    const std::uint32_t classes = r.u32();
    if (n == 0) throw ParseError("dataset has no rows");
    if (dim == 0) throw ParseError("dataset has no feature dimensions");
    if (classes < 2) throw ParseError("dataset class count must be >= 2");

    ReadResult res;
    res.classes = static_cast<int>(classes);
    res.dataset.client_id = client_id;
    res.dataset.batch.inputs = Matrix(n, dim);
    res.dataset.batch.labels.resize(n);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * dim; ++i) {
        const float v = r.f32();
        if (!std::isfinite(v)) throw ParseError("non-finite input value in dataset file");
        res.dataset.batch.inputs.data[i] = static_cast<double>(v);
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint16_t y = r.u16();
        if (y >= classes) throw ParseError("label out of range in dataset file");
        res.dataset.batch.labels[i] = static_cast<int>(y);
    }
    if (r.pos != buf.size()) throw ParseError("trailing bytes in dataset file");
    return res;
}

void normalize_unit_box(std::vector<LabeledBatch*>& batches) {
    if (batches.empty()) return;
    const std::size_t dim = batches.front()->inputs.cols;
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
    for (const LabeledBatch* b : batches) {
        if (b->inputs.cols != dim) throw std::invalid_argument("dimension mismatch across batches");
        for (std::size_t r = 0; r < b->size(); ++r) {
            const double* x = b->inputs.row(r);
            for (std::size_t d = 0; d < dim; ++d) {
                lo[d] = std::min(lo[d], x[d]);
                hi[d] = std::max(hi[d], x[d]);
            }
        }
    }
    for (LabeledBatch* b : batches) {
        for (std::size_t r = 0; r < b->size(); ++r) {
            double* x = b->inputs.row(r);
            for (std::size_t d = 0; d < dim; ++d) {
                const double span = hi[d] - lo[d];
                x[d] = span > 0.0 ? (x[d] - lo[d]) / span : 0.5;
            }
        }
    }
}

std::pair<LabeledBatch, LabeledBatch> split_train_val(const LabeledBatch& batch, double train_frac,
                                                      std::uint64_t seed) {
    const std::size_t n = batch.size();
    if (n < 2) throw std::invalid_argument("need at least 2 rows to split");
    if (train_frac <= 0.0 || train_frac >= 1.0) throw std::invalid_argument("train fraction must be in (0,1)");
    std::size_t n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    const std::size_t dim = batch.inputs.cols;
    LabeledBatch train, val;
    train.inputs = Matrix(n_train, dim);
    train.labels.resize(n_train);
    val.inputs = Matrix(n - n_train, dim);
    val.labels.resize(n - n_train);
    for (std::size_t r = 0; r < n; ++r) {
        LabeledBatch& dst = r < n_train ? train : val;
        const std::size_t dr = r < n_train ? r : r - n_train;
        std::copy(batch.inputs.row(idx[r]), batch.inputs.row(idx[r]) + dim, dst.inputs.row(dr));
        dst.labels[dr] = batch.labels[idx[r]];
    }
    return {std::move(train), std::move(val)};
}

} // namespace fedgmcc
