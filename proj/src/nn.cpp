#include "fedgmcc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedgmcc/rng.hpp"

namespace fedgmcc {

namespace {

constexpr double kLogFloor = 1e-12;

void check_batch(const ModelArch& arch, const LabeledBatch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    if (batch.inputs.rows != batch.size()) throw std::invalid_argument("inputs/labels row mismatch");
    if (batch.inputs.cols != static_cast<std::size_t>(arch.input_dim()))
        throw std::invalid_argument("input dimension does not match architecture");
    for (int y : batch.labels)
        if (y < 0 || y >= arch.num_classes()) throw std::invalid_argument("label out of range");
}

void softmax_row(double* z, int c) {
    double m = z[0];
    for (int i = 1; i < c; ++i) m = std::max(m, z[i]);
    double sum = 0.0;
    for (int i = 0; i < c; ++i) {
        z[i] = std::exp(z[i] - m);
        sum += z[i];
    }
    for (int i = 0; i < c; ++i) z[i] /= sum;
}

struct ForwardCache {
    std::vector<Matrix> pre;   // num_layers pre-activations
    std::vector<Matrix> act;   // act[0] = inputs, act[l] = layer l output
};

// act[L] rows are softmax probabilities.
ForwardCache forward_cached(const WeightVector& w, const Matrix& inputs) {
    const ModelArch& arch = w.arch;
    const int layers = arch.num_layers();
    const std::size_t n = inputs.rows;

    ForwardCache fc;
    fc.pre.reserve(layers);
    fc.act.reserve(layers + 1);
    fc.act.push_back(inputs);

    for (int l = 0; l < layers; ++l) {
        const int in = arch.layer_sizes[l];
        const int out = arch.layer_sizes[l + 1];
        const double* wl = w.values.data() + arch.layer_offset(l);
        const double* bl = wl + static_cast<std::size_t>(out) * in;
        const Matrix& prev = fc.act.back();

        Matrix z(n, out);
        for (std::size_t r = 0; r < n; ++r) {
            const double* x = prev.row(r);
            double* zr = z.row(r);
            for (int o = 0; o < out; ++o) {
                const double* wrow = wl + static_cast<std::size_t>(o) * in;
                double s = bl[o];
                for (int i = 0; i < in; ++i) s += wrow[i] * x[i];
                zr[o] = s;
            }
        }
        fc.pre.push_back(z);

        Matrix a = z;
        if (l + 1 < layers) {
            for (double& v : a.data) v = v > 0.0 ? v : 0.0;
        } else {
            for (std::size_t r = 0; r < n; ++r) softmax_row(a.row(r), out);
        }
        fc.act.push_back(std::move(a));
    }
    return fc;
}

// Backprop from an output-layer delta (n x C, already includes any 1/n
// factor) down to the parameter gradient.
WeightVector backprop(const WeightVector& w, const ForwardCache& fc, Matrix delta) {
    const ModelArch& arch = w.arch;
    const int layers = arch.num_layers();
    WeightVector g = zero_weights(arch);

    for (int l = layers - 1; l >= 0; --l) {
        const int in = arch.layer_sizes[l];
        const int out = arch.layer_sizes[l + 1];
        const std::size_t n = delta.rows;
        double* gw = g.values.data() + arch.layer_offset(l);
        double* gb = gw + static_cast<std::size_t>(out) * in;
        const Matrix& prev = fc.act[l];

        for (std::size_t r = 0; r < n; ++r) {
            const double* dr = delta.row(r);
            const double* x = prev.row(r);
            for (int o = 0; o < out; ++o) {
                const double d = dr[o];
                double* grow = gw + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) grow[i] += d * x[i];
                gb[o] += d;
            }
        }

        if (l > 0) {
            const double* wl = w.values.data() + arch.layer_offset(l);
            Matrix next(n, in);
            const Matrix& pre = fc.pre[l - 1];
            for (std::size_t r = 0; r < n; ++r) {
                const double* dr = delta.row(r);
                double* nr = next.row(r);
                for (int i = 0; i < in; ++i) {
                    double s = 0.0;
                    for (int o = 0; o < out; ++o) s += dr[o] * wl[static_cast<std::size_t>(o) * in + i];
                    nr[i] = pre(r, i) > 0.0 ? s : 0.0;
                }
            }
            delta = std::move(next);
        }
    }
    return g;
}

LabeledBatch gather_rows(const LabeledBatch& data, const std::vector<std::size_t>& idx,
                         std::size_t begin, std::size_t end) {
    LabeledBatch b;
    b.inputs = Matrix(end - begin, data.inputs.cols);
    b.labels.resize(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
        const std::size_t src = idx[r];
        std::copy(data.inputs.row(src), data.inputs.row(src) + data.inputs.cols, b.inputs.row(r - begin));
        b.labels[r - begin] = data.labels[src];
    }
    return b;
}

} // namespace

ModelArch::ModelArch(std::vector<int> sizes) : layer_sizes(std::move(sizes)) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("architecture needs at least 2 layers");
    for (int s : layer_sizes)
        if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
    if (layer_sizes.back() < 2) throw std::invalid_argument("output size must be >= 2");
}

std::size_t ModelArch::param_count() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        total += static_cast<std::size_t>(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
    return total;
}

std::size_t ModelArch::layer_offset(int l) const {
    std::size_t off = 0;
    for (int k = 0; k < l; ++k)
        off += static_cast<std::size_t>(layer_sizes[k + 1]) * (layer_sizes[k] + 1);
    return off;
}

WeightVector::WeightVector(ModelArch a, std::vector<double> v) : arch(std::move(a)), values(std::move(v)) {
    if (values.size() != arch.param_count())
        throw std::invalid_argument("weight vector length does not match architecture");
}

WeightVector zero_weights(const ModelArch& arch) {
    return WeightVector(arch, std::vector<double>(arch.param_count(), 0.0));
}

WeightVector init_weights(const ModelArch& arch, std::uint64_t seed) {
    WeightVector w = zero_weights(arch);
    Rng rng = make_rng(seed);
    for (int l = 0; l < arch.num_layers(); ++l) {
        const int in = arch.layer_sizes[l];
        const int out = arch.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        double* block = w.values.data() + arch.layer_offset(l);
        const std::size_t count = static_cast<std::size_t>(out) * (in + 1);
        for (std::size_t i = 0; i < count; ++i) block[i] = dist(rng);
    }
    return w;
}

WeightVector add(const WeightVector& a, const WeightVector& b) {
    if (a.arch != b.arch) throw std::invalid_argument("architecture mismatch");
    WeightVector r = a;
    for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] += b.values[i];
    return r;
}

WeightVector sub(const WeightVector& a, const WeightVector& b) {
    if (a.arch != b.arch) throw std::invalid_argument("architecture mismatch");
    WeightVector r = a;
    for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] -= b.values[i];
    return r;
}

WeightVector scale(const WeightVector& a, double s) {
    WeightVector r = a;
    for (double& v : r.values) v *= s;
    return r;
}

void axpy(WeightVector& y, double alpha, const WeightVector& x) {
    if (y.arch != x.arch) throw std::invalid_argument("architecture mismatch");
    for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += alpha * x.values[i];
}

double dot(const WeightVector& a, const WeightVector& b) {
    if (a.arch != b.arch) throw std::invalid_argument("architecture mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

double norm(const WeightVector& a) { return std::sqrt(dot(a, a)); }

bool all_finite(const WeightVector& a) {
    return std::all_of(a.values.begin(), a.values.end(), [](double v) { return std::isfinite(v); });
}

ModelOutput forward(const WeightVector& w, const Matrix& inputs) {
    if (inputs.rows == 0) throw std::invalid_argument("empty input");
    if (inputs.cols != static_cast<std::size_t>(w.arch.input_dim()))
        throw std::invalid_argument("input dimension does not match architecture");
    ForwardCache fc = forward_cached(w, inputs);
    return ModelOutput{std::move(fc.act.back())};
}

double cross_entropy_loss(const WeightVector& w, const LabeledBatch& batch) {
    check_batch(w.arch, batch);
    ModelOutput out = forward(w, batch.inputs);
    double loss = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r)
        loss -= std::log(std::max(out.probs(r, batch.labels[r]), kLogFloor));
    return loss / static_cast<double>(batch.size());
}

double accuracy(const WeightVector& w, const LabeledBatch& batch) {
    check_batch(w.arch, batch);
    ModelOutput out = forward(w, batch.inputs);
    const int c = w.arch.num_classes();
    std::size_t hits = 0;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (out.probs(r, j) > out.probs(r, best)) best = j;
        if (best == batch.labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(batch.size());
}

double mse_output_loss(const WeightVector& a, const WeightVector& b, const Matrix& probe_inputs) {
    if (a.arch != b.arch) throw std::invalid_argument("architecture mismatch");
    if (probe_inputs.rows == 0) throw std::invalid_argument("empty probe");
    ModelOutput pa = forward(a, probe_inputs);
    ModelOutput pb = forward(b, probe_inputs);
    double total = 0.0;
    for (std::size_t i = 0; i < pa.probs.data.size(); ++i) {
        const double d = pa.probs.data[i] - pb.probs.data[i];
        total += d * d;
    }
    return total / static_cast<double>(probe_inputs.rows);
}

WeightVector grad_cross_entropy(const WeightVector& w, const LabeledBatch& batch) {
    check_batch(w.arch, batch);
    ForwardCache fc = forward_cached(w, batch.inputs);
    const std::size_t n = batch.size();
    const int c = w.arch.num_classes();

    Matrix delta = fc.act.back();
    for (std::size_t r = 0; r < n; ++r) {
        double* dr = delta.row(r);
        dr[batch.labels[r]] -= 1.0;
        for (int j = 0; j < c; ++j) dr[j] /= static_cast<double>(n);
    }
    return backprop(w, fc, std::move(delta));
}

WeightVector grad_output_mse(const WeightVector& w, const Matrix& inputs, const Matrix& target_probs) {
    if (inputs.rows != target_probs.rows) throw std::invalid_argument("target rows mismatch");
    if (target_probs.cols != static_cast<std::size_t>(w.arch.num_classes()))
        throw std::invalid_argument("target column count mismatch");
    ForwardCache fc = forward_cached(w, inputs);
    const std::size_t n = inputs.rows;
    const int c = w.arch.num_classes();

    // d/dz of ||p - t||^2 through softmax: 2 p_i ((p_i - t_i) - sum_j (p_j - t_j) p_j).
    Matrix delta(n, c);
    const Matrix& probs = fc.act.back();
    for (std::size_t r = 0; r < n; ++r) {
        const double* p = probs.row(r);
        const double* t = target_probs.row(r);
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += (p[j] - t[j]) * p[j];
        double* dr = delta.row(r);
        for (int i = 0; i < c; ++i) dr[i] = 2.0 * p[i] * ((p[i] - t[i]) - s) / static_cast<double>(n);
    }
    return backprop(w, fc, std::move(delta));
}

WeightVector sgd_train(const WeightVector& w0, const LabeledBatch& data, const SgdOptions& opt) {
    check_batch(w0.arch, data);
    if (opt.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (opt.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (opt.lr < 0.0) throw std::invalid_argument("learning rate must be >= 0");
    if (opt.proximal) {
        if (opt.proximal->mu < 0.0) throw std::invalid_argument("mu must be >= 0");
        if (opt.proximal->anchor.arch != w0.arch) throw std::invalid_argument("anchor architecture mismatch");
    }

    WeightVector w = w0;
    const std::size_t n = data.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_rng(opt.seed);
    const bool prox = opt.proximal && opt.proximal->mu != 0.0;

    for (int e = 0; e < opt.epochs; ++e) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t begin = 0; begin < n; begin += opt.batch_size) {
            const std::size_t end = std::min(begin + opt.batch_size, n);
            LabeledBatch mb = gather_rows(data, idx, begin, end);
            WeightVector g = grad_cross_entropy(w, mb);
            if (prox) axpy(g, 2.0 * opt.proximal->mu, sub(w, opt.proximal->anchor));
            axpy(w, -opt.lr, g);
        }
    }
    return w;
}

} // namespace fedgmcc
