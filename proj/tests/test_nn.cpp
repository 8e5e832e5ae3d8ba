#include <doctest.h>

#include <cmath>

#include "fedgmcc/data.hpp"
#include "fedgmcc/nn.hpp"
#include "fedgmcc/rng.hpp"
#include "support/reference_nn.hpp"

using namespace fedgmcc;

namespace {

Matrix random_inputs(std::size_t n, int dim, std::uint64_t seed) {
    Matrix m(n, dim);
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (double& v : m.data) v = dist(rng);
    return m;
}

LabeledBatch random_batch(std::size_t n, int dim, int classes, std::uint64_t seed) {
    LabeledBatch b;
    b.inputs = random_inputs(n, dim, seed);
    Rng rng = make_rng(mix_seed(seed, 0xb));
    std::uniform_int_distribution<int> lab(0, classes - 1);
    b.labels.resize(n);
    for (int& y : b.labels) y = lab(rng);
    return b;
}

// Low-parameter instance whose hidden pre-activations stay clear of the ReLU
// kink, so central differences are a valid oracle. Deterministically walks
// seeds until the margin holds.
struct FdInstance {
    WeightVector w;
    LabeledBatch batch;
};

FdInstance fd_instance(std::uint64_t seed) {
    const ModelArch arch{{3, 5, 3}};   // 38 params
    for (std::uint64_t s = seed;; ++s) {
        WeightVector w = init_weights(arch, mix_seed(s, 0x1));
        LabeledBatch b = random_batch(6, 3, 3, mix_seed(s, 0x2));
        if (refnn::relu_margin(w, b.inputs) > 5e-3) return {std::move(w), std::move(b)};
    }
}

} // namespace

TEST_CASE("forward: zero weights give uniform rows") {
    const ModelArch arch{{2, 4, 3}};
    const WeightVector w = zero_weights(arch);
    const Matrix x = random_inputs(7, 2, 11);
    const ModelOutput out = forward(w, x);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (int j = 0; j < 3; ++j) CHECK(out.probs(r, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("forward: identity linear-softmax net favors class 0 on input (1,0)") {
    const ModelArch arch{{2, 2}};
    WeightVector w = zero_weights(arch);
    w.values[0] = 1.0;   // W(0,0)
    w.values[3] = 1.0;   // W(1,1)
    Matrix x(1, 2);
    x(0, 0) = 1.0;
    x(0, 1) = 0.0;
    const ModelOutput out = forward(w, x);
    // softmax(1, 0) computed by hand
    CHECK(out.probs(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(out.probs(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
    CHECK(out.probs(0, 0) > out.probs(0, 1));
}

TEST_CASE("forward: deterministic and row-stochastic") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const ModelArch arch{{3, 6, 4}};
        const WeightVector w = init_weights(arch, s);
        const Matrix x = random_inputs(9, 3, mix_seed(s, 3));
        const ModelOutput a = forward(w, x);
        const ModelOutput b = forward(w, x);
        CHECK(a.probs == b.probs);   // bit-identical
        for (std::size_t r = 0; r < x.rows; ++r) {
            double sum = 0.0;
            for (int j = 0; j < 4; ++j) {
                CHECK(a.probs(r, j) >= 0.0);
                sum += a.probs(r, j);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("forward: dimension mismatch rejected") {
    const ModelArch arch{{2, 2}};
    const WeightVector w = zero_weights(arch);
    CHECK_THROWS_AS(forward(w, random_inputs(3, 4, 1)), std::invalid_argument);
}

TEST_CASE("cross_entropy_loss: saturated one-hot model scores zero") {
    const ModelArch arch{{2, 2}};
    WeightVector w = zero_weights(arch);
    w.values[0] = 100.0;
    w.values[3] = 100.0;
    LabeledBatch b;
    b.inputs = Matrix(2, 2);
    b.inputs(0, 0) = 1.0;
    b.inputs(1, 1) = 1.0;
    b.labels = {0, 1};
    CHECK(cross_entropy_loss(w, b) == 0.0);
}

TEST_CASE("cross_entropy_loss: zero weights on two classes give ln 2") {
    const ModelArch arch{{2, 3, 2}};
    const WeightVector w = zero_weights(arch);
    const LabeledBatch b = random_batch(20, 2, 2, 5);
    CHECK(cross_entropy_loss(w, b) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross_entropy_loss: matches scalar recomputation") {
    for (std::uint64_t s = 0; s < 8; ++s) {
        const ModelArch arch{{3, 5, 3}};
        const WeightVector w = init_weights(arch, s);
        const LabeledBatch b = random_batch(12, 3, 3, mix_seed(s, 7));
        CHECK(cross_entropy_loss(w, b) == doctest::Approx(refnn::cross_entropy(w, b)).epsilon(1e-10));
    }
}

TEST_CASE("mse_output_loss: zero on equal weights, symmetric, matches brute force") {
    const ModelArch arch{{2, 4, 2}};
    const WeightVector a = init_weights(arch, 1);
    const WeightVector b = init_weights(arch, 2);
    const Matrix probe = random_inputs(4, 2, 3);

    CHECK(mse_output_loss(a, a, probe) == 0.0);
    CHECK(mse_output_loss(a, b, probe) == mse_output_loss(b, a, probe));
    CHECK(mse_output_loss(a, b, probe) == doctest::Approx(refnn::output_mse(a, b, probe)).epsilon(1e-12));

    WeightVector c = a;
    c.arch = ModelArch{{2, 3, 2}};
    c.values.resize(c.arch.param_count());
    CHECK_THROWS_AS(mse_output_loss(a, c, probe), std::invalid_argument);
}

TEST_CASE("grad_cross_entropy: vanishes at a saturated perfect model") {
    const ModelArch arch{{2, 2}};
    WeightVector w = zero_weights(arch);
    w.values[0] = 100.0;
    w.values[3] = 100.0;
    LabeledBatch b;
    b.inputs = Matrix(2, 2);
    b.inputs(0, 0) = 1.0;
    b.inputs(1, 1) = 1.0;
    b.labels = {0, 1};
    CHECK(norm(grad_cross_entropy(w, b)) < 1e-6);
}

TEST_CASE("grad_cross_entropy: matches central finite differences") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const FdInstance inst = fd_instance(mix_seed(s, 0x9e));
        const WeightVector g = grad_cross_entropy(inst.w, inst.batch);
        const auto fd = refnn::finite_difference(
            inst.w, [&](const WeightVector& v) { return cross_entropy_loss(v, inst.batch); });
        for (std::size_t i = 0; i < g.values.size(); ++i)
            CHECK(refnn::rel_error(g.values[i], fd[i]) <= 1e-4);
    }
}

TEST_CASE("grad_output_mse: zero at the target weights, matches finite differences") {
    const ModelArch arch{{3, 5, 3}};
    const WeightVector w = init_weights(arch, 21);
    const Matrix probe = random_inputs(5, 3, 22);
    const ModelOutput target = forward(w, probe);

    const WeightVector g0 = grad_output_mse(w, probe, target.probs);
    for (double v : g0.values) CHECK(v == 0.0);

    for (std::uint64_t s = 0; s < 10; ++s) {
        const FdInstance inst = fd_instance(mix_seed(s, 0x3f));
        const ModelOutput t = forward(init_weights(arch, mix_seed(s, 0x40)), inst.batch.inputs);
        const WeightVector g = grad_output_mse(inst.w, inst.batch.inputs, t.probs);
        const auto fd = refnn::finite_difference(inst.w, [&](const WeightVector& v) {
            double total = 0.0;
            const ModelOutput p = forward(v, inst.batch.inputs);
            for (std::size_t i = 0; i < p.probs.data.size(); ++i) {
                const double d = p.probs.data[i] - t.probs.data[i];
                total += d * d;
            }
            return total / static_cast<double>(inst.batch.inputs.rows);
        });
        for (std::size_t i = 0; i < g.values.size(); ++i)
            CHECK(refnn::rel_error(g.values[i], fd[i]) <= 1e-4);
    }
}

TEST_CASE("sgd_train: zero learning rate is the identity") {
    const ModelArch arch{{2, 4, 2}};
    const WeightVector w0 = init_weights(arch, 4);
    const LabeledBatch b = random_batch(32, 2, 2, 5);
    SgdOptions opt;
    opt.lr = 0.0;
    opt.epochs = 3;
    CHECK(sgd_train(w0, b, opt) == w0);
}

TEST_CASE("sgd_train: dominant proximal term pins the anchor") {
    const ModelArch arch{{2, 4, 2}};
    const WeightVector w0 = init_weights(arch, 6);
    const LabeledBatch b = random_batch(64, 2, 2, 7);
    SgdOptions opt;
    opt.epochs = 1;
    opt.lr = 1e-8;
    opt.proximal = ProximalTerm{1e6, w0};
    const WeightVector out = sgd_train(w0, b, opt);
    CHECK(norm(sub(out, w0)) < 1e-3);
}

TEST_CASE("sgd_train: separable blobs reach high train accuracy") {
    const LabeledBatch data = gen_base_task(200, 2, 42);
    const ModelArch arch{{2, 8, 2}};
    SgdOptions opt;
    opt.epochs = 50;
    opt.batch_size = 64;
    opt.lr = 0.05;
    opt.seed = 9;
    const WeightVector w = sgd_train(init_weights(arch, 8), data, opt);
    CHECK(accuracy(w, data) > 0.95);
}

TEST_CASE("sgd_train: deterministic for a fixed seed, rejects empty data") {
    const ModelArch arch{{2, 4, 2}};
    const WeightVector w0 = init_weights(arch, 1);
    const LabeledBatch b = random_batch(40, 2, 2, 2);
    SgdOptions opt;
    opt.epochs = 5;
    opt.seed = 77;
    CHECK(sgd_train(w0, b, opt) == sgd_train(w0, b, opt));

    LabeledBatch empty;
    empty.inputs = Matrix(0, 2);
    CHECK_THROWS_AS(sgd_train(w0, empty, opt), std::invalid_argument);
}

TEST_CASE("parameter layout: per-layer blocks reassemble to the identity") {
    const ModelArch arch{{3, 5, 4, 2}};
    const WeightVector w = init_weights(arch, 33);
    std::vector<double> rebuilt(w.values.size(), 0.0);
    for (int l = 0; l < arch.num_layers(); ++l) {
        const std::size_t off = arch.layer_offset(l);
        const std::size_t count =
            static_cast<std::size_t>(arch.layer_sizes[l + 1]) * (arch.layer_sizes[l] + 1);
        for (std::size_t i = 0; i < count; ++i) rebuilt[off + i] = w.values[off + i];
    }
    CHECK(rebuilt == w.values);
    CHECK(arch.param_count() == w.values.size());
}
