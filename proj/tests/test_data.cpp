#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fedgmcc/data.hpp"
#include "fedgmcc/nn.hpp"

using namespace fedgmcc;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("gen_base_task: balanced, deterministic, learnable") {
    const LabeledBatch b = gen_base_task(200, 2, 1);
    int counts[2] = {0, 0};
    for (int y : b.labels) ++counts[y];
    CHECK(counts[0] == 100);
    CHECK(counts[1] == 100);

    CHECK(gen_base_task(200, 2, 1) == b);
    CHECK(gen_base_task(200, 2, 2) != b);

    // 6-sigma separation: a small MLP separates the blobs.
    SgdOptions opt;
    opt.epochs = 50;
    opt.lr = 0.05;
    opt.seed = 3;
    const ModelArch arch{{2, 8, 2}};
    CHECK(accuracy(sgd_train(init_weights(arch, 4), b, opt), b) > 0.95);

    CHECK_THROWS_AS(gen_base_task(15, 2, 1), std::invalid_argument);
}

TEST_CASE("apply_feature_transform: rotation identities") {
    const LabeledBatch b = gen_base_task(40, 2, 7);

    CHECK(apply_feature_transform(b, FeatureTransform::rotation(0.0)) == b);

    const LabeledBatch fwd = apply_feature_transform(b, FeatureTransform::rotation(0.7));
    const LabeledBatch back = apply_feature_transform(fwd, FeatureTransform::rotation(-0.7));
    for (std::size_t i = 0; i < b.inputs.data.size(); ++i)
        CHECK(back.inputs.data[i] == doctest::Approx(b.inputs.data[i]).epsilon(1e-12));
    CHECK(fwd.labels == b.labels);

    LabeledBatch point;
    point.inputs = Matrix(1, 2);
    point.inputs(0, 0) = 1.0;
    point.labels = {0};
    const LabeledBatch q = apply_feature_transform(point, FeatureTransform::rotation(M_PI / 2.0));
    CHECK(q.inputs(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(q.inputs(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("apply_feature_transform: scale and sign flip invert") {
    const LabeledBatch b = gen_base_task(30, 3, 9, 3);
    const auto scaled = apply_feature_transform(b, FeatureTransform::scale({2.0, -0.5, 4.0}));
    const auto unscaled = apply_feature_transform(scaled, FeatureTransform::scale({0.5, -2.0, 0.25}));
    for (std::size_t i = 0; i < b.inputs.data.size(); ++i)
        CHECK(unscaled.inputs.data[i] == doctest::Approx(b.inputs.data[i]).epsilon(1e-12));

    const auto flipped = apply_feature_transform(b, FeatureTransform::sign_flip({1}));
    CHECK(apply_feature_transform(flipped, FeatureTransform::sign_flip({1})) == b);
    CHECK(flipped.labels == b.labels);

    CHECK_THROWS_AS(FeatureTransform::scale({0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("apply_concept_shift: exact fraction relabeled by the derangement") {
    const LabeledBatch b = gen_base_task(100, 2, 11);

    CHECK(apply_concept_shift(b, 0.0, 5, 2) == b);

    const LabeledBatch all = apply_concept_shift(b, 1.0, 5, 2);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(all.labels[i] == 1 - b.labels[i]);
    CHECK(all.inputs == b.inputs);

    const LabeledBatch half = apply_concept_shift(b, 0.5, 5, 2);
    int changed = 0;
    for (std::size_t i = 0; i < b.size(); ++i)
        if (half.labels[i] != b.labels[i]) ++changed;
    CHECK(changed == 50);
    CHECK(half.inputs == b.inputs);
}

TEST_CASE("dataset file: round-trip, then byte-stable rewrite") {
    const std::string path = temp_path("fgmc_roundtrip.fgmc");
    const ClientDataset d{3, gen_base_task(60, 3, 13, 4)};
    write_dataset(path, d, 3);

    const ReadResult r = read_dataset(path, 3);
    CHECK(r.classes == 3);
    CHECK(r.dataset == d);

    const std::string path2 = temp_path("fgmc_roundtrip2.fgmc");
    write_dataset(path2, r.dataset, r.classes);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("dataset file: malformed inputs raise parse errors") {
    const std::string path = temp_path("fgmc_bad.fgmc");

    { std::ofstream f(path, std::ios::binary | std::ios::trunc); }
    CHECK_THROWS_AS(read_dataset(path), ParseError);

    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "NOPE-some bytes beyond twenty total here";
    }
    CHECK_THROWS_AS(read_dataset(path), ParseError);

    const ClientDataset d{0, gen_base_task(25, 2, 1)};
    write_dataset(path, d, 2);
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() / 2);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bytes;
    }
    CHECK_THROWS_AS(read_dataset(path), ParseError);

    write_dataset(path, d, 2);
    {
        std::ofstream f(path, std::ios::binary | std::ios::app);
        f << "x";
    }
    CHECK_THROWS_AS(read_dataset(path), ParseError);
    std::remove(path.c_str());
}

TEST_CASE("normalize_unit_box: shared affine map onto [0,1]") {
    LabeledBatch a = gen_base_task(50, 2, 17);
    LabeledBatch b = apply_feature_transform(a, FeatureTransform::scale({3.0, 3.0}));
    std::vector<LabeledBatch*> both{&a, &b};
    normalize_unit_box(both);
    for (const LabeledBatch* p : both)
        for (double v : p->inputs.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("split_train_val: sizes and determinism") {
    const LabeledBatch b = gen_base_task(100, 2, 19);
    const auto [train, val] = split_train_val(b, 0.8, 5);
    CHECK(train.size() == 80);
    CHECK(val.size() == 20);
    const auto [train2, val2] = split_train_val(b, 0.8, 5);
    CHECK(train == train2);
    CHECK(val == val2);
}
