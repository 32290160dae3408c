#include <doctest.h>

#include "sama/heads.hpp"
#include "sama/ops.hpp"
#include "support.hpp"

using namespace sama;

TEST_CASE("resolution law") {
    CHECK((HeadConfig{4, 64}).up_stages() == 4);
    CHECK((HeadConfig{4, 4}).up_stages() == 0);
    CHECK((HeadConfig{64, 1024}).up_stages() == 4);
    CHECK_THROWS_AS((HeadConfig{4, 48}).up_stages(), ConfigError);
    CHECK_THROWS_AS((HeadConfig{4, 30}).up_stages(), ConfigError);
    CHECK(HeadConfig::stage_channels(32, 4) == std::vector<std::size_t>{16, 8, 8, 8});
}

TEST_CASE("outputs lie in [0, 1] at the configured resolution") {
    ParamStore store;
    Rng rng(1);
    const PredictionHead head(store, Task::seg, 16, HeadConfig{4, 32}, rng);
    const Tensor feats = test::random_tensor(rng, {2, 16, 4, 4}, -3, 3);
    const Tensor out = head.predict(feats, {test::random_tensor(rng, {1, 16}), test::random_tensor(rng, {1, 16})});
    CHECK(out.shape() == Shape{2, 1, 32, 32});
    for (double v : out.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(head.prefix() == "head.seg");
    CHECK_THROWS_AS(head.predict(feats, {test::random_tensor(rng, {1, 16})}), ShapeError);
}

TEST_CASE("full-scale geometry upsamples a 64x64 grid to 1024x1024") {
    ParamStore store;
    Rng rng(2);
    const PredictionHead head(store, Task::matte, 8, HeadConfig{64, 1024}, rng);
    CHECK(head.stages() == 4);
    const Tensor out = head.predict(test::random_tensor(rng, {1, 8, 64, 64}), {test::random_tensor(rng, {1, 8})});
    CHECK(out.shape() == Shape{1, 1, 1024, 1024});
}

TEST_CASE("heads have disjoint parameters") {
    ParamStore store;
    Rng rng(3);
    const PredictionHead seg(store, Task::seg, 8, HeadConfig{2, 8}, rng);
    const PredictionHead matte(store, Task::matte, 8, HeadConfig{2, 8}, rng);
    CHECK(store.names_with_prefix("head.seg.").size() == store.names_with_prefix("head.matte.").size());
    const Tensor feats = test::random_tensor(rng, {1, 8, 2, 2});
    const std::vector<Tensor> tok{test::random_tensor(rng, {1, 8})};
    const Tensor seg_before = seg.predict(feats, tok);

    for (const auto& name : store.names_with_prefix("head.matte.")) {
        Tensor p = store.get(name);
        for (auto& v : p.mutable_data()) v = 0.0;
    }
    const Tensor m = matte.predict(feats, tok);
    for (double v : m.data()) CHECK(v == 0.5);
    CHECK(test::bit_equal(seg.predict(feats, tok).data(), seg_before.data()));
}

TEST_CASE("head gradients match finite differences") {
    ParamStore store;
    Rng rng(4);
    const PredictionHead head(store, Task::seg, 8, HeadConfig{2, 4}, rng);
    std::vector<Tensor> inputs{test::leaf(rng, {2, 8, 2, 2}), test::leaf(rng, {1, 8}), test::leaf(rng, {1, 8})};
    const Tensor proj = test::random_tensor(rng, {2, 1, 4, 4});
    auto res = gradcheck([&] { return sum(head.predict(inputs[0], {inputs[1], inputs[2]}) * proj); }, inputs);
    INFO(res.worst);
    CHECK(res.ok());

    Tensor w = store.get("head.seg.up1.conv.weight");
    auto wres = gradcheck([&] { return sum(head.predict(inputs[0], {inputs[1], inputs[2]}) * proj); },
                          std::span<Tensor>(&w, 1));
    INFO(wres.worst);
    CHECK(wres.ok());
}
