#include <doctest.h>

#include "oracles.hpp"
#include "purecc/errors.hpp"
#include "purecc/net.hpp"
#include "purecc/rng.hpp"

using namespace purecc;

namespace {

NetworkConfig small_config(std::size_t width, std::size_t embed, Pooling pooling = Pooling::sum) {
    NetworkConfig c;
    c.input_dim = 2;
    c.hidden_width = width;
    c.num_layers = 3;
    c.embed_dim = embed;
    c.vocab_size = 5;
    c.pooling = pooling;
    return c;
}

// Adapter with nonzero up-projection so every factor receives gradient.
VelocityNetwork randomized_adapter_net(const NetworkConfig& c, std::uint64_t seed) {
    VelocityNetwork net = VelocityNetwork::build(c, seed).attach_adapter(2, seed + 1);
    Rng rng(seed + 2);
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        for (double& v : net.parameter("block" + std::to_string(l) + ".lora_b").values) v = 0.3 * rng.normal();
    }
    for (double& v : net.parameter("concept_slots").values) v = rng.normal();
    return net;
}

void check_gradients(const VelocityNetwork& net, const Condition& y, std::uint64_t seed) {
    Rng rng(seed);
    const Vec x = oracle::random_vec(rng, 2);
    const double t = rng.uniform(0.05, 0.95);
    const Vec up = oracle::random_vec(rng, 2);
    const Gradients g = net.backward(x, t, y, up, net.full_mask());
    for (std::size_t i = 0; i < net.parameters().size(); ++i) {
        const Tensor& p = net.parameters()[i];
        const std::size_t start = p.name == "token_table" ? p.cols() : 0;  // null row is a constant
        for (std::size_t k = start; k < p.size(); ++k) {
            const double fd = oracle::central_difference(net, i, k, x, t, y, up, 1e-5);
            INFO(p.name << "[" << k << "]");
            CHECK(oracle::relative_error(g.tensors[i].values[k], fd, 1e-7) < 1e-4);
        }
    }
}

}  // namespace

TEST_CASE("backward matches central differences on every tensor") {
    const Condition complete = Condition::complete({1}, 4, 3);
    SUBCASE("sum pooling") { check_gradients(randomized_adapter_net(small_config(8, 4), 11), complete, 1); }
    SUBCASE("mean pooling") {
        check_gradients(randomized_adapter_net(small_config(6, 3, Pooling::mean), 12), complete, 2);
    }
    SUBCASE("null condition") { check_gradients(randomized_adapter_net(small_config(5, 2), 13), Condition::null(), 3); }
    SUBCASE("no adapter") {
        check_gradients(VelocityNetwork::build(small_config(7, 3), 14), Condition::target(4, 3), 4);
    }
}

TEST_CASE("forward golden fixtures") {
    NetworkConfig c;
    c.input_dim = 2;
    c.hidden_width = 64;
    c.num_layers = 3;
    const VelocityNetwork net = VelocityNetwork::build(c, 7);
    const Vec a = net.forward(Vec{0.0, 0.0}, 0.5, Condition::null());
    CHECK(a[0] == doctest::Approx(0.052182040199026003).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(0.097247728744597417).epsilon(1e-12));
    const Vec b = net.forward(Vec{1.0, -1.0}, 0.25, Condition::base({1}));
    CHECK(b[0] == doctest::Approx(0.11288163239222659).epsilon(1e-12));
    CHECK(b[1] == doctest::Approx(0.087108575527741622).epsilon(1e-12));
}

TEST_CASE("build is deterministic in the seed") {
    const auto c = small_config(16, 4);
    CHECK(VelocityNetwork::build(c, 3).parameters() == VelocityNetwork::build(c, 3).parameters());
    CHECK(VelocityNetwork::build(c, 3).parameters() != VelocityNetwork::build(c, 4).parameters());
}

TEST_CASE("fresh adapter leaves the forward pass unchanged") {
    const auto base = VelocityNetwork::build(small_config(16, 4), 5);
    const auto adapted = base.attach_adapter(4, 9);
    const Vec x{0.3, -0.7};
    const Condition y = Condition::base({2});
    CHECK(base.forward(x, 0.4, y) == adapted.forward(x, 0.4, y));
    CHECK(adapted.has_adapter());
    CHECK(adapted.adapter_rank() == 4);
    CHECK_THROWS_AS((void)adapted.attach_adapter(2, 1), StateError);
}

TEST_CASE("merging an adapter preserves the function") {
    const auto net = randomized_adapter_net(small_config(8, 4), 21);
    const auto merged = net.merge_adapter();
    CHECK_FALSE(merged.has_adapter());
    const Vec x{-0.2, 0.9};
    const Condition y = Condition::complete({2}, 4, 3);
    const Vec a = net.forward(x, 0.6, y);
    const Vec b = merged.forward(x, 0.6, y);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));
    CHECK_THROWS_AS((void)merged.merge_adapter(), StateError);
}

TEST_CASE("adapter mask trains only the factors and concept slots") {
    const auto net = VelocityNetwork::build(small_config(8, 4), 2).attach_adapter(2, 3);
    const auto& mask = net.trainable_mask();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const std::string& name = net.parameters()[i].name;
        const bool expected = name == "concept_slots" || name.find("lora") != std::string::npos;
        CHECK_MESSAGE(mask[i] == expected, name);
    }
}

TEST_CASE("frozen networks refuse updates") {
    const auto frozen = VelocityNetwork::build(small_config(8, 4), 2).clone_frozen();
    CHECK(frozen.frozen());
    const Vec x{0.0, 0.0};
    const Vec up{1.0, 1.0};
    CHECK_THROWS_AS((void)frozen.backward(x, 0.5, Condition::null(), up, frozen.full_mask()), FreezeViolation);
    auto copy = frozen;
    CHECK_THROWS_AS(copy.apply_sgd(copy.zero_gradients(copy.empty_mask()), 0.1), FreezeViolation);
    CHECK_THROWS_AS((void)copy.parameter("head.weight"), FreezeViolation);
    CHECK_THROWS_AS(copy.set_trainable_mask(copy.full_mask()), FreezeViolation);
    const auto thawed = frozen.clone_trainable();
    CHECK_FALSE(thawed.frozen());
    CHECK(thawed.trainable_mask() == thawed.full_mask());
}

TEST_CASE("sgd never moves the null embedding row") {
    auto net = VelocityNetwork::build(small_config(8, 4), 2);
    Gradients g = net.zero_gradients(net.full_mask());
    for (auto& t : g.tensors) std::fill(t.values.begin(), t.values.end(), 1.0);
    const Tensor before = net.parameter("token_table");
    net.apply_sgd(g, 0.5);
    const Tensor& after = net.parameters()[net.index_of("token_table")];
    for (std::size_t k = 0; k < after.cols(); ++k) CHECK(after.at(0, k) == 0.0);
    CHECK(after.at(1, 0) == doctest::Approx(before.at(1, 0) - 0.5));
}

TEST_CASE("forward input validation") {
    const auto net = VelocityNetwork::build(small_config(8, 4), 2);
    CHECK_THROWS_AS((void)net.forward(Vec{0.0}, 0.5, Condition::null()), ShapeError);
    CHECK_THROWS_AS((void)net.forward(Vec{0.0, 0.0}, 1.5, Condition::null()), DomainError);
    CHECK_THROWS_AS((void)net.forward(Vec{0.0, 0.0}, 0.5, Condition::base({7})), IndexError);
    CHECK_THROWS_AS((void)net.forward(Vec{std::nan(""), 0.0}, 0.5, Condition::null()), NumericInputError);
    CHECK_THROWS_AS((void)net.parameters().at(99), std::out_of_range);
    CHECK_THROWS_AS((void)net.index_of("nope"), IndexError);
}

TEST_CASE("config validation") {
    auto c = small_config(8, 4);
    c.vocab_size = 1;
    CHECK_THROWS_AS((void)VelocityNetwork::build(c, 1), ConfigError);
    c = small_config(8, 4);
    c.num_layers = 0;
    CHECK_THROWS_AS((void)VelocityNetwork::build(c, 1), ConfigError);
}

TEST_CASE("concept slots are copied between matching networks") {
    auto a = VelocityNetwork::build(small_config(8, 4), 2).attach_adapter(2, 1);
    const auto b = randomized_adapter_net(small_config(8, 4), 5);
    a.copy_concept_slots_from(b);
    CHECK(a.parameter("concept_slots") == b.parameters()[b.index_of("concept_slots")]);
    auto other = VelocityNetwork::build(small_config(8, 3), 2);
    CHECK_THROWS_AS(other.copy_concept_slots_from(b), ShapeError);
}
