#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "purecc/customization.hpp"
#include "purecc/data.hpp"
#include "purecc/errors.hpp"

using namespace purecc;

namespace {

// Null branch returns x, conditional branches add a role-dependent offset.
class OffsetField final : public VelocityField {
public:
    std::size_t dim() const override { return 2; }
    std::size_t vocab_size() const override { return 5; }
    Vec velocity(std::span<const double> x, double t, const Condition& y) const override {
        Vec v(x.begin(), x.end());
        if (y.role == Role::target) {
            v[0] += 2.0 * t;
            v[1] -= 1.0;
        } else if (y.role == Role::complete) {
            v[1] += 3.0;
        }
        return v;
    }
};

struct Fixture {
    SceneSpec scene = SceneSpec::default_spec();
    VelocityNetwork pretrained;
    VelocityNetwork extractor;
    CustomSet refs;

    Fixture() : pretrained(make_pretrained()), extractor(pretrained), refs(make_custom_set(scene, "beach", 4, 3)) {
        ExtractorConfig ec;
        ec.iterations = 30;
        ec.learning_rate = 0.02;
        ec.batch_size = 4;
        ec.seed = 5;
        extractor = train_extractor(pretrained, refs, ec).net;
    }

    static VelocityNetwork make_pretrained() {
        NetworkConfig c;
        c.hidden_width = 12;
        c.embed_dim = 4;
        return VelocityNetwork::build(c, 2).clone_frozen();
    }

    StepBatch batch(std::uint64_t seed, std::size_t n = 4) const {
        Rng rng(seed);
        StepBatch b;
        for (std::size_t i = 0; i < n; ++i) {
            b.x0.push_back(refs.samples[i % refs.size()]);
            b.x1.push_back(oracle::random_vec(rng, 2));
            b.t.push_back(rng.uniform(0.05, 0.95));
        }
        b.y_complete = complete_condition(scene, "beach");
        b.y_tar = target_condition(scene);
        return b;
    }

    PureCCConfig config() const {
        PureCCConfig c;
        c.iterations = 25;
        c.learning_rate = 0.02;
        c.batch_size = 4;
        c.seed = 9;
        return c;
    }
};

}  // namespace

TEST_CASE("adaptive lambda equals the argmin of the projection error") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const Vec rt = oracle::random_vec(rng, 3, rng.uniform(0.01, 3.0));
        const Vec rl = oracle::random_vec(rng, 3);
        const AdaptiveLambda al = adaptive_lambda(rl, rt, 1e-8);
        CHECK_FALSE(al.degenerate);
        const double lo = al.value - 10.0;
        const double hi = al.value + 10.0;
        const double num = oracle::grid_golden_argmin(
            [&](long double l) { return oracle::projection_error({rl}, {rt}, l); }, lo, hi);
        CHECK(std::abs(num - al.value) < 1e-6);
    }
}

TEST_CASE("batch lambda minimizes the summed projection error") {
    Rng rng(2);
    std::vector<Vec> rl;
    std::vector<Vec> rt;
    for (int i = 0; i < 5; ++i) {
        rl.push_back(oracle::random_vec(rng, 2));
        rt.push_back(oracle::random_vec(rng, 2));
    }
    const AdaptiveLambda al = adaptive_lambda(rl, rt, 1e-8);
    const double num = oracle::grid_golden_argmin([&](long double l) { return oracle::projection_error(rl, rt, l); },
                                                  al.value - 5.0, al.value + 5.0);
    CHECK(std::abs(num - al.value) < 1e-6);
}

TEST_CASE("degenerate guidance is guarded") {
    const AdaptiveLambda zero = adaptive_lambda(Vec{1.0, 2.0}, Vec{0.0, 0.0}, 1e-8);
    CHECK(zero.degenerate);
    CHECK(zero.value == 0.0);
    const AdaptiveLambda tiny = adaptive_lambda(Vec{1.0, 2.0}, Vec{1e-5, 0.0}, 1e-8);
    CHECK(tiny.degenerate);
    CHECK(tiny.value == 0.0);
    const AdaptiveLambda ok = adaptive_lambda(Vec{1.0, 2.0}, Vec{1e-3, 0.0}, 1e-8);
    CHECK_FALSE(ok.degenerate);
    CHECK(ok.value == doctest::Approx(1000.0));
    CHECK_THROWS_AS((void)adaptive_lambda(Vec{1.0}, Vec{1.0, 2.0}, 1e-8), ShapeError);
    CHECK_THROWS_AS((void)adaptive_lambda(std::vector<Vec>{}, std::vector<Vec>{}, 1e-8), ShapeError);
}

TEST_CASE("guidance algebra on a closed-form field") {
    const OffsetField f;
    const Vec x{0.5, -0.25};
    const Vec r = representation_bias(f, x, 0.5, Condition::target(4, 3));
    CHECK(r == Vec{1.0, -1.0});
    const Vec rl = learned_representation(f, x, 0.5, Condition::complete({1}, 4, 3), Condition::base({1}));
    CHECK(rl == Vec{0.0, 3.0});
    CHECK(target_guidance(f, x, 0.5, Condition::target(4, 3)) == r);
    CHECK(purecc_target(Vec{1.0, 2.0}, Vec{0.5, -1.0}, 2.0) == Vec{2.0, 0.0});
}

TEST_CASE("target guidance refuses a trainable network") {
    NetworkConfig c;
    c.hidden_width = 4;
    const auto net = VelocityNetwork::build(c, 1);
    CHECK_THROWS_AS((void)target_guidance(net, Vec{0.0, 0.0}, 0.5, Condition::target(4, 3)), ContractError);
    CHECK_NOTHROW((void)target_guidance(net.clone_frozen(), Vec{0.0, 0.0}, 0.5, Condition::target(4, 3)));
}

TEST_CASE("pure learning loss vanishes on a matched target") {
    NetworkConfig c;
    c.hidden_width = 6;
    const auto net = VelocityNetwork::build(c, 4);
    const Condition y = Condition::complete({1}, 4, 3);
    const std::vector<Vec> x{{0.1, 0.2}, {-1.0, 0.5}};
    const std::vector<double> t{0.3, 0.8};
    std::vector<Vec> target;
    for (std::size_t i = 0; i < x.size(); ++i) target.push_back(net.forward(x[i], t[i], y));
    CHECK(purecc_loss_value(net, x, t, y, target) == 0.0);
    const LossGrad lg = purecc_loss(net, x, t, y, target);
    CHECK(lg.loss == 0.0);
    for (const auto& g : lg.grads.tensors) {
        for (double v : g.values) CHECK(v == 0.0);
    }
}

TEST_CASE("extractor training") {
    const Fixture fx;
    CHECK(fx.extractor.frozen());
    CHECK(fx.extractor.has_adapter());
    CHECK(fx.extractor.parameter("concept_slots") != fx.pretrained.parameter("concept_slots"));
    CHECK(fx.extractor.parameter("head.weight") == fx.pretrained.parameter("head.weight"));

    ExtractorConfig ec;
    ec.iterations = 30;
    ec.learning_rate = 0.02;
    ec.batch_size = 4;
    ec.seed = 5;
    CHECK(train_extractor(fx.pretrained, fx.refs, ec).net.parameters() == fx.extractor.parameters());
    CHECK_THROWS_AS((void)train_extractor(fx.extractor, fx.refs, ec), StateError);
    ec.adapter_rank = 0;
    CHECK_THROWS_AS((void)train_extractor(fx.pretrained, fx.refs, ec), ConfigError);
}

TEST_CASE("combined gradient matches finite differences of the detached objective") {
    const Fixture fx;
    const PureCCConfig cfg = fx.config();
    VelocityNetwork theta2 = init_trainable(fx.pretrained, fx.extractor, cfg);
    Rng rng(12);
    for (std::size_t l = 0; l < 3; ++l) {
        for (double& v : theta2.parameter("block" + std::to_string(l) + ".lora_b").values) v = 0.2 * rng.normal();
    }
    const StepBatch b = fx.batch(4);
    const PureStep step = compute_pure_step(theta2, fx.extractor, nullptr, b, cfg);
    CHECK(step.loss_total == doctest::Approx(step.loss_cc + cfg.eta * step.loss_purecc).epsilon(1e-14));

    std::vector<Vec> x_t;
    FlowBatch fb;
    for (std::size_t i = 0; i < b.x0.size(); ++i) {
        x_t.push_back(interpolate(b.x0[i], b.x1[i], b.t[i]));
        fb.x0.push_back(b.x0[i]);
        fb.x1.push_back(b.x1[i]);
        fb.t.push_back(b.t[i]);
        fb.y.push_back(b.y_complete);
    }
    const auto objective = [&](const VelocityNetwork& net) {
        return cfm_loss_value(net, fb) + cfg.eta * purecc_loss_value(net, x_t, b.t, b.y_complete, step.v_purecc);
    };
    CHECK(objective(theta2) == doctest::Approx(step.loss_total).epsilon(1e-13));
    const auto& mask = theta2.trainable_mask();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const std::string name = theta2.parameters()[i].name;
        for (std::size_t k = 0; k < theta2.parameters()[i].size(); ++k) {
            const double orig = theta2.parameters()[i].values[k];
            theta2.parameter(name).values[k] = orig + 1e-5;
            const double up = objective(theta2);
            theta2.parameter(name).values[k] = orig - 1e-5;
            const double down = objective(theta2);
            theta2.parameter(name).values[k] = orig;
            INFO(name << "[" << k << "]");
            CHECK(oracle::relative_error(step.grads.tensors[i].values[k], (up - down) / 2e-5, 1e-7) < 1e-5);
        }
    }
}

TEST_CASE("fixed lambda and theta3 mode") {
    const Fixture fx;
    PureCCConfig cfg = fx.config();
    const VelocityNetwork theta2 = init_trainable(fx.pretrained, fx.extractor, cfg);
    const StepBatch b = fx.batch(5);

    cfg.lambda_mode = LambdaMode::fixed;
    cfg.fixed_lambda = 5.0;
    CHECK(compute_pure_step(theta2, fx.extractor, nullptr, b, cfg).guidance.lambda_star == 5.0);

    cfg = fx.config();
    cfg.original_mode = OriginalMode::frozen_theta3;
    CHECK_THROWS_AS((void)compute_pure_step(theta2, fx.extractor, nullptr, b, cfg), ContractError);
    // θ2 starts as an exact copy of θ3, so both modes agree at the first step.
    const PureStep a = compute_pure_step(theta2, fx.extractor, &fx.pretrained, b, cfg);
    const PureStep c = compute_pure_step(theta2, fx.extractor, nullptr, b, fx.config());
    CHECK(a.loss_total == c.loss_total);
    CHECK(a.grads == c.grads);
}

TEST_CASE("eta zero is bitwise the plain customization loss") {
    const Fixture fx;
    PureCCConfig cfg = fx.config();
    cfg.eta = 0.0;
    const CustomizeResult pure = customize(fx.pretrained, fx.extractor, fx.refs, cfg);
    const CustomizeResult plain = finetune_cc(fx.pretrained, fx.extractor, fx.refs, cfg);
    CHECK(pure.net.parameters() == plain.net.parameters());
    REQUIRE(pure.trace.size() == plain.trace.size());
    for (std::size_t i = 0; i < pure.trace.size(); ++i) CHECK(pure.trace[i].loss_cc == plain.trace[i].loss_cc);
}

TEST_CASE("customization is deterministic and leaves its inputs untouched") {
    const Fixture fx;
    const auto before_pre = fx.pretrained.parameters();
    const auto before_ext = fx.extractor.parameters();
    std::size_t calls = 0;
    const auto a = customize(fx.pretrained, fx.extractor, fx.refs, fx.config(),
                             [&](std::size_t, const VelocityNetwork&) { ++calls; });
    const auto b = customize(fx.pretrained, fx.extractor, fx.refs, fx.config());
    CHECK(calls == fx.config().iterations);
    CHECK(a.net.parameters() == b.net.parameters());
    CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
    CHECK(fx.pretrained.parameters() == before_pre);
    CHECK(fx.extractor.parameters() == before_ext);
    CHECK(a.net.parameter("head.weight") == fx.pretrained.parameter("head.weight"));
}

TEST_CASE("customization preconditions") {
    const Fixture fx;
    PureCCConfig cfg = fx.config();
    const VelocityNetwork thawed = fx.extractor.clone_trainable();
    CHECK_THROWS_AS((void)customize(fx.pretrained, thawed, fx.refs, cfg), ContractError);
    CHECK_THROWS_AS((void)customize(fx.extractor, fx.extractor, fx.refs, cfg), StateError);
    cfg.eta = -1.0;
    CHECK_THROWS_AS((void)customize(fx.pretrained, fx.extractor, fx.refs, cfg), ConfigError);
    cfg = fx.config();
    cfg.learning_rate = 1e9;
    cfg.full_finetune = true;
    CHECK_THROWS_AS((void)customize(fx.pretrained, fx.extractor, fx.refs, cfg), DivergenceError);
}

TEST_CASE("trace csv round-trip") {
    std::vector<StepDiagnostics> t{{0, 1.25, 0.5, 0.75, 2.0, 1.5, false}, {1, 1e-9, 3.0, 0.0, 0.0, 0.0, true}};
    const auto back = trace_from_csv(trace_to_csv(t));
    REQUIRE(back.size() == 2);
    CHECK(back[1].degenerate);
    CHECK(back[0].lambda_star == 0.75);
    CHECK(trace_to_csv(back) == trace_to_csv(t));
    CHECK_THROWS_AS((void)trace_from_csv("iter,loss\n"), FormatError);
}
