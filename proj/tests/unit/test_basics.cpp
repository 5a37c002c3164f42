#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "purecc/checkpoint.hpp"
#include "purecc/condition.hpp"
#include "purecc/csv.hpp"
#include "purecc/errors.hpp"
#include "purecc/rng.hpp"
#include "purecc/tensor.hpp"

using namespace purecc;

TEST_CASE("rng streams are reproducible and independent") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    CHECK(mix_seed(1, 2) != mix_seed(1, 3));
    CHECK(mix_seed(1, 2) != mix_seed(2, 2));
}

TEST_CASE("rng draws have the expected moments") {
    Rng rng(7);
    const int n = 200000;
    double s = 0.0;
    double s2 = 0.0;
    double u = 0.0;
    int out_of_range = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
        const double v = rng.uniform();
        out_of_range += (v < 0.0 || v >= 1.0) ? 1 : 0;
        u += v;
    }
    CHECK(s / n == doctest::Approx(0.0).epsilon(0.01).scale(1.0));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.01));
    CHECK(out_of_range == 0);
    CHECK(u / n == doctest::Approx(0.5).epsilon(0.01));
    int below_bad = 0;
    for (int i = 0; i < 1000; ++i) below_bad += rng.below(3) < 3 ? 0 : 1;
    CHECK(below_bad == 0);
}

TEST_CASE("tensor helpers") {
    const Vec a{1.0, 2.0, 3.0};
    const Vec b{4.0, -5.0, 6.0};
    CHECK(dot(a, b) == 12.0);
    CHECK(squared_norm(a) == 14.0);
    CHECK(all_finite(a));
    CHECK_FALSE(all_finite(Vec{1.0, std::numeric_limits<double>::infinity()}));
    Tensor t("w", {2, 3});
    CHECK(t.size() == 6);
    t.at(1, 2) = 5.0;
    CHECK(t.row(1)[2] == 5.0);
    CHECK(shape_size({2, 3, 4}) == 24);
}

TEST_CASE("condition constructors") {
    const Condition c = Condition::complete({1, 2}, 6, 5);
    CHECK(c.role == Role::complete);
    CHECK(c.tokens == std::vector<int>{1, 2, 6, 5});
    CHECK(c.concept_slot == 2u);
    CHECK(c.base_part() == Condition::base({1, 2}));
    const Condition t = Condition::target(6, 5);
    CHECK(t.tokens == std::vector<int>{6, 5});
    CHECK(t.concept_slot == 0u);
    CHECK(Condition::null().tokens == std::vector<int>{kNullToken});
    CHECK_THROWS_AS((void)Condition::base({}), ConfigError);
    CHECK_THROWS_AS((void)Condition::base({0}), ConfigError);
    CHECK_THROWS_AS((void)t.base_part(), StateError);
    CHECK(parse_role(role_name(Role::target)) == Role::target);
    CHECK_THROWS_AS((void)parse_role("nonsense"), ConfigError);
}

TEST_CASE("csv number formatting round-trips exactly") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-20.0, 20.0));
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK_THROWS_AS((void)parse_double("1.5x"), FormatError);
    CHECK_THROWS_AS((void)parse_double(""), FormatError);
    CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(trim("  x y \t") == "x y");
}

TEST_CASE("csv tables") {
    const auto dir = std::filesystem::temp_directory_path() / "purecc_csv_test";
    std::filesystem::create_directories(dir);
    write_text(dir / "t.csv", "a,b\n1,2\n3,4\n");
    const CsvTable t = read_csv(dir / "t.csv");
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    CHECK(t.rows.size() == 2);
    CHECK(t.column("b") == 1);
    CHECK_THROWS_AS((void)t.column("c"), FormatError);
    write_text(dir / "bad.csv", "a,b\n1\n");
    CHECK_THROWS_AS((void)read_csv(dir / "bad.csv"), FormatError);
    CHECK_THROWS_AS((void)read_csv(dir / "missing.csv"), PrerequisiteError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint round-trip") {
    NetworkConfig c;
    c.hidden_width = 16;
    c.pooling = Pooling::mean;
    const auto plain = VelocityNetwork::build(c, 3);
    const auto adapted = plain.attach_adapter(3, 4).clone_frozen();
    const auto dir = std::filesystem::temp_directory_path() / "purecc_ckpt_test";
    std::filesystem::create_directories(dir);
    for (const auto* net : {&plain, &adapted}) {
        save_checkpoint(dir / "n.pcck", *net);
        const auto back = load_checkpoint(dir / "n.pcck");
        CHECK(back.config() == net->config());
        CHECK(back.config().concept_token == 4);
        CHECK(back.parameters() == net->parameters());
        CHECK(back.frozen() == net->frozen());
        CHECK(back.adapter_rank() == net->adapter_rank());
        CHECK(back.trainable_mask() == net->trainable_mask());
    }
    CHECK_THROWS_AS((void)load_checkpoint(dir / "absent.pcck"), PrerequisiteError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint byte layout and corruption") {
    Tensor t("ab", {2});
    t.values = {1.0, -2.0};
    const std::string bytes = encode_tensors({t});
    REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 2 + 4 + 4 + 16);
    CHECK(bytes.substr(0, 4) == "PCCK");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(decode_tensors(bytes) == std::vector<Tensor>{t});

    std::string version = bytes;
    version[4] = 2;
    CHECK_THROWS_WITH_AS((void)decode_tensors(version), doctest::Contains("version 2"), FormatError);
    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS((void)decode_tensors(magic), FormatError);
    CHECK_THROWS_AS((void)decode_tensors(bytes.substr(0, bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS((void)decode_tensors(bytes + "x"), FormatError);

    // A well-formed file that is not a network.
    CHECK_THROWS_AS((void)VelocityNetwork::from_tensors({t}), FormatError);
}
