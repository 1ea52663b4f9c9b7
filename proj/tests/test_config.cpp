#include "doctest.h"
#include "specguard/config.hpp"

using namespace specguard;

TEST_CASE("kv parsing handles comments, blanks and diagnostics") {
    const KvConfig kv = KvConfig::parse("# comment\n\nseed 9\ntrain.lr 0.05  # trailing comment\n");
    CHECK(kv.get("seed") == "9");
    CHECK(kv.get("train.lr") == "0.05");
    CHECK_THROWS_WITH_AS(KvConfig::parse("train.lr\n"), doctest::Contains("line 1"), IoError);
    CHECK_THROWS_WITH_AS(KvConfig::parse("a b c\n"), doctest::Contains("trailing token"), IoError);
}

TEST_CASE("epsilon accepts decimals and fractions") {
    CHECK(parse_epsilon("0.1") == doctest::Approx(0.1));
    CHECK(parse_epsilon("2/255") == doctest::Approx(2.0 / 255.0));
    CHECK(parse_epsilon("8/255") == doctest::Approx(8.0 / 255.0));
    CHECK_THROWS_AS(parse_epsilon("abc"), IoError);
    CHECK_THROWS_AS(parse_epsilon("1/0"), IoError);
}

TEST_CASE("defaults materialize the desk-scale model") {
    const RunConfig rc = RunConfig::from_kv(KvConfig{});
    CHECK(rc.model.image_size == 16);
    CHECK(rc.model.tokens() == 16);
    CHECK(rc.model.embed_dim == 32);
    CHECK(rc.model.heads == 4);
    CHECK(rc.model.layers == 2);
    CHECK(rc.model.classes == 10);
    CHECK(rc.train.lr == doctest::Approx(0.1));
    CHECK(rc.train.weight_decay == doctest::Approx(0.0001));
    CHECK(rc.train.msvp.lambda_q == doctest::Approx(1e-4));
    CHECK(rc.train.eval_attacks.size() == 2);
    CHECK(rc.train.eval_attacks[0].epsilon == doctest::Approx(2.0 / 255.0));
}

TEST_CASE("unknown keys are rejected by name") {
    KvConfig kv;
    kv.set("train.typo", "1");
    CHECK_THROWS_WITH_AS(RunConfig::from_kv(kv), doctest::Contains("train.typo"), IoError);
}

TEST_CASE("missing required idx fields name the field") {
    KvConfig kv;
    kv.set("data.source", "idx");
    CHECK_THROWS_WITH_AS(RunConfig::from_kv(kv), doctest::Contains("data.images"), IoError);
}

TEST_CASE("msvp.lambda shorthand sets all three lambdas") {
    KvConfig kv;
    kv.set("msvp.lambda", "0");
    const RunConfig rc = RunConfig::from_kv(kv);
    CHECK(rc.train.msvp.lambda_q == 0.0);
    CHECK(rc.train.msvp.lambda_k == 0.0);
    CHECK(rc.train.msvp.lambda_v == 0.0);

    KvConfig kv2;
    kv2.set("msvp.lambda", "0.001");
    kv2.set("msvp.lambda_k", "0.002");
    const RunConfig rc2 = RunConfig::from_kv(kv2);
    CHECK(rc2.train.msvp.lambda_q == doctest::Approx(0.001));
    CHECK(rc2.train.msvp.lambda_k == doctest::Approx(0.002));
}

TEST_CASE("eval sections override the default attack pair") {
    KvConfig kv;
    kv.set("eval1.family", "pgd");
    kv.set("eval1.epsilon", "8/255");
    kv.set("eval1.steps", "20");
    const RunConfig rc = RunConfig::from_kv(kv);
    REQUIRE(rc.train.eval_attacks.size() == 1);
    CHECK(rc.train.eval_attacks[0].steps == 20);
    CHECK(rc.train.eval_attacks[0].epsilon == doctest::Approx(8.0 / 255.0));
}

TEST_CASE("resolved echo parses back to the same configuration") {
    KvConfig kv;
    kv.set("seed", "31337");
    kv.set("train.lr", "0.05");
    kv.set("attack.epsilon", "8/255");
    kv.set("model.layers", "3");
    const RunConfig rc = RunConfig::from_kv(kv);
    const std::string echoed = rc.to_kv().serialize();
    const RunConfig rc2 = RunConfig::from_kv(KvConfig::parse(echoed));
    CHECK(rc2.seed == rc.seed);
    CHECK(rc2.train.lr == rc.train.lr);
    CHECK(rc2.train.attack.epsilon == rc.train.attack.epsilon);
    CHECK(rc2.model.layers == 3);
    CHECK(rc2.to_kv().serialize() == echoed);
}

TEST_CASE("seed falls back to the SPECGUARD_SEED environment variable") {
    setenv("SPECGUARD_SEED", "777", 1);
    const RunConfig rc = RunConfig::from_kv(KvConfig{});
    CHECK(rc.seed == 777);
    unsetenv("SPECGUARD_SEED");
    const RunConfig rc2 = RunConfig::from_kv(KvConfig{});
    CHECK(rc2.seed == 42);

    KvConfig kv;
    kv.set("seed", "5");
    setenv("SPECGUARD_SEED", "777", 1);
    CHECK(RunConfig::from_kv(kv).seed == 5);  // explicit key wins
    unsetenv("SPECGUARD_SEED");
}

TEST_CASE("synthetic data from the config is deterministic and shaped by the model") {
    KvConfig kv;
    kv.set("data.per_class", "3");
    kv.set("data.per_class_test", "2");
    const RunConfig rc = RunConfig::from_kv(kv);
    const Dataset train = rc.make_train_data();
    const Dataset test = rc.make_test_data();
    CHECK(train.count() == 30);
    CHECK(test.count() == 20);
    CHECK(train.sample_dim() == rc.model.input_dim());
    const Dataset train2 = rc.make_train_data();
    for (std::size_t k = 0; k < train.images.size(); ++k)
        CHECK(train.images.raw()[k] == train2.images.raw()[k]);
    // Train and test draws differ.
    bool differ = false;
    for (int j = 0; j < train.sample_dim() && !differ; ++j)
        if (train.images.at(0, j) != test.images.at(0, j)) differ = true;
    CHECK(differ);
}
