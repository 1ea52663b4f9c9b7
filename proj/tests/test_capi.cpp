#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "specguard.h"

namespace {

std::string temp_dir(const char* leaf) {
    const auto dir = std::filesystem::temp_directory_path() / "specguard_capi" / leaf;
    std::filesystem::create_directories(dir);
    return dir.string();
}

struct Cfg {
    sg_config* h = sg_config_create();
    ~Cfg() { sg_config_destroy(h); }
};

}  // namespace

TEST_CASE("version and error strings are stable") {
    CHECK(std::string(sg_version()).find("specguard") != std::string::npos);
    CHECK(sg_last_error() != nullptr);
}

TEST_CASE("config set/get round trip with validation") {
    Cfg cfg;
    CHECK(sg_config_set(cfg.h, "train.lr", "0.05") == SG_OK);
    CHECK(sg_config_set(cfg.h, "attack.epsilon", "2/255") == SG_OK);
    char buf[64];
    CHECK(sg_config_get(cfg.h, "train.lr", buf, sizeof(buf)) == SG_OK);
    CHECK(std::string(buf) == "0.05");  // raw value as set
    CHECK(sg_config_get(cfg.h, "model.heads", buf, sizeof(buf)) == SG_OK);
    CHECK(std::string(buf) == "4");  // default, materialized on demand

    CHECK(sg_config_set(cfg.h, "bogus.key", "1") == SG_ERR_IO);
    CHECK(std::string(sg_last_error()).find("bogus.key") != std::string::npos);

    char* text = nullptr;
    CHECK(sg_config_resolved(cfg.h, &text) == SG_OK);
    CHECK(std::string(text).find("model.embed_dim 32") != std::string::npos);
    sg_string_free(text);
}

TEST_CASE("null arguments are rejected") {
    CHECK(sg_train(nullptr, "x") == SG_ERR_ARGUMENT);
    CHECK(sg_spectral_norm(nullptr, 2, 2, nullptr) == SG_ERR_ARGUMENT);
}

TEST_CASE("spectral norm and power iteration agree through the C surface") {
    const double data[] = {3.0, 0.0, 0.0, 1.0};
    double sn = 0.0;
    REQUIRE(sg_spectral_norm(data, 2, 2, &sn) == SG_OK);
    CHECK(sn == doctest::Approx(3.0).epsilon(1e-12));
    double sigma = 0.0;
    REQUIRE(sg_power_iteration(data, 2, 2, 100, 7, &sigma) == SG_OK);
    CHECK(sigma == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("verify runs and fault injection fails it") {
    char* report = nullptr;
    CHECK(sg_verify("projection", nullptr, &report) == SG_OK);
    CHECK(std::string(report).find("projection,pass") != std::string::npos);
    sg_string_free(report);

    char* bad = nullptr;
    CHECK(sg_verify("autograd", "matmul", &bad) == SG_VERIFY_FAILED);
    CHECK(std::string(bad).find("matmul") != std::string::npos);
    sg_string_free(bad);

    CHECK(sg_verify("", nullptr, nullptr) == SG_ERR_CONTRACT);
}

TEST_CASE("train, analyze and attack-eval round trip through files") {
    Cfg cfg;
    // A deliberately tiny run.
    REQUIRE(sg_config_set(cfg.h, "model.image_size", "8") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "model.patch_size", "4") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "model.embed_dim", "8") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "model.heads", "2") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "model.head_dim", "4") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "model.layers", "1") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "model.classes", "3") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "data.per_class", "6") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "data.per_class_test", "2") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "train.epochs", "1") == SG_OK);
    REQUIRE(sg_config_set(cfg.h, "train.batch_size", "6") == SG_OK);

    const std::string dir = temp_dir("train");
    REQUIRE(sg_train(cfg.h, dir.c_str()) == SG_OK);
    CHECK(std::filesystem::exists(dir + "/checkpoint.bin"));
    CHECK(std::filesystem::exists(dir + "/metrics.csv"));
    CHECK(std::filesystem::exists(dir + "/config_resolved.txt"));

    const std::string sdir = temp_dir("spectra");
    REQUIRE(sg_analyze_spectra((dir + "/checkpoint.bin").c_str(), 1.0, 0.1, cfg.h, 20,
                               sdir.c_str()) == SG_OK);
    CHECK(std::filesystem::exists(sdir + "/spectra.csv"));

    char* table = nullptr;
    REQUIRE(sg_attack_eval((dir + "/checkpoint.bin").c_str(), cfg.h, nullptr, &table) == SG_OK);
    CHECK(std::string(table).find("clean") != std::string::npos);
    sg_string_free(table);

    CHECK(sg_attack_eval("/nonexistent/ckpt.bin", cfg.h, nullptr, nullptr) == SG_ERR_IO);
}
