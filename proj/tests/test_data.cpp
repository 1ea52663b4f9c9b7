#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "specguard/autograd.hpp"
#include "specguard/data.hpp"

using namespace specguard;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "specguard_data_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("synthetic generator rejects degenerate class counts") {
    CHECK_THROWS_AS(synth_generate(1, 4, 8, 0), ContractError);
}

TEST_CASE("per_class zero gives an empty dataset") {
    const Dataset d = synth_generate(3, 0, 8, 7);
    CHECK(d.count() == 0);
    CHECK(d.classes == 3);
}

TEST_CASE("zero noise makes all samples of a class identical") {
    const Dataset d = synth_generate(2, 3, 8, 11, 1, 0.0);
    for (int s = 1; s < 3; ++s)
        for (int j = 0; j < d.sample_dim(); ++j) CHECK(d.images.at(s, j) == d.images.at(0, j));
}

TEST_CASE("synthetic data is balanced, deterministic and in range") {
    const Dataset a = synth_generate(4, 5, 8, 42);
    const Dataset b = synth_generate(4, 5, 8, 42);
    CHECK(a.count() == 20);
    for (std::size_t k = 0; k < a.images.size(); ++k) CHECK(a.images.raw()[k] == b.images.raw()[k]);
    CHECK(a.labels == b.labels);

    std::vector<int> counts(4, 0);
    for (int lab : a.labels) ++counts[static_cast<std::size_t>(lab)];
    for (int c : counts) CHECK(c == 5);

    const Dataset c = synth_generate(4, 5, 8, 43);
    bool any_different = false;
    for (std::size_t k = 0; k < a.images.size(); ++k)
        if (a.images.raw()[k] != c.images.raw()[k]) any_different = true;
    CHECK(any_different);
}

TEST_CASE("linear separability sanity: templates of different classes differ") {
    const Dataset d = synth_generate(10, 1, 16, 3, 1, 0.0);
    for (int a = 0; a < 10; ++a)
        for (int b = a + 1; b < 10; ++b) {
            double dist = 0.0;
            for (int j = 0; j < d.sample_dim(); ++j) {
                const double diff = static_cast<double>(d.images.at(a, j)) - d.images.at(b, j);
                dist += diff * diff;
            }
            CHECK(dist > 1.0);  // far apart relative to the 0.1 noise std
        }
}

TEST_CASE("a linear classifier fits the default generator within 200 steps") {
    const Dataset d = synth_generate(10, 20, 16, 902);
    const int dim = d.sample_dim(), classes = d.classes, n = d.count();

    Matrix w(dim, classes), b(1, classes);
    const double lr = 0.5;
    int steps_used = 0;
    for (int step = 0; step < 200; ++step, ++steps_used) {
        Graph g;
        const Graph::Value wx = g.leaf(w);
        const Graph::Value bx = g.leaf(b);
        const Graph::Value logits = g.add_rowvec(g.matmul(g.leaf(d.images), wx), bx);
        const Graph::Value loss = g.cross_entropy(logits, d.labels);
        g.backward(loss);
        w = sub(w, scale(g.grad(wx), static_cast<real>(lr)));
        b = sub(b, scale(g.grad(bx), static_cast<real>(lr)));
    }

    Graph g;
    const Matrix logits = g.value(g.add_rowvec(g.matmul(g.leaf(d.images), g.leaf(w)), g.leaf(b)));
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < classes; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        if (best == d.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    CHECK(static_cast<double>(correct) / n >= 0.95);
    CHECK(steps_used <= 200);
}

TEST_CASE("idx round trip is bit identical") {
    const auto dir = temp_dir();
    const std::string imgs = (dir / "rt-images.idx").string();
    const std::string labs = (dir / "rt-labels.idx").string();
    const Dataset d = synth_generate(3, 4, 8, 5);
    save_idx_like(d, imgs, labs);
    const Dataset r = load_idx_like(imgs, labs);
    REQUIRE(r.count() == d.count());
    for (std::size_t k = 0; k < d.images.size(); ++k) CHECK(r.images.raw()[k] == d.images.raw()[k]);
    CHECK(r.labels == d.labels);

    // Second write produces identical bytes.
    const std::string imgs2 = (dir / "rt-images2.idx").string();
    const std::string labs2 = (dir / "rt-labels2.idx").string();
    save_idx_like(r, imgs2, labs2);
    std::ifstream f1(imgs, std::ios::binary), f2(imgs2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("handcrafted 1x2x2 file scales bytes by 255") {
    const auto dir = temp_dir();
    const std::string imgs = (dir / "hand-images.idx").string();
    const std::string labs = (dir / "hand-labels.idx").string();
    {
        std::ofstream f(imgs, std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2};
        f.write(reinterpret_cast<const char*>(header), sizeof(header));
        const unsigned char px[] = {0, 255, 128, 64};
        f.write(reinterpret_cast<const char*>(px), sizeof(px));
    }
    {
        std::ofstream f(labs, std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 1, 0, 0, 0, 1};
        f.write(reinterpret_cast<const char*>(header), sizeof(header));
        const unsigned char lab[] = {1};
        f.write(reinterpret_cast<const char*>(lab), sizeof(lab));
    }
    const Dataset d = load_idx_like(imgs, labs, 2);
    REQUIRE(d.count() == 1);
    CHECK(d.images.at(0, 0) == real(0));
    CHECK(d.images.at(0, 1) == real(1));
    CHECK(d.images.at(0, 2) == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    CHECK(d.images.at(0, 3) == doctest::Approx(64.0 / 255.0).epsilon(1e-15));
    CHECK(d.labels[0] == 1);
}

TEST_CASE("loader reports distinct errors") {
    const auto dir = temp_dir();
    const std::string empty = (dir / "empty.idx").string();
    {
        std::ofstream f(empty, std::ios::binary);
    }
    CHECK_THROWS_WITH_AS(load_idx_like(empty, empty), doctest::Contains("truncated header"), IoError);

    const std::string bad_magic = (dir / "badmagic.idx").string();
    {
        std::ofstream f(bad_magic, std::ios::binary);
        const unsigned char header[] = {0, 0, 9, 9, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2};
        f.write(reinterpret_cast<const char*>(header), sizeof(header));
    }
    CHECK_THROWS_WITH_AS(load_idx_like(bad_magic, bad_magic), doctest::Contains("bad magic"), IoError);

    const std::string truncated = (dir / "trunc.idx").string();
    {
        std::ofstream f(truncated, std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
        f.write(reinterpret_cast<const char*>(header), sizeof(header));
        const unsigned char px[] = {1, 2, 3};  // needs 8 bytes
        f.write(reinterpret_cast<const char*>(px), sizeof(px));
    }
    CHECK_THROWS_WITH_AS(load_idx_like(truncated, truncated), doctest::Contains("truncated image payload"),
                         IoError);

    // Label overflow against an expected class count.
    const std::string imgs = (dir / "ovf-images.idx").string();
    const std::string labs = (dir / "ovf-labels.idx").string();
    const Dataset d = synth_generate(5, 2, 8, 9);
    save_idx_like(d, imgs, labs);
    CHECK_THROWS_WITH_AS(load_idx_like(imgs, labs, 3), doctest::Contains("label overflow"), ContractError);
}
