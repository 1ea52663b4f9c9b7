// Command-line front end. Everything goes through the C API in specguard.h;
// this translation unit never touches the C++ core directly.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specguard.h"

namespace {

struct ConfigHandle {
    sg_config* cfg = sg_config_create();
    ~ConfigHandle() { sg_config_destroy(cfg); }
};

int fail(int code) {
    std::fprintf(stderr, "error: %s\n", sg_last_error());
    return code == SG_VERIFY_FAILED ? 1 : 2;
}

int apply_config(sg_config* cfg, const std::string& config_path,
                 const std::vector<std::string>& sets, const std::string& seed) {
    if (!config_path.empty()) {
        const int rc = sg_config_load_file(cfg, config_path.c_str());
        if (rc != SG_OK) return rc;
    }
    for (const std::string& kv : sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
            return SG_ERR_ARGUMENT;
        }
        const int rc = sg_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        if (rc != SG_OK) return rc;
    }
    if (!seed.empty()) {
        const int rc = sg_config_set(cfg, "seed", seed.c_str());
        if (rc != SG_OK) return rc;
    }
    return SG_OK;
}

void print_and_free(char* text) {
    if (text) {
        std::fputs(text, stdout);
        sg_string_free(text);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"specguard: spectral-norm penalized attention training and verification"};
    app.require_subcommand(1);

    std::string config_path, seed, out_dir, checkpoint, out_path, fault_op;
    std::vector<std::string> sets, suites;
    double b_anchor = 1.0, delta0 = 0.0;
    int samples = 200, steps = 10;
    bool with_data = false;

    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (flat `section.key value` lines)");
        cmd->add_option("--set", sets, "override a config key, e.g. --set train.lr=0.05")
            ->take_all();
        cmd->add_option("--seed", seed, "seed override (also via SPECGUARD_SEED)");
    };

    CLI::App* train = app.add_subcommand("train", "train a model and write run artifacts");
    add_config_flags(train);
    train->add_option("--out", out_dir, "output directory")->required();

    CLI::App* spectra =
        app.add_subcommand("analyze-spectra", "oracle spectral norms and Lipschitz bounds per head");
    spectra->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    spectra->add_option("--anchor", b_anchor, "input bound B for the B-anchored bound");
    spectra->add_option("--delta0", delta0, "perturbation radius");
    spectra->add_option("--samples", samples, "empirical samples per head (with --with-data)");
    spectra->add_flag("--with-data", with_data,
                      "anchor the bound at the config's test data and validate empirically");
    add_config_flags(spectra);
    spectra->add_option("--out", out_dir, "output directory")->required();

    CLI::App* attack = app.add_subcommand("attack-eval", "clean and robust accuracy table");
    attack->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    add_config_flags(attack);
    attack->add_option("--out", out_path, "also write the table to this file");

    CLI::App* verify = app.add_subcommand("verify", "run the oracle verification suites");
    verify
        ->add_option("--suite", suites,
                     "suites to run (power-iteration, jacobian, bound-containment, autograd, "
                     "projection, or all)")
        ->take_all();
    verify->add_option("--inject-fault", fault_op,
                       "test fixture: corrupt the named op's backward rule");

    CLI::App* bench = app.add_subcommand("bench", "relative step time with msvp off/on");
    bench->add_option("--steps", steps, "training steps to time per configuration");
    add_config_flags(bench);

    CLI11_PARSE(app, argc, argv);

    ConfigHandle handle;
    int rc = SG_OK;
    if (train->parsed() || spectra->parsed() || attack->parsed() || bench->parsed()) {
        rc = apply_config(handle.cfg, config_path, sets, seed);
        if (rc != SG_OK) return fail(rc);
    }

    if (train->parsed()) {
        rc = sg_train(handle.cfg, out_dir.c_str());
        if (rc != SG_OK) return fail(rc);
        char* resolved = nullptr;
        if (sg_config_resolved(handle.cfg, &resolved) == SG_OK) print_and_free(resolved);
        std::printf("artifacts written to %s\n", out_dir.c_str());
        return 0;
    }
    if (spectra->parsed()) {
        rc = sg_analyze_spectra(checkpoint.c_str(), b_anchor, delta0,
                                with_data ? handle.cfg : nullptr, samples, out_dir.c_str());
        if (rc != SG_OK) return fail(rc);
        std::printf("spectra report written to %s\n", out_dir.c_str());
        return 0;
    }
    if (attack->parsed()) {
        char* table = nullptr;
        rc = sg_attack_eval(checkpoint.c_str(), handle.cfg, out_path.empty() ? nullptr : out_path.c_str(),
                            &table);
        if (rc != SG_OK) return fail(rc);
        print_and_free(table);
        return 0;
    }
    if (verify->parsed()) {
        if (suites.empty()) {
            std::fprintf(stderr, "usage error: verify needs at least one --suite (or --suite all)\n");
            return 2;
        }
        std::string csv;
        for (const std::string& s : suites) {
            if (!csv.empty()) csv += ',';
            csv += s;
        }
        char* report = nullptr;
        rc = sg_verify(csv.c_str(), fault_op.empty() ? nullptr : fault_op.c_str(), &report);
        print_and_free(report);
        if (rc == SG_OK) return 0;
        if (rc == SG_VERIFY_FAILED) return 1;  // suites ran; the report says what failed
        return fail(rc);
    }
    if (bench->parsed()) {
        char* table = nullptr;
        rc = sg_bench(handle.cfg, steps, &table);
        if (rc != SG_OK) return fail(rc);
        print_and_free(table);
        return 0;
    }
    return 2;
}
