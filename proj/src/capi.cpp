#include "specguard.h"

#include <cstring>
#include <string>

#include "specguard/commands.hpp"

#if defined(_WIN32)
#define SG_EXPORT __declspec(dllexport)
#else
#define SG_EXPORT __attribute__((visibility("default")))
#endif

namespace {

thread_local std::string g_last_error;

int set_error(int code, const std::string& message) {
    g_last_error = message;
    return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const specguard::ShapeError& e) {
        return set_error(SG_ERR_SHAPE, e.what());
    } catch (const specguard::ContractError& e) {
        return set_error(SG_ERR_CONTRACT, e.what());
    } catch (const specguard::IoError& e) {
        return set_error(SG_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return set_error(SG_ERR_INTERNAL, e.what());
    } catch (...) {
        return set_error(SG_ERR_INTERNAL, "unknown error");
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

struct sg_config {
    specguard::KvConfig kv;
};

extern "C" {

SG_EXPORT const char* sg_version(void) { return "specguard 1.0.0"; }

SG_EXPORT const char* sg_last_error(void) { return g_last_error.c_str(); }

SG_EXPORT void sg_string_free(char* s) { delete[] s; }

SG_EXPORT sg_config* sg_config_create(void) { return new sg_config(); }

SG_EXPORT void sg_config_destroy(sg_config* cfg) { delete cfg; }

SG_EXPORT int sg_config_load_file(sg_config* cfg, const char* path) {
    if (!cfg || !path) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const specguard::KvConfig loaded = specguard::KvConfig::parse_file(path);
        for (const auto& e : loaded.entries()) cfg->kv.set(e.first, e.second);
        return SG_OK;
    });
}

SG_EXPORT int sg_config_set(sg_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        // Catch typos at the set site; value validation happens when a
        // command resolves the config, since keys can be interdependent.
        if (!specguard::is_known_config_key(key))
            throw specguard::IoError(std::string("unknown config field '") + key + "'");
        cfg->kv.set(key, value);
        return SG_OK;
    });
}

SG_EXPORT int sg_config_get(const sg_config* cfg, const char* key, char* buf, size_t cap) {
    if (!cfg || !key || !buf) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        std::string v;
        if (cfg->kv.has(key)) {
            v = cfg->kv.get(key);
        } else {
            const specguard::KvConfig resolved = specguard::RunConfig::from_kv(cfg->kv).to_kv();
            if (!resolved.has(key))
                return set_error(SG_ERR_ARGUMENT, std::string("unknown key ") + key);
            v = resolved.get(key);
        }
        if (v.size() + 1 > cap) return set_error(SG_ERR_ARGUMENT, "buffer too small");
        std::memcpy(buf, v.c_str(), v.size() + 1);
        return SG_OK;
    });
}

SG_EXPORT int sg_config_resolved(const sg_config* cfg, char** text) {
    if (!cfg || !text) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        *text = dup_string(specguard::RunConfig::from_kv(cfg->kv).to_kv().serialize());
        return SG_OK;
    });
}

SG_EXPORT int sg_train(const sg_config* cfg, const char* out_dir) {
    if (!cfg || !out_dir) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const specguard::RunConfig rc = specguard::RunConfig::from_kv(cfg->kv);
        specguard::cmd_train(rc, out_dir);
        return SG_OK;
    });
}

SG_EXPORT int sg_analyze_spectra(const char* checkpoint_path, double b_anchor, double delta0,
                                 const sg_config* anchor_cfg, int samples, const char* out_dir) {
    if (!checkpoint_path || !out_dir) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        specguard::RunConfig rc;
        const specguard::RunConfig* rc_ptr = nullptr;
        if (anchor_cfg) {
            rc = specguard::RunConfig::from_kv(anchor_cfg->kv);
            rc_ptr = &rc;
        }
        specguard::cmd_analyze_spectra(checkpoint_path, b_anchor, delta0, rc_ptr, samples, out_dir);
        return SG_OK;
    });
}

SG_EXPORT int sg_attack_eval(const char* checkpoint_path, const sg_config* cfg,
                             const char* out_path, char** table) {
    if (!checkpoint_path || !cfg) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const specguard::RunConfig rc = specguard::RunConfig::from_kv(cfg->kv);
        const std::string text =
            specguard::cmd_attack_eval(checkpoint_path, rc, out_path ? out_path : "");
        if (table) *table = dup_string(text);
        return SG_OK;
    });
}

SG_EXPORT int sg_verify(const char* suites_csv, const char* fault_op, char** report) {
    if (!suites_csv) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        bool passed = false;
        const std::string text = specguard::cmd_verify(split_csv(suites_csv),
                                                       fault_op ? fault_op : "", &passed);
        if (report) *report = dup_string(text);
        return passed ? SG_OK : SG_VERIFY_FAILED;
    });
}

SG_EXPORT int sg_bench(const sg_config* cfg, int steps, char** table) {
    if (!cfg) return set_error(SG_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const specguard::RunConfig rc = specguard::RunConfig::from_kv(cfg->kv);
        const std::string text = specguard::bench_table(specguard::cmd_bench(rc, steps));
        if (table) *table = dup_string(text);
        return SG_OK;
    });
}

SG_EXPORT int sg_spectral_norm(const double* data, int rows, int cols, double* out) {
    if (!data || !out || rows < 1 || cols < 1) return set_error(SG_ERR_ARGUMENT, "bad matrix");
    return guarded([&] {
        std::vector<specguard::real> values(data, data + static_cast<std::size_t>(rows) * cols);
        *out = specguard::spectral_norm(specguard::Matrix(rows, cols, std::move(values)));
        return SG_OK;
    });
}

SG_EXPORT int sg_power_iteration(const double* data, int rows, int cols, int iters, uint64_t seed,
                                 double* sigma_out) {
    if (!data || !sigma_out || rows < 1 || cols < 1) return set_error(SG_ERR_ARGUMENT, "bad matrix");
    return guarded([&] {
        std::vector<specguard::real> values(data, data + static_cast<std::size_t>(rows) * cols);
        const specguard::Matrix a(rows, cols, std::move(values));
        specguard::Rng rng(seed);
        specguard::PowerIterState st = specguard::init_power_state(rows, cols, rng);
        *sigma_out = specguard::power_iteration(a, st, iters);
        return SG_OK;
    });
}

}  // extern "C"
