#pragma once

#include <string>
#include <utility>
#include <vector>

#include "specguard/data.hpp"
#include "specguard/trainer.hpp"

namespace specguard {

// Flat `section.key value` text config. Keys keep insertion order so the
// resolved echo is canonical and diff-friendly.
class KvConfig {
  public:
    static KvConfig parse(const std::string& text);
    static KvConfig parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    std::string serialize() const;

  private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

// Accepts plain decimals and "k/255"-style fractions.
double parse_epsilon(const std::string& text);
bool parse_bool(const std::string& text, const std::string& key);
bool is_known_config_key(const std::string& key);

struct DataSpec {
    std::string source = "synthetic";  // synthetic | idx
    int per_class = 64;
    int per_class_test = 16;
    std::string images, labels, test_images, test_labels;
};

// Everything one command run needs, with defaults applied and required
// fields checked (errors name the missing/bad key).
struct RunConfig {
    VitConfig model;
    TrainConfig train;
    DataSpec data;
    std::uint64_t seed = 42;

    // Applies cfg on top of defaults; unknown keys are errors. The seed falls
    // back to the SPECGUARD_SEED environment variable when the key is absent.
    static RunConfig from_kv(const KvConfig& kv);
    // Fully resolved canonical echo; parsing it back reproduces this config.
    KvConfig to_kv() const;

    Dataset make_train_data() const;
    Dataset make_test_data() const;
};

AttackConfig attack_from_kv(const KvConfig& kv, const std::string& prefix);

}  // namespace specguard
