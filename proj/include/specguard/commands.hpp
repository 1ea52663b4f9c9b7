#pragma once

#include <string>
#include <vector>

#include "specguard/config.hpp"
#include "specguard/lipschitz.hpp"
#include "specguard/trainer.hpp"
#include "specguard/verify.hpp"

namespace specguard {

// Runs training per the config and writes checkpoint.bin, metrics.csv,
// timing.csv, summary.txt and config_resolved.txt into out_dir.
struct TrainArtifacts {
    std::string checkpoint;
    std::string metrics;
    std::string timing;
    std::string summary;
    std::string resolved_config;
};
TrainArtifacts cmd_train(const RunConfig& rc, const std::string& out_dir);

// Per-(layer, head) oracle spectral norms and local Lipschitz bounds for a
// checkpoint; optional empirical validation anchored at the attention inputs
// of the first sample of the run config's test data.
LipschitzReport analyze_spectra(const VitParams& params, double b_anchor, double delta0,
                                const Dataset* anchor_data, int samples, std::uint64_t seed);
struct SpectraArtifacts {
    std::string report_txt;
    std::string report_csv;
};
SpectraArtifacts cmd_analyze_spectra(const std::string& checkpoint_path, double b_anchor, double delta0,
                                     const RunConfig* anchor_cfg, int samples,
                                     const std::string& out_dir);

// Clean plus per-attack accuracy rows.
struct AttackEvalRow {
    std::string name;
    std::string description;
    double accuracy = 0.0;
};
std::vector<AttackEvalRow> attack_eval(const VitParams& params, const Dataset& data,
                                       const std::vector<AttackConfig>& attacks,
                                       const std::vector<std::string>& names);
std::string attack_eval_table(const std::vector<AttackEvalRow>& rows);
std::string cmd_attack_eval(const std::string& checkpoint_path, const RunConfig& rc,
                            const std::string& out_path);

// Relative step time of msvp on/off per training mode, vanilla = 1.0.
struct BenchRow {
    std::string mode;      // standard | adversarial
    bool msvp = false;
    double seconds_per_step = 0.0;
    double ratio = 1.0;
};
std::vector<BenchRow> cmd_bench(const RunConfig& rc, int steps);
std::string bench_table(const std::vector<BenchRow>& rows);

std::string cmd_verify(const std::vector<std::string>& suites, const std::string& fault_op,
                       bool* passed);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace specguard
