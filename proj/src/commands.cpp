#include "specguard/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "specguard/autograd.hpp"

namespace specguard {

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

TrainArtifacts cmd_train(const RunConfig& rc, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const Dataset train_data = rc.make_train_data();
    const Dataset test_data = rc.make_test_data();
    VitParams params = init_vit_params(rc.model, rc.seed);

    TrainResult result = train(std::move(params), train_data, test_data, rc.train);

    TrainArtifacts art;
    art.checkpoint = out_dir + "/checkpoint.bin";
    art.metrics = out_dir + "/metrics.csv";
    art.timing = out_dir + "/timing.csv";
    art.summary = out_dir + "/summary.txt";
    art.resolved_config = out_dir + "/config_resolved.txt";
    save_checkpoint(result.params, art.checkpoint);
    write_text_file(art.metrics, result.metrics.to_csv());
    write_text_file(art.timing, result.metrics.timing_csv());
    write_text_file(art.summary, result.metrics.summary());
    write_text_file(art.resolved_config, rc.to_kv().serialize());
    return art;
}

LipschitzReport analyze_spectra(const VitParams& params, double b_anchor, double delta0,
                                const Dataset* anchor_data, int samples, std::uint64_t seed) {
    VitParams mutable_params = params;  // views need mutable storage
    const std::vector<AttentionWeightsRef> views = extract_attention_weights(mutable_params);
    const int tokens = params.cfg.tokens();

    // Post-LayerNorm attention inputs of the first anchor sample, per layer.
    std::vector<Matrix> captures;
    if (anchor_data && anchor_data->count() > 0) {
        Matrix first(1, anchor_data->images.cols());
        for (int j = 0; j < first.cols(); ++j) first.at(0, j) = anchor_data->images.at(0, j);
        vit_forward_plain(params, first, &captures);
    }

    LipschitzReport report;
    Rng rng(seed);
    for (const AttentionWeightsRef& v : views) {
        LipschitzRecord rec;
        rec.layer = v.layer;
        rec.head = v.head;
        rec.tokens = tokens;
        rec.delta0 = delta0;
        rec.b_used = b_anchor;
        rec.sigma_q = svd_oracle(*v.wq)[0];
        rec.sigma_k = svd_oracle(*v.wk)[0];
        rec.sigma_v = svd_oracle(*v.wv)[0];
        rec.bound_b = local_lipschitz_bound(*v.wq, *v.wk, *v.wv, tokens, b_anchor, delta0);
        double anchor = b_anchor;
        if (static_cast<std::size_t>(v.layer) < captures.size())
            anchor = frobenius_norm(captures[static_cast<std::size_t>(v.layer)]);
        rec.anchor = anchor;
        rec.bound_input = local_lipschitz_bound(*v.wq, *v.wk, *v.wv, tokens, anchor, delta0);
        rec.bound_input_rss = local_lipschitz_bound_rss(*v.wq, *v.wk, *v.wv, tokens, anchor, delta0);
        if (static_cast<std::size_t>(v.layer) < captures.size() && samples > 0) {
            AttentionWeights w;
            w.embed_dim = params.cfg.embed_dim;
            w.head_dim = params.cfg.head_dim;
            w.n_heads = 1;
            w.wq = {*v.wq};
            w.wk = {*v.wk};
            w.wv = {*v.wv};
            const EmpiricalLipschitz emp = empirical_local_lipschitz(
                captures[static_cast<std::size_t>(v.layer)], w, 0, delta0, samples, rng.next_u64(), 2);
            rec.empirical_quotient = emp.max_quotient;
            rec.empirical_max_jacobian_norm = emp.max_jacobian_norm;
        }
        report.records.push_back(rec);
    }
    return report;
}

SpectraArtifacts cmd_analyze_spectra(const std::string& checkpoint_path, double b_anchor, double delta0,
                                     const RunConfig* anchor_cfg, int samples,
                                     const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const VitParams params = load_checkpoint(checkpoint_path);
    Dataset anchor;
    const Dataset* anchor_ptr = nullptr;
    if (anchor_cfg) {
        anchor = anchor_cfg->make_test_data();
        anchor_ptr = &anchor;
    }
    const LipschitzReport report =
        analyze_spectra(params, b_anchor, delta0, anchor_ptr, samples, 0x5bec7a11ull);

    SpectraArtifacts art;
    art.report_txt = out_dir + "/spectra.txt";
    art.report_csv = out_dir + "/spectra.csv";
    write_text_file(art.report_txt, report.to_text());
    write_text_file(art.report_csv, report.to_csv());
    return art;
}

std::vector<AttackEvalRow> attack_eval(const VitParams& params, const Dataset& data,
                                       const std::vector<AttackConfig>& attacks,
                                       const std::vector<std::string>& names) {
    std::vector<AttackEvalRow> rows;
    AttackEvalRow clean;
    clean.name = "clean";
    clean.description = "no attack";
    clean.accuracy = evaluate(params, data);
    rows.push_back(clean);
    for (std::size_t i = 0; i < attacks.size(); ++i) {
        AttackEvalRow row;
        row.name = i < names.size() ? names[i] : ("attack" + std::to_string(i + 1));
        row.description = attacks[i].describe();
        row.accuracy = evaluate(params, data, &attacks[i]);
        rows.push_back(row);
    }
    return rows;
}

std::string attack_eval_table(const std::vector<AttackEvalRow>& rows) {
    std::ostringstream out;
    out << "name,description,accuracy\n";
    for (const AttackEvalRow& r : rows) {
        char acc[32];
        std::snprintf(acc, sizeof(acc), "%.6f", r.accuracy);
        out << r.name << ',' << r.description << ',' << acc << "\n";
    }
    return out.str();
}

std::string cmd_attack_eval(const std::string& checkpoint_path, const RunConfig& rc,
                            const std::string& out_path) {
    const VitParams params = load_checkpoint(checkpoint_path);
    const Dataset data = rc.make_test_data();
    if (data.sample_dim() != params.cfg.input_dim())
        throw ShapeError("attack-eval: dataset does not match the checkpoint's input size");
    const std::string table =
        attack_eval_table(attack_eval(params, data, rc.train.eval_attacks, rc.train.eval_attack_names));
    if (!out_path.empty()) write_text_file(out_path, table);
    return table;
}

std::vector<BenchRow> cmd_bench(const RunConfig& rc, int steps) {
    if (steps < 1) throw ContractError("bench: steps must be >= 1");
    const Dataset data = rc.make_train_data();
    const Dataset test = rc.make_test_data();

    std::vector<BenchRow> rows;
    for (const TrainMode mode : {TrainMode::standard, TrainMode::adversarial}) {
        double baseline = 0.0;
        for (const bool with_msvp : {false, true}) {
            RunConfig cfg = rc;
            cfg.train.mode = mode;
            cfg.train.msvp.enabled = with_msvp;
            Trainer t(init_vit_params(cfg.model, cfg.seed), data, test, cfg.train);
            t.run_steps(2);  // warmup
            // Best of three windows; the minimum is the stable runtime
            // estimator at these step counts.
            double secs = 1e300;
            for (int rep = 0; rep < 3; ++rep) {
                const auto start = std::chrono::steady_clock::now();
                t.run_steps(steps);
                secs = std::min(secs, std::chrono::duration<double>(
                                          std::chrono::steady_clock::now() - start).count() / steps);
            }
            BenchRow row;
            row.mode = mode == TrainMode::standard ? "standard" : "adversarial";
            row.msvp = with_msvp;
            row.seconds_per_step = secs;
            if (!with_msvp) {
                baseline = secs;
                row.ratio = 1.0;  // vanilla is the unit by construction
            } else {
                row.ratio = secs / baseline;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out << "mode,msvp,seconds_per_step,relative\n";
    for (const BenchRow& r : rows) {
        char sec[32], rel[32];
        std::snprintf(sec, sizeof(sec), "%.6f", r.seconds_per_step);
        std::snprintf(rel, sizeof(rel), "%.4f", r.ratio);
        out << r.mode << ',' << (r.msvp ? "on" : "off") << ',' << sec << ',' << rel << "\n";
    }
    return out.str();
}

std::string cmd_verify(const std::vector<std::string>& suites, const std::string& fault_op,
                       bool* passed) {
    if (!fault_op.empty()) {
        bool found = false;
        for (int op = 0; op <= static_cast<int>(Op::Reorder); ++op) {
            if (fault_op == op_name(static_cast<Op>(op))) {
                testhook::corrupt_backward_rule(static_cast<Op>(op));
                found = true;
                break;
            }
        }
        if (!found) throw ContractError("verify: unknown op for fault injection: " + fault_op);
    }
    const std::vector<SuiteResult> results = run_verification_suites(suites);
    testhook::clear_corruption();
    if (passed) *passed = all_passed(results);
    return verification_report(results);
}

}  // namespace specguard
