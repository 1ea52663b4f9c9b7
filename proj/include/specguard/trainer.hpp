#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specguard/attacks.hpp"
#include "specguard/data.hpp"
#include "specguard/model.hpp"
#include "specguard/msvp.hpp"

namespace specguard {

enum class TrainMode { standard, adversarial };

struct TrainConfig {
    TrainMode mode = TrainMode::standard;
    int epochs = 10;
    int batch_size = 32;
    double lr = 0.1;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    MsvpConfig msvp;
    AttackConfig attack;  // train-time attack, adversarial mode only
    std::vector<AttackConfig> eval_attacks;
    std::vector<std::string> eval_attack_names;
    // Robust accuracy cadence: every k-th epoch plus the last; 0 = last only.
    int eval_every = 1;
    std::uint64_t seed = 42;

    void validate() const;
};

struct EpochRow {
    int epoch = 0;
    double cls_loss = 0.0;
    double msvp_loss = 0.0;
    double clean_acc = 0.0;
    std::vector<double> robust_acc;  // aligned with eval_attacks; -1 = skipped
    std::vector<double> sigmas;      // oracle sigma_max per penalized matrix
    double mean_step_seconds = 0.0;  // excluded from the deterministic table
};

struct Metrics {
    std::vector<std::string> attack_names;
    std::vector<std::string> sigma_names;
    std::vector<EpochRow> rows;

    // Deterministic epoch-indexed table (no wall-clock columns).
    std::string to_csv() const;
    static Metrics from_csv(const std::string& text);
    std::string timing_csv() const;
    std::string summary() const;
};

// v <- momentum * v + g + weight_decay * theta; theta <- theta - lr * v.
void sgd_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
              std::vector<Matrix>& velocity, double lr, double momentum, double weight_decay);

double evaluate(const VitParams& params, const Dataset& data, const AttackConfig* attack = nullptr);

LossGradFn make_input_grad_fn(const VitParams& params);

class Trainer {
  public:
    Trainer(VitParams params, const Dataset& train_data, const Dataset& test_data, TrainConfig cfg);

    void run();
    // Runs exactly n optimizer steps cycling over the data in order; used by
    // the benchmark command. No evaluation or snapshots.
    void run_steps(int n);

    const VitParams& params() const { return params_; }
    const Metrics& metrics() const { return metrics_; }
    const std::vector<PowerIterState>& power_states() const { return states_; }

  private:
    struct StepLoss {
        double cls = 0.0;
        double msvp = 0.0;
    };
    StepLoss step(const Matrix& batch, const std::vector<int>& labels, std::uint64_t attack_seed);
    std::vector<double> sigma_snapshot();

    VitParams params_;
    const Dataset& train_;
    const Dataset& test_;
    TrainConfig cfg_;
    std::vector<AttentionWeightsRef> views_;
    std::vector<PowerIterState> states_;  // 3 per view: q, k, v
    std::vector<Matrix> velocity_;
    Metrics metrics_;
};

struct TrainResult {
    VitParams params;
    Metrics metrics;
};

// Standard or adversarial training per the config; the model arrives
// initialized so identical (model, data, cfg) runs are bit-identical.
TrainResult train(VitParams model, const Dataset& train_data, const Dataset& test_data,
                  const TrainConfig& cfg);

}  // namespace specguard
