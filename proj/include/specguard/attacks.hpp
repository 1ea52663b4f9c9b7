#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "specguard/matrix.hpp"

namespace specguard {

enum class AttackFamily { fgsm, pgd };
enum class AttackNorm { linf, l2 };

struct AttackConfig {
    AttackFamily family = AttackFamily::fgsm;
    double epsilon = 2.0 / 255.0;  // ball radius, input units
    double alpha = 0.0;            // pgd step size; 0 means 2.5 * epsilon / steps
    int steps = 1;
    AttackNorm norm = AttackNorm::linf;
    bool random_start = false;
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;
    std::uint64_t seed = 0;

    double effective_alpha() const { return alpha > 0.0 ? alpha : 2.5 * epsilon / steps; }
    void validate() const;
    std::string describe() const;
};

// Loss and gradient w.r.t. a batch of inputs (one row per sample).
using LossGradFn =
    std::function<std::pair<double, Matrix>(const Matrix& x, const std::vector<int>& labels)>;

// x_adv = clamp(x + epsilon * sign(grad_x L)); sign(0) := 0.
Matrix fgsm(const LossGradFn& model, const Matrix& x, const std::vector<int>& labels,
            const AttackConfig& cfg);

// Iterated signed (linf) or normalized (l2) steps, each followed by projection
// onto the epsilon ball and range clamping. Per-sample rows are attacked
// independently.
Matrix pgd(const LossGradFn& model, const Matrix& x, const std::vector<int>& labels,
           const AttackConfig& cfg);

Matrix run_attack(const LossGradFn& model, const Matrix& x, const std::vector<int>& labels,
                  const AttackConfig& cfg);

// linf: entrywise clip to [-epsilon, epsilon]; l2: row-wise rescale onto the
// ball when outside. Idempotent.
Matrix project(const Matrix& delta, double epsilon, AttackNorm norm);

}  // namespace specguard
