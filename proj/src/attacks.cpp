#include "specguard/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace specguard {

void AttackConfig::validate() const {
    if (epsilon < 0.0) throw ContractError("AttackConfig: epsilon must be >= 0");
    if (family == AttackFamily::pgd) {
        if (steps < 1) throw ContractError("AttackConfig: pgd needs steps >= 1");
        if (effective_alpha() <= 0.0) throw ContractError("AttackConfig: pgd needs alpha > 0");
    }
    if (clamp_hi < clamp_lo) throw ContractError("AttackConfig: empty clamp range");
}

std::string AttackConfig::describe() const {
    std::ostringstream out;
    out << (family == AttackFamily::fgsm ? "fgsm" : "pgd") << " eps=" << epsilon;
    if (family == AttackFamily::pgd)
        out << " alpha=" << effective_alpha() << " steps=" << steps
            << " norm=" << (norm == AttackNorm::linf ? "linf" : "l2")
            << " random_start=" << (random_start ? 1 : 0);
    return out.str();
}

namespace {

real sign_of(real v) {
    if (v > real(0)) return real(1);
    if (v < real(0)) return real(-1);
    return real(0);
}

Matrix clamp_to_range(const Matrix& x, double lo, double hi) {
    Matrix y = x;
    for (auto& v : y.raw())
        v = std::min(static_cast<real>(hi), std::max(static_cast<real>(lo), v));
    return y;
}

}  // namespace

Matrix project(const Matrix& delta, double epsilon, AttackNorm norm) {
    if (epsilon < 0.0) throw ContractError("project: epsilon must be >= 0");
    Matrix out = delta;
    if (norm == AttackNorm::linf) {
        for (auto& v : out.raw())
            v = std::min(static_cast<real>(epsilon), std::max(static_cast<real>(-epsilon), v));
        return out;
    }
    for (int i = 0; i < out.rows(); ++i) {
        double n = 0.0;
        for (int j = 0; j < out.cols(); ++j) n += static_cast<double>(out.at(i, j)) * out.at(i, j);
        n = std::sqrt(n);
        if (n > epsilon) {
            const double f = epsilon / n;
            for (int j = 0; j < out.cols(); ++j) out.at(i, j) = static_cast<real>(out.at(i, j) * f);
        }
    }
    return out;
}

Matrix fgsm(const LossGradFn& model, const Matrix& x, const std::vector<int>& labels,
            const AttackConfig& cfg) {
    if (cfg.family != AttackFamily::fgsm) throw ContractError("fgsm: config family is not fgsm");
    cfg.validate();
    if (cfg.epsilon == 0.0) return x;
    const Matrix grad = model(x, labels).second;
    if (!grad.same_shape(x)) throw ShapeError("fgsm: model gradient shape mismatch");
    Matrix adv = x;
    for (std::size_t k = 0; k < adv.size(); ++k)
        adv.raw()[k] += static_cast<real>(cfg.epsilon) * sign_of(grad.raw()[k]);
    return clamp_to_range(adv, cfg.clamp_lo, cfg.clamp_hi);
}

Matrix pgd(const LossGradFn& model, const Matrix& x, const std::vector<int>& labels,
           const AttackConfig& cfg) {
    if (cfg.family != AttackFamily::pgd) throw ContractError("pgd: config family is not pgd");
    cfg.validate();
    if (cfg.epsilon == 0.0) return x;

    const double alpha = cfg.effective_alpha();
    Matrix delta(x.rows(), x.cols());
    Matrix x_adv = x;
    if (cfg.random_start) {
        Rng rng(cfg.seed);
        if (cfg.norm == AttackNorm::linf) {
            for (auto& v : delta.raw()) v = static_cast<real>(rng.uniform(-cfg.epsilon, cfg.epsilon));
        } else {
            for (int i = 0; i < delta.rows(); ++i) {
                const std::vector<real> dir = unit_sphere_vector(delta.cols(), rng);
                const double radius = cfg.epsilon * rng.uniform();
                for (int j = 0; j < delta.cols(); ++j)
                    delta.at(i, j) = static_cast<real>(radius * dir[static_cast<std::size_t>(j)]);
            }
        }
        delta = project(delta, cfg.epsilon, cfg.norm);
        x_adv = clamp_to_range(add(x, delta), cfg.clamp_lo, cfg.clamp_hi);
        delta = sub(x_adv, x);
    }
    for (int step = 0; step < cfg.steps; ++step) {
        const Matrix grad = model(x_adv, labels).second;
        if (!grad.same_shape(x)) throw ShapeError("pgd: model gradient shape mismatch");
        if (cfg.norm == AttackNorm::linf) {
            for (std::size_t k = 0; k < delta.size(); ++k)
                delta.raw()[k] += static_cast<real>(alpha) * sign_of(grad.raw()[k]);
        } else {
            for (int i = 0; i < grad.rows(); ++i) {
                double n = 0.0;
                for (int j = 0; j < grad.cols(); ++j) n += static_cast<double>(grad.at(i, j)) * grad.at(i, j);
                n = std::sqrt(n);
                if (n == 0.0) continue;
                for (int j = 0; j < grad.cols(); ++j)
                    delta.at(i, j) += static_cast<real>(alpha * grad.at(i, j) / n);
            }
        }
        delta = project(delta, cfg.epsilon, cfg.norm);
        x_adv = clamp_to_range(add(x, delta), cfg.clamp_lo, cfg.clamp_hi);
        delta = sub(x_adv, x);
    }
    return x_adv;
}

Matrix run_attack(const LossGradFn& model, const Matrix& x, const std::vector<int>& labels,
                  const AttackConfig& cfg) {
    return cfg.family == AttackFamily::fgsm ? fgsm(model, x, labels, cfg) : pgd(model, x, labels, cfg);
}

}  // namespace specguard
