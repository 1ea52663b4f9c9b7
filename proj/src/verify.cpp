#include "specguard/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "specguard/attacks.hpp"
#include "specguard/autograd.hpp"
#include "specguard/lipschitz.hpp"

namespace specguard {

namespace {

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

// Random matrix with a prescribed singular spectrum.
Matrix matrix_with_spectrum(int m, int n, const std::vector<double>& sigmas, Rng& rng) {
    const Matrix u = random_orthogonal(m, rng);
    const Matrix v = random_orthogonal(n, rng);
    Matrix s(m, n);
    for (std::size_t i = 0; i < sigmas.size(); ++i)
        s.at(static_cast<int>(i), static_cast<int>(i)) = static_cast<real>(sigmas[i]);
    return matmul(matmul(u, s), transpose(v));
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

double fitted_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

SuiteResult power_iteration_suite(int matrices, int iters, double tol) {
    Stopwatch watch;
    SuiteResult r;
    r.name = "power-iteration";
    Rng rng(0x90e71e5ull);

    double worst = 0.0;
    for (int t = 0; t < matrices; ++t) {
        const int m = rng.uniform_int(4, 64);
        const int n = rng.uniform_int(4, 64);
        const int k = std::min(m, n);
        // Keep the top-two gap healthy so `iters` rounds reach tolerance.
        std::vector<double> sigmas(static_cast<std::size_t>(k));
        sigmas[0] = 0.5 + 2.0 * rng.uniform();
        for (int i = 1; i < k; ++i) sigmas[static_cast<std::size_t>(i)] = sigmas[0] * rng.uniform(0.05, 0.9);
        std::sort(sigmas.begin() + 1, sigmas.end(), std::greater<double>());
        const Matrix a = matrix_with_spectrum(m, n, sigmas, rng);

        PowerIterState st = init_power_state(m, n, rng);
        const double est = power_iteration(a, st, iters);
        const double oracle = svd_oracle(a)[0];
        const double rel = std::abs(est - oracle) / oracle;
        worst = std::max(worst, rel);
        if (rel >= tol) {
            r.detail = "estimate off by " + sci(rel) + " on matrix " + std::to_string(t);
        }
        if (est > oracle * (1.0 + 1e-9)) {
            r.max_error = est / oracle - 1.0;
            r.detail = "estimate exceeds the oracle on matrix " + std::to_string(t);
            r.seconds = watch.seconds();
            return r;
        }
    }

    // Decay-rate fit on strictly gapped spectra, iterations 5..50.
    bool slope_ok = true;
    for (int t = 0; t < 20 && slope_ok; ++t) {
        const int m = rng.uniform_int(6, 24);
        const int n = rng.uniform_int(6, 24);
        const int k = std::min(m, n);
        std::vector<double> sigmas(static_cast<std::size_t>(k));
        sigmas[0] = 1.0 + rng.uniform();
        const double gap_ratio = rng.uniform(0.85, 0.96);
        sigmas[1] = sigmas[0] * gap_ratio;
        for (int i = 2; i < k; ++i) sigmas[static_cast<std::size_t>(i)] = sigmas[1] * rng.uniform(0.05, 0.5);
        std::sort(sigmas.begin() + 2, sigmas.end(), std::greater<double>());
        const Matrix a = matrix_with_spectrum(m, n, sigmas, rng);
        const double oracle = svd_oracle(a)[0];
        const double ratio = svd_oracle(a)[1] / oracle;
        if (ratio > 0.999) continue;  // rate fit needs strict dominance

        PowerIterState st = init_power_state(m, n, rng);
        std::vector<double> ks, logs;
        for (int it = 1; it <= 50; ++it) {
            const double est = power_iteration(a, st, 1);
            if (it >= 5) {
                const double err = std::max(oracle - est, 1e-17 * oracle);
                ks.push_back(static_cast<double>(it));
                logs.push_back(std::log(err));
            }
        }
        const double slope = fitted_slope(ks, logs);
        const double limit = 2.0 * std::log(ratio) + 0.1;
        if (slope > limit) {
            slope_ok = false;
            r.detail = "slope " + std::to_string(slope) + " exceeds " + std::to_string(limit) +
                       " at gap ratio " + std::to_string(ratio);
        }
    }

    r.max_error = worst;
    r.passed = worst < tol && slope_ok;
    if (r.passed) r.detail = "max relative error " + sci(worst);
    r.seconds = watch.seconds();
    return r;
}

Matrix attention_jacobian_fd(const Matrix& x, const AttentionWeights& w, int head, double h) {
    const int n = x.rows(), d = x.cols(), hd = w.head_dim;
    Matrix jac(n * hd, n * d);
    for (int j = 0; j < n; ++j) {
        for (int c = 0; c < d; ++c) {
            Matrix plus = x, minus = x;
            plus.at(j, c) += static_cast<real>(h);
            minus.at(j, c) -= static_cast<real>(h);
            const Matrix out_p = attention_forward(plus, w, head).output;
            const Matrix out_m = attention_forward(minus, w, head).output;
            for (int i = 0; i < n; ++i)
                for (int rr = 0; rr < hd; ++rr)
                    jac.at(i * hd + rr, j * d + c) =
                        static_cast<real>((static_cast<double>(out_p.at(i, rr)) - out_m.at(i, rr)) / (2.0 * h));
        }
    }
    return jac;
}

SuiteResult jacobian_suite(int configs, double tol) {
    Stopwatch watch;
    SuiteResult r;
    r.name = "jacobian";
    Rng rng(0x1ac0b1a5ull);

    double worst = 0.0;
    for (int t = 0; t < configs; ++t) {
        const int n = rng.uniform_int(1, 6);
        const int d = rng.uniform_int(2, 4);
        const int hd = rng.uniform_int(1, 4);
        const Matrix x = gaussian_matrix(n, d, rng);
        const AttentionWeights w = AttentionWeights::random(d, hd, 1, rng, 0.6);

        const Matrix analytic = attention_jacobian_full(x, w, 0);
        const Matrix fd = attention_jacobian_fd(x, w, 0);
        const double err = frobenius_norm(sub(analytic, fd)) / std::max(frobenius_norm(fd), 1e-12);
        worst = std::max(worst, err);
        if (err >= tol)
            r.detail = "config " + std::to_string(t) + " (N=" + std::to_string(n) + ",d=" + std::to_string(d) +
                       ",hd=" + std::to_string(hd) + ") error " + sci(err);
    }
    r.max_error = worst;
    r.passed = worst < tol;
    if (r.passed) r.detail = "max relative error " + sci(worst);
    r.seconds = watch.seconds();
    return r;
}

SuiteResult bound_containment_suite(int configs, int samples) {
    Stopwatch watch;
    SuiteResult r;
    r.name = "bound-containment";
    Rng rng(0xb0c41ull);
    const double deltas[3] = {0.01, 0.1, 1.0};

    int violations = 0;
    double tightest = 0.0;  // largest empirical/bound ratio seen
    for (int t = 0; t < configs; ++t) {
        const int n = rng.uniform_int(2, 6);
        const int d = rng.uniform_int(2, 4);
        const int hd = rng.uniform_int(1, 4);
        const double delta0 = deltas[t % 3];
        const Matrix x0 = gaussian_matrix(n, d, rng);
        const AttentionWeights w = AttentionWeights::random(d, hd, 1, rng, 0.6);

        const double bound =
            local_lipschitz_bound(w.wq[0], w.wk[0], w.wv[0], n, frobenius_norm(x0), delta0);
        const EmpiricalLipschitz emp =
            empirical_local_lipschitz(x0, w, 0, delta0, samples, rng.next_u64(), 5);
        const double measured = std::max(emp.max_quotient, emp.max_jacobian_norm);
        tightest = std::max(tightest, measured / bound);
        if (measured > bound) {
            ++violations;
            r.detail = "violation at config " + std::to_string(t) + ": " + sci(measured) +
                       " > " + sci(bound);
        }
    }
    r.max_error = tightest;
    r.passed = violations == 0;
    if (r.passed)
        r.detail = "0 violations; tightest empirical/bound ratio " + sci(tightest);
    r.seconds = watch.seconds();
    return r;
}

namespace {

struct OpCheck {
    const char* name;
    int rows, cols;
    ScalarGraphFn fn;
};

std::vector<OpCheck> op_checks(Rng& rng) {
    // Shared constants so each check isolates one op in a scalar pipeline.
    // The probe contracts the op output against fixed random weights; a
    // quadratic probe would leave near-flat entries whose finite differences
    // drown in roundoff.
    const Matrix w34 = gaussian_matrix(3, 4, rng);
    const Matrix w43 = gaussian_matrix(4, 3, rng);
    const Matrix c34 = gaussian_matrix(3, 4, rng);
    const Matrix row4 = gaussian_matrix(1, 4, rng);
    const Matrix gain = gaussian_matrix(1, 4, rng);
    const Matrix bias = gaussian_matrix(1, 4, rng);
    const Matrix probe3 = gaussian_matrix(3, 1, rng);
    const Matrix probe4 = gaussian_matrix(4, 1, rng);
    const Matrix probe7 = gaussian_matrix(7, 1, rng);
    std::vector<int> perm = {7, 3, 0, 11, 5, 9, 1, 10, 2, 8, 4, 6};

    std::vector<OpCheck> checks;
    auto against3 = [probe3](Graph& g, Graph::Value v) { return g.sum(g.matmul(v, g.leaf(probe3))); };
    auto against4 = [probe4](Graph& g, Graph::Value v) { return g.sum(g.matmul(v, g.leaf(probe4))); };
    checks.push_back({"matmul", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against3(g, g.matmul(x, g.leaf(w43)));
                      }});
    checks.push_back({"add", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.add(x, g.leaf(c34)));
                      }});
    checks.push_back({"scale", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.scale(x, -1.7));
                      }});
    checks.push_back({"transpose", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.matmul(g.transpose(x), g.leaf(w34)));
                      }});
    checks.push_back({"row_softmax", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.row_softmax(x));
                      }});
    checks.push_back({"layer_norm", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.layer_norm(x, g.leaf(gain), g.leaf(bias)));
                      }});
    checks.push_back({"gelu", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.gelu(x));
                      }});
    checks.push_back({"mean_pool", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.mean_pool(x));
                      }});
    checks.push_back({"cross_entropy", 3, 4, [=](Graph& g, Graph::Value x) {
                          return g.cross_entropy(g.matmul(x, g.leaf(w43)), {2, 0, 1});
                      }});
    checks.push_back({"add_rowvec", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.add_rowvec(x, g.leaf(row4)));
                      }});
    checks.push_back({"concat_cols", 3, 4, [=](Graph& g, Graph::Value x) {
                          const Graph::Value cat = g.concat_cols({x, g.matmul(x, g.leaf(w43))});
                          return g.sum(g.matmul(cat, g.leaf(probe7)));
                      }});
    checks.push_back({"concat_rows", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against4(g, g.concat_rows({x, g.add(x, g.leaf(c34))}));
                      }});
    checks.push_back({"square", 3, 4, [=](Graph& g, Graph::Value x) { return g.sum(g.square(x)); }});
    checks.push_back({"sum", 3, 4, [=](Graph& g, Graph::Value x) { return g.square(g.sum(x)); }});
    checks.push_back({"reorder", 3, 4, [=](Graph& g, Graph::Value x) {
                          return against3(g, g.reorder(x, perm, 4, 3));
                      }});
    return checks;
}

}  // namespace

SuiteResult autograd_suite(int inputs_per_op, double tol) {
    Stopwatch watch;
    SuiteResult r;
    r.name = "autograd";
    Rng rng(0xa07093adull);
    const std::vector<OpCheck> checks = op_checks(rng);

    double worst = 0.0;
    for (const OpCheck& check : checks) {
        double op_worst = 0.0;
        for (int t = 0; t < inputs_per_op; ++t) {
            const Matrix x = gaussian_matrix(check.rows, check.cols, rng);
            op_worst = std::max(op_worst, finite_diff_check(check.fn, x, 1e-5));
        }
        worst = std::max(worst, op_worst);
        if (op_worst >= tol && r.detail.empty())
            r.detail = std::string("backward rule for op '") + check.name + "' off by " +
                       sci(op_worst);
    }
    r.max_error = worst;
    r.passed = worst < tol;
    if (r.passed) r.detail = "max relative error " + sci(worst);
    r.seconds = watch.seconds();
    return r;
}

SuiteResult projection_suite() {
    Stopwatch watch;
    SuiteResult r;
    r.name = "projection";
    Rng rng(0x4011ull);
    std::ostringstream fail;

    // Projection contracts.
    for (int t = 0; t < 50; ++t) {
        const double eps = 0.05 + rng.uniform();
        const Matrix delta = gaussian_matrix(2, 6, rng, 3.0 * eps);
        for (AttackNorm norm : {AttackNorm::linf, AttackNorm::l2}) {
            const Matrix p1 = project(delta, eps, norm);
            const Matrix p2 = project(p1, eps, norm);
            const double drift = frobenius_norm(sub(p1, p2));
            if (drift > 1e-12) fail << "projection not idempotent (drift " << drift << "); ";
            if (norm == AttackNorm::linf) {
                for (real v : p1.raw())
                    if (std::abs(static_cast<double>(v)) > eps) fail << "linf containment broken; ";
            } else {
                for (int i = 0; i < p1.rows(); ++i) {
                    double s = 0.0;
                    for (int j = 0; j < p1.cols(); ++j) s += static_cast<double>(p1.at(i, j)) * p1.at(i, j);
                    if (std::sqrt(s) > eps * (1.0 + 1e-12)) fail << "l2 containment broken; ";
                }
            }
        }
    }
    bool threw = false;
    try {
        project(Matrix(1, 3), -0.5, AttackNorm::linf);
    } catch (const ContractError&) {
        threw = true;
    }
    if (!threw) fail << "negative epsilon accepted; ";

    // Attack contracts on a fixed linear model: loss = w . x per row.
    const Matrix w_lin = gaussian_matrix(1, 8, rng);
    int ball_checks = 0;
    const Matrix x0 = gaussian_matrix(2, 8, rng, 0.1);
    auto make_fn = [&](double eps, int* counter) {
        return [&, eps, counter](const Matrix& x, const std::vector<int>&) {
            if (counter) {
                for (int i = 0; i < x.rows(); ++i) {
                    double m = 0.0;
                    for (int j = 0; j < x.cols(); ++j)
                        m = std::max(m, std::abs(static_cast<double>(x.at(i, j)) - x0.at(i, j)));
                    if (m > eps + 1e-9) fail << "pgd iterate left the ball; ";
                    ++*counter;
                }
            }
            Matrix grad(x.rows(), x.cols());
            double loss = 0.0;
            for (int i = 0; i < x.rows(); ++i)
                for (int j = 0; j < x.cols(); ++j) {
                    grad.at(i, j) = w_lin.at(0, j);
                    loss += static_cast<double>(w_lin.at(0, j)) * x.at(i, j);
                }
            return std::make_pair(loss, grad);
        };
    };
    const std::vector<int> dummy_labels(2, 0);
    AttackConfig pgd_cfg;
    pgd_cfg.family = AttackFamily::pgd;
    pgd_cfg.epsilon = 0.03;
    pgd_cfg.steps = 10;
    pgd_cfg.clamp_lo = -1.0;
    pgd_cfg.clamp_hi = 1.0;
    const Matrix adv = pgd(make_fn(pgd_cfg.epsilon, &ball_checks), x0, dummy_labels, pgd_cfg);
    for (int i = 0; i < adv.rows(); ++i)
        for (int j = 0; j < adv.cols(); ++j)
            if (std::abs(static_cast<double>(adv.at(i, j)) - x0.at(i, j)) > pgd_cfg.epsilon + 1e-9)
                fail << "final pgd point left the ball; ";

    // Single-step pgd with alpha = epsilon equals fgsm bit for bit.
    AttackConfig one;
    one.family = AttackFamily::pgd;
    one.epsilon = 0.02;
    one.alpha = 0.02;
    one.steps = 1;
    one.clamp_lo = -1.0;
    one.clamp_hi = 1.0;
    AttackConfig fg = one;
    fg.family = AttackFamily::fgsm;
    const Matrix a1 = pgd(make_fn(one.epsilon, nullptr), x0, dummy_labels, one);
    const Matrix a2 = fgsm(make_fn(one.epsilon, nullptr), x0, dummy_labels, fg);
    for (std::size_t k = 0; k < a1.size(); ++k)
        if (a1.raw()[k] != a2.raw()[k]) fail << "pgd(1, alpha=eps) != fgsm bitwise; ";

    // fgsm with epsilon 0 is the identity.
    AttackConfig zero = fg;
    zero.epsilon = 0.0;
    const Matrix a3 = fgsm(make_fn(0.0, nullptr), x0, dummy_labels, zero);
    for (std::size_t k = 0; k < a3.size(); ++k)
        if (a3.raw()[k] != x0.raw()[k]) fail << "fgsm(eps=0) changed the input; ";

    r.detail = fail.str();
    r.passed = r.detail.empty();
    if (r.passed)
        r.detail = "projection idempotent, ball containment held at " + std::to_string(ball_checks) +
                   " iterate checks";
    r.seconds = watch.seconds();
    return r;
}

std::vector<std::string> verification_suite_names() {
    return {"power-iteration", "jacobian", "bound-containment", "autograd", "projection"};
}

std::vector<SuiteResult> run_verification_suites(const std::vector<std::string>& which) {
    if (which.empty()) throw ContractError("verify: empty suite selection");
    std::vector<std::string> names = which;
    if (names.size() == 1 && names[0] == "all") names = verification_suite_names();

    std::vector<SuiteResult> out;
    for (const std::string& name : names) {
        if (name == "power-iteration") out.push_back(power_iteration_suite());
        else if (name == "jacobian") out.push_back(jacobian_suite());
        else if (name == "bound-containment") out.push_back(bound_containment_suite());
        else if (name == "autograd") out.push_back(autograd_suite());
        else if (name == "projection") out.push_back(projection_suite());
        else throw ContractError("verify: unknown suite '" + name + "'");
    }
    return out;
}

std::string verification_report(const std::vector<SuiteResult>& results) {
    std::ostringstream out;
    out << "suite,status,max_error,seconds,detail\n";
    for (const SuiteResult& r : results) {
        char err[32], sec[32];
        std::snprintf(err, sizeof(err), "%.3e", r.max_error);
        std::snprintf(sec, sizeof(sec), "%.3f", r.seconds);
        std::string detail = r.detail;
        for (char& c : detail)
            if (c == ',') c = ';';
        out << r.name << ',' << (r.passed ? "pass" : "FAIL") << ',' << err << ',' << sec << ','
            << detail << "\n";
    }
    return out.str();
}

bool all_passed(const std::vector<SuiteResult>& results) {
    for (const SuiteResult& r : results)
        if (!r.passed) return false;
    return true;
}

}  // namespace specguard
