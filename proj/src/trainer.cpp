#include "specguard/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace specguard {

void TrainConfig::validate() const {
    if (epochs < 0 || batch_size < 1) throw ContractError("TrainConfig: bad epochs/batch_size");
    if (eval_every < 0) throw ContractError("TrainConfig: eval_every must be >= 0");
    if (lr < 0.0 || weight_decay < 0.0 || momentum < 0.0)
        throw ContractError("TrainConfig: negative optimizer constant");
    msvp.validate();
    if (mode == TrainMode::adversarial) attack.validate();
    if (eval_attacks.size() != eval_attack_names.size())
        throw ContractError("TrainConfig: eval attack names misaligned");
}

void sgd_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
              std::vector<Matrix>& velocity, double lr, double momentum, double weight_decay) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw ShapeError("sgd_step: tensor list size mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        Matrix& theta = params[t];
        const Matrix& g = grads[t];
        Matrix& v = velocity[t];
        if (!theta.same_shape(g) || !theta.same_shape(v))
            throw ShapeError("sgd_step: shape mismatch at tensor " + std::to_string(t));
        for (std::size_t k = 0; k < theta.size(); ++k) {
            v.raw()[k] = static_cast<real>(momentum * v.raw()[k] + g.raw()[k] +
                                           weight_decay * theta.raw()[k]);
            theta.raw()[k] -= static_cast<real>(lr * v.raw()[k]);
        }
        theta.ensure_finite("sgd_step");
    }
}

LossGradFn make_input_grad_fn(const VitParams& params) {
    return [&params](const Matrix& x, const std::vector<int>& labels) {
        VitGraph vg;
        vit_forward(params, x, labels, vg);
        vg.g.backward(vg.cls_loss);
        return std::make_pair(static_cast<double>(vg.g.value(vg.cls_loss).at(0, 0)),
                              vg.g.grad(vg.input));
    };
}

double evaluate(const VitParams& params, const Dataset& data, const AttackConfig* attack) {
    if (data.count() == 0) return 0.0;
    const int batch = 64;
    int correct = 0;
    const LossGradFn grad_fn = attack ? make_input_grad_fn(params) : LossGradFn();
    for (int start = 0; start < data.count(); start += batch) {
        const int n = std::min(batch, data.count() - start);
        Matrix x(n, data.images.cols());
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < x.cols(); ++j) x.at(i, j) = data.images.at(start + i, j);
            y[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(start + i)];
        }
        if (attack && attack->epsilon > 0.0) x = run_attack(grad_fn, x, y, *attack);
        const std::vector<int> pred = predict(params, x);
        for (int i = 0; i < n; ++i)
            if (pred[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / data.count();
}

Trainer::Trainer(VitParams params, const Dataset& train_data, const Dataset& test_data, TrainConfig cfg)
    : params_(std::move(params)), train_(train_data), test_(test_data), cfg_(std::move(cfg)) {
    cfg_.validate();
    params_.cfg.validate();
    if (train_.count() > 0 && train_.sample_dim() != params_.cfg.input_dim())
        throw ShapeError("Trainer: dataset sample size does not match the model input");

    views_ = extract_attention_weights(params_);
    Rng rng(cfg_.seed ^ 0x517ec7a1ull);
    if (cfg_.msvp.enabled) {
        for (const AttentionWeightsRef& v : views_) {
            states_.push_back(init_power_state(v.wq->rows(), v.wq->cols(), rng));
            states_.push_back(init_power_state(v.wk->rows(), v.wk->cols(), rng));
            states_.push_back(init_power_state(v.wv->rows(), v.wv->cols(), rng));
        }
    }
    velocity_.reserve(params_.tensors.size());
    for (const Matrix& t : params_.tensors) velocity_.emplace_back(t.rows(), t.cols());

    metrics_.attack_names = cfg_.eval_attack_names;
    for (const AttentionWeightsRef& v : views_) {
        const std::string base = "l" + std::to_string(v.layer) + "h" + std::to_string(v.head);
        metrics_.sigma_names.push_back(base + "q");
        metrics_.sigma_names.push_back(base + "k");
        metrics_.sigma_names.push_back(base + "v");
    }
}

std::vector<double> Trainer::sigma_snapshot() {
    // Oracle-based so the report is independent of the running estimator.
    std::vector<double> sigmas;
    sigmas.reserve(views_.size() * 3);
    for (const AttentionWeightsRef& v : views_) {
        sigmas.push_back(svd_oracle(*v.wq)[0]);
        sigmas.push_back(svd_oracle(*v.wk)[0]);
        sigmas.push_back(svd_oracle(*v.wv)[0]);
    }
    return sigmas;
}

Trainer::StepLoss Trainer::step(const Matrix& batch, const std::vector<int>& labels,
                                std::uint64_t attack_seed) {
    Matrix x = batch;
    if (cfg_.mode == TrainMode::adversarial) {
        AttackConfig atk = cfg_.attack;
        atk.seed = attack_seed;
        x = run_attack(make_input_grad_fn(params_), x, labels, atk);
        // Re-assert the ball constraint on the inner perturbation.
        for (int i = 0; i < x.rows(); ++i) {
            double linf = 0.0, l2 = 0.0;
            for (int j = 0; j < x.cols(); ++j) {
                const double d = static_cast<double>(x.at(i, j)) - batch.at(i, j);
                linf = std::max(linf, std::abs(d));
                l2 += d * d;
            }
            const double measured = atk.norm == AttackNorm::linf ? linf : std::sqrt(l2);
            if (measured > atk.epsilon + 1e-9)
                throw ContractError("adversarial example left the epsilon ball: " +
                                    std::to_string(measured));
        }
    }

    VitGraph vg;
    vit_forward(params_, x, labels, vg);

    std::vector<MsvpTerm> terms;
    Graph::Value loss = vg.cls_loss;
    StepLoss out;
    if (cfg_.msvp.enabled) {
        auto weight_leaf = [&](int layer, int head, const char* which) {
            const std::string name = "layer" + std::to_string(layer) + ".head" + std::to_string(head) +
                                     ".w" + which;
            return vg.params[static_cast<std::size_t>(params_.index_of(name))];
        };
        for (std::size_t i = 0; i < views_.size(); ++i) {
            const AttentionWeightsRef& v = views_[i];
            terms.push_back({weight_leaf(v.layer, v.head, "q"), &states_[3 * i + 0], cfg_.msvp.lambda_q});
            terms.push_back({weight_leaf(v.layer, v.head, "k"), &states_[3 * i + 1], cfg_.msvp.lambda_k});
            terms.push_back({weight_leaf(v.layer, v.head, "v"), &states_[3 * i + 2], cfg_.msvp.lambda_v});
        }
        const Graph::Value msvp = msvp_loss(vg.g, terms, cfg_.msvp.iters_per_step);
        out.msvp = static_cast<double>(vg.g.value(msvp).at(0, 0));
        loss = total_objective(vg.g, vg.cls_loss, msvp);
    }
    out.cls = static_cast<double>(vg.g.value(vg.cls_loss).at(0, 0));

    if (!std::isfinite(out.cls) || !std::isfinite(out.msvp)) {
        std::ostringstream diag;
        diag << "non-finite loss (cls=" << out.cls << ", msvp=" << out.msvp << "); labels:";
        for (int y : labels) diag << ' ' << y;
        diag << "; current sigma estimates:";
        for (const PowerIterState& st : states_) diag << ' ' << st.sigma;
        throw ContractError(diag.str());
    }

    vg.g.backward(loss);
    std::vector<Matrix> grads;
    grads.reserve(vg.params.size());
    for (Graph::Value p : vg.params) grads.push_back(vg.g.grad(p));
    sgd_step(params_.tensors, grads, velocity_, cfg_.lr, cfg_.momentum, cfg_.weight_decay);
    return out;
}

void Trainer::run() {
    const int n = train_.count();
    if (n == 0) throw ContractError("Trainer: empty training set");
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        // Deterministic shuffle, independent of the msvp/attack settings.
        Rng shuffle_rng(cfg_.seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(epoch + 1));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, i))]);

        double cls_sum = 0.0, msvp_sum = 0.0;
        int steps = 0;
        const auto epoch_start = std::chrono::steady_clock::now();
        for (int start = 0; start < n; start += cfg_.batch_size) {
            const int b = std::min(cfg_.batch_size, n - start);
            Matrix xb(b, train_.images.cols());
            std::vector<int> yb(static_cast<std::size_t>(b));
            for (int i = 0; i < b; ++i) {
                const int src = order[static_cast<std::size_t>(start + i)];
                for (int j = 0; j < xb.cols(); ++j) xb.at(i, j) = train_.images.at(src, j);
                yb[static_cast<std::size_t>(i)] = train_.labels[static_cast<std::size_t>(src)];
            }
            const std::uint64_t attack_seed =
                cfg_.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^ static_cast<std::uint64_t>(start);
            StepLoss sl;
            try {
                sl = step(xb, yb, attack_seed);
            } catch (const ContractError& e) {
                throw ContractError("training aborted at epoch " + std::to_string(epoch) + " step " +
                                    std::to_string(steps) + ": " + e.what());
            }
            cls_sum += sl.cls * b;
            msvp_sum += sl.msvp * b;
            ++steps;
        }
        const double epoch_seconds = std::chrono::duration<double>(
            std::chrono::steady_clock::now() - epoch_start).count();

        EpochRow row;
        row.epoch = epoch;
        row.cls_loss = cls_sum / n;
        row.msvp_loss = msvp_sum / n;
        row.clean_acc = evaluate(params_, test_);
        const bool eval_now = (epoch == cfg_.epochs - 1) ||
                              (cfg_.eval_every > 0 && (epoch % cfg_.eval_every) == 0);
        for (std::size_t a = 0; a < cfg_.eval_attacks.size(); ++a)
            row.robust_acc.push_back(eval_now ? evaluate(params_, test_, &cfg_.eval_attacks[a]) : -1.0);
        row.sigmas = sigma_snapshot();
        row.mean_step_seconds = steps > 0 ? epoch_seconds / steps : 0.0;
        metrics_.rows.push_back(std::move(row));
    }
}

void Trainer::run_steps(int n_steps) {
    const int n = train_.count();
    if (n == 0) throw ContractError("Trainer: empty training set");
    int cursor = 0;
    for (int s = 0; s < n_steps; ++s) {
        const int b = std::min(cfg_.batch_size, n);
        Matrix xb(b, train_.images.cols());
        std::vector<int> yb(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i) {
            const int src = (cursor + i) % n;
            for (int j = 0; j < xb.cols(); ++j) xb.at(i, j) = train_.images.at(src, j);
            yb[static_cast<std::size_t>(i)] = train_.labels[static_cast<std::size_t>(src)];
        }
        cursor = (cursor + b) % n;
        step(xb, yb, cfg_.seed + static_cast<std::uint64_t>(s));
    }
}

TrainResult train(VitParams model, const Dataset& train_data, const Dataset& test_data,
                  const TrainConfig& cfg) {
    Trainer t(std::move(model), train_data, test_data, cfg);
    t.run();
    return {t.params(), t.metrics()};
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::string Metrics::to_csv() const {
    std::ostringstream out;
    out << "epoch,cls_loss,msvp_loss,clean_acc";
    for (const std::string& a : attack_names) out << ",robust_" << a;
    for (const std::string& s : sigma_names) out << ",sigma_" << s;
    out << "\n";
    for (const EpochRow& r : rows) {
        out << r.epoch << ',' << fmt(r.cls_loss) << ',' << fmt(r.msvp_loss) << ',' << fmt(r.clean_acc);
        for (double v : r.robust_acc) out << ',' << (v < 0.0 ? std::string() : fmt(v));
        for (double v : r.sigmas) out << ',' << fmt(v);
        out << "\n";
    }
    return out.str();
}

Metrics Metrics::from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("metrics csv: missing header");
    const std::vector<std::string> header = split_csv_line(line);
    Metrics m;
    std::size_t col = 4;
    for (; col < header.size() && header[col].rfind("robust_", 0) == 0; ++col)
        m.attack_names.push_back(header[col].substr(7));
    for (; col < header.size(); ++col) {
        if (header[col].rfind("sigma_", 0) != 0) throw IoError("metrics csv: unexpected column " + header[col]);
        m.sigma_names.push_back(header[col].substr(6));
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size()) throw IoError("metrics csv: ragged row");
        EpochRow r;
        r.epoch = std::stoi(f[0]);
        r.cls_loss = std::stod(f[1]);
        r.msvp_loss = std::stod(f[2]);
        r.clean_acc = std::stod(f[3]);
        std::size_t k = 4;
        for (std::size_t a = 0; a < m.attack_names.size(); ++a, ++k)
            r.robust_acc.push_back(f[k].empty() ? -1.0 : std::stod(f[k]));
        for (std::size_t s = 0; s < m.sigma_names.size(); ++s, ++k) r.sigmas.push_back(std::stod(f[k]));
        m.rows.push_back(std::move(r));
    }
    return m;
}

std::string Metrics::timing_csv() const {
    std::ostringstream out;
    out << "epoch,mean_step_seconds\n";
    for (const EpochRow& r : rows) out << r.epoch << ',' << fmt(r.mean_step_seconds) << "\n";
    return out.str();
}

std::string Metrics::summary() const {
    std::ostringstream out;
    if (rows.empty()) return "epochs 0\n";
    const EpochRow& last = rows.back();
    out << "epochs " << rows.size() << "\n";
    out << "final_cls_loss " << fmt(last.cls_loss) << "\n";
    out << "final_msvp_loss " << fmt(last.msvp_loss) << "\n";
    out << "final_clean_acc " << fmt(last.clean_acc) << "\n";
    for (std::size_t a = 0; a < attack_names.size(); ++a)
        out << "final_robust_acc_" << attack_names[a] << ' ' << fmt(last.robust_acc[a]) << "\n";
    double mean_sigma = 0.0;
    for (double s : last.sigmas) mean_sigma += s;
    if (!last.sigmas.empty()) mean_sigma /= static_cast<double>(last.sigmas.size());
    out << "final_mean_sigma_max " << fmt(mean_sigma) << "\n";
    return out.str();
}

}  // namespace specguard
