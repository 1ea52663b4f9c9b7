#include "specguard/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace specguard {

KvConfig KvConfig::parse(const std::string& text) {
    KvConfig kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) continue;  // blank or comment-only
        if (!(ls >> value))
            throw IoError("config line " + std::to_string(line_no) + ": key '" + key + "' has no value");
        std::string extra;
        if (ls >> extra)
            throw IoError("config line " + std::to_string(line_no) + ": trailing token '" + extra + "'");
        kv.set(key, value);
    }
    return kv;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void KvConfig::set(const std::string& key, const std::string& value) {
    for (auto& e : entries_) {
        if (e.first == key) {
            e.second = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

bool KvConfig::has(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.first == key) return true;
    return false;
}

const std::string& KvConfig::get(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.first == key) return e.second;
    throw IoError("missing required config field '" + key + "'");
}

std::string KvConfig::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

std::string KvConfig::serialize() const {
    std::ostringstream out;
    for (const auto& e : entries_) out << e.first << ' ' << e.second << "\n";
    return out.str();
}

double parse_epsilon(const std::string& text) {
    const std::size_t slash = text.find('/');
    try {
        if (slash == std::string::npos) return std::stod(text);
        const double num = std::stod(text.substr(0, slash));
        const double den = std::stod(text.substr(slash + 1));
        if (den == 0.0) throw IoError("epsilon fraction has zero denominator: " + text);
        return num / den;
    } catch (const std::invalid_argument&) {
        throw IoError("cannot parse epsilon value '" + text + "'");
    }
}

bool parse_bool(const std::string& text, const std::string& key) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw IoError("field '" + key + "': expected a boolean, got '" + text + "'");
}

namespace {

int parse_int(const KvConfig& kv, const std::string& key, int fallback) {
    if (!kv.has(key)) return fallback;
    try {
        return std::stoi(kv.get(key));
    } catch (const std::exception&) {
        throw IoError("field '" + key + "': expected an integer, got '" + kv.get(key) + "'");
    }
}

double parse_double(const KvConfig& kv, const std::string& key, double fallback) {
    if (!kv.has(key)) return fallback;
    try {
        return std::stod(kv.get(key));
    } catch (const std::exception&) {
        throw IoError("field '" + key + "': expected a number, got '" + kv.get(key) + "'");
    }
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* kKnownKeys[] = {
    "seed",
    "out.dir",
    "model.image_size", "model.patch_size", "model.channels", "model.embed_dim",
    "model.heads", "model.head_dim", "model.layers", "model.mlp_ratio", "model.classes",
    "data.source", "data.per_class", "data.per_class_test",
    "data.images", "data.labels", "data.test_images", "data.test_labels",
    "train.mode", "train.epochs", "train.batch_size", "train.lr",
    "train.weight_decay", "train.momentum", "train.eval_every",
    "msvp.enabled", "msvp.lambda", "msvp.lambda_q", "msvp.lambda_k", "msvp.lambda_v",
    "msvp.iters_per_step",
    "attack.family", "attack.epsilon", "attack.alpha", "attack.steps", "attack.norm",
    "attack.random_start",
};

}  // namespace

bool is_known_config_key(const std::string& key) {
    for (const char* k : kKnownKeys)
        if (key == k) return true;
    // evalN.<attack key>
    if (key.rfind("eval", 0) == 0) {
        const std::size_t dot = key.find('.');
        if (dot == std::string::npos) return false;
        for (std::size_t i = 4; i < dot; ++i)
            if (!std::isdigit(static_cast<unsigned char>(key[i]))) return false;
        const std::string sub = key.substr(dot + 1);
        return sub == "family" || sub == "epsilon" || sub == "alpha" || sub == "steps" ||
               sub == "norm" || sub == "random_start";
    }
    return false;
}

AttackConfig attack_from_kv(const KvConfig& kv, const std::string& prefix) {
    AttackConfig a;
    const std::string family = kv.get_or(prefix + ".family", "fgsm");
    if (family == "fgsm") a.family = AttackFamily::fgsm;
    else if (family == "pgd") a.family = AttackFamily::pgd;
    else throw IoError("field '" + prefix + ".family': unknown attack '" + family + "'");
    if (kv.has(prefix + ".epsilon")) a.epsilon = parse_epsilon(kv.get(prefix + ".epsilon"));
    a.alpha = parse_double(kv, prefix + ".alpha", 0.0);
    a.steps = parse_int(kv, prefix + ".steps", a.family == AttackFamily::pgd ? 2 : 1);
    const std::string norm = kv.get_or(prefix + ".norm", "linf");
    if (norm == "linf") a.norm = AttackNorm::linf;
    else if (norm == "l2") a.norm = AttackNorm::l2;
    else throw IoError("field '" + prefix + ".norm': unknown norm '" + norm + "'");
    if (kv.has(prefix + ".random_start"))
        a.random_start = parse_bool(kv.get(prefix + ".random_start"), prefix + ".random_start");
    a.validate();
    return a;
}

RunConfig RunConfig::from_kv(const KvConfig& kv) {
    for (const auto& e : kv.entries())
        if (!is_known_config_key(e.first)) throw IoError("unknown config field '" + e.first + "'");

    RunConfig rc;
    if (kv.has("seed")) {
        rc.seed = static_cast<std::uint64_t>(std::stoull(kv.get("seed")));
    } else if (const char* env = std::getenv("SPECGUARD_SEED")) {
        rc.seed = static_cast<std::uint64_t>(std::stoull(env));
    }

    rc.model.image_size = parse_int(kv, "model.image_size", 16);
    rc.model.patch_size = parse_int(kv, "model.patch_size", 4);
    rc.model.channels = parse_int(kv, "model.channels", 1);
    rc.model.embed_dim = parse_int(kv, "model.embed_dim", 32);
    rc.model.heads = parse_int(kv, "model.heads", 4);
    rc.model.head_dim = parse_int(kv, "model.head_dim", 8);
    rc.model.layers = parse_int(kv, "model.layers", 2);
    rc.model.mlp_ratio = parse_double(kv, "model.mlp_ratio", 4.0);
    rc.model.classes = parse_int(kv, "model.classes", 10);
    rc.model.validate();

    rc.data.source = kv.get_or("data.source", "synthetic");
    if (rc.data.source == "synthetic") {
        rc.data.per_class = parse_int(kv, "data.per_class", 64);
        rc.data.per_class_test = parse_int(kv, "data.per_class_test", 16);
    } else if (rc.data.source == "idx") {
        rc.data.images = kv.get("data.images");
        rc.data.labels = kv.get("data.labels");
        rc.data.test_images = kv.get("data.test_images");
        rc.data.test_labels = kv.get("data.test_labels");
    } else {
        throw IoError("field 'data.source': expected synthetic or idx, got '" + rc.data.source + "'");
    }

    const std::string mode = kv.get_or("train.mode", "standard");
    if (mode == "standard") rc.train.mode = TrainMode::standard;
    else if (mode == "adversarial") rc.train.mode = TrainMode::adversarial;
    else throw IoError("field 'train.mode': expected standard or adversarial, got '" + mode + "'");
    rc.train.epochs = parse_int(kv, "train.epochs", 10);
    rc.train.batch_size = parse_int(kv, "train.batch_size", 16);
    rc.train.lr = parse_double(kv, "train.lr", 0.1);
    rc.train.weight_decay = parse_double(kv, "train.weight_decay", 0.0001);
    rc.train.momentum = parse_double(kv, "train.momentum", 0.9);
    rc.train.eval_every = parse_int(kv, "train.eval_every", 1);
    rc.train.seed = rc.seed;

    rc.train.msvp.enabled = parse_bool(kv.get_or("msvp.enabled", "true"), "msvp.enabled");
    double lam_all = 1e-4;
    if (kv.has("msvp.lambda")) lam_all = parse_double(kv, "msvp.lambda", lam_all);
    rc.train.msvp.lambda_q = parse_double(kv, "msvp.lambda_q", lam_all);
    rc.train.msvp.lambda_k = parse_double(kv, "msvp.lambda_k", lam_all);
    rc.train.msvp.lambda_v = parse_double(kv, "msvp.lambda_v", lam_all);
    rc.train.msvp.iters_per_step = parse_int(kv, "msvp.iters_per_step", 1);
    rc.train.msvp.validate();

    // Train-time attack defaults follow the adversarial-training recipe:
    // PGD at radius 8/255 with random start.
    {
        KvConfig defaults;
        defaults.set("attack.family", kv.get_or("attack.family", "pgd"));
        defaults.set("attack.epsilon", kv.get_or("attack.epsilon", "8/255"));
        defaults.set("attack.alpha", kv.get_or("attack.alpha", "0"));
        defaults.set("attack.steps", kv.get_or("attack.steps", "2"));
        defaults.set("attack.norm", kv.get_or("attack.norm", "linf"));
        defaults.set("attack.random_start", kv.get_or("attack.random_start", "true"));
        rc.train.attack = attack_from_kv(defaults, "attack");
    }

    // Evaluation attacks: explicit evalN sections, or the standard pair
    // (fgsm and pgd-2 at 2/255) when none are given.
    bool any_eval = false;
    for (int i = 1; i <= 16; ++i) {
        const std::string prefix = "eval" + std::to_string(i);
        if (!kv.has(prefix + ".family")) continue;
        any_eval = true;
        rc.train.eval_attacks.push_back(attack_from_kv(kv, prefix));
        rc.train.eval_attack_names.push_back(prefix);
    }
    if (!any_eval) {
        KvConfig d;
        d.set("eval1.family", "fgsm");
        d.set("eval1.epsilon", "2/255");
        d.set("eval2.family", "pgd");
        d.set("eval2.epsilon", "2/255");
        d.set("eval2.steps", "2");
        rc.train.eval_attacks.push_back(attack_from_kv(d, "eval1"));
        rc.train.eval_attack_names.push_back("eval1");
        rc.train.eval_attacks.push_back(attack_from_kv(d, "eval2"));
        rc.train.eval_attack_names.push_back("eval2");
    }
    rc.train.validate();
    return rc;
}

KvConfig RunConfig::to_kv() const {
    KvConfig kv;
    kv.set("seed", std::to_string(seed));
    kv.set("model.image_size", std::to_string(model.image_size));
    kv.set("model.patch_size", std::to_string(model.patch_size));
    kv.set("model.channels", std::to_string(model.channels));
    kv.set("model.embed_dim", std::to_string(model.embed_dim));
    kv.set("model.heads", std::to_string(model.heads));
    kv.set("model.head_dim", std::to_string(model.head_dim));
    kv.set("model.layers", std::to_string(model.layers));
    kv.set("model.mlp_ratio", fmt(model.mlp_ratio));
    kv.set("model.classes", std::to_string(model.classes));
    kv.set("data.source", data.source);
    if (data.source == "synthetic") {
        kv.set("data.per_class", std::to_string(data.per_class));
        kv.set("data.per_class_test", std::to_string(data.per_class_test));
    } else {
        kv.set("data.images", data.images);
        kv.set("data.labels", data.labels);
        kv.set("data.test_images", data.test_images);
        kv.set("data.test_labels", data.test_labels);
    }
    kv.set("train.mode", train.mode == TrainMode::standard ? "standard" : "adversarial");
    kv.set("train.epochs", std::to_string(train.epochs));
    kv.set("train.batch_size", std::to_string(train.batch_size));
    kv.set("train.lr", fmt(train.lr));
    kv.set("train.weight_decay", fmt(train.weight_decay));
    kv.set("train.momentum", fmt(train.momentum));
    kv.set("train.eval_every", std::to_string(train.eval_every));
    kv.set("msvp.enabled", train.msvp.enabled ? "true" : "false");
    kv.set("msvp.lambda_q", fmt(train.msvp.lambda_q));
    kv.set("msvp.lambda_k", fmt(train.msvp.lambda_k));
    kv.set("msvp.lambda_v", fmt(train.msvp.lambda_v));
    kv.set("msvp.iters_per_step", std::to_string(train.msvp.iters_per_step));

    auto emit_attack = [&kv](const std::string& prefix, const AttackConfig& a) {
        kv.set(prefix + ".family", a.family == AttackFamily::fgsm ? "fgsm" : "pgd");
        kv.set(prefix + ".epsilon", fmt(a.epsilon));
        kv.set(prefix + ".alpha", fmt(a.alpha));
        kv.set(prefix + ".steps", std::to_string(a.steps));
        kv.set(prefix + ".norm", a.norm == AttackNorm::linf ? "linf" : "l2");
        kv.set(prefix + ".random_start", a.random_start ? "true" : "false");
    };
    emit_attack("attack", train.attack);
    for (std::size_t i = 0; i < train.eval_attacks.size(); ++i)
        emit_attack(train.eval_attack_names[i], train.eval_attacks[i]);
    return kv;
}

Dataset RunConfig::make_train_data() const {
    if (data.source == "synthetic")
        return synth_split(model.classes, data.per_class, data.per_class_test, model.image_size,
                           seed ^ 0xda7a5e3dull, model.channels)
            .first;
    return load_idx_like(data.images, data.labels, model.classes);
}

Dataset RunConfig::make_test_data() const {
    if (data.source == "synthetic")
        return synth_split(model.classes, data.per_class, data.per_class_test, model.image_size,
                           seed ^ 0xda7a5e3dull, model.channels)
            .second;
    return load_idx_like(data.test_images, data.test_labels, model.classes);
}

}  // namespace specguard
