#include "specguard/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as raw little-endian words");

namespace specguard {

void VitConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || channels <= 0 || layers <= 0 || classes < 2)
        throw ContractError("VitConfig: non-positive dimension");
    if (image_size % patch_size != 0)
        throw ContractError("VitConfig: image_size must be divisible by patch_size");
    if (embed_dim != heads * head_dim)
        throw ContractError("VitConfig: embed_dim must equal heads * head_dim");
    if (hidden_dim() < 1) throw ContractError("VitConfig: mlp_ratio too small");
}

int VitParams::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw ContractError("VitParams: unknown tensor " + name);
}

Matrix& VitParams::tensor(const std::string& name) {
    return tensors[static_cast<std::size_t>(index_of(name))];
}

const Matrix& VitParams::tensor(const std::string& name) const {
    return tensors[static_cast<std::size_t>(index_of(name))];
}

namespace {

Matrix trunc_normal(int rows, int cols, double std_dev, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.raw()) {
        double z = rng.normal();
        while (std::abs(z) > 2.0) z = rng.normal();
        v = static_cast<real>(std_dev * z);
    }
    return m;
}

Matrix ones_row(int cols) {
    Matrix m(1, cols);
    for (auto& v : m.raw()) v = real(1);
    return m;
}

void push_tensor(VitParams& p, const std::string& name, Matrix m) {
    p.names.push_back(name);
    p.tensors.push_back(std::move(m));
}

std::string layer_prefix(int l) { return "layer" + std::to_string(l); }

// Flat-index map sending sample row `s` of a batch to its N x patch_dim token
// matrix; within a patch, pixels run channel-major, then row, then column.
std::vector<int> patchify_map(const VitConfig& cfg, int sample_row) {
    const int grid = cfg.image_size / cfg.patch_size;
    const int p = cfg.patch_size;
    std::vector<int> map;
    map.reserve(static_cast<std::size_t>(cfg.tokens()) * cfg.patch_dim());
    const int base = sample_row * cfg.input_dim();
    for (int pr = 0; pr < grid; ++pr)
        for (int pc = 0; pc < grid; ++pc)
            for (int ch = 0; ch < cfg.channels; ++ch)
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < p; ++j)
                        map.push_back(base + ch * cfg.image_size * cfg.image_size +
                                      (pr * p + i) * cfg.image_size + (pc * p + j));
    return map;
}

}  // namespace

VitParams init_vit_params(const VitConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const double std_dev = 0.02;

    VitParams p;
    p.cfg = cfg;
    push_tensor(p, "patch_proj", trunc_normal(cfg.patch_dim(), cfg.embed_dim, std_dev, rng));
    push_tensor(p, "pos_embed", Matrix(cfg.tokens(), cfg.embed_dim));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = layer_prefix(l);
        push_tensor(p, lp + ".ln1.gain", ones_row(cfg.embed_dim));
        push_tensor(p, lp + ".ln1.bias", Matrix(1, cfg.embed_dim));
        for (int h = 0; h < cfg.heads; ++h) {
            const std::string hp = lp + ".head" + std::to_string(h);
            push_tensor(p, hp + ".wq", trunc_normal(cfg.embed_dim, cfg.head_dim, std_dev, rng));
            push_tensor(p, hp + ".wk", trunc_normal(cfg.embed_dim, cfg.head_dim, std_dev, rng));
            push_tensor(p, hp + ".wv", trunc_normal(cfg.embed_dim, cfg.head_dim, std_dev, rng));
        }
        push_tensor(p, lp + ".attn.wo",
                    trunc_normal(cfg.heads * cfg.head_dim, cfg.embed_dim, std_dev, rng));
        push_tensor(p, lp + ".ln2.gain", ones_row(cfg.embed_dim));
        push_tensor(p, lp + ".ln2.bias", Matrix(1, cfg.embed_dim));
        push_tensor(p, lp + ".mlp.w1", trunc_normal(cfg.embed_dim, cfg.hidden_dim(), std_dev, rng));
        push_tensor(p, lp + ".mlp.b1", Matrix(1, cfg.hidden_dim()));
        push_tensor(p, lp + ".mlp.w2", trunc_normal(cfg.hidden_dim(), cfg.embed_dim, std_dev, rng));
        push_tensor(p, lp + ".mlp.b2", Matrix(1, cfg.embed_dim));
    }
    push_tensor(p, "final.ln.gain", ones_row(cfg.embed_dim));
    push_tensor(p, "final.ln.bias", Matrix(1, cfg.embed_dim));
    push_tensor(p, "head.w", trunc_normal(cfg.embed_dim, cfg.classes, std_dev, rng));
    push_tensor(p, "head.b", Matrix(1, cfg.classes));
    return p;
}

std::vector<AttentionWeightsRef> extract_attention_weights(VitParams& params) {
    std::vector<AttentionWeightsRef> views;
    for (int l = 0; l < params.cfg.layers; ++l) {
        for (int h = 0; h < params.cfg.heads; ++h) {
            const std::string hp = layer_prefix(l) + ".head" + std::to_string(h);
            AttentionWeightsRef v;
            v.layer = l;
            v.head = h;
            v.wq = &params.tensor(hp + ".wq");
            v.wk = &params.tensor(hp + ".wk");
            v.wv = &params.tensor(hp + ".wv");
            views.push_back(v);
        }
    }
    return views;
}

void vit_forward(const VitParams& params, const Matrix& images, const std::vector<int>& labels,
                 VitGraph& out) {
    const VitConfig& cfg = params.cfg;
    cfg.validate();
    if (images.cols() != cfg.input_dim())
        throw ShapeError("vit_forward: expected row length " + std::to_string(cfg.input_dim()) +
                         ", got " + std::to_string(images.cols()));
    if (static_cast<int>(labels.size()) != images.rows())
        throw ShapeError("vit_forward: one label per image required");

    Graph& g = out.g;
    out.input = g.leaf(images);
    out.params.clear();
    out.params.reserve(params.tensors.size());
    for (const Matrix& t : params.tensors) out.params.push_back(g.leaf(t));
    auto pv = [&](const std::string& name) { return out.params[static_cast<std::size_t>(params.index_of(name))]; };

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
    std::vector<Graph::Value> logit_rows;
    for (int s = 0; s < images.rows(); ++s) {
        Graph::Value x = g.reorder(out.input, patchify_map(cfg, s), cfg.tokens(), cfg.patch_dim());
        x = g.add(g.matmul(x, pv("patch_proj")), pv("pos_embed"));
        for (int l = 0; l < cfg.layers; ++l) {
            const std::string lp = layer_prefix(l);
            Graph::Value h1 = g.layer_norm(x, pv(lp + ".ln1.gain"), pv(lp + ".ln1.bias"));
            std::vector<Graph::Value> heads;
            for (int h = 0; h < cfg.heads; ++h) {
                const std::string hp = lp + ".head" + std::to_string(h);
                Graph::Value q = g.matmul(h1, pv(hp + ".wq"));
                Graph::Value k = g.matmul(h1, pv(hp + ".wk"));
                Graph::Value p = g.row_softmax(g.scale(g.matmul(q, g.transpose(k)), scale));
                heads.push_back(g.matmul(p, g.matmul(h1, pv(hp + ".wv"))));
            }
            x = g.add(x, g.matmul(g.concat_cols(heads), pv(lp + ".attn.wo")));
            Graph::Value h2 = g.layer_norm(x, pv(lp + ".ln2.gain"), pv(lp + ".ln2.bias"));
            Graph::Value m = g.gelu(g.add_rowvec(g.matmul(h2, pv(lp + ".mlp.w1")), pv(lp + ".mlp.b1")));
            x = g.add(x, g.add_rowvec(g.matmul(m, pv(lp + ".mlp.w2")), pv(lp + ".mlp.b2")));
        }
        x = g.layer_norm(x, pv("final.ln.gain"), pv("final.ln.bias"));
        Graph::Value pooled = g.mean_pool(x);
        logit_rows.push_back(g.add(g.matmul(pooled, pv("head.w")), pv("head.b")));
    }
    out.logits = g.concat_rows(logit_rows);
    out.cls_loss = g.cross_entropy(out.logits, labels);
}

namespace {

Matrix plain_layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps = 1e-5) {
    Matrix y(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < x.cols(); ++j) mean += x.at(i, j);
        mean /= x.cols();
        double var = 0.0;
        for (int j = 0; j < x.cols(); ++j) {
            const double d = static_cast<double>(x.at(i, j)) - mean;
            var += d * d;
        }
        var /= x.cols();
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < x.cols(); ++j)
            y.at(i, j) = static_cast<real>((static_cast<double>(x.at(i, j)) - mean) * inv * gain.at(0, j) +
                                           bias.at(0, j));
    }
    return y;
}

Matrix plain_row_softmax(const Matrix& s) {
    Matrix p(s.rows(), s.cols());
    for (int i = 0; i < s.rows(); ++i) {
        double mx = -1e300;
        for (int j = 0; j < s.cols(); ++j) mx = std::max(mx, static_cast<double>(s.at(i, j)));
        double denom = 0.0;
        for (int j = 0; j < s.cols(); ++j) {
            const double e = std::exp(static_cast<double>(s.at(i, j)) - mx);
            p.at(i, j) = static_cast<real>(e);
            denom += e;
        }
        for (int j = 0; j < s.cols(); ++j) p.at(i, j) = static_cast<real>(p.at(i, j) / denom);
    }
    return p;
}

Matrix add_row_broadcast(const Matrix& x, const Matrix& row) {
    Matrix y = x;
    for (int i = 0; i < y.rows(); ++i)
        for (int j = 0; j < y.cols(); ++j) y.at(i, j) += row.at(0, j);
    return y;
}

}  // namespace

Matrix vit_forward_plain(const VitParams& params, const Matrix& images,
                         std::vector<Matrix>* capture_attention_inputs) {
    const VitConfig& cfg = params.cfg;
    if (images.cols() != cfg.input_dim())
        throw ShapeError("vit_forward_plain: bad input width " + std::to_string(images.cols()));
    if (capture_attention_inputs) capture_attention_inputs->clear();

    const double score_scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
    Matrix logits(images.rows(), cfg.classes);
    for (int s = 0; s < images.rows(); ++s) {
        const std::vector<int> map = patchify_map(cfg, s);
        Matrix x(cfg.tokens(), cfg.patch_dim());
        for (std::size_t k = 0; k < map.size(); ++k) x.raw()[k] = images.raw()[static_cast<std::size_t>(map[k])];
        x = add(matmul(x, params.tensor("patch_proj")), params.tensor("pos_embed"));
        for (int l = 0; l < cfg.layers; ++l) {
            const std::string lp = layer_prefix(l);
            const Matrix h1 = plain_layer_norm(x, params.tensor(lp + ".ln1.gain"), params.tensor(lp + ".ln1.bias"));
            if (capture_attention_inputs && s == 0) capture_attention_inputs->push_back(h1);
            Matrix cat(cfg.tokens(), cfg.heads * cfg.head_dim);
            for (int h = 0; h < cfg.heads; ++h) {
                const std::string hp = lp + ".head" + std::to_string(h);
                const Matrix q = matmul(h1, params.tensor(hp + ".wq"));
                const Matrix k = matmul(h1, params.tensor(hp + ".wk"));
                const Matrix p = plain_row_softmax(scale(matmul(q, transpose(k)), static_cast<real>(score_scale)));
                const Matrix head_out = matmul(p, matmul(h1, params.tensor(hp + ".wv")));
                for (int i = 0; i < cfg.tokens(); ++i)
                    for (int j = 0; j < cfg.head_dim; ++j) cat.at(i, h * cfg.head_dim + j) = head_out.at(i, j);
            }
            x = add(x, matmul(cat, params.tensor(lp + ".attn.wo")));
            const Matrix h2 = plain_layer_norm(x, params.tensor(lp + ".ln2.gain"), params.tensor(lp + ".ln2.bias"));
            Matrix m = add_row_broadcast(matmul(h2, params.tensor(lp + ".mlp.w1")), params.tensor(lp + ".mlp.b1"));
            for (auto& v : m.raw())
                v = static_cast<real>(0.5 * v * (1.0 + std::erf(static_cast<double>(v) / std::sqrt(2.0))));
            x = add(x, add_row_broadcast(matmul(m, params.tensor(lp + ".mlp.w2")), params.tensor(lp + ".mlp.b2")));
        }
        x = plain_layer_norm(x, params.tensor("final.ln.gain"), params.tensor("final.ln.bias"));
        Matrix pooled(1, cfg.embed_dim);
        for (int j = 0; j < cfg.embed_dim; ++j) {
            double sum = 0.0;
            for (int i = 0; i < cfg.tokens(); ++i) sum += x.at(i, j);
            pooled.at(0, j) = static_cast<real>(sum / cfg.tokens());
        }
        const Matrix row = add(matmul(pooled, params.tensor("head.w")), params.tensor("head.b"));
        for (int j = 0; j < cfg.classes; ++j) logits.at(s, j) = row.at(0, j);
    }
    return logits;
}

std::vector<int> predict(const VitParams& params, const Matrix& images) {
    const Matrix logits = vit_forward_plain(params, images);
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (int i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;  // ties keep the lowest index
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

namespace {
constexpr char kMagic[] = "SPECFORMER1";
#ifdef SPECGUARD_REAL32
constexpr char kDtype[] = "f32";
#else
constexpr char kDtype[] = "f64";
#endif
}  // namespace

void save_checkpoint(const VitParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out << kMagic << "\n";
    const VitConfig& c = params.cfg;
    out << "config image_size " << c.image_size << "\n";
    out << "config patch_size " << c.patch_size << "\n";
    out << "config channels " << c.channels << "\n";
    out << "config embed_dim " << c.embed_dim << "\n";
    out << "config heads " << c.heads << "\n";
    out << "config head_dim " << c.head_dim << "\n";
    out << "config layers " << c.layers << "\n";
    out << "config mlp_ratio " << c.mlp_ratio << "\n";
    out << "config classes " << c.classes << "\n";
    for (std::size_t i = 0; i < params.names.size(); ++i)
        out << "tensor " << params.names[i] << " " << kDtype << " " << params.tensors[i].rows() << " "
            << params.tensors[i].cols() << "\n";
    out << "data\n";
    for (const Matrix& t : params.tensors)
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(real)));
    if (!out) throw IoError("failed writing checkpoint " + path);
}

VitParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw IoError("bad checkpoint magic in " + path);

    VitParams p;
    std::vector<std::pair<int, int>> shapes;
    while (std::getline(in, line)) {
        if (line == "data") break;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "config") {
            std::string key;
            ls >> key;
            VitConfig& c = p.cfg;
            if (key == "image_size") ls >> c.image_size;
            else if (key == "patch_size") ls >> c.patch_size;
            else if (key == "channels") ls >> c.channels;
            else if (key == "embed_dim") ls >> c.embed_dim;
            else if (key == "heads") ls >> c.heads;
            else if (key == "head_dim") ls >> c.head_dim;
            else if (key == "layers") ls >> c.layers;
            else if (key == "mlp_ratio") ls >> c.mlp_ratio;
            else if (key == "classes") ls >> c.classes;
            else throw IoError("unknown checkpoint config key " + key);
        } else if (kind == "tensor") {
            std::string name, dtype;
            int rows = -1, cols = -1;
            ls >> name >> dtype >> rows >> cols;
            if (!ls || rows < 0 || cols < 0) throw IoError("malformed tensor manifest line: " + line);
            if (dtype != kDtype)
                throw IoError("checkpoint dtype " + dtype + " does not match build (" + kDtype + ")");
            p.names.push_back(name);
            shapes.emplace_back(rows, cols);
        } else {
            throw IoError("unexpected checkpoint manifest line: " + line);
        }
    }
    if (line != "data") throw IoError("checkpoint manifest missing data section");

    for (std::size_t i = 0; i < p.names.size(); ++i) {
        Matrix t(shapes[i].first, shapes[i].second);
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(real)));
        if (static_cast<std::size_t>(in.gcount()) != t.size() * sizeof(real))
            throw IoError("truncated tensor payload for " + p.names[i]);
        t.ensure_finite("checkpoint tensor");
        p.tensors.push_back(std::move(t));
    }
    p.cfg.validate();

    // The layout must match what init would produce for this config.
    const VitParams ref = init_vit_params(p.cfg, 0);
    if (ref.names != p.names) throw IoError("checkpoint tensor set does not match its config");
    for (std::size_t i = 0; i < ref.tensors.size(); ++i)
        if (!ref.tensors[i].same_shape(p.tensors[i]))
            throw IoError("checkpoint tensor " + p.names[i] + " has unexpected shape");
    return p;
}

}  // namespace specguard
