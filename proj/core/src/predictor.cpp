#include "rulprune/predictor.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/parallel.hpp"
#include "rulprune/random.hpp"

#include <cmath>
#include <limits>

namespace rulprune {

using Eigen::MatrixXd;

void PredictorConfig::validate() const {
    if (embed_dim < 1 || heads < 1 || layers < 0 || ffn() < 1 || head_dim1 < 1 || head_dim2 < 1 ||
        input_channels < 1 || seq_len < 1) {
        throw ArgumentError("predictor dimensions must be >= 1");
    }
    if (embed_dim % heads != 0) throw ArgumentError("embed_dim must be divisible by heads");
    if (!(ln_eps > 0.0)) throw ArgumentError("ln_eps must be positive");
}

Parameters zeros_like(const Parameters& p) {
    Parameters z = p;
    for_each_group(z, [](const std::string&, MatrixXd& m) { m.setZero(); });
    return z;
}

namespace {

MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double fan_in) {
    const double a = 1.0 / std::sqrt(fan_in);
    MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-a, a);
    }
    return m;
}

MatrixXd relu(const MatrixXd& x) { return x.cwiseMax(0.0); }

MatrixXd relu_mask(const MatrixXd& pre, const MatrixXd& upstream) {
    return (pre.array() > 0.0).select(upstream, 0.0);
}

struct LnCache {
    MatrixXd normalized;
    Eigen::VectorXd inv_std;
};

MatrixXd layer_norm_cached(const MatrixXd& x, const MatrixXd& gain, const MatrixXd& bias, double eps,
                           LnCache& cache) {
    const auto d = static_cast<double>(x.cols());
    cache.normalized.resize(x.rows(), x.cols());
    cache.inv_std.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).sum() / d;
        const Eigen::RowVectorXd centred = x.row(r).array() - mean;
        const double var = centred.squaredNorm() / d;
        const double inv = 1.0 / std::sqrt(var + eps);
        cache.inv_std[r] = inv;
        cache.normalized.row(r) = centred * inv;
    }
    MatrixXd out = cache.normalized.array().rowwise() * gain.row(0).array();
    out.rowwise() += bias.row(0);
    return out;
}

// Returns dx; accumulates gain and bias gradients.
MatrixXd layer_norm_backward(const MatrixXd& dy, const MatrixXd& gain, const LnCache& cache, MatrixXd& dgain,
                             MatrixXd& dbias) {
    dgain += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
    dbias += dy.colwise().sum();
    const MatrixXd dn = dy.array().rowwise() * gain.row(0).array();
    const auto d = static_cast<double>(dy.cols());
    MatrixXd dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double mean_dn = dn.row(r).sum() / d;
        const double mean_dnn = dn.row(r).dot(cache.normalized.row(r)) / d;
        dx.row(r) = cache.inv_std[r] *
                    (dn.row(r).array() - mean_dn - cache.normalized.row(r).array() * mean_dnn).matrix();
    }
    return dx;
}

struct LayerCache {
    MatrixXd input;
    MatrixXd q, k, v;
    std::vector<MatrixXd> weights;  // per head softmax
    MatrixXd concat;
    LnCache ln1;
    MatrixXd y1;
    MatrixXd f1;  // pre-activation
    MatrixXd h;   // post-activation
    LnCache ln2;
};

struct ForwardCache {
    MatrixXd x;
    std::vector<LayerCache> layers;
    MatrixXd hidden;  // L x D after the last layer
    MatrixXd pooled;  // 1 x D
    MatrixXd z1, a1, z2, a2;
    double output = 0.0;
};

MatrixXd mha_cached(const MatrixXd& x, const LayerParams& l, int heads, bool causal, LayerCache& c) {
    const Eigen::Index d = x.cols();
    const Eigen::Index dk = d / heads;
    c.q = x * l.wq;
    c.k = x * l.wk;
    c.v = x * l.wv;
    c.weights.resize(static_cast<std::size_t>(heads));
    c.concat.resize(x.rows(), d);
    for (int h = 0; h < heads; ++h) {
        const Eigen::Index off = h * dk;
        c.concat.middleCols(off, dk) = attention(c.q.middleCols(off, dk), c.k.middleCols(off, dk),
                                                 c.v.middleCols(off, dk), causal,
                                                 &c.weights[static_cast<std::size_t>(h)]);
    }
    return c.concat * l.wo;
}

void forward_cached(const PredictorModel& model, const MatrixXd& x, ForwardCache& c) {
    const auto& cfg = model.config;
    const auto& p = model.params;
    if (x.cols() != cfg.input_channels) {
        throw ArgumentError("input has " + std::to_string(x.cols()) + " channels, model expects " +
                            std::to_string(cfg.input_channels));
    }
    if (x.rows() < 1) throw ArgumentError("input window is empty");
    c.x = x;
    MatrixXd h = embed_signal(x, p.embed_w, p.embed_b);
    c.layers.resize(p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& l = p.layers[i];
        auto& lc = c.layers[i];
        lc.input = h;
        const MatrixXd m = mha_cached(h, l, cfg.heads, cfg.causal_mask, lc);
        lc.y1 = layer_norm_cached(h + m, l.ln1_gain, l.ln1_bias, cfg.ln_eps, lc.ln1);
        lc.f1 = lc.y1 * l.ffn_w1;
        lc.f1.rowwise() += l.ffn_b1.row(0);
        lc.h = relu(lc.f1);
        MatrixXd f2 = lc.h * l.ffn_w2;
        f2.rowwise() += l.ffn_b2.row(0);
        h = layer_norm_cached(lc.y1 + f2, l.ln2_gain, l.ln2_bias, cfg.ln_eps, lc.ln2);
    }
    c.hidden = h;
    c.pooled = h.colwise().mean();
    c.z1 = c.pooled * p.head_w1 + p.head_b1;
    c.a1 = relu(c.z1);
    c.z2 = c.a1 * p.head_w2 + p.head_b2;
    c.a2 = relu(c.z2);
    c.output = (c.a2 * p.head_w3 + p.head_b3)(0, 0);
}

// Adds d(output)/d(params) * dout into g.
void backward_cached(const PredictorModel& model, const ForwardCache& c, double dout, Parameters& g) {
    const auto& cfg = model.config;
    const auto& p = model.params;
    const MatrixXd dy = MatrixXd::Constant(1, 1, dout);

    g.head_w3 += c.a2.transpose() * dy;
    g.head_b3 += dy;
    const MatrixXd dz2 = relu_mask(c.z2, dy * p.head_w3.transpose());
    g.head_w2 += c.a1.transpose() * dz2;
    g.head_b2 += dz2;
    const MatrixXd dz1 = relu_mask(c.z1, dz2 * p.head_w2.transpose());
    g.head_w1 += c.pooled.transpose() * dz1;
    g.head_b1 += dz1;
    const MatrixXd dpooled = dz1 * p.head_w1.transpose();

    const Eigen::Index len = c.hidden.rows();
    MatrixXd dh = dpooled.replicate(len, 1) / static_cast<double>(len);

    const Eigen::Index d = cfg.embed_dim;
    const Eigen::Index dk = d / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t ii = p.layers.size(); ii-- > 0;) {
        const auto& l = p.layers[ii];
        const auto& lc = c.layers[ii];
        auto& gl = g.layers[ii];

        const MatrixXd dr2 = layer_norm_backward(dh, l.ln2_gain, lc.ln2, gl.ln2_gain, gl.ln2_bias);
        gl.ffn_w2 += lc.h.transpose() * dr2;
        gl.ffn_b2 += dr2.colwise().sum();
        const MatrixXd df1 = relu_mask(lc.f1, dr2 * l.ffn_w2.transpose());
        gl.ffn_w1 += lc.y1.transpose() * df1;
        gl.ffn_b1 += df1.colwise().sum();
        const MatrixXd dy1 = dr2 + df1 * l.ffn_w1.transpose();

        const MatrixXd dr1 = layer_norm_backward(dy1, l.ln1_gain, lc.ln1, gl.ln1_gain, gl.ln1_bias);
        gl.wo += lc.concat.transpose() * dr1;
        const MatrixXd dconcat = dr1 * l.wo.transpose();
        MatrixXd dq(len, d), dk_all(len, d), dv(len, d);
        for (int h = 0; h < cfg.heads; ++h) {
            const Eigen::Index off = h * dk;
            const MatrixXd& pw = lc.weights[static_cast<std::size_t>(h)];
            const auto da = dconcat.middleCols(off, dk);
            dv.middleCols(off, dk) = pw.transpose() * da;
            const MatrixXd dp = da * lc.v.middleCols(off, dk).transpose();
            const Eigen::VectorXd rowdot = (dp.array() * pw.array()).rowwise().sum();
            const MatrixXd ds = pw.array() * (dp.colwise() - rowdot).array();
            dq.middleCols(off, dk) = scale * (ds * lc.k.middleCols(off, dk));
            dk_all.middleCols(off, dk) = scale * (ds.transpose() * lc.q.middleCols(off, dk));
        }
        gl.wq += lc.input.transpose() * dq;
        gl.wk += lc.input.transpose() * dk_all;
        gl.wv += lc.input.transpose() * dv;
        dh = dr1 + dq * l.wq.transpose() + dk_all * l.wk.transpose() + dv * l.wv.transpose();
    }
    g.embed_w += dh.transpose() * c.x;
    g.embed_b += dh.colwise().sum();
}

}  // namespace

PredictorModel init_model(const PredictorConfig& config, std::uint64_t seed) {
    config.validate();
    const Eigen::Index d = config.embed_dim;
    const Eigen::Index c = config.input_channels;
    const Eigen::Index f = config.ffn();
    const Eigen::Index h1 = config.head_dim1;
    const Eigen::Index h2 = config.head_dim2;
    Rng rng(seed);
    PredictorModel m;
    m.config = config;
    auto& p = m.params;
    p.embed_w = uniform_matrix(rng, d, c, static_cast<double>(c));
    p.embed_b = MatrixXd::Zero(1, d);
    p.layers.resize(static_cast<std::size_t>(config.layers));
    for (auto& l : p.layers) {
        l.wq = uniform_matrix(rng, d, d, static_cast<double>(d));
        l.wk = uniform_matrix(rng, d, d, static_cast<double>(d));
        l.wv = uniform_matrix(rng, d, d, static_cast<double>(d));
        l.wo = uniform_matrix(rng, d, d, static_cast<double>(d));
        l.ffn_w1 = uniform_matrix(rng, d, f, static_cast<double>(d));
        l.ffn_b1 = MatrixXd::Zero(1, f);
        l.ffn_w2 = uniform_matrix(rng, f, d, static_cast<double>(f));
        l.ffn_b2 = MatrixXd::Zero(1, d);
        l.ln1_gain = MatrixXd::Ones(1, d);
        l.ln1_bias = MatrixXd::Zero(1, d);
        l.ln2_gain = MatrixXd::Ones(1, d);
        l.ln2_bias = MatrixXd::Zero(1, d);
    }
    p.head_w1 = uniform_matrix(rng, d, h1, static_cast<double>(d));
    p.head_b1 = MatrixXd::Zero(1, h1);
    p.head_w2 = uniform_matrix(rng, h1, h2, static_cast<double>(h1));
    p.head_b2 = MatrixXd::Zero(1, h2);
    p.head_w3 = uniform_matrix(rng, h2, 1, static_cast<double>(h2));
    p.head_b3 = MatrixXd::Zero(1, 1);
    return m;
}

void freeze_first_layers(PredictorModel& model, int count) {
    if (count < 0 || count > model.config.layers) {
        throw ArgumentError("cannot freeze " + std::to_string(count) + " of " +
                            std::to_string(model.config.layers) + " layers");
    }
    for_each_group(model.params, [&](const std::string& name, const MatrixXd&) {
        for (int i = 1; i <= count; ++i) {
            if (name.starts_with("layer" + std::to_string(i) + ".")) model.frozen.insert(name);
        }
    });
}

MatrixXd embed_signal(const MatrixXd& x, const MatrixXd& w, const MatrixXd& b) {
    if (x.cols() != w.cols() || b.cols() != w.rows() || b.rows() != 1) {
        throw ArgumentError("embed_signal: shape mismatch");
    }
    MatrixXd e = x * w.transpose();
    e.rowwise() += b.row(0);
    return e;
}

MatrixXd attention(const MatrixXd& q, const MatrixXd& k, const MatrixXd& v, bool causal_mask, MatrixXd* weights) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    // Transposed scores so each query's softmax runs over a contiguous column.
    MatrixXd st = (k * q.transpose()) * scale;
    const Eigen::Index keys = st.rows();
    for (Eigen::Index r = 0; r < st.cols(); ++r) {
        // Masked keys are -inf before the softmax, i.e. exactly zero after it.
        const Eigen::Index visible = causal_mask ? std::min(r + 1, keys) : keys;
        auto col = st.col(r).head(visible);
        const double mx = col.maxCoeff();
        col = (col.array() - mx).exp().matrix();
        col /= col.sum();
        st.col(r).tail(keys - visible).setZero();
    }
    MatrixXd out = st.transpose() * v;
    if (weights != nullptr) *weights = st.transpose();
    return out;
}

MatrixXd mha(const MatrixXd& x, const LayerParams& layer, int heads, bool causal_mask) {
    if (heads < 1 || x.cols() % heads != 0) throw ArgumentError("mha: embed dim not divisible by heads");
    LayerCache cache;
    return mha_cached(x, layer, heads, causal_mask, cache);
}

MatrixXd layer_norm(const MatrixXd& x, const MatrixXd& gain, const MatrixXd& bias, double eps) {
    LnCache cache;
    return layer_norm_cached(x, gain, bias, eps, cache);
}

MatrixXd encode(const PredictorModel& model, const MatrixXd& x) {
    ForwardCache c;
    forward_cached(model, x, c);
    return c.hidden;
}

double transformer_forward(const PredictorModel& model, const MatrixXd& x) {
    ForwardCache c;
    forward_cached(model, x, c);
    return c.output;
}

std::vector<double> predict(const PredictorModel& model, std::span<const Sample> samples) {
    std::vector<double> out(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        out[i] = transformer_forward(model, samples[i].x) * model.output_scale;
    });
    return out;
}

namespace {

double mean_sq_error(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) throw ArgumentError("loss_total: preds and labels differ in length");
    double mse = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) mse += (preds[i] - labels[i]) * (preds[i] - labels[i]);
    return preds.empty() ? 0.0 : mse / static_cast<double>(preds.size());
}

}  // namespace

double loss_total(std::span<const double> preds, std::span<const double> labels, std::span<const double> adapt,
                  std::span<const double> anchor, double beta) {
    if (adapt.size() != anchor.size()) throw ArgumentError("loss_total: parameter vectors differ in length");
    const double mse = mean_sq_error(preds, labels);
    double dist = 0.0;
    for (std::size_t i = 0; i < adapt.size(); ++i) dist += (adapt[i] - anchor[i]) * (adapt[i] - anchor[i]);
    return mse + beta * dist;
}

namespace {

double anchor_distance_sq(const PredictorModel& adapt, const Parameters& anchor) {
    std::vector<const MatrixXd*> ref;
    for_each_group(anchor, [&](const std::string&, const MatrixXd& m) { ref.push_back(&m); });
    std::size_t i = 0;
    double dist = 0.0;
    for_each_group(adapt.params, [&](const std::string& name, const MatrixXd& m) {
        const MatrixXd& a = *ref[i++];
        if (a.rows() != m.rows() || a.cols() != m.cols()) throw ArgumentError("anchor shape mismatch at " + name);
        if (adapt.trainable(name)) dist += (m - a).squaredNorm();
    });
    return dist;
}

}  // namespace

double loss_total(std::span<const double> preds, std::span<const double> labels, const PredictorModel& adapt,
                  const Parameters* anchor, double beta) {
    const double mse = mean_sq_error(preds, labels);
    if (anchor == nullptr || beta == 0.0) return mse;
    return mse + beta * anchor_distance_sq(adapt, *anchor);
}

double parameter_distance(const PredictorModel& a, const Parameters& b) { return std::sqrt(anchor_distance_sq(a, b)); }

Gradients backward(const PredictorModel& model, std::span<const Sample> batch, const Parameters* anchor,
                   double beta) {
    if (batch.empty()) throw ArgumentError("backward: empty batch");
    const double n = static_cast<double>(batch.size());
    const double scale = model.output_scale;
    Gradients out;
    out.grad = zeros_like(model.params);

    std::vector<double> preds(batch.size());
    std::vector<double> labels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = batch[i].y / scale;

    // Each sample's gradient lands in its own slot and slots are summed in index order,
    // so the result is the same for any thread count.
    auto sample_grad = [&](std::size_t i, Parameters& g) {
        ForwardCache c;
        forward_cached(model, batch[i].x, c);
        preds[i] = c.output;
        backward_cached(model, c, 2.0 * (c.output - labels[i]) / n, g);
    };
    std::size_t threads = worker_count();
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (threads <= 1 || batch.size() == 1) {
        Parameters scratch = out.grad;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            for_each_group(scratch, [](const std::string&, MatrixXd& m) { m.setZero(); });
            sample_grad(i, scratch);
            std::vector<const MatrixXd*> src;
            for_each_group(scratch, [&](const std::string&, const MatrixXd& m) { src.push_back(&m); });
            std::size_t k = 0;
            for_each_group(out.grad, [&](const std::string&, MatrixXd& m) { m += *src[k++]; });
        }
    } else {
        std::vector<Parameters> slots(batch.size(), out.grad);
        parallel_for(batch.size(), [&](std::size_t i) { sample_grad(i, slots[i]); });
        for (const auto& s : slots) {
            std::vector<const MatrixXd*> src;
            for_each_group(s, [&](const std::string&, const MatrixXd& m) { src.push_back(&m); });
            std::size_t k = 0;
            for_each_group(out.grad, [&](const std::string&, MatrixXd& m) { m += *src[k++]; });
        }
    }

    std::vector<const MatrixXd*> anchor_groups;
    if (anchor != nullptr) {
        for_each_group(*anchor, [&](const std::string&, const MatrixXd& m) { anchor_groups.push_back(&m); });
    }
    std::vector<const MatrixXd*> current;
    for_each_group(model.params, [&](const std::string&, const MatrixXd& m) { current.push_back(&m); });
    std::size_t k = 0;
    for_each_group(out.grad, [&](const std::string& name, MatrixXd& m) {
        const std::size_t idx = k++;
        if (!model.trainable(name)) {
            m.setZero();
            return;
        }
        if (anchor != nullptr && beta != 0.0) m += 2.0 * beta * (*current[idx] - *anchor_groups[idx]);
    });

    out.mse = mean_sq_error(preds, labels);
    out.loss = anchor != nullptr ? loss_total(preds, labels, model, anchor, beta) : out.mse;
    return out;
}

}  // namespace rulprune
