#include "pemsbench/saint.hpp"

#include "pemsbench/errors.hpp"
#include "pemsbench/kernels.hpp"
#include "pemsbench/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

namespace pemsbench {

using nlohmann::json;

void SaintConfig::validate() const {
    if (d_model < 1 || ff_hidden < 1 || head_hidden < 1 || n_layers < 1 ||
        n_heads < 1 || batch_size < 1) {
        throw ConfigError("saint: all widths/counts must be >= 1");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("saint: d_model must be divisible by n_heads");
    }
    if (intersample_head_width < 0) {
        throw ConfigError("saint: intersample_head_width must be >= 0");
    }
    if (!(learning_rate > 0.0)) {
        throw ConfigError("saint: learning_rate must be > 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("saint: betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("saint: adam_eps must be > 0");
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("saint: weight_decay must be >= 0");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ConfigError("saint: dropout must lie in [0, 1)");
    }
    if (train_epochs < 0) throw ConfigError("saint: train_epochs must be >= 0");
    if (train_steps && *train_steps < 0) {
        throw ConfigError("saint: train_steps must be >= 0");
    }
}

Parameter& SaintModel::param(const std::string& name) {
    auto it = param_index.find(name);
    if (it == param_index.end()) {
        throw NumericError("saint: unknown parameter \"" + name + "\"");
    }
    return params[it->second];
}

const Parameter& SaintModel::param(const std::string& name) const {
    auto it = param_index.find(name);
    if (it == param_index.end()) {
        throw NumericError("saint: unknown parameter \"" + name + "\"");
    }
    return params[it->second];
}

void SaintModel::zero_grads() {
    for (auto& p : params) p.zero_grad();
}

std::int64_t SaintModel::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
}

namespace {

enum class Init { glorot, zero, one };

void add_param(SaintModel& model, rng::Stream& root, const std::string& name,
               std::vector<int> shape, Init init) {
    Tensor t = Tensor::zeros(shape);
    if (init == Init::one) {
        t.fill(1.0);
    } else if (init == Init::glorot) {
        // fan_in/fan_out from the first/last dims; vectors count as 1 -> d.
        const int fan_in = shape.size() >= 2 ? shape[0] : 1;
        const int fan_out = shape.size() >= 2 ? shape[1] : shape[0];
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        rng::Stream s = root.derive(name.c_str());
        for (auto& x : t.data) x = s.next_uniform(-a, a);
    }
    model.param_index[name] = model.params.size();
    model.params.emplace_back(name, std::move(t));
}

std::string layer_prefix(int layer, const char* kind) {
    return "layer" + std::to_string(layer) + "." + kind + ".";
}

void add_block_params(SaintModel& model, rng::Stream& root,
                      const std::string& prefix, int width, int qkv_width,
                      int ff_hidden) {
    add_param(model, root, prefix + "wq", {width, qkv_width}, Init::glorot);
    add_param(model, root, prefix + "bq", {qkv_width}, Init::zero);
    add_param(model, root, prefix + "wk", {width, qkv_width}, Init::glorot);
    add_param(model, root, prefix + "bk", {qkv_width}, Init::zero);
    add_param(model, root, prefix + "wv", {width, qkv_width}, Init::glorot);
    add_param(model, root, prefix + "bv", {qkv_width}, Init::zero);
    add_param(model, root, prefix + "wo", {qkv_width, width}, Init::glorot);
    add_param(model, root, prefix + "bo", {width}, Init::zero);
    add_param(model, root, prefix + "ln1.gain", {width}, Init::one);
    add_param(model, root, prefix + "ln1.bias", {width}, Init::zero);
    add_param(model, root, prefix + "ffn.w1", {width, ff_hidden},
              Init::glorot);
    add_param(model, root, prefix + "ffn.b1", {ff_hidden}, Init::zero);
    add_param(model, root, prefix + "ffn.w2", {ff_hidden, width},
              Init::glorot);
    add_param(model, root, prefix + "ffn.b2", {width}, Init::zero);
    add_param(model, root, prefix + "ln2.gain", {width}, Init::one);
    add_param(model, root, prefix + "ln2.bias", {width}, Init::zero);
}

} // namespace

SaintModel init_saint(const SaintConfig& config, int n_features) {
    config.validate();
    if (n_features < 1) throw ConfigError("saint: n_features must be >= 1");
    SaintModel m;
    m.config = config;
    m.n_features = n_features;
    m.feat_mean.assign(static_cast<size_t>(n_features), 0.0);
    m.feat_std.assign(static_cast<size_t>(n_features), 1.0);

    const int d = config.d_model;
    const int token_width = (n_features + 1) * d;
    const int mw = config.resolved_intersample_width();
    rng::Stream root(config.seed, "saint-init-v1");

    for (int t = 0; t < n_features; ++t) {
        const std::string p = "embed." + std::to_string(t) + ".";
        add_param(m, root, p + "w1", {1, d}, Init::glorot);
        add_param(m, root, p + "b1", {d}, Init::zero);
        add_param(m, root, p + "w2", {d, d}, Init::glorot);
        add_param(m, root, p + "b2", {d}, Init::zero);
    }
    add_param(m, root, "cls", {d}, Init::glorot);
    for (int l = 0; l < config.n_layers; ++l) {
        add_block_params(m, root, layer_prefix(l, "self"), d, d,
                         config.ff_hidden);
        add_block_params(m, root, layer_prefix(l, "inter"), token_width,
                         config.n_heads * mw, config.ff_hidden);
    }
    add_param(m, root, "head.w1", {d, config.head_hidden}, Init::glorot);
    add_param(m, root, "head.b1", {config.head_hidden}, Init::zero);
    add_param(m, root, "head.w2", {config.head_hidden, 1}, Init::glorot);
    add_param(m, root, "head.b2", {1}, Init::zero);
    return m;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 Tensor* weights) {
    if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) {
        throw NumericError("attention: operands must be 2-D");
    }
    const int m = q.dim(0), dk = q.dim(1);
    const int n = k.dim(0), dv = v.dim(1);
    if (k.dim(1) != dk) {
        throw NumericError("attention: Q/K width mismatch");
    }
    if (v.dim(0) != n) {
        throw NumericError("attention: K/V row count mismatch");
    }
    Tensor w = Tensor::zeros({m, n});
    kernels::active().matmul_nt(q.data.data(), k.data.data(), w.data.data(),
                                m, dk, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int r = 0; r < m; ++r) {
        double* row = w.data.data() + static_cast<std::int64_t>(r) * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            row[j] *= scale;
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= sum;
    }
    Tensor out = Tensor::zeros({m, dv});
    kernels::active().matmul_nn(w.data.data(), v.data.data(), out.data.data(),
                                m, n, dv);
    if (weights) *weights = std::move(w);
    return out;
}

namespace {

struct BlockRefs {
    Parameter &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo;
    Parameter &ln1g, &ln1b, &fw1, &fb1, &fw2, &fb2, &ln2g, &ln2b;
};

BlockRefs block_refs(const SaintModel& model, const std::string& prefix) {
    auto& m = const_cast<SaintModel&>(model);
    return {m.param(prefix + "wq"),      m.param(prefix + "bq"),
            m.param(prefix + "wk"),      m.param(prefix + "bk"),
            m.param(prefix + "wv"),      m.param(prefix + "bv"),
            m.param(prefix + "wo"),      m.param(prefix + "bo"),
            m.param(prefix + "ln1.gain"), m.param(prefix + "ln1.bias"),
            m.param(prefix + "ffn.w1"),  m.param(prefix + "ffn.b1"),
            m.param(prefix + "ffn.w2"),  m.param(prefix + "ffn.b2"),
            m.param(prefix + "ln2.gain"), m.param(prefix + "ln2.bias")};
}

std::vector<std::uint8_t> draw_keep_mask(rng::Stream& s, std::int64_t n,
                                         double drop_rate) {
    std::vector<std::uint8_t> mask(static_cast<size_t>(n));
    for (auto& x : mask) x = s.next_bernoulli(drop_rate) ? 0 : 1;
    return mask;
}

// Feed-forward + layer norms shared by the two block types. `x` is 2-D
// [rows, width]; returns a 2-D node of the same shape.
Tape::Id block_tail(Tape& tp, const BlockRefs& r, Tape::Id x, Tape::Id attn,
                    double drop, rng::Stream* drop_rng) {
    Tape::Id x1 = tp.layer_norm(tp.add(x, attn), tp.leaf(r.ln1g),
                                tp.leaf(r.ln1b));
    Tape::Id hidden = tp.gelu(
        tp.add_rowvec(tp.matmul(x1, tp.leaf(r.fw1)), tp.leaf(r.fb1)));
    if (drop > 0.0 && drop_rng) {
        hidden = tp.dropout(hidden,
                            draw_keep_mask(*drop_rng,
                                           tp.value(hidden).size(), drop),
                            1.0 - drop);
    }
    Tape::Id ff = tp.add_rowvec(tp.matmul(hidden, tp.leaf(r.fw2)),
                                tp.leaf(r.fb2));
    return tp.layer_norm(tp.add(x1, ff), tp.leaf(r.ln2g), tp.leaf(r.ln2b));
}

// Multi-head self-attention over the n+1 tokens of each sample.
Tape::Id self_block(Tape& tp, const SaintModel& model, int layer, Tape::Id x3,
                    int b, int tokens, double drop, rng::Stream* drop_rng) {
    const int d = model.config.d_model;
    const int heads = model.config.n_heads;
    const int dh = d / heads;
    const BlockRefs r = block_refs(model, layer_prefix(layer, "self"));

    Tape::Id xf = tp.reshape(x3, {b * tokens, d});
    Tape::Id q = tp.reshape(
        tp.add_rowvec(tp.matmul(xf, tp.leaf(r.wq)), tp.leaf(r.bq)),
        {b, tokens, d});
    Tape::Id k = tp.reshape(
        tp.add_rowvec(tp.matmul(xf, tp.leaf(r.wk)), tp.leaf(r.bk)),
        {b, tokens, d});
    Tape::Id v = tp.reshape(
        tp.add_rowvec(tp.matmul(xf, tp.leaf(r.wv)), tp.leaf(r.bv)),
        {b, tokens, d});

    std::vector<Tape::Id> ctx;
    ctx.reserve(static_cast<size_t>(heads));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int hIdx = 0; hIdx < heads; ++hIdx) {
        Tape::Id qh = tp.slice_lastdim(q, hIdx * dh, dh);
        Tape::Id kh = tp.slice_lastdim(k, hIdx * dh, dh);
        Tape::Id vh = tp.slice_lastdim(v, hIdx * dh, dh);
        Tape::Id w = tp.softmax_lastdim(
            tp.mul_scalar(tp.bmm_nt(qh, kh), scale));
        ctx.push_back(tp.bmm_nn(w, vh));
    }
    Tape::Id merged = tp.reshape(tp.concat_lastdim(ctx), {b * tokens, d});
    Tape::Id attn = tp.add_rowvec(tp.matmul(merged, tp.leaf(r.wo)),
                                  tp.leaf(r.bo));
    if (drop > 0.0 && drop_rng) {
        attn = tp.dropout(attn,
                          draw_keep_mask(*drop_rng, tp.value(attn).size(),
                                         drop),
                          1.0 - drop);
    }
    Tape::Id out = block_tail(tp, r, xf, attn, drop, drop_rng);
    return tp.reshape(out, {b, tokens, d});
}

// Intersample attention: each sample's tokens are concatenated into one
// row vector and attention runs across the batch dimension.
Tape::Id intersample_block(Tape& tp, const SaintModel& model, int layer,
                           Tape::Id x3, int b, int tokens, double drop,
                           rng::Stream* drop_rng) {
    const int d = model.config.d_model;
    const int heads = model.config.n_heads;
    const int mw = model.config.resolved_intersample_width();
    const int width = tokens * d;
    const BlockRefs r = block_refs(model, layer_prefix(layer, "inter"));

    Tape::Id rows = tp.reshape(x3, {b, width});
    Tape::Id q = tp.add_rowvec(tp.matmul(rows, tp.leaf(r.wq)), tp.leaf(r.bq));
    Tape::Id k = tp.add_rowvec(tp.matmul(rows, tp.leaf(r.wk)), tp.leaf(r.bk));
    Tape::Id v = tp.add_rowvec(tp.matmul(rows, tp.leaf(r.wv)), tp.leaf(r.bv));

    std::vector<Tape::Id> ctx;
    ctx.reserve(static_cast<size_t>(heads));
    const double scale = 1.0 / std::sqrt(static_cast<double>(mw));
    for (int hIdx = 0; hIdx < heads; ++hIdx) {
        Tape::Id qh = tp.slice_lastdim(q, hIdx * mw, mw);
        Tape::Id kh = tp.slice_lastdim(k, hIdx * mw, mw);
        Tape::Id vh = tp.slice_lastdim(v, hIdx * mw, mw);
        Tape::Id w = tp.softmax_lastdim(
            tp.mul_scalar(tp.matmul_nt(qh, kh), scale));
        ctx.push_back(tp.matmul(w, vh));
    }
    Tape::Id merged = tp.concat_lastdim(ctx);
    Tape::Id attn = tp.add_rowvec(tp.matmul(merged, tp.leaf(r.wo)),
                                  tp.leaf(r.bo));
    if (drop > 0.0 && drop_rng) {
        attn = tp.dropout(attn,
                          draw_keep_mask(*drop_rng, tp.value(attn).size(),
                                         drop),
                          1.0 - drop);
    }
    Tape::Id out = block_tail(tp, r, rows, attn, drop, drop_rng);
    return tp.reshape(out, {b, tokens, d});
}

} // namespace

Tape::Id saint_forward_graph(Tape& tp, const SaintModel& model,
                             const double* rows_std, int batch, bool training,
                             rng::Stream* drop_rng) {
    const int n = model.n_features;
    const int d = model.config.d_model;
    const int tokens = n + 1;
    const double drop = training ? model.config.dropout : 0.0;
    auto& m = const_cast<SaintModel&>(model);

    std::vector<Tape::Id> toks;
    toks.reserve(static_cast<size_t>(tokens));
    toks.push_back(tp.broadcast_rows(tp.leaf(m.param("cls")), batch));
    for (int t = 0; t < n; ++t) {
        Tensor col = Tensor::zeros({batch, 1});
        for (int i = 0; i < batch; ++i) {
            col.data[static_cast<size_t>(i)] =
                rows_std[static_cast<std::int64_t>(i) * n + t];
        }
        const std::string p = "embed." + std::to_string(t) + ".";
        Tape::Id x = tp.constant(std::move(col));
        Tape::Id h = tp.relu(tp.add_rowvec(
            tp.matmul(x, tp.leaf(m.param(p + "w1"))),
            tp.leaf(m.param(p + "b1"))));
        toks.push_back(tp.add_rowvec(
            tp.matmul(h, tp.leaf(m.param(p + "w2"))),
            tp.leaf(m.param(p + "b2"))));
    }
    Tape::Id x3 = tp.reshape(tp.concat_lastdim(toks), {batch, tokens, d});

    for (int l = 0; l < model.config.n_layers; ++l) {
        x3 = self_block(tp, model, l, x3, batch, tokens, drop, drop_rng);
        x3 = intersample_block(tp, model, l, x3, batch, tokens, drop,
                               drop_rng);
    }

    Tape::Id cls = tp.slice_lastdim(tp.reshape(x3, {batch, tokens * d}), 0, d);
    Tape::Id h = tp.relu(tp.add_rowvec(
        tp.matmul(cls, tp.leaf(m.param("head.w1"))),
        tp.leaf(m.param("head.b1"))));
    return tp.add_rowvec(tp.matmul(h, tp.leaf(m.param("head.w2"))),
                         tp.leaf(m.param("head.b2")));
}

std::vector<double> saint_forward(const SaintModel& model,
                                  const std::vector<double>& rows_std,
                                  int batch) {
    if (batch < 1 ||
        static_cast<std::int64_t>(rows_std.size()) !=
            static_cast<std::int64_t>(batch) * model.n_features) {
        throw NumericError("saint_forward: rows/batch size mismatch");
    }
    Tape tp;
    const Tape::Id out = saint_forward_graph(tp, model, rows_std.data(),
                                             batch);
    const Tensor& v = tp.value(out);
    return std::vector<double>(v.data.begin(), v.data.end());
}

std::vector<double> predict_saint(const SaintModel& model,
                                  const Table& table) {
    const int n = model.n_features;
    if (table.n_cols() < n) {
        throw DataError("predict_saint: table has fewer columns than model "
                        "features");
    }
    // Feature order must match training; the eval harness passes tables
    // whose non-target columns line up with the model by construction.
    const std::int64_t rows = table.n_rows();
    std::vector<double> out;
    out.reserve(static_cast<size_t>(rows));
    const int bs = model.config.batch_size;
    std::vector<double> buf;
    for (std::int64_t start = 0; start < rows; start += bs) {
        const int b = static_cast<int>(std::min<std::int64_t>(bs,
                                                              rows - start));
        buf.assign(static_cast<size_t>(b) * n, 0.0);
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < n; ++j) {
                if (table.is_missing(start + i, j)) {
                    throw DataError("predict_saint: masked cell at row " +
                                    std::to_string(start + i));
                }
                buf[static_cast<size_t>(i) * n + j] =
                    (table.value(start + i, j) -
                     model.feat_mean[static_cast<size_t>(j)]) /
                    model.feat_std[static_cast<size_t>(j)];
            }
        }
        Tape tp;
        const Tape::Id node = saint_forward_graph(tp, model, buf.data(), b);
        const Tensor& pred = tp.value(node);
        for (int i = 0; i < b; ++i) {
            out.push_back(pred.data[static_cast<size_t>(i)] *
                              model.target_std +
                          model.target_mean);
        }
    }
    return out;
}

SaintTrainResult train_saint(const Table& table, const std::string& target,
                             const SaintConfig& config,
                             const std::vector<std::string>& excluded) {
    config.validate();
    const std::int64_t n_rows = table.n_rows();
    if (n_rows < 2) {
        throw DataError("saint: need at least 2 rows to standardize");
    }
    const int tcol = table.col_index(target);

    std::vector<int> feat_cols;
    for (int c = 0; c < table.n_cols(); ++c) {
        const std::string& name = table.column_names[static_cast<size_t>(c)];
        if (name == target) continue;
        if (std::find(excluded.begin(), excluded.end(), name) !=
            excluded.end()) {
            continue;
        }
        feat_cols.push_back(c);
    }
    if (feat_cols.empty()) throw DataError("saint: no feature columns");
    for (int c = 0; c < table.n_cols(); ++c) {
        for (std::int64_t r = 0; r < n_rows; ++r) {
            if (table.is_missing(r, c)) {
                throw DataError("saint: masked cell at row " +
                                std::to_string(r) + "; train on a cleaned "
                                "table");
            }
        }
    }
    const int n = static_cast<int>(feat_cols.size());

    SaintTrainResult result;
    result.model = init_saint(config, n);
    SaintModel& model = result.model;

    // z-score statistics from the training data (population std; constant
    // columns keep scale 1).
    for (int j = 0; j < n; ++j) {
        const auto& col = table.columns[static_cast<size_t>(feat_cols[j])];
        double mean = 0.0;
        for (double v : col) mean += v;
        mean /= static_cast<double>(n_rows);
        double var = 0.0;
        for (double v : col) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n_rows);
        model.feat_mean[static_cast<size_t>(j)] = mean;
        model.feat_std[static_cast<size_t>(j)] =
            var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    {
        const auto& y = table.columns[static_cast<size_t>(tcol)];
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(n_rows);
        double var = 0.0;
        for (double v : y) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n_rows);
        model.target_mean = mean;
        model.target_std = var > 1e-24 ? std::sqrt(var) : 1.0;
    }

    std::vector<double> x_std(static_cast<size_t>(n_rows) * n);
    std::vector<double> y_std(static_cast<size_t>(n_rows));
    for (std::int64_t r = 0; r < n_rows; ++r) {
        for (int j = 0; j < n; ++j) {
            x_std[static_cast<size_t>(r) * n + j] =
                (table.value(r, feat_cols[static_cast<size_t>(j)]) -
                 model.feat_mean[static_cast<size_t>(j)]) /
                model.feat_std[static_cast<size_t>(j)];
        }
        y_std[static_cast<size_t>(r)] =
            (table.value(r, tcol) - model.target_mean) / model.target_std;
    }

    const int bs = config.batch_size;
    const std::int64_t batches_per_epoch = (n_rows + bs - 1) / bs;
    const std::int64_t total_steps =
        config.train_steps ? *config.train_steps
                           : static_cast<std::int64_t>(config.train_epochs) *
                                 batches_per_epoch;

    // AdamW state.
    std::vector<Tensor> m_state, v_state;
    m_state.reserve(model.params.size());
    v_state.reserve(model.params.size());
    for (const auto& p : model.params) {
        m_state.push_back(Tensor::zeros(p.value.shape));
        v_state.push_back(Tensor::zeros(p.value.shape));
    }

    rng::Stream shuffle_root = rng::Stream(config.seed, "saint-train-v1");
    rng::Stream drop_rng = shuffle_root.derive("dropout");
    std::vector<std::int64_t> order(static_cast<size_t>(n_rows));
    for (std::int64_t i = 0; i < n_rows; ++i) order[static_cast<size_t>(i)] = i;

    std::vector<double> batch_x;
    std::int64_t step = 0;
    std::int64_t t_adam = 0;
    for (std::int64_t epoch = 0; step < total_steps; ++epoch) {
        rng::Stream sh = shuffle_root.derive("shuffle").derive(
            static_cast<std::uint64_t>(epoch));
        for (std::int64_t i = n_rows - 1; i > 0; --i) {
            const std::int64_t j = static_cast<std::int64_t>(
                sh.next_below(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(j)]);
        }
        for (std::int64_t start = 0; start < n_rows && step < total_steps;
             start += bs, ++step) {
            const int b = static_cast<int>(
                std::min<std::int64_t>(bs, n_rows - start));
            batch_x.assign(static_cast<size_t>(b) * n, 0.0);
            Tensor targets = Tensor::zeros({b, 1});
            for (int i = 0; i < b; ++i) {
                const std::int64_t r =
                    order[static_cast<size_t>(start + i)];
                for (int j = 0; j < n; ++j) {
                    batch_x[static_cast<size_t>(i) * n + j] =
                        x_std[static_cast<size_t>(r) * n + j];
                }
                targets.data[static_cast<size_t>(i)] =
                    y_std[static_cast<size_t>(r)];
            }

            model.zero_grads();
            Tape tp;
            const Tape::Id out = saint_forward_graph(
                tp, model, batch_x.data(), b, true,
                config.dropout > 0.0 ? &drop_rng : nullptr);
            const Tape::Id loss =
                tp.mse_loss(out, tp.constant(std::move(targets)));
            const double loss_value = tp.value(loss).data[0];
            if (!std::isfinite(loss_value)) {
                throw NumericError("saint: non-finite loss at step " +
                                   std::to_string(step));
            }
            tp.backward(loss);
            result.loss_curve.push_back(loss_value);

            ++t_adam;
            const double bc1 =
                1.0 - std::pow(config.beta1, static_cast<double>(t_adam));
            const double bc2 =
                1.0 - std::pow(config.beta2, static_cast<double>(t_adam));
            const double lr_t = config.learning_rate / bc1;
            for (size_t pi = 0; pi < model.params.size(); ++pi) {
                Parameter& p = model.params[pi];
                kernels::active().adamw_update(
                    p.value.data.data(), m_state[pi].data.data(),
                    v_state[pi].data.data(), p.grad.data.data(),
                    p.value.size(), config.learning_rate, lr_t, config.beta1,
                    config.beta2, bc2, config.adam_eps, config.weight_decay);
            }
        }
    }
    return result;
}

double gradient_check(SaintModel& model, const std::vector<double>& rows_std,
                      const std::vector<double>& targets_std, int batch,
                      const GradCheckOptions& options) {
    if (static_cast<std::int64_t>(rows_std.size()) !=
            static_cast<std::int64_t>(batch) * model.n_features ||
        static_cast<std::int64_t>(targets_std.size()) != batch) {
        throw NumericError("gradient_check: input size mismatch");
    }
    const auto loss_at = [&]() {
        Tape tp;
        const Tape::Id out =
            saint_forward_graph(tp, model, rows_std.data(), batch);
        Tensor t = Tensor::zeros({batch, 1});
        for (int i = 0; i < batch; ++i) {
            t.data[static_cast<size_t>(i)] =
                targets_std[static_cast<size_t>(i)];
        }
        const Tape::Id loss = tp.mse_loss(out, tp.constant(std::move(t)));
        return tp.value(loss).data[0];
    };

    // Analytic pass.
    model.zero_grads();
    {
        Tape tp;
        const Tape::Id out =
            saint_forward_graph(tp, model, rows_std.data(), batch);
        Tensor t = Tensor::zeros({batch, 1});
        for (int i = 0; i < batch; ++i) {
            t.data[static_cast<size_t>(i)] =
                targets_std[static_cast<size_t>(i)];
        }
        const Tape::Id loss = tp.mse_loss(out, tp.constant(std::move(t)));
        tp.backward(loss);
    }

    rng::Stream pick(options.seed, "gradcheck-v1");
    const double eps = options.epsilon;
    double max_rel = 0.0;
    for (auto& p : model.params) {
        const std::int64_t sz = p.value.size();
        std::vector<std::int64_t> idx = {0, sz / 2, sz - 1,
                                         static_cast<std::int64_t>(
                                             pick.next_below(
                                                 static_cast<std::uint64_t>(
                                                     sz)))};
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        for (std::int64_t i : idx) {
            double analytic = p.grad.data[static_cast<size_t>(i)];
            if (!std::isfinite(analytic)) {
                throw NumericError("gradient_check: non-finite gradient in " +
                                   p.name);
            }
            if (!options.corrupt_param.empty() &&
                p.name == options.corrupt_param) {
                analytic *= options.corrupt_scale;
            }
            const double saved = p.value.data[static_cast<size_t>(i)];
            p.value.data[static_cast<size_t>(i)] = saved + eps;
            const double lp = loss_at();
            p.value.data[static_cast<size_t>(i)] = saved - eps;
            const double lm = loss_at();
            p.value.data[static_cast<size_t>(i)] = saved;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double rel =
                std::fabs(analytic - numeric) /
                std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

std::string saint_to_json(const SaintModel& model) {
    json j;
    j["format"] = "pemsbench-saint-v1";
    json c;
    c["d_model"] = model.config.d_model;
    c["n_heads"] = model.config.n_heads;
    c["n_layers"] = model.config.n_layers;
    c["batch_size"] = model.config.batch_size;
    c["ff_hidden"] = model.config.ff_hidden;
    c["head_hidden"] = model.config.head_hidden;
    c["intersample_head_width"] = model.config.intersample_head_width;
    c["learning_rate"] = model.config.learning_rate;
    c["beta1"] = model.config.beta1;
    c["beta2"] = model.config.beta2;
    c["adam_eps"] = model.config.adam_eps;
    c["weight_decay"] = model.config.weight_decay;
    c["dropout"] = model.config.dropout;
    c["train_epochs"] = model.config.train_epochs;
    if (model.config.train_steps) {
        c["train_steps"] = *model.config.train_steps;
    } else {
        c["train_steps"] = nullptr;
    }
    c["seed"] = model.config.seed;
    j["config"] = c;
    j["n_features"] = model.n_features;
    j["feat_mean"] = model.feat_mean;
    j["feat_std"] = model.feat_std;
    j["target_mean"] = model.target_mean;
    j["target_std"] = model.target_std;
    json tensors = json::object();
    for (const auto& p : model.params) {
        json t;
        t["shape"] = p.value.shape;
        t["data"] = p.value.data;
        tensors[p.name] = t;
    }
    j["tensors"] = tensors;
    return j.dump();
}

SaintModel saint_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format").get<std::string>() != "pemsbench-saint-v1") {
        throw DataError("saint: unknown checkpoint format");
    }
    SaintConfig c;
    const json& cj = j.at("config");
    c.d_model = cj.at("d_model").get<int>();
    c.n_heads = cj.at("n_heads").get<int>();
    c.n_layers = cj.at("n_layers").get<int>();
    c.batch_size = cj.at("batch_size").get<int>();
    c.ff_hidden = cj.at("ff_hidden").get<int>();
    c.head_hidden = cj.at("head_hidden").get<int>();
    c.intersample_head_width = cj.at("intersample_head_width").get<int>();
    c.learning_rate = cj.at("learning_rate").get<double>();
    c.beta1 = cj.at("beta1").get<double>();
    c.beta2 = cj.at("beta2").get<double>();
    c.adam_eps = cj.at("adam_eps").get<double>();
    c.weight_decay = cj.at("weight_decay").get<double>();
    c.dropout = cj.at("dropout").get<double>();
    c.train_epochs = cj.at("train_epochs").get<int>();
    if (!cj.at("train_steps").is_null()) {
        c.train_steps = cj.at("train_steps").get<std::int64_t>();
    }
    c.seed = cj.at("seed").get<std::uint64_t>();

    SaintModel m = init_saint(c, j.at("n_features").get<int>());
    m.feat_mean = j.at("feat_mean").get<std::vector<double>>();
    m.feat_std = j.at("feat_std").get<std::vector<double>>();
    m.target_mean = j.at("target_mean").get<double>();
    m.target_std = j.at("target_std").get<double>();
    const json& tensors = j.at("tensors");
    for (auto& p : m.params) {
        const json& t = tensors.at(p.name);
        const auto shape = t.at("shape").get<std::vector<int>>();
        if (shape != p.value.shape) {
            throw DataError("saint: checkpoint shape mismatch for " + p.name);
        }
        p.value.data = t.at("data").get<std::vector<double>>();
    }
    return m;
}

void save_loss_curve_csv(const std::vector<double>& curve,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write \"" + path + "\"");
    out << "step,loss\n";
    char buf[40];
    for (size_t i = 0; i < curve.size(); ++i) {
        out << i << ',';
        auto r = std::to_chars(buf, buf + sizeof(buf), curve[i]);
        out.write(buf, r.ptr - buf);
        out << '\n';
    }
}

} // namespace pemsbench
