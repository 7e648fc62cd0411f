#include "pemsbench/gbdt.hpp"

#include "pemsbench/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pemsbench {

using nlohmann::json;

void GbdtParams::validate() const {
    if (n_rounds < 0) throw ConfigError("gbdt: n_rounds must be >= 0");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw ConfigError("gbdt: learning_rate must be in (0, 1]");
    }
    if (max_depth < 0) throw ConfigError("gbdt: max_depth must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("gbdt: lambda must be >= 0");
    if (!(gamma >= 0.0)) throw ConfigError("gbdt: gamma must be >= 0");
    if (!(min_child_weight >= 0.0)) {
        throw ConfigError("gbdt: min_child_weight must be >= 0");
    }
    if (base_score && !std::isfinite(*base_score)) {
        throw ConfigError("gbdt: base_score must be finite");
    }
}

double Tree::route(const double* values, const std::uint8_t* missing) const {
    if (nodes.empty()) return 0.0;
    int idx = 0;
    while (!nodes[static_cast<size_t>(idx)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<size_t>(idx)];
        bool go_left;
        if (missing[n.feature]) {
            go_left = n.default_left;
        } else {
            go_left = values[n.feature] < n.threshold;
        }
        idx = go_left ? n.left : n.right;
    }
    return nodes[static_cast<size_t>(idx)].weight;
}

double GbdtModel::predict_row(const double* values,
                              const std::uint8_t* missing) const {
    double acc = 0.0;
    for (const auto& t : trees) acc += t.route(values, missing);
    return base_score + params.learning_rate * acc;
}

std::optional<SplitDecision> best_split_feature(
    std::span<const double> grads, std::span<const double> hessians,
    std::span<const double> values, std::span<const std::uint8_t> missing,
    const GbdtParams& params, int feature_index) {
    const size_t n = grads.size();
    if (hessians.size() != n || values.size() != n || missing.size() != n) {
        throw DataError("best_split: input length mismatch");
    }
    struct Entry {
        double v, g, h;
    };
    std::vector<Entry> present;
    present.reserve(n);
    double total_g = 0.0, total_h = 0.0, miss_g = 0.0, miss_h = 0.0;
    for (size_t i = 0; i < n; ++i) {
        total_g += grads[i];
        total_h += hessians[i];
        if (missing[i]) {
            miss_g += grads[i];
            miss_h += hessians[i];
        } else {
            present.push_back({values[i], grads[i], hessians[i]});
        }
    }
    if (present.size() < 2) return std::nullopt;
    std::stable_sort(present.begin(), present.end(),
                     [](const Entry& a, const Entry& b) { return a.v < b.v; });

    const double lambda = params.lambda;
    const double parent = total_g * total_g / (total_h + lambda);
    SplitDecision best;
    double best_gain = -std::numeric_limits<double>::infinity();
    double left_g = 0.0, left_h = 0.0;
    for (size_t i = 0; i + 1 < present.size(); ++i) {
        left_g += present[i].g;
        left_h += present[i].h;
        const double a = present[i].v;
        const double b = present[i + 1].v;
        if (a == b) continue;
        const double thr = 0.5 * (a + b);
        if (!(thr > a && thr <= b)) continue; // adjacent-double degeneracy
        const double right_g = total_g - miss_g - left_g;
        const double right_h = total_h - miss_h - left_h;
        // Candidate order is fixed (threshold ascending, default-left
        // first) and only a strictly larger gain replaces the incumbent,
        // so ties resolve deterministically.
        for (int dir = 0; dir < 2; ++dir) {
            const bool default_left = (dir == 0);
            const double gl = left_g + (default_left ? miss_g : 0.0);
            const double hl = left_h + (default_left ? miss_h : 0.0);
            const double gr = right_g + (default_left ? 0.0 : miss_g);
            const double hr = right_h + (default_left ? 0.0 : miss_h);
            if (hl < params.min_child_weight || hr < params.min_child_weight) {
                continue;
            }
            const double gain =
                0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                       parent) -
                params.gamma;
            if (gain > best_gain) {
                best_gain = gain;
                best = {feature_index, thr, default_left, gain};
            }
        }
    }
    if (!(best_gain > 0.0)) return std::nullopt;
    return best;
}

std::optional<SplitDecision> best_split(
    std::span<const double> grads, std::span<const double> hessians,
    const std::vector<std::span<const double>>& feature_values,
    const std::vector<std::span<const std::uint8_t>>& feature_missing,
    const GbdtParams& params) {
    if (feature_values.size() != feature_missing.size()) {
        throw DataError("best_split: feature column/mask count mismatch");
    }
    std::optional<SplitDecision> best;
    for (size_t f = 0; f < feature_values.size(); ++f) {
        auto cand =
            best_split_feature(grads, hessians, feature_values[f],
                               feature_missing[f], params, static_cast<int>(f));
        if (cand && (!best || cand->gain > best->gain)) best = cand;
    }
    return best;
}

namespace {

struct TreeBuilder {
    const std::vector<const std::vector<double>*>& cols;
    const std::vector<const std::vector<std::uint8_t>*>& masks;
    const std::vector<double>& g;
    const std::vector<double>& h;
    const GbdtParams& params;
    const SplitObserver& observer;

    Tree tree;

    // Scratch reused across nodes.
    std::vector<double> sub_g, sub_h, sub_v;
    std::vector<std::uint8_t> sub_m;

    int build(const std::vector<std::int64_t>& rows, int depth) {
        const int idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        double node_g = 0.0, node_h = 0.0;
        for (auto r : rows) {
            node_g += g[static_cast<size_t>(r)];
            node_h += h[static_cast<size_t>(r)];
        }

        std::optional<SplitDecision> best;
        if (depth < params.max_depth && rows.size() >= 2) {
            sub_g.clear();
            sub_h.clear();
            for (auto r : rows) {
                sub_g.push_back(g[static_cast<size_t>(r)]);
                sub_h.push_back(h[static_cast<size_t>(r)]);
            }
            for (size_t f = 0; f < cols.size(); ++f) {
                sub_v.clear();
                sub_m.clear();
                const auto& col = *cols[f];
                const auto& mask = *masks[f];
                for (auto r : rows) {
                    sub_v.push_back(col[static_cast<size_t>(r)]);
                    sub_m.push_back(mask[static_cast<size_t>(r)]);
                }
                auto cand = best_split_feature(sub_g, sub_h, sub_v, sub_m,
                                               params, static_cast<int>(f));
                if (cand && (!best || cand->gain > best->gain)) best = cand;
            }
        }

        if (!best) {
            TreeNode& leaf = tree.nodes[static_cast<size_t>(idx)];
            leaf.weight = -node_g / (node_h + params.lambda);
            return idx;
        }

        if (observer) observer({rows, g, h, *best});

        std::vector<std::int64_t> left_rows, right_rows;
        const auto& col = *cols[static_cast<size_t>(best->feature)];
        const auto& mask = *masks[static_cast<size_t>(best->feature)];
        for (auto r : rows) {
            bool go_left;
            if (mask[static_cast<size_t>(r)]) {
                go_left = best->default_left;
            } else {
                go_left = col[static_cast<size_t>(r)] < best->threshold;
            }
            (go_left ? left_rows : right_rows).push_back(r);
        }

        {
            TreeNode& n = tree.nodes[static_cast<size_t>(idx)];
            n.feature = best->feature;
            n.threshold = best->threshold;
            n.default_left = best->default_left;
        }
        const int left = build(left_rows, depth + 1);
        const int right = build(right_rows, depth + 1);
        TreeNode& n = tree.nodes[static_cast<size_t>(idx)];
        n.left = left;
        n.right = right;
        return idx;
    }
};

void compact_tree(Tree& tree) {
    if (tree.nodes.empty()) return;
    Tree out;
    std::function<int(int)> copy = [&](int idx) -> int {
        const int ni = static_cast<int>(out.nodes.size());
        out.nodes.push_back(tree.nodes[static_cast<size_t>(idx)]);
        if (!out.nodes[static_cast<size_t>(ni)].is_leaf()) {
            const int l = copy(tree.nodes[static_cast<size_t>(idx)].left);
            const int r = copy(tree.nodes[static_cast<size_t>(idx)].right);
            out.nodes[static_cast<size_t>(ni)].left = l;
            out.nodes[static_cast<size_t>(ni)].right = r;
        }
        return ni;
    };
    copy(0);
    tree = std::move(out);
}

} // namespace

void prune_tree(Tree& tree, const std::vector<double>& gains,
                const std::vector<double>& node_g,
                const std::vector<double>& node_h, double lambda) {
    if (tree.nodes.empty()) return;
    std::function<void(int)> rec = [&](int idx) {
        TreeNode& n = tree.nodes[static_cast<size_t>(idx)];
        if (n.is_leaf()) return;
        rec(n.left);
        rec(n.right);
        if (tree.nodes[static_cast<size_t>(n.left)].is_leaf() &&
            tree.nodes[static_cast<size_t>(n.right)].is_leaf() &&
            gains[static_cast<size_t>(idx)] <= 0.0) {
            n.feature = -1;
            n.left = n.right = -1;
            n.weight = -node_g[static_cast<size_t>(idx)] /
                       (node_h[static_cast<size_t>(idx)] + lambda);
        }
    };
    rec(0);
    compact_tree(tree);
}

GbdtModel train_gbdt(const Table& table, const std::string& target,
                     const GbdtParams& params,
                     const std::vector<std::string>& excluded,
                     GbdtTrainLog* log, const SplitObserver& observer) {
    params.validate();
    const std::int64_t n = table.n_rows();
    if (n < 1) throw DataError("gbdt: empty table");
    const int tcol = table.col_index(target);
    for (std::int64_t r = 0; r < n; ++r) {
        if (table.is_missing(r, tcol)) {
            throw DataError("gbdt: masked target cell at row " +
                            std::to_string(r));
        }
    }

    GbdtModel model;
    model.params = params;
    std::vector<const std::vector<double>*> cols;
    std::vector<const std::vector<std::uint8_t>*> masks;
    for (int c = 0; c < table.n_cols(); ++c) {
        const std::string& name = table.column_names[static_cast<size_t>(c)];
        if (name == target) continue;
        if (std::find(excluded.begin(), excluded.end(), name) !=
            excluded.end()) {
            continue;
        }
        model.feature_names.push_back(name);
        cols.push_back(&table.columns[static_cast<size_t>(c)]);
        masks.push_back(&table.missing[static_cast<size_t>(c)]);
    }
    if (cols.empty()) throw DataError("gbdt: no feature columns");

    const std::vector<double>& y = table.columns[static_cast<size_t>(tcol)];
    double base;
    if (params.base_score) {
        base = *params.base_score;
    } else {
        double s = 0.0;
        for (double v : y) s += v;
        base = s / static_cast<double>(n);
    }
    model.base_score = base;

    std::vector<double> pred(static_cast<size_t>(n), base);
    std::vector<double> g(static_cast<size_t>(n));
    std::vector<double> h(static_cast<size_t>(n), 1.0);
    std::vector<std::int64_t> all_rows(static_cast<size_t>(n));
    for (std::int64_t r = 0; r < n; ++r) all_rows[static_cast<size_t>(r)] = r;

    for (int round = 0; round < params.n_rounds; ++round) {
        for (std::int64_t r = 0; r < n; ++r) {
            g[static_cast<size_t>(r)] = pred[static_cast<size_t>(r)] -
                                        y[static_cast<size_t>(r)];
        }
        TreeBuilder builder{cols, masks, g, h, params, observer, {}, {}, {},
                            {}, {}};
        builder.build(all_rows, 0);
        model.trees.push_back(std::move(builder.tree));
        const Tree& tree = model.trees.back();

        // Update cached predictions and the loss curve.
        std::vector<double> row_vals(cols.size());
        std::vector<std::uint8_t> row_mask(cols.size());
        double sse = 0.0;
        for (std::int64_t r = 0; r < n; ++r) {
            for (size_t f = 0; f < cols.size(); ++f) {
                row_vals[f] = (*cols[f])[static_cast<size_t>(r)];
                row_mask[f] = (*masks[f])[static_cast<size_t>(r)];
            }
            pred[static_cast<size_t>(r)] +=
                params.learning_rate * tree.route(row_vals.data(),
                                                  row_mask.data());
            const double d = pred[static_cast<size_t>(r)] -
                             y[static_cast<size_t>(r)];
            sse += d * d;
        }
        if (log) log->round_mse.push_back(sse / static_cast<double>(n));
    }
    return model;
}

std::vector<double> predict_gbdt(const GbdtModel& model, const Table& table) {
    std::vector<int> col_of_feature;
    col_of_feature.reserve(model.feature_names.size());
    for (const auto& name : model.feature_names) {
        col_of_feature.push_back(table.col_index(name)); // throws if absent
    }
    const std::int64_t n = table.n_rows();
    std::vector<double> out(static_cast<size_t>(n));
    std::vector<double> vals(model.feature_names.size());
    std::vector<std::uint8_t> mask(model.feature_names.size());
    for (std::int64_t r = 0; r < n; ++r) {
        for (size_t f = 0; f < col_of_feature.size(); ++f) {
            const int c = col_of_feature[f];
            vals[f] = table.value(r, c);
            mask[f] = table.is_missing(r, c) ? 1 : 0;
        }
        out[static_cast<size_t>(r)] = model.predict_row(vals.data(),
                                                        mask.data());
    }
    return out;
}

std::vector<std::pair<std::string, std::int64_t>> feature_importance(
    const GbdtModel& model) {
    std::vector<std::int64_t> counts(model.feature_names.size(), 0);
    for (const auto& tree : model.trees) {
        for (const auto& n : tree.nodes) {
            if (!n.is_leaf()) counts[static_cast<size_t>(n.feature)]++;
        }
    }
    std::vector<size_t> order(counts.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (counts[a] != counts[b]) return counts[a] > counts[b];
        return a < b;
    });
    std::vector<std::pair<std::string, std::int64_t>> out;
    out.reserve(order.size());
    for (size_t i : order) out.emplace_back(model.feature_names[i], counts[i]);
    return out;
}

namespace {

json node_to_json(const Tree& tree, int idx) {
    const TreeNode& n = tree.nodes[static_cast<size_t>(idx)];
    json j;
    if (n.is_leaf()) {
        j["weight"] = n.weight;
        return j;
    }
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["default_left"] = n.default_left;
    j["left"] = node_to_json(tree, n.left);
    j["right"] = node_to_json(tree, n.right);
    return j;
}

int node_from_json(const json& j, Tree& tree) {
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("weight")) {
        tree.nodes[static_cast<size_t>(idx)].weight =
            j.at("weight").get<double>();
        return idx;
    }
    tree.nodes[static_cast<size_t>(idx)].feature = j.at("feature").get<int>();
    tree.nodes[static_cast<size_t>(idx)].threshold =
        j.at("threshold").get<double>();
    tree.nodes[static_cast<size_t>(idx)].default_left =
        j.at("default_left").get<bool>();
    const int l = node_from_json(j.at("left"), tree);
    const int r = node_from_json(j.at("right"), tree);
    tree.nodes[static_cast<size_t>(idx)].left = l;
    tree.nodes[static_cast<size_t>(idx)].right = r;
    return idx;
}

} // namespace

std::string gbdt_to_json(const GbdtModel& model) {
    json j;
    j["format"] = "pemsbench-gbdt-v1";
    json p;
    p["n_rounds"] = model.params.n_rounds;
    p["learning_rate"] = model.params.learning_rate;
    p["max_depth"] = model.params.max_depth;
    p["lambda"] = model.params.lambda;
    p["gamma"] = model.params.gamma;
    p["min_child_weight"] = model.params.min_child_weight;
    if (model.params.base_score) {
        p["base_score"] = *model.params.base_score;
    } else {
        p["base_score"] = nullptr;
    }
    j["params"] = p;
    j["base_score"] = model.base_score;
    j["feature_names"] = model.feature_names;
    json trees = json::array();
    for (const auto& t : model.trees) {
        trees.push_back(t.nodes.empty() ? json::object()
                                        : node_to_json(t, 0));
    }
    j["trees"] = trees;
    return j.dump(2);
}

GbdtModel gbdt_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format").get<std::string>() != "pemsbench-gbdt-v1") {
        throw DataError("gbdt: unknown model format");
    }
    GbdtModel m;
    const json& p = j.at("params");
    m.params.n_rounds = p.at("n_rounds").get<int>();
    m.params.learning_rate = p.at("learning_rate").get<double>();
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.lambda = p.at("lambda").get<double>();
    m.params.gamma = p.at("gamma").get<double>();
    m.params.min_child_weight = p.at("min_child_weight").get<double>();
    if (!p.at("base_score").is_null()) {
        m.params.base_score = p.at("base_score").get<double>();
    }
    m.base_score = j.at("base_score").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& tj : j.at("trees")) {
        Tree t;
        if (!tj.empty()) node_from_json(tj, t);
        m.trees.push_back(std::move(t));
    }
    return m;
}

} // namespace pemsbench
