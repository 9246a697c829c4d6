#include "rulprune/causal.hpp"

#include "ci_internal.hpp"
#include "rulprune/errors.hpp"
#include "rulprune/io.hpp"
#include "rulprune/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <utility>

namespace rulprune {

void CausalPruneConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
    if (!(gamma > 0.0)) throw ArgumentError("gamma must be positive");
    if (tau_max < 0) throw ArgumentError("tau_max must be >= 0");
    if (max_cond_set < 0) throw ArgumentError("max_cond_set must be >= 0");
    if (fixed_epsilon && !(*fixed_epsilon >= 0.0)) throw ArgumentError("fixed_epsilon must be >= 0");
    if (!(epsilon_floor >= 0.0)) throw ArgumentError("epsilon_floor must be >= 0");
}

namespace {

// Calls fn(subset) for every size-k subset of `items` in lexicographic order.
// Stops early when fn returns true; returns whether it did.
template <typename Fn>
bool for_each_subset(const std::vector<int>& items, std::size_t k, Fn&& fn) {
    const std::size_t m = items.size();
    if (k > m) return false;
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> subset(k);
    while (true) {
        for (std::size_t i = 0; i < k; ++i) subset[i] = items[idx[i]];
        if (fn(std::span<const int>(subset))) return true;
        if (k == 0) return false;
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == m - k + i - 1) --i;
        if (i == 0) return false;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

// Builds the design with one column per (variable, lag): column lag * V + v holds X[t - lag][v].
Eigen::MatrixXd lagged_design(const Eigen::Ref<const Eigen::MatrixXd>& x, int tau_max) {
    const Eigen::Index n = x.rows();
    const Eigen::Index v = x.cols();
    const Eigen::Index rows = n - tau_max;
    Eigen::MatrixXd out(rows, v * (tau_max + 1));
    for (int lag = 0; lag <= tau_max; ++lag) {
        out.middleCols(lag * v, v) = x.middleRows(tau_max - lag, rows);
    }
    return out;
}

}  // namespace

CausalGraph pcmci_graph(const Eigen::Ref<const Eigen::MatrixXd>& segment, const CausalPruneConfig& config) {
    config.validate();
    const int v = static_cast<int>(segment.cols());
    CausalGraph graph;
    graph.alpha = config.alpha;
    graph.strength = Eigen::MatrixXd::Zero(v, v);
    graph.significant = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(v, v, false);

    const int tau_max = config.tau_max;
    if (v < 2 || segment.rows() <= tau_max) return graph;
    const Eigen::MatrixXd design = lagged_design(segment, tau_max);
    const std::size_t n = static_cast<std::size_t>(design.rows());
    if (n < 4) return graph;
    const detail::CovarianceCi ci(design);
    // Keep at least one degree of freedom for the Fisher z statistic.
    const std::size_t max_cond = std::min<std::size_t>(static_cast<std::size_t>(config.max_cond_set), n - 4);
    const std::size_t max_mci = n - 4;

    auto node = [v](int var, int lag) { return lag * v + var; };
    auto var_of = [v](int col) { return col % v; };
    auto lag_of = [v](int col) { return col / v; };

    // candidates[j]: columns still linked to target j (lag 0), kept sorted.
    std::vector<std::vector<int>> candidates(static_cast<std::size_t>(v));
    for (int j = 0; j < v; ++j) {
        if (ci.is_constant(node(j, 0))) continue;
        for (int lag = 0; lag <= tau_max; ++lag) {
            for (int i = 0; i < v; ++i) {
                if (lag == 0 && i == j) continue;
                if (ci.is_constant(node(i, lag))) continue;
                candidates[static_cast<std::size_t>(j)].push_back(node(i, lag));
            }
        }
        std::sort(candidates[static_cast<std::size_t>(j)].begin(), candidates[static_cast<std::size_t>(j)].end());
    }

    // PC: removals at one conditioning-set size are decided from a snapshot and applied afterwards.
    for (std::size_t level = 0; level <= max_cond; ++level) {
        bool any_testable = false;
        const auto snapshot = candidates;
        std::vector<std::pair<int, int>> removals;  // (target, column)
        for (int j = 0; j < v; ++j) {
            const auto& cands = snapshot[static_cast<std::size_t>(j)];
            if (cands.size() < level + 1) continue;
            any_testable = true;
            for (int c : cands) {
                std::vector<int> others;
                others.reserve(cands.size() - 1);
                for (int o : cands) {
                    if (o != c) others.push_back(o);
                }
                const bool independent = for_each_subset(others, level, [&](std::span<const int> s) {
                    return ci.test(c, node(j, 0), s).p_value >= config.alpha;
                });
                if (independent) removals.emplace_back(j, c);
            }
        }
        for (auto [j, c] : removals) {
            auto erase = [](std::vector<int>& vec, int value) {
                vec.erase(std::remove(vec.begin(), vec.end(), value), vec.end());
            };
            erase(candidates[static_cast<std::size_t>(j)], c);
            if (lag_of(c) == 0) erase(candidates[static_cast<std::size_t>(var_of(c))], node(j, 0));
        }
        if (!any_testable) break;
    }

    // MCI: re-test each surviving link given both endpoints' surviving neighbours.
    auto record = [&](int i, int j, const CiResult& r) {
        if (!(r.p_value < config.alpha) || i == j) return;
        if (std::abs(r.rho) > std::abs(graph.strength(i, j))) {
            graph.strength(i, j) = r.rho;
            graph.significant(i, j) = true;
        }
    };
    for (int j = 0; j < v; ++j) {
        for (int c : candidates[static_cast<std::size_t>(j)]) {
            const int i = var_of(c);
            const int lag = lag_of(c);
            if (lag == 0 && i > j) continue;  // each contemporaneous pair once
            std::set<int> cond(candidates[static_cast<std::size_t>(j)].begin(),
                               candidates[static_cast<std::size_t>(j)].end());
            for (int p : candidates[static_cast<std::size_t>(i)]) {
                const int shifted = lag_of(p) + lag;
                if (shifted <= tau_max) cond.insert(node(var_of(p), shifted));
            }
            cond.erase(c);
            cond.erase(node(j, 0));
            std::vector<int> z(cond.begin(), cond.end());
            if (z.size() > max_mci) z.resize(max_mci);
            const CiResult r = ci.test(c, node(j, 0), z);
            record(i, j, r);
            if (lag == 0) record(j, i, r);
        }
    }
    return graph;
}

double causal_fidelity(const CausalGraph& global, const CausalGraph& local) {
    if (global.strength.rows() != local.strength.rows() || global.strength.cols() != local.strength.cols())
        throw ArgumentError("causal_fidelity: graph dimensions differ");
    if (global.strength.size() == 0) return 0.0;
    return (global.strength - local.strength).squaredNorm() / static_cast<double>(global.strength.size());
}

double alignment_threshold(std::span<const double> mses, const CausalPruneConfig& config) {
    if (mses.empty()) throw ArgumentError("alignment_threshold: empty MSE list");
    if (config.fixed_epsilon) return *config.fixed_epsilon;
    const double n = static_cast<double>(mses.size());
    const double mean = std::accumulate(mses.begin(), mses.end(), 0.0) / n;
    double ss = 0.0;
    for (double m : mses) ss += (m - mean) * (m - mean);
    const double sd = std::sqrt(ss / n);
    return std::max(mean - config.gamma * sd, config.epsilon_floor);
}

CausalPruneResult prune_causal(const WindowSet& windows, const CausalPruneConfig& config) {
    config.validate();
    CausalPruneResult result;
    result.records.resize(windows.size());

    // Groups keyed by (unit source, RUL level) in first-appearance order.
    std::map<std::pair<const Eigen::MatrixXd*, double>, std::size_t> group_of;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto key = std::make_pair(windows[k].source.get(), windows[k].rul_level);
        auto [it, inserted] = group_of.try_emplace(key, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(k);
    }
    for (auto& g : groups) {
        std::sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
            return windows[a].start != windows[b].start ? windows[a].start < windows[b].start : a < b;
        });
    }
    result.group_count = groups.size();

    std::vector<CausalGraph> global(groups.size());
    parallel_for(groups.size(), [&](std::size_t g) {
        const auto& members = groups[g];
        std::size_t lo = windows[members.front()].start;
        std::size_t hi = 0;
        for (auto k : members) {
            lo = std::min(lo, windows[k].start);
            hi = std::max(hi, windows[k].start + windows[k].length);
        }
        const auto& src = *windows[members.front()].source;
        global[g] = pcmci_graph(src.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)),
                                config);
    });

    std::vector<std::size_t> group_index(windows.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (auto k : groups[g]) group_index[k] = g;
    }
    parallel_for(windows.size(), [&](std::size_t k) {
        const CausalGraph local = pcmci_graph(windows[k].values(), config);
        result.records[k].window_id = k;
        result.records[k].mse = causal_fidelity(global[group_index[k]], local);
    });

    for (const auto& members : groups) {
        std::vector<double> mses;
        mses.reserve(members.size());
        for (auto k : members) mses.push_back(result.records[k].mse);
        const double threshold = alignment_threshold(mses, config);
        for (auto k : members) {
            auto& rec = result.records[k];
            rec.threshold = threshold;
            rec.retained = members.size() == 1 || rec.mse <= threshold;
        }
    }
    for (const auto& rec : result.records) {
        if (rec.retained) result.retained.push_back(rec.window_id);
    }
    return result;
}

void write_graph(const std::filesystem::path& path, const CausalGraph& graph) {
    io::Json strength = io::Json::array();
    io::Json mask = io::Json::array();
    for (Eigen::Index i = 0; i < graph.strength.rows(); ++i) {
        io::Json srow = io::Json::array();
        io::Json mrow = io::Json::array();
        for (Eigen::Index j = 0; j < graph.strength.cols(); ++j) {
            srow.push_back(graph.strength(i, j));
            mrow.push_back(static_cast<bool>(graph.significant(i, j)));
        }
        strength.push_back(std::move(srow));
        mask.push_back(std::move(mrow));
    }
    io::write_json(path, io::Json{{"dimension", graph.strength.rows()},
                                  {"alpha", graph.alpha},
                                  {"strength", std::move(strength)},
                                  {"significant", std::move(mask)}});
}

CausalGraph read_graph(const std::filesystem::path& path) {
    const auto j = io::read_json(path);
    try {
        const auto dim = j.at("dimension").get<Eigen::Index>();
        CausalGraph g;
        g.alpha = j.at("alpha").get<double>();
        g.strength.resize(dim, dim);
        g.significant.resize(dim, dim);
        for (Eigen::Index r = 0; r < dim; ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) {
                g.strength(r, c) = j.at("strength").at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c));
                g.significant(r, c) =
                    j.at("significant").at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<bool>();
            }
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed graph file " + path.string() + ": " + e.what());
    }
}

void write_fidelity_report(const std::filesystem::path& path, const CausalPruneResult& result) {
    std::vector<io::Json> records;
    records.reserve(result.records.size());
    for (const auto& r : result.records) {
        records.push_back(
            {{"window_id", r.window_id}, {"mse", r.mse}, {"threshold", r.threshold}, {"retained", r.retained}});
    }
    io::write_jsonl(path, records);
}

}  // namespace rulprune
