#include "rulprune/synth.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/io.hpp"
#include "rulprune/parallel.hpp"
#include "rulprune/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace rulprune {

void ScmSpec::validate() const {
    if (d < 1) throw ArgumentError("scm: d must be >= 1");
    if (adjacency.rows() != d || adjacency.cols() != d) throw ArgumentError("scm: adjacency must be d x d");
    if (lagged.size() != 0 && (lagged.rows() != d || lagged.cols() != d)) {
        throw ArgumentError("scm: lagged must be empty or d x d");
    }
    if (!(noise_std > 0.0)) throw ArgumentError("scm: noise_std must be positive");
    topological_order(adjacency);
}

std::vector<int> topological_order(const Eigen::MatrixXd& adjacency) {
    const auto d = static_cast<int>(adjacency.rows());
    std::vector<int> indegree(static_cast<std::size_t>(d), 0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i != j && adjacency(i, j) != 0.0) ++indegree[static_cast<std::size_t>(j)];
        }
        if (adjacency(i, i) != 0.0) throw ArgumentError("scm: self-loop on variable " + std::to_string(i));
    }
    std::vector<int> order;
    std::vector<bool> done(static_cast<std::size_t>(d), false);
    while (static_cast<int>(order.size()) < d) {
        int next = -1;
        for (int j = 0; j < d; ++j) {
            if (!done[static_cast<std::size_t>(j)] && indegree[static_cast<std::size_t>(j)] == 0) {
                next = j;
                break;
            }
        }
        if (next < 0) throw ArgumentError("scm: instantaneous adjacency is cyclic");
        done[static_cast<std::size_t>(next)] = true;
        order.push_back(next);
        for (int j = 0; j < d; ++j) {
            if (j != next && adjacency(next, j) != 0.0) --indegree[static_cast<std::size_t>(j)];
        }
    }
    return order;
}

namespace {

// One time step of a linear SCM: x_j = sum_i A(i,j) x_i + sum_i B(i,j) prev_i + exo_j + noise.
void scm_step(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::vector<int>& order,
              const double* prev, const double* exo, double noise_std, Rng& rng, double* out) {
    const Eigen::Index d = a.rows();
    for (int j : order) {
        double v = exo != nullptr ? exo[j] : 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            if (a(i, j) != 0.0) v += a(i, j) * out[i];
            if (prev != nullptr && b.size() != 0 && b(i, j) != 0.0) v += b(i, j) * prev[i];
        }
        out[j] = v + noise_std * rng.normal();
    }
}

}  // namespace

ScmData gen_scm(const ScmSpec& spec) {
    spec.validate();
    const auto order = topological_order(spec.adjacency);
    ScmData out;
    out.adjacency = spec.adjacency;
    out.lagged = spec.lagged;
    // Row-major scratch so each step writes a contiguous row.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(
        static_cast<Eigen::Index>(spec.n), spec.d);
    Rng rng(spec.seed);
    for (std::size_t t = 0; t < spec.n; ++t) {
        const double* prev = t > 0 ? rows.row(static_cast<Eigen::Index>(t - 1)).data() : nullptr;
        scm_step(spec.adjacency, spec.lagged, order, prev, nullptr, spec.noise_std, rng,
                 rows.row(static_cast<Eigen::Index>(t)).data());
    }
    out.data = rows;
    return out;
}

std::string to_string(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::channel_shuffle: return "channel-shuffle";
        case CorruptionKind::heavy_noise: return "heavy-noise";
        case CorruptionKind::constant_stuck: return "constant-stuck";
    }
    return "unknown";
}

CorruptionKind corruption_kind_from_string(const std::string& name) {
    if (name == "channel-shuffle") return CorruptionKind::channel_shuffle;
    if (name == "heavy-noise") return CorruptionKind::heavy_noise;
    if (name == "constant-stuck") return CorruptionKind::constant_stuck;
    throw ConfigError("unknown corruption kind '" + name + "'");
}

void DegradationSpec::validate() const {
    if (units < 1 || cycles_per_unit < 1 || samples_per_cycle < 1 || d < 1) {
        throw ArgumentError("degradation: units, cycles, samples per cycle and d must be >= 1");
    }
    if (!trend_coeffs.empty() && trend_coeffs.size() != static_cast<std::size_t>(d)) {
        throw ArgumentError("degradation: trend_coeffs must have d entries");
    }
    if (!(noise_std > 0.0)) throw ArgumentError("degradation: noise_std must be positive");
    if (!(corrupt_fraction >= 0.0 && corrupt_fraction < 1.0)) {
        throw ArgumentError("degradation: corrupt_fraction must lie in [0, 1)");
    }
    if (!(regime_switch >= 0.0 && regime_switch <= 1.0)) throw ArgumentError("degradation: regime_switch in [0, 1]");
    if (!(corruption_scale > 0.0)) throw ArgumentError("degradation: corruption_scale must be positive");
    if (span_length < 1) throw ArgumentError("degradation: span_length must be >= 1");
}

std::vector<double> DegradationSpec::trends() const {
    if (!trend_coeffs.empty()) return trend_coeffs;
    std::vector<double> t(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) t[static_cast<std::size_t>(j)] = ((j / 2) % 2 == 0 ? 1.0 : -1.0);
    return t;
}

namespace {

void corrupt_span(SensorSeries& s, std::size_t start, std::size_t len, const DegradationSpec& spec, Rng& rng) {
    const auto rows = static_cast<Eigen::Index>(len);
    const auto r0 = static_cast<Eigen::Index>(start);
    auto block = s.readings.middleRows(r0, rows);
    switch (spec.corruption_kind) {
        case CorruptionKind::channel_shuffle: {
            std::vector<Eigen::Index> perm(len);
            for (Eigen::Index j = 0; j < block.cols(); ++j) {
                std::iota(perm.begin(), perm.end(), Eigen::Index{0});
                rng.shuffle(std::span<Eigen::Index>(perm));
                const Eigen::VectorXd col = block.col(j);
                for (Eigen::Index i = 0; i < rows; ++i) block(i, j) = col[perm[static_cast<std::size_t>(i)]];
            }
            break;
        }
        case CorruptionKind::heavy_noise: {
            // Replace the span by independent noise with the span's own mean and scaled spread.
            for (Eigen::Index j = 0; j < block.cols(); ++j) {
                const double mean = block.col(j).mean();
                const double sd = std::sqrt((block.col(j).array() - mean).square().mean());
                for (Eigen::Index i = 0; i < rows; ++i) block(i, j) = mean + spec.corruption_scale * sd * rng.normal();
            }
            break;
        }
        case CorruptionKind::constant_stuck: {
            const Eigen::RowVectorXd held = block.row(0);
            for (Eigen::Index i = 0; i < rows; ++i) block.row(i) = held;
            break;
        }
    }
}

}  // namespace

DegradationData gen_degradation(const DegradationSpec& spec) {
    spec.validate();
    const auto d = static_cast<Eigen::Index>(spec.d);
    const std::size_t len = spec.cycles_per_unit * spec.samples_per_cycle;
    const auto trends = spec.trends();

    // Sensors come in pairs s(2k+1) -> s(2k+2); each pair's leader follows its own regime.
    Eigen::MatrixXd adjacency = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index j = 1; j < d; j += 2) adjacency(j - 1, j) = spec.coupling;
    const auto order = topological_order(adjacency);
    const Eigen::MatrixXd no_lag;
    const Eigen::Index leaders = (d + 1) / 2;

    DegradationData out;
    out.series.resize(spec.units);
    parallel_for(spec.units, [&](std::size_t u) {
        Rng rng(derive_seed(spec.seed, "unit-" + std::to_string(u)));
        SensorSeries& s = out.series[u];
        s.unit_id = std::to_string(u + 1);
        for (int j = 0; j < spec.d; ++j) s.sensor_names.push_back("s" + std::to_string(j + 1));
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(static_cast<Eigen::Index>(len), d);
        s.rul.resize(len);
        s.cycle.resize(len);
        std::vector<double> exo(static_cast<std::size_t>(d), 0.0);
        std::vector<double> regime(static_cast<std::size_t>(leaders));
        for (auto& r : regime) r = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t c = t / spec.samples_per_cycle;
            s.cycle[t] = static_cast<double>(c + 1);
            s.rul[t] = static_cast<double>(spec.cycles_per_unit - 1 - c);
            for (Eigen::Index k = 0; k < leaders; ++k) {
                auto& r = regime[static_cast<std::size_t>(k)];
                if (rng.uniform() < spec.regime_switch) r = -r;
                exo[static_cast<std::size_t>(2 * k)] = spec.regime_amplitude * r;
            }
            auto row = rows.row(static_cast<Eigen::Index>(t));
            scm_step(adjacency, no_lag, order, nullptr, exo.data(), spec.noise_std, rng, row.data());
            // The degradation trend is added on top of the coupled signals.
            const double health = len > 1 ? static_cast<double>(t) / static_cast<double>(len - 1) : 0.0;
            for (Eigen::Index j = 0; j < d; ++j) row[j] += trends[static_cast<std::size_t>(j)] * health;
        }
        s.readings = rows;
    });

    std::vector<std::pair<std::size_t, std::size_t>> spans;  // (unit, span index)
    for (std::size_t u = 0; u < spec.units; ++u) {
        for (std::size_t k = 0; k < len / spec.span_length; ++k) spans.emplace_back(u, k);
    }
    out.total_spans = spans.size();
    const auto count = static_cast<std::size_t>(std::llround(spec.corrupt_fraction * static_cast<double>(spans.size())));
    Rng pick(derive_seed(spec.seed, "corrupt"));
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(pick.below(spans.size() - i));
        std::swap(spans[i], spans[j]);
    }
    std::vector<std::pair<std::size_t, std::size_t>> chosen(spans.begin(), spans.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(chosen.begin(), chosen.end());

    for (const auto& [u, k] : chosen) {
        const std::size_t start = k * spec.span_length;
        Rng rng(derive_seed(spec.seed, "span-" + std::to_string(u) + "-" + std::to_string(k)));
        corrupt_span(out.series[u], start, spec.span_length, spec, rng);
        out.corrupted.push_back({out.series[u].unit_id, k, start, spec.span_length});
    }
    return out;
}

std::vector<WindowTruth> window_truth(const WindowSet& windows, const std::vector<CorruptedSpan>& spans,
                                      std::size_t factor) {
    if (factor == 0) throw ArgumentError("window_truth: factor must be >= 1");
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> by_unit;
    for (const auto& s : spans) by_unit[s.unit_id].emplace_back(s.start, s.start + s.length);
    std::vector<WindowTruth> out(windows.size(), WindowTruth::clean);
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto& w = windows[k];
        const auto it = by_unit.find(w.unit_id);
        if (it == by_unit.end()) continue;
        std::size_t hit = 0;
        for (std::size_t r = 0; r < w.length; ++r) {
            const std::size_t raw = (w.start + r) * factor;
            for (const auto& [a, b] : it->second) {
                if (raw >= a && raw < b) {
                    ++hit;
                    break;
                }
            }
        }
        if (hit == 0) continue;
        out[k] = 2 * hit >= w.length ? WindowTruth::corrupted : WindowTruth::ambiguous;
    }
    return out;
}

void write_corruption_labels(const std::filesystem::path& path, const std::vector<CorruptedSpan>& spans) {
    std::vector<io::Json> lines;
    lines.reserve(spans.size());
    for (const auto& s : spans) {
        lines.push_back({{"unit", s.unit_id}, {"span_index", s.span_index}, {"start", s.start}, {"length", s.length}});
    }
    io::write_jsonl(path, lines);
}

std::vector<CorruptedSpan> read_corruption_labels(const std::filesystem::path& path) {
    std::vector<CorruptedSpan> out;
    std::size_t line = 0;
    for (const auto& j : io::read_jsonl(path)) {
        ++line;
        try {
            out.push_back({j.at("unit").get<std::string>(), j.at("span_index").get<std::size_t>(),
                           j.at("start").get<std::size_t>(), j.at("length").get<std::size_t>()});
        } catch (const nlohmann::json::exception& e) {
            throw IngestError(std::string("bad corruption label: ") + e.what(), line);
        }
    }
    return out;
}

DegradationSpec degradation_spec_from_json(const io::Json& j) {
    DegradationSpec s;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "units") s.units = value.get<std::size_t>();
            else if (key == "cycles_per_unit") s.cycles_per_unit = value.get<std::size_t>();
            else if (key == "samples_per_cycle") s.samples_per_cycle = value.get<std::size_t>();
            else if (key == "d") s.d = value.get<int>();
            else if (key == "trend_coeffs") s.trend_coeffs = value.get<std::vector<double>>();
            else if (key == "noise_std") s.noise_std = value.get<double>();
            else if (key == "coupling") s.coupling = value.get<double>();
            else if (key == "regime_amplitude") s.regime_amplitude = value.get<double>();
            else if (key == "regime_switch") s.regime_switch = value.get<double>();
            else if (key == "corrupt_fraction") s.corrupt_fraction = value.get<double>();
            else if (key == "corruption_kind") s.corruption_kind = corruption_kind_from_string(value.get<std::string>());
            else if (key == "corruption_scale") s.corruption_scale = value.get<double>();
            else if (key == "span_length") s.span_length = value.get<std::size_t>();
            else if (key == "seed") s.seed = value.get<std::uint64_t>();
            else throw ConfigError("unknown synth spec key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid synth spec: ") + e.what());
    }
    try {
        s.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    return s;
}

io::Json to_json(const DegradationSpec& s) {
    return {{"units", s.units},
            {"cycles_per_unit", s.cycles_per_unit},
            {"samples_per_cycle", s.samples_per_cycle},
            {"d", s.d},
            {"trend_coeffs", s.trends()},
            {"noise_std", s.noise_std},
            {"coupling", s.coupling},
            {"regime_amplitude", s.regime_amplitude},
            {"regime_switch", s.regime_switch},
            {"corrupt_fraction", s.corrupt_fraction},
            {"corruption_kind", to_string(s.corruption_kind)},
            {"corruption_scale", s.corruption_scale},
            {"span_length", s.span_length},
            {"seed", s.seed}};
}

}  // namespace rulprune
