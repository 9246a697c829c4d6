#include "rulprune/pipeline.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/parallel.hpp"
#include "rulprune/random.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace rulprune {

namespace fs = std::filesystem;
using io::Json;

std::string to_string(Arm arm) {
    switch (arm) {
        case Arm::cg: return "CG";
        case Arm::pc: return "PC";
        case Arm::full: return "Full";
        case Arm::sub: return "Sub";
    }
    return "CG";
}

Arm arm_from_string(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "cg") return Arm::cg;
    if (lower == "pc") return Arm::pc;
    if (lower == "full") return Arm::full;
    if (lower == "sub") return Arm::sub;
    throw ConfigError("unknown arm '" + name + "' (expected CG, PC, Full or Sub)");
}

void PipelineConfig::validate() const {
    try {
        if (data.factor == 0) throw ConfigError("data.factor must be at least 1");
        if (data.window < 2) throw ConfigError("data.window must be at least 2");
        if (data.stride == 0) throw ConfigError("data.stride must be at least 1");
        if (!(data.label_scale >= 0.0) || !std::isfinite(data.label_scale))
            throw ConfigError("data.label_scale must be finite and >= 0");
        if (sub_stride == 0) throw ConfigError("sub_stride must be at least 1");
        if (bo_budget < 1) throw ConfigError("bo_budget must be at least 1");
        causal.validate();
        screen.validate();
        predictor.validate();
        train.validate();
        synth.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError("output path " + out.string() + " is not a directory");
}

fs::path PipelineConfig::checkpoint_path() const { return checkpoint.empty() ? out / "model.json" : checkpoint; }
fs::path PipelineConfig::prune_index_path() const {
    return prune_index.empty() ? out / "prune_index.jsonl" : prune_index;
}

// ---- config serialization ----

namespace {

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
    throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
}

std::string kl_reference_name(KlReference r) {
    return r == KlReference::full ? "full" : "posterior-weighted";
}

KlReference kl_reference_from(const std::string& name) {
    if (name == "full") return KlReference::full;
    if (name == "posterior-weighted") return KlReference::posterior_weighted;
    throw ConfigError("screen.kl_reference must be 'full' or 'posterior-weighted'");
}

CsvSchema schema_from(const Json& j) {
    CsvSchema s;
    for (const auto& [key, value] : j.items()) {
        if (key == "unit") s.unit = value.get<std::string>();
        else if (key == "cycle") s.cycle = value.get<std::string>();
        else if (key == "rul") s.rul = value.get<std::string>();
        else if (key == "sensors") s.sensors = value.get<std::vector<std::string>>();
        else if (key == "delimiter") {
            const auto d = value.get<std::string>();
            if (d.size() != 1) throw ConfigError("data.schema.delimiter must be one character");
            s.delimiter = d[0];
        } else unknown_key("data.schema", key);
    }
    return s;
}

Json to_json(const CsvSchema& s) {
    return {{"unit", s.unit},
            {"cycle", s.cycle},
            {"rul", s.rul},
            {"sensors", s.sensors},
            {"delimiter", std::string(1, s.delimiter)}};
}

DataConfig data_from(const Json& j) {
    DataConfig d;
    for (const auto& [key, value] : j.items()) {
        if (key == "input") d.input = value.get<std::string>();
        else if (key == "test") d.test = value.get<std::string>();
        else if (key == "schema") d.schema = schema_from(value);
        else if (key == "factor") d.factor = value.get<std::size_t>();
        else if (key == "window") d.window = value.get<std::size_t>();
        else if (key == "stride") d.stride = value.get<std::size_t>();
        else if (key == "label_scale") d.label_scale = value.get<double>();
        else unknown_key("data", key);
    }
    return d;
}

CausalPruneConfig causal_from(const Json& j) {
    CausalPruneConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "alpha") c.alpha = value.get<double>();
        else if (key == "tau_max") c.tau_max = value.get<int>();
        else if (key == "gamma") c.gamma = value.get<double>();
        else if (key == "fixed_epsilon") {
            if (value.is_null()) c.fixed_epsilon.reset();
            else c.fixed_epsilon = value.get<double>();
        } else if (key == "max_cond_set") c.max_cond_set = value.get<int>();
        else if (key == "epsilon_floor") c.epsilon_floor = value.get<double>();
        else unknown_key("causal", key);
    }
    return c;
}

ScreenConfig screen_from(const Json& j) {
    ScreenConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "entropy_bins") c.entropy_bins = value.get<int>();
        else if (key == "lambda") c.lambda = value.get<double>();
        else if (key == "em_max_iters") c.em_max_iters = value.get<int>();
        else if (key == "em_tol") c.em_tol = value.get<double>();
        else if (key == "cov_reg") c.cov_reg = value.get<double>();
        else if (key == "kl_bins") c.kl_bins = value.get<int>();
        else if (key == "kl_smoothing") c.kl_smoothing = value.get<double>();
        else if (key == "target_retention") {
            if (value.is_null()) c.target_retention.reset();
            else c.target_retention = value.get<double>();
        } else if (key == "hard_quota") c.hard_quota = value.get<bool>();
        else if (key == "kl_reference") c.kl_reference = kl_reference_from(value.get<std::string>());
        else unknown_key("screen", key);
    }
    return c;
}

PredictorConfig predictor_from(const Json& j) {
    PredictorConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "embed_dim") c.embed_dim = value.get<int>();
        else if (key == "heads") c.heads = value.get<int>();
        else if (key == "layers") c.layers = value.get<int>();
        else if (key == "ffn_dim") c.ffn_dim = value.get<int>();
        else if (key == "head_dim1") c.head_dim1 = value.get<int>();
        else if (key == "head_dim2") c.head_dim2 = value.get<int>();
        else if (key == "input_channels") c.input_channels = value.get<int>();
        else if (key == "seq_len") c.seq_len = value.get<int>();
        else if (key == "causal_mask") c.causal_mask = value.get<bool>();
        else if (key == "ln_eps") c.ln_eps = value.get<double>();
        else unknown_key("predictor", key);
    }
    return c;
}

TrainConfig train_from(const Json& j) {
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "warmup_epochs") c.warmup_epochs = value.get<int>();
        else if (key == "patience") c.patience = value.get<int>();
        else if (key == "val_fraction") c.val_fraction = value.get<double>();
        else if (key == "learning_rate") c.learning_rate = value.get<double>();
        else if (key == "batch_size") c.batch_size = value.get<int>();
        else if (key == "beta") c.beta = value.get<double>();
        else if (key == "freeze_first") c.freeze_first = value.get<int>();
        else if (key == "max_epochs") c.max_epochs = value.get<int>();
        else if (key == "seed") throw ConfigError("train.seed is derived from the root seed; set 'seed' instead");
        else unknown_key("train", key);
    }
    return c;
}

}  // namespace

Json to_json(const CausalPruneConfig& c) {
    return {{"alpha", c.alpha},
            {"tau_max", c.tau_max},
            {"gamma", c.gamma},
            {"fixed_epsilon", c.fixed_epsilon ? Json(*c.fixed_epsilon) : Json(nullptr)},
            {"max_cond_set", c.max_cond_set},
            {"epsilon_floor", c.epsilon_floor}};
}

Json to_json(const ScreenConfig& c) {
    return {{"entropy_bins", c.entropy_bins},
            {"lambda", c.lambda},
            {"em_max_iters", c.em_max_iters},
            {"em_tol", c.em_tol},
            {"cov_reg", c.cov_reg},
            {"kl_bins", c.kl_bins},
            {"kl_smoothing", c.kl_smoothing},
            {"target_retention", c.target_retention ? Json(*c.target_retention) : Json(nullptr)},
            {"hard_quota", c.hard_quota},
            {"kl_reference", kl_reference_name(c.kl_reference)}};
}

Json to_json(const TrainConfig& c) {
    return {{"warmup_epochs", c.warmup_epochs},
            {"patience", c.patience},
            {"val_fraction", c.val_fraction},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"beta", c.beta},
            {"freeze_first", c.freeze_first},
            {"max_epochs", c.max_epochs}};
}

PipelineConfig pipeline_config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    PipelineConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "data") c.data = data_from(value);
            else if (key == "out") c.out = value.get<std::string>();
            else if (key == "checkpoint") c.checkpoint = value.get<std::string>();
            else if (key == "prune_index") c.prune_index = value.get<std::string>();
            else if (key == "arm") c.arm = arm_from_string(value.get<std::string>());
            else if (key == "sub_stride") c.sub_stride = value.get<std::size_t>();
            else if (key == "causal") c.causal = causal_from(value);
            else if (key == "screen") c.screen = screen_from(value);
            else if (key == "bo_budget") c.bo_budget = value.get<int>();
            else if (key == "predictor") c.predictor = predictor_from(value);
            else if (key == "train") c.train = train_from(value);
            else if (key == "synth") {
                if (value.contains("seed")) throw ConfigError("synth.seed is derived from the root seed; set 'seed' instead");
                c.synth = degradation_spec_from_json(value);
            } else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else unknown_key("", key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    c.validate();
    return c;
}

Json to_json(const PipelineConfig& c) {
    Json synth = to_json(c.synth);
    synth.erase("seed");
    return {{"seed", c.seed},
            {"out", c.out.string()},
            {"checkpoint", c.checkpoint.string()},
            {"prune_index", c.prune_index.string()},
            {"arm", to_string(c.arm)},
            {"sub_stride", c.sub_stride},
            {"bo_budget", c.bo_budget},
            {"data",
             {{"input", c.data.input.string()},
              {"test", c.data.test.string()},
              {"schema", to_json(c.data.schema)},
              {"factor", c.data.factor},
              {"window", c.data.window},
              {"stride", c.data.stride},
              {"label_scale", c.data.label_scale}}},
            {"causal", to_json(c.causal)},
            {"screen", to_json(c.screen)},
            {"predictor", to_json(c.predictor)},
            {"train", to_json(c.train)},
            {"synth", std::move(synth)}};
}

PipelineConfig load_pipeline_config(const fs::path& path) { return pipeline_config_from_json(io::read_json(path)); }

void apply_override(Json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);

    Json* node = &config;
    std::size_t pos = 0;
    while (true) {
        const auto dot = key.find('.', pos);
        const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (node->is_null()) *node = Json::object();  // partial configs omit whole sections
        if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    Json value = Json::parse(text, nullptr, false);
    *node = value.is_discarded() ? Json(text) : std::move(value);
}

// ---- data ----

PreparedData prepare_data(const std::vector<SensorSeries>& raw, const DataConfig& config,
                          const std::optional<NormalizerParams>& normalizer) {
    if (raw.empty()) throw ArgumentError("prepare_data: no series");
    std::vector<SensorSeries> down;
    down.reserve(raw.size());
    for (const auto& s : raw) down.push_back(downsample(s, config.factor));

    PreparedData out;
    out.normalizer = normalizer ? *normalizer : fit_normalizer(down);
    if (out.normalizer.min.size() != static_cast<std::size_t>(down.front().readings.cols())) {
        throw ConfigError("normalizer has " + std::to_string(out.normalizer.min.size()) + " channels but data has " +
                          std::to_string(down.front().readings.cols()));
    }
    out.series.reserve(down.size());
    for (const auto& s : down) out.series.push_back(apply_normalizer(s, out.normalizer));
    out.windows = make_windows(std::span<const SensorSeries>(out.series), config.window, config.stride);
    return out;
}

std::vector<Sample> to_samples(const WindowSet& windows, std::span<const std::size_t> ids) {
    std::vector<Sample> out(ids.size());
    parallel_for(ids.size(), [&](std::size_t i) {
        const auto& w = windows.at(ids[i]);
        out[i].x = w.values().leftCols(static_cast<Eigen::Index>(w.channels()));
        out[i].y = w.label;
    });
    return out;
}

std::vector<Sample> to_samples(const WindowSet& windows) {
    std::vector<std::size_t> ids(windows.size());
    std::iota(ids.begin(), ids.end(), 0);
    return to_samples(windows, ids);
}

// ---- pruning ----

std::vector<std::size_t> PruneOutcome::retained_ids() const {
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < retained.size(); ++k) {
        if (retained[k]) ids.push_back(k);
    }
    return ids;
}

PruneOutcome run_prune(const WindowSet& windows, const PipelineConfig& config) {
    const std::size_t n = windows.size();
    PruneOutcome out;
    out.arm = config.arm;
    out.mse.assign(n, std::nullopt);
    out.q.assign(n, std::nullopt);
    out.features.resize(n);
    out.causal_kept.assign(n, true);
    out.retained.assign(n, true);
    parallel_for(n, [&](std::size_t k) { out.features[k] = window_features(windows[k], config.screen); });

    if (config.arm == Arm::sub) {
        for (std::size_t k = 0; k < n; ++k) out.retained[k] = k % config.sub_stride == 0;
    }
    if (config.arm == Arm::cg || config.arm == Arm::pc) {
        const auto causal = prune_causal(windows, config.causal);
        out.group_count = causal.group_count;
        for (const auto& rec : causal.records) {
            out.mse[rec.window_id] = rec.mse;
            out.causal_kept[rec.window_id] = rec.retained;
            out.retained[rec.window_id] = rec.retained;
        }
    }
    if (config.arm == Arm::cg) {
        std::vector<std::size_t> survivors;
        for (std::size_t k = 0; k < n; ++k) {
            if (out.causal_kept[k]) survivors.push_back(k);
        }
        // EM needs a handful of points; tiny survivor sets pass through unscreened.
        if (survivors.size() >= 4) {
            std::vector<WindowFeatures> feats;
            feats.reserve(survivors.size());
            for (auto k : survivors) feats.push_back(out.features[k]);
            const auto fit = fit_gmm(feats, config.screen, derive_seed(config.seed, "gmm"));
            std::vector<double> q(feats.size());
            for (std::size_t i = 0; i < feats.size(); ++i) q[i] = posterior_hq(feats[i], fit.model);
            auto th = optimize_threshold(q, feats, config.screen, config.bo_budget, derive_seed(config.seed, "bo"));
            for (std::size_t i = 0; i < survivors.size(); ++i) {
                out.q[survivors[i]] = q[i];
                out.retained[survivors[i]] = q[i] >= th.theta;
            }
            out.gmm = fit.model;
            out.threshold = std::move(th);
        }
    }
    out.summary = retention_stats(out.causal_kept, out.retained);
    const auto survivors = static_cast<std::size_t>(std::count(out.causal_kept.begin(), out.causal_kept.end(), true));
    out.stage2_retention = survivors == 0 ? 0.0 : static_cast<double>(out.summary.retained) / static_cast<double>(survivors);
    return out;
}

namespace {

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

void write_prune_index(const fs::path& path, const WindowSet& windows, const PruneOutcome& outcome) {
    if (outcome.retained.size() != windows.size()) throw ArgumentError("write_prune_index: outcome does not match windows");
    std::vector<Json> records;
    records.reserve(windows.size());
    for (std::size_t k = 0; k < windows.size(); ++k) {
        records.push_back({{"window_id", k},
                           {"unit", windows[k].unit_id},
                           {"rul_level", windows[k].rul_level},
                           {"start", windows[k].start},
                           {"mse_causal", optional_json(outcome.mse[k])},
                           {"q", optional_json(outcome.q[k])},
                           {"retained", static_cast<bool>(outcome.retained[k])}});
    }
    io::write_jsonl(path, records);
}

std::vector<PruneIndexEntry> read_prune_index(const fs::path& path) {
    const auto lines = io::read_jsonl(path);
    std::vector<PruneIndexEntry> out;
    out.reserve(lines.size());
    try {
        for (const auto& j : lines) {
            PruneIndexEntry e;
            e.window_id = j.at("window_id").get<std::size_t>();
            e.unit = j.at("unit").get<std::string>();
            e.rul_level = j.at("rul_level").get<double>();
            e.start = j.at("start").get<std::size_t>();
            if (!j.at("mse_causal").is_null()) e.mse = j.at("mse_causal").get<double>();
            if (!j.at("q").is_null()) e.q = j.at("q").get<double>();
            e.retained = j.at("retained").get<bool>();
            out.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed prune index " + path.string() + ": " + e.what());
    }
    return out;
}

std::vector<std::size_t> retained_from_index(const std::vector<PruneIndexEntry>& index, const WindowSet& windows) {
    if (index.size() != windows.size()) {
        throw ConfigError("prune index lists " + std::to_string(index.size()) + " windows but the data yields " +
                          std::to_string(windows.size()) + "; was it built with different data settings?");
    }
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < index.size(); ++k) {
        const auto& e = index[k];
        if (e.window_id != k || e.unit != windows[k].unit_id || e.start != windows[k].start) {
            throw ConfigError("prune index entry " + std::to_string(k) + " does not match window (unit " +
                              windows[k].unit_id + ", start " + std::to_string(windows[k].start) + ")");
        }
        if (e.retained) ids.push_back(k);
    }
    return ids;
}

// ---- commands ----

namespace {

std::vector<SensorSeries> load_input(const fs::path& path, const CsvSchema& schema, const char* what) {
    if (path.empty()) throw ConfigError(std::string("no ") + what + " data path configured");
    return load_series(path, schema);
}

void write_normalizer(const fs::path& path, const NormalizerParams& p) {
    io::write_json(path, {{"min", p.min}, {"max", p.max}});
}

// The checkpoint's shape must agree with the data it is applied to.
void check_shape(const PredictorConfig& model, const PreparedData& data, std::size_t window,
                 const PredictorConfig& configured) {
    const std::pair<const char*, std::pair<int, int>> dims[] = {
        {"embed_dim", {model.embed_dim, configured.embed_dim}},
        {"heads", {model.heads, configured.heads}},
        {"layers", {model.layers, configured.layers}},
        {"ffn_dim", {model.ffn(), configured.ffn()}},
        {"head_dim1", {model.head_dim1, configured.head_dim1}},
        {"head_dim2", {model.head_dim2, configured.head_dim2}},
    };
    for (const auto& [name, v] : dims) {
        if (v.first != v.second) {
            throw ConfigError(std::string("checkpoint has predictor.") + name + " = " + std::to_string(v.first) +
                              " but the config asks for " + std::to_string(v.second));
        }
    }
    const auto d = data.series.front().readings.cols();
    if (model.input_channels != d) {
        throw ConfigError("checkpoint expects " + std::to_string(model.input_channels) + " input channels but data has " +
                          std::to_string(d));
    }
    if (model.seq_len != static_cast<int>(window)) {
        throw ConfigError("checkpoint expects sequence length " + std::to_string(model.seq_len) +
                          " but data.window is " + std::to_string(window));
    }
}

double label_scale(const DataConfig& data, std::span<const Sample> samples) {
    if (data.label_scale > 0.0) return data.label_scale;
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, std::abs(s.y));
    return m > 0.0 ? m : 1.0;
}

double mean_epoch_seconds(const std::vector<EpochRecord>& history) {
    if (history.empty()) return 0.0;
    double total = 0.0;
    for (const auto& r : history) total += r.seconds;
    return total / static_cast<double>(history.size());
}

TrainConfig seeded(TrainConfig t, std::uint64_t root, const char* label) {
    t.seed = derive_seed(root, label);
    return t;
}

}  // namespace

int cmd_synth(const PipelineConfig& config, std::ostream& log) {
    DegradationSpec spec = config.synth;
    spec.seed = derive_seed(config.seed, "synth");
    const auto data = gen_degradation(spec);
    fs::create_directories(config.out);
    write_series(config.out / "series.csv", data.series, config.data.schema);
    write_corruption_labels(config.out / "corruption.jsonl", data.corrupted);
    Json meta = to_json(spec);
    meta["total_spans"] = data.total_spans;
    meta["corrupted_spans"] = data.corrupted.size();
    io::write_json(config.out / "synth.json", meta);
    log << "synth: " << data.series.size() << " units, " << data.corrupted.size() << " of " << data.total_spans
        << " spans corrupted -> " << (config.out / "series.csv").string() << "\n";
    return 0;
}

int cmd_prune(const PipelineConfig& config, std::ostream& log) {
    const auto raw = load_input(config.data.input, config.data.schema, "input");
    const auto data = prepare_data(raw, config.data);
    const auto outcome = run_prune(data.windows, config);

    fs::create_directories(config.out);
    write_prune_index(config.prune_index_path(), data.windows, outcome);
    write_normalizer(config.out / "normalizer.json", data.normalizer);
    std::vector<Json> screening;
    for (std::size_t k = 0; k < data.windows.size(); ++k) {
        if (!outcome.q[k]) continue;
        const auto& f = outcome.features[k].f;
        screening.push_back(
            {{"id", k}, {"f", {f[0], f[1], f[2]}}, {"q", *outcome.q[k]}, {"retained", static_cast<bool>(outcome.retained[k])}});
    }
    if (!screening.empty()) io::write_jsonl(config.out / "screening.jsonl", screening);
    if (outcome.gmm) write_gmm(config.out / "gmm.json", *outcome.gmm);

    Json summary = to_json(outcome.summary);
    summary["arm"] = to_string(outcome.arm);
    summary["segments"] = outcome.group_count;
    summary["stage2_retention"] = outcome.stage2_retention;
    if (outcome.threshold) {
        summary["theta"] = outcome.threshold->theta;
        summary["lambda"] = outcome.threshold->lambda;
        summary["objective"] = outcome.threshold->objective;
        std::vector<Json> trace;
        for (const auto& t : outcome.threshold->trace) trace.push_back({{"theta", t.theta}, {"value", t.value}});
        io::write_jsonl(config.out / "threshold_trace.jsonl", trace);
    }
    io::write_json(config.out / "prune_summary.json", summary);
    io::write_json(config.out / "config.json", to_json(config));

    const auto& s = outcome.summary;
    log << "prune [" << to_string(outcome.arm) << "]: kept " << s.retained << " of " << s.total << " windows ("
        << s.fraction << "); causal stage removed " << s.causal_removed << ", quality stage removed "
        << s.quality_removed << "\n";
    if (s.retained == 0) {
        log << "warning: no windows retained\n";
        return 3;
    }
    return 0;
}

int cmd_train(const PipelineConfig& config, std::ostream& log) {
    const auto raw = load_input(config.data.input, config.data.schema, "input");
    const auto data = prepare_data(raw, config.data);
    const auto samples = to_samples(data.windows);
    if (samples.size() < 2) throw ConfigError("training needs at least 2 windows");

    PredictorConfig pc = config.predictor;
    pc.input_channels = static_cast<int>(data.series.front().readings.cols());
    pc.seq_len = static_cast<int>(config.data.window);
    PredictorModel model = init_model(pc, derive_seed(config.seed, "init"));
    model.output_scale = label_scale(config.data, samples);

    const auto result = train(model, samples, seeded(config.train, config.seed, "train"));
    fs::create_directories(config.out);
    write_checkpoint(config.checkpoint_path(), {result.model, config.seed, data.normalizer});
    write_history(config.out / "train_history.jsonl", result.history);
    io::write_json(config.out / "train_summary.json", {{"windows", samples.size()},
                                                       {"train_size", result.train_size},
                                                       {"val_size", result.val_size},
                                                       {"epochs", result.history.size()},
                                                       {"best_epoch", result.best_epoch},
                                                       {"output_scale", result.model.output_scale}});
    log << "train: " << result.history.size() << " epochs, best epoch " << result.best_epoch << " -> "
        << config.checkpoint_path().string() << "\n";
    return 0;
}

int cmd_finetune(const PipelineConfig& config, std::ostream& log) {
    const auto pretrained = read_checkpoint(config.checkpoint_path());
    const auto raw = load_input(config.data.input, config.data.schema, "input");
    const auto data = prepare_data(raw, config.data);
    check_shape(pretrained.model.config, data, config.data.window, config.predictor);

    const auto ids = retained_from_index(read_prune_index(config.prune_index_path()), data.windows);
    if (ids.size() < 2) throw ConfigError("prune index retains fewer than 2 windows; nothing to finetune on");
    const auto samples = to_samples(data.windows, ids);
    const auto result = finetune(pretrained.model, samples, seeded(config.train, config.seed, "finetune"));

    fs::create_directories(config.out);
    write_checkpoint(config.out / "finetuned.json", {result.model, config.seed, data.normalizer});
    write_history(config.out / "finetune_history.jsonl", result.history);
    io::write_json(config.out / "finetune_summary.json",
                   {{"windows", data.windows.size()},
                    {"samples_used", samples.size()},
                    {"fraction", static_cast<double>(samples.size()) / static_cast<double>(data.windows.size())},
                    {"train_size", result.train_size},
                    {"val_size", result.val_size},
                    {"epochs", result.history.size()},
                    {"best_epoch", result.best_epoch}});
    log << "finetune: " << samples.size() << " of " << data.windows.size() << " windows, "
        << result.history.size() << " epochs (" << mean_epoch_seconds(result.history) << " s/epoch) -> "
        << (config.out / "finetuned.json").string() << "\n";
    return 0;
}

int cmd_eval(const PipelineConfig& config, std::ostream& log) {
    const auto ckpt = read_checkpoint(config.checkpoint_path());
    if (!ckpt.normalizer) throw ConfigError("checkpoint " + config.checkpoint_path().string() + " has no normalizer");
    const auto raw = load_input(config.data.test, config.data.schema, "test");
    const auto data = prepare_data(raw, config.data, ckpt.normalizer);
    check_shape(ckpt.model.config, data, config.data.window, config.predictor);
    if (data.windows.empty()) throw ConfigError("test data yields no windows");

    const auto samples = to_samples(data.windows);
    const auto preds = predict(ckpt.model, samples);
    std::vector<double> labels(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) labels[i] = samples[i].y;

    double fraction = 1.0;
    if (fs::exists(config.prune_index_path())) {
        const auto index = read_prune_index(config.prune_index_path());
        const auto kept = std::count_if(index.begin(), index.end(), [](const auto& e) { return e.retained; });
        if (!index.empty()) fraction = static_cast<double>(kept) / static_cast<double>(index.size());
    }
    const auto report = evaluate(preds, labels, fraction);

    // One trajectory per unit, in window order.
    std::vector<Json> traces;
    std::map<std::string, std::size_t> slot;
    for (std::size_t k = 0; k < data.windows.size(); ++k) {
        const auto& unit = data.windows[k].unit_id;
        auto [it, fresh] = slot.try_emplace(unit, traces.size());
        if (fresh) traces.push_back({{"unit", unit}, {"start", Json::array()}, {"y", Json::array()}, {"yhat", Json::array()}});
        auto& t = traces[it->second];
        t["start"].push_back(data.windows[k].start);
        t["y"].push_back(labels[k]);
        t["yhat"].push_back(preds[k]);
    }
    fs::create_directories(config.out);
    io::write_json(config.out / "eval.json", to_json(report));
    io::write_jsonl(config.out / "traces.jsonl", traces);
    log << "eval: n=" << report.n << " rmse=" << report.rmse << " score=" << report.nasa_score << "\n";
    return 0;
}

int cmd_report(const PipelineConfig& config, std::ostream& log) {
    const auto raw = load_input(config.data.input, config.data.schema, "input");
    const auto data = prepare_data(raw, config.data);
    const auto index = read_prune_index(config.prune_index_path());
    const auto ids = retained_from_index(index, data.windows);

    const std::size_t n = data.windows.size();
    std::vector<WindowFeatures> feats(n);
    parallel_for(n, [&](std::size_t k) { feats[k] = window_features(data.windows[k], config.screen); });
    std::vector<bool> kept(n, false), causal(n, true);
    for (auto k : ids) kept[k] = true;
    // Stage-1 removals are the windows with a fidelity score but no posterior.
    for (std::size_t k = 0; k < n; ++k) causal[k] = !(index[k].mse && !index[k].q && !index[k].retained);

    Eigen::MatrixXd ret(static_cast<Eigen::Index>(ids.size()), 3);
    Eigen::MatrixXd dis(static_cast<Eigen::Index>(n - ids.size()), 3);
    Eigen::Index r = 0, d = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (kept[k]) ret.row(r++) = feats[k].f.transpose();
        else dis.row(d++) = feats[k].f.transpose();
    }
    const auto sep = separability(ret, dis, derive_seed(config.seed, "separability"));

    fs::create_directories(config.out);
    if (n >= 2) {
        Eigen::MatrixXd pooled(static_cast<Eigen::Index>(n), 3);
        pooled << ret, dis;
        std::vector<bool> flags(n, false);
        std::fill(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(ids.size()), true);
        write_scatter(config.out / "scatter.jsonl", pca_project(pooled), flags);
    }

    // Entropy histograms of retained and discarded windows over the pooled range.
    constexpr int bins = 20;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& f : feats) {
        lo = std::min(lo, f.entropy());
        hi = std::max(hi, f.entropy());
    }
    std::vector<std::size_t> h_ret(bins, 0), h_dis(bins, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const double span = hi - lo;
        int b = span > 0.0 ? static_cast<int>((feats[k].entropy() - lo) / span * bins) : 0;
        b = std::clamp(b, 0, bins - 1);
        (kept[k] ? h_ret : h_dis)[static_cast<std::size_t>(b)]++;
    }

    Json report;
    report["retention"] = to_json(retention_stats(causal, kept));
    report["separability_accuracy"] = optional_json(sep);
    report["entropy_histogram"] = {{"lo", n ? lo : 0.0}, {"hi", n ? hi : 0.0}, {"retained", h_ret}, {"discarded", h_dis}};
    io::write_json(config.out / "report.json", report);
    log << "report: retained " << ids.size() << " of " << n;
    if (sep) log << ", separability " << *sep;
    log << "\n";
    return 0;
}

}  // namespace rulprune
