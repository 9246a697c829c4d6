#pragma once

#include "rulprune/causal.hpp"
#include "rulprune/io.hpp"
#include "rulprune/metrics.hpp"
#include "rulprune/predictor.hpp"
#include "rulprune/screen.hpp"
#include "rulprune/series.hpp"
#include "rulprune/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rulprune {

/// Experiment arms: both stages, causal stage only, no pruning, uniform window-index subsampling.
enum class Arm { cg, pc, full, sub };

std::string to_string(Arm arm);
Arm arm_from_string(const std::string& name);

struct DataConfig {
    std::filesystem::path input;  // training / pruning data
    std::filesystem::path test;   // held-out data for eval
    CsvSchema schema;
    std::size_t factor = 10;
    std::size_t window = 50;
    std::size_t stride = 1;
    /// Divisor applied to RUL labels during training; 0 picks the largest training label.
    double label_scale = 0.0;
};

struct PipelineConfig {
    DataConfig data;
    std::filesystem::path out = "out";
    std::filesystem::path checkpoint;   // default: <out>/model.json
    std::filesystem::path prune_index;  // default: <out>/prune_index.jsonl
    Arm arm = Arm::cg;
    std::size_t sub_stride = 10;
    CausalPruneConfig causal;
    ScreenConfig screen;
    int bo_budget = 25;
    PredictorConfig predictor;
    TrainConfig train;
    DegradationSpec synth;
    std::uint64_t seed = 0;

    void validate() const;
    std::filesystem::path checkpoint_path() const;
    std::filesystem::path prune_index_path() const;
};

/// Unknown keys raise ConfigError so typos never pass silently.
PipelineConfig pipeline_config_from_json(const io::Json& j);
io::Json to_json(const PipelineConfig& config);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" to a config document. The value is parsed as JSON when possible, else kept as a string.
void apply_override(io::Json& config, const std::string& assignment);

io::Json to_json(const CausalPruneConfig& config);
io::Json to_json(const ScreenConfig& config);
io::Json to_json(const TrainConfig& config);

struct PreparedData {
    std::vector<SensorSeries> series;  // downsampled and normalized
    NormalizerParams normalizer;
    WindowSet windows;
};

/// Downsample, window, then normalize. Fits the normalizer on `raw` unless one is given.
PreparedData prepare_data(const std::vector<SensorSeries>& raw, const DataConfig& config,
                          const std::optional<NormalizerParams>& normalizer = std::nullopt);

struct PruneOutcome {
    Arm arm = Arm::cg;
    std::vector<std::optional<double>> mse;  // absent when stage 1 did not run
    std::vector<std::optional<double>> q;    // absent for windows not screened
    std::vector<WindowFeatures> features;    // every window
    std::vector<bool> causal_kept;
    std::vector<bool> retained;
    std::optional<GmmModel> gmm;
    std::optional<ThresholdResult> threshold;
    std::size_t group_count = 0;
    RetentionSummary summary;
    double stage2_retention = 1.0;  // retained / stage-1 survivors

    std::vector<std::size_t> retained_ids() const;
};

/// Runs the configured arm over `windows`: causal stage first, then GMM screening on its survivors.
PruneOutcome run_prune(const WindowSet& windows, const PipelineConfig& config);

/// Model inputs: sensor columns of each window (RUL channel dropped) with the window label.
std::vector<Sample> to_samples(const WindowSet& windows, std::span<const std::size_t> ids);
std::vector<Sample> to_samples(const WindowSet& windows);

/// Record {window_id, unit, rul_level, start, mse_causal, q, retained} per window.
void write_prune_index(const std::filesystem::path& path, const WindowSet& windows, const PruneOutcome& outcome);

struct PruneIndexEntry {
    std::size_t window_id = 0;
    std::string unit;
    double rul_level = 0.0;
    std::size_t start = 0;
    std::optional<double> mse;
    std::optional<double> q;
    bool retained = false;
};

std::vector<PruneIndexEntry> read_prune_index(const std::filesystem::path& path);

/// Retained ids of `index`, after checking that it describes exactly `windows`.
std::vector<std::size_t> retained_from_index(const std::vector<PruneIndexEntry>& index, const WindowSet& windows);

// Subcommands. Each returns a process exit code and writes its artifacts under config.out.
int cmd_synth(const PipelineConfig& config, std::ostream& log);
int cmd_prune(const PipelineConfig& config, std::ostream& log);
int cmd_train(const PipelineConfig& config, std::ostream& log);
int cmd_finetune(const PipelineConfig& config, std::ostream& log);
int cmd_eval(const PipelineConfig& config, std::ostream& log);
int cmd_report(const PipelineConfig& config, std::ostream& log);

}  // namespace rulprune
