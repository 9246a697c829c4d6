#include "rulprune/predictor.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/io.hpp"
#include "rulprune/parallel.hpp"
#include "rulprune/random.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace rulprune {

using Eigen::MatrixXd;

void TrainConfig::validate() const {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ArgumentError("val_fraction must lie in (0, 1)");
    if (warmup_epochs < 0 || patience < 1) throw ArgumentError("warmup_epochs must be >= 0 and patience >= 1");
    if (batch_size < 1 || max_epochs < 1) throw ArgumentError("batch_size and max_epochs must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning_rate must be positive");
    if (!(beta >= 0.0)) throw ArgumentError("beta must be >= 0");
    if (freeze_first < 0) throw ArgumentError("freeze_first must be >= 0");
}

namespace {

double mse_on(const PredictorModel& model, std::span<const Sample> data, std::span<const std::size_t> idx) {
    double total = 0.0;
    std::vector<double> preds(idx.size());
    parallel_for(idx.size(), [&](std::size_t i) {
        preds[i] = transformer_forward(model, data[idx[i]].x);
    });
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double e = preds[i] - data[idx[i]].y / model.output_scale;
        total += e * e;
    }
    return idx.empty() ? 0.0 : total / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(const PredictorModel& model, std::span<const Sample> data, const TrainConfig& config,
                  const Parameters* anchor) {
    config.validate();
    model.config.validate();
    if (data.size() < 2) throw ArgumentError("train: need at least 2 samples");
    for (const auto& s : data) {
        if (s.x.cols() != model.config.input_channels) {
            throw ArgumentError("train: sample has " + std::to_string(s.x.cols()) + " channels, model expects " +
                                std::to_string(model.config.input_channels));
        }
    }

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(config.seed, "split"));
    split_rng.shuffle(std::span<std::size_t>(order));
    auto n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(data.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
    const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    TrainResult result;
    result.train_size = tr.size();
    result.val_size = val.size();
    PredictorModel current = model;
    result.model = model;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    Rng epoch_rng(derive_seed(config.seed, "epochs"));
    std::vector<Sample> batch;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        epoch_rng.shuffle(std::span<std::size_t>(tr));
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < tr.size(); b += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t e = std::min(tr.size(), b + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = b; i < e; ++i) batch.push_back(data[tr[i]]);
            const Gradients g = backward(current, batch, anchor, config.beta);
            if (!std::isfinite(g.loss)) throw TrainingError("non-finite training loss", epoch);
            loss_sum += g.loss * static_cast<double>(e - b);
            std::vector<const MatrixXd*> grads;
            for_each_group(g.grad, [&](const std::string&, const MatrixXd& m) { grads.push_back(&m); });
            std::size_t k = 0;
            for_each_group(current.params, [&](const std::string& name, MatrixXd& m) {
                const MatrixXd& gm = *grads[k++];
                if (current.trainable(name)) m -= config.learning_rate * gm;
            });
        }
        const double train_loss = loss_sum / static_cast<double>(tr.size());
        const double val_loss = mse_on(current, data, val);
        if (!std::isfinite(val_loss)) throw TrainingError("non-finite validation loss", epoch);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back({epoch, train_loss, val_loss, seconds});

        if (val_loss < best) {
            best = val_loss;
            result.model = current;
            result.best_epoch = epoch;
            stale = 0;
        } else if (epoch > config.warmup_epochs) {
            ++stale;
        }
        if (stale >= config.patience) break;
    }
    return result;
}

TrainResult finetune(const PredictorModel& pretrained, std::span<const Sample> data, const TrainConfig& config) {
    if (config.freeze_first > pretrained.config.layers) {
        throw ArgumentError("freeze_first (" + std::to_string(config.freeze_first) + ") exceeds layer count (" +
                            std::to_string(pretrained.config.layers) + ")");
    }
    PredictorModel model = pretrained;
    model.frozen.clear();
    freeze_first_layers(model, config.freeze_first);
    return train(model, data, config, &pretrained.params);
}

io::Json to_json(const PredictorConfig& c) {
    io::Json j;
    j["embed_dim"] = c.embed_dim;
    j["heads"] = c.heads;
    j["layers"] = c.layers;
    j["ffn_dim"] = c.ffn();
    j["head_dim1"] = c.head_dim1;
    j["head_dim2"] = c.head_dim2;
    j["input_channels"] = c.input_channels;
    j["seq_len"] = c.seq_len;
    j["causal_mask"] = c.causal_mask;
    j["ln_eps"] = c.ln_eps;
    return j;
}

namespace {

PredictorConfig config_from_json(const io::Json& j) {
    PredictorConfig c;
    c.embed_dim = j.at("embed_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.head_dim1 = j.at("head_dim1").get<int>();
    c.head_dim2 = j.at("head_dim2").get<int>();
    c.input_channels = j.at("input_channels").get<int>();
    c.seq_len = j.at("seq_len").get<int>();
    c.causal_mask = j.at("causal_mask").get<bool>();
    c.ln_eps = j.at("ln_eps").get<double>();
    return c;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    const auto& m = checkpoint.model;
    io::Json j;
    j["format"] = "rulprune-checkpoint";
    j["version"] = 1;
    j["config"] = to_json(m.config);
    j["seed"] = checkpoint.seed;
    j["output_scale"] = m.output_scale;
    j["frozen"] = io::Json(std::vector<std::string>(m.frozen.begin(), m.frozen.end()));
    if (checkpoint.normalizer) {
        j["normalizer"] = {{"min", checkpoint.normalizer->min}, {"max", checkpoint.normalizer->max}};
    }
    io::Json groups = io::Json::object();
    for_each_group(m.params, [&](const std::string& name, const MatrixXd& value) {
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(value.size()));
        for (Eigen::Index r = 0; r < value.rows(); ++r) {
            for (Eigen::Index c = 0; c < value.cols(); ++c) {
                if (!std::isfinite(value(r, c))) throw NumericalError("checkpoint: non-finite value in " + name);
                data.push_back(value(r, c));
            }
        }
        groups[name] = {{"rows", value.rows()}, {"cols", value.cols()}, {"data", std::move(data)}};
    });
    j["groups"] = std::move(groups);
    io::write_json(path, j);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const io::Json j = io::read_json(path);
    try {
        if (j.at("format").get<std::string>() != "rulprune-checkpoint") {
            throw ConfigError(path.string() + " is not a checkpoint");
        }
        Checkpoint cp;
        const PredictorConfig config = config_from_json(j.at("config"));
        cp.model = init_model(config, 0);
        cp.seed = j.at("seed").get<std::uint64_t>();
        cp.model.output_scale = j.at("output_scale").get<double>();
        for (const auto& f : j.at("frozen")) cp.model.frozen.insert(f.get<std::string>());
        if (j.contains("normalizer")) {
            cp.normalizer = NormalizerParams{j.at("normalizer").at("min").get<std::vector<double>>(),
                                             j.at("normalizer").at("max").get<std::vector<double>>()};
        }
        const auto& groups = j.at("groups");
        for_each_group(cp.model.params, [&](const std::string& name, MatrixXd& value) {
            if (!groups.contains(name)) throw ConfigError("checkpoint is missing parameter group " + name);
            const auto& g = groups.at(name);
            const auto rows = g.at("rows").get<Eigen::Index>();
            const auto cols = g.at("cols").get<Eigen::Index>();
            if (rows != value.rows() || cols != value.cols()) {
                throw ConfigError("checkpoint group " + name + " has shape " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + ", config implies " + std::to_string(value.rows()) + "x" +
                                  std::to_string(value.cols()));
            }
            const auto& data = g.at("data");
            if (data.size() != static_cast<std::size_t>(rows * cols)) {
                throw ConfigError("checkpoint group " + name + " has the wrong number of values");
            }
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) value(r, c) = data[k++].get<double>();
            }
        });
        return cp;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

void write_history(const std::filesystem::path& path, std::span<const EpochRecord> history) {
    std::vector<io::Json> lines;
    lines.reserve(history.size());
    for (const auto& h : history) {
        lines.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss},
                         {"seconds", h.seconds}});
    }
    io::write_jsonl(path, lines);
}

}  // namespace rulprune
