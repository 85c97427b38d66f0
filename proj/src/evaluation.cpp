#include "mapsed/evaluation.hpp"

#include "mapsed/io.hpp"
#include "mapsed/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <sstream>

namespace mapsed {

PostProcess parse_postprocess(const std::string& name) {
    if (name == "clamp") return PostProcess::Clamp;
    if (name == "round") return PostProcess::Round;
    if (name == "none") return PostProcess::None;
    throw ConfigError("unknown post-processing mode '" + name + "' (valid: clamp, round, none)");
}

std::string to_string(PostProcess p) {
    switch (p) {
        case PostProcess::Clamp: return "clamp";
        case PostProcess::Round: return "round";
        case PostProcess::None: return "none";
    }
    return "clamp";
}

Tensor postprocess(Tensor prediction, PostProcess mode) {
    if (mode == PostProcess::None) return prediction;
    for (double& v : prediction.data()) {
        v = std::max(v, 0.0);
        if (mode == PostProcess::Round) v = std::round(v);
    }
    return prediction;
}

double rmse(const Tensor& truth, const Tensor& prediction) {
    require_same_shape(truth, prediction, "rmse");
    if (truth.size() == 0) throw DimensionError("rmse of an empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i] - prediction[i]) * (truth[i] - prediction[i]);
    return std::sqrt(s / static_cast<double>(truth.size()));
}

double mae(const Tensor& truth, const Tensor& prediction) {
    require_same_shape(truth, prediction, "mae");
    if (truth.size() == 0) throw DimensionError("mae of an empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(truth[i] - prediction[i]);
    return s / static_cast<double>(truth.size());
}

Tensor category_slice(const Tensor& y, std::size_t k) {
    if (y.rank() != 4) throw DimensionError("category_slice: expected n×c×h×w, got " + shape_to_string(y.shape()));
    if (k >= y.dim(1)) throw DimensionError("category index " + std::to_string(k) + " out of range", 1);
    const Shape& s = y.shape();
    return narrow(y, 1, k, 1).reshaped({s[0], s[2], s[3]});
}

// ------------------------------------------------------------------ evaluate

EvalReport evaluate(const Predictor& predictor, const std::vector<OccurrenceSequence>& data,
                    const std::vector<std::string>& categories, PostProcess post, std::size_t threads) {
    if (data.empty()) throw std::invalid_argument("evaluate: no sequences");
    const std::size_t c = data.front().y.dim(1);
    if (!categories.empty() && categories.size() != c) {
        throw DimensionError("evaluate: " + std::to_string(categories.size()) + " category names for " +
                                 std::to_string(c) + " channels",
                             1);
    }
    std::vector<Tensor> predictions(data.size());
    parallel_for(data.size(), threads, [&](std::size_t i) { predictions[i] = postprocess(predictor(data[i].x), post); });

    EvalReport report;
    report.categories = categories;
    if (report.categories.empty())
        for (std::size_t k = 0; k < c; ++k) report.categories.push_back("category_" + std::to_string(k));
    report.rmse.assign(c, 0.0);
    report.mae.assign(c, 0.0);
    report.sequences = data.size();
    report.abs_error = Tensor(data.front().y.shape());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Tensor& y = data[i].y;
        require_same_shape(y, predictions[i], "evaluate");
        for (std::size_t k = 0; k < c; ++k) {
            const Tensor yt = category_slice(y, k), yp = category_slice(predictions[i], k);
            report.rmse[k] += rmse(yt, yp);
            report.mae[k] += mae(yt, yp);
        }
        for (std::size_t j = 0; j < y.size(); ++j) report.abs_error[j] += std::abs(y[j] - predictions[i][j]);
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    for (std::size_t k = 0; k < c; ++k) {
        report.rmse[k] *= inv;
        report.mae[k] *= inv;
        report.macro_rmse += report.rmse[k];
        report.macro_mae += report.mae[k];
    }
    report.macro_rmse /= static_cast<double>(c);
    report.macro_mae /= static_cast<double>(c);
    report.abs_error *= inv;
    return report;
}

Predictor model_predictor(const ModelParams& params) {
    return [&params](const Tensor& x) { return predict(params, x); };
}

// ----------------------------------------------------------------- baselines

Tensor history_baseline(const Tensor& x, std::size_t n) {
    if (x.rank() != 4 || x.dim(0) == 0) throw DimensionError("history_baseline: expected m×c×h×w with m ≥ 1");
    const std::size_t frame = x.size() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = n;
    Tensor y(shape);
    const double* last = x.data().data() + (x.dim(0) - 1) * frame;
    for (std::size_t t = 0; t < n; ++t) std::copy_n(last, frame, y.data().data() + t * frame);
    return y;
}

Predictor history_predictor(std::size_t n) {
    return [n](const Tensor& x) { return history_baseline(x, n); };
}

Tensor LinearBaseline::predict(const Tensor& x) const {
    if (x.shape() != input_shape) {
        throw DimensionError("linear baseline expects input " + shape_to_string(input_shape) + ", got " +
                             shape_to_string(x.shape()));
    }
    const std::size_t d = x.size(), outputs = weights.dim(1);
    Tensor y(output_shape);
    for (std::size_t f = 0; f < d; ++f) {
        const double xf = x[f];
        if (xf == 0.0) continue;
        const double* row = weights.data().data() + f * outputs;
        for (std::size_t o = 0; o < outputs; ++o) y[o] += xf * row[o];
    }
    if (intercept) {
        const double* row = weights.data().data() + d * outputs;
        for (std::size_t o = 0; o < outputs; ++o) y[o] += row[o];
    }
    return y;
}

LinearBaseline lr_baseline_fit(const std::vector<OccurrenceSequence>& train, const LinearBaselineConfig& cfg) {
    if (train.empty()) throw std::invalid_argument("linear baseline: no training sequences");
    if (!(cfg.ridge >= 0.0)) throw ConfigError("linear baseline ridge must be non-negative");
    LinearBaseline model;
    model.input_shape = train.front().x.shape();
    model.output_shape = train.front().y.shape();
    model.intercept = cfg.fit_intercept;
    const std::size_t n_samples = train.size();
    const std::size_t d = shape_numel(model.input_shape);
    const std::size_t cols = d + (cfg.fit_intercept ? 1 : 0);
    const std::size_t outputs = shape_numel(model.output_shape);

    Eigen::MatrixXd a(n_samples, cols);
    Eigen::MatrixXd y(n_samples, outputs);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const OccurrenceSequence& s = train[i];
        if (s.x.shape() != model.input_shape || s.y.shape() != model.output_shape)
            throw DimensionError("linear baseline: sequences differ in shape");
        for (std::size_t f = 0; f < d; ++f) a(i, f) = s.x[f];
        if (cfg.fit_intercept) a(i, d) = 1.0;
        for (std::size_t o = 0; o < outputs; ++o) y(i, o) = s.y[o];
    }

    Eigen::MatrixXd w;
    if (cols <= n_samples) {
        Eigen::MatrixXd gram = a.transpose() * a;
        gram.diagonal().array() += cfg.ridge;
        w = gram.ldlt().solve(a.transpose() * y);
    } else {
        Eigen::MatrixXd gram = a * a.transpose();
        gram.diagonal().array() += cfg.ridge;
        w = a.transpose() * gram.ldlt().solve(y);
    }
    model.weights = Tensor(Shape{cols, outputs});
    for (std::size_t r = 0; r < cols; ++r)
        for (std::size_t o = 0; o < outputs; ++o) model.weights[r * outputs + o] = w(r, o);
    return model;
}

Predictor lr_predictor(const LinearBaseline& model) {
    return [&model](const Tensor& x) { return model.predict(x); };
}

// -------------------------------------------------------------------- probes

Cell argmax_cell(const Tensor& frame) {
    Tensor map;
    if (frame.rank() == 2) {
        map = frame;
    } else if (frame.rank() == 3) {
        const std::size_t h = frame.dim(1), w = frame.dim(2);
        map = Tensor(Shape{h, w});
        for (std::size_t k = 0; k < frame.dim(0); ++k)
            for (std::size_t i = 0; i < h * w; ++i) map[i] += frame[k * h * w + i];
    } else {
        throw DimensionError("argmax_cell: expected h×w or c×h×w, got " + shape_to_string(frame.shape()));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < map.size(); ++i)
        if (map[i] > map[best]) best = i;
    return {best / map.dim(1), best % map.dim(1)};
}

std::size_t chebyshev(Cell a, Cell b) {
    const std::size_t dr = a.row > b.row ? a.row - b.row : b.row - a.row;
    const std::size_t dc = a.col > b.col ? a.col - b.col : b.col - a.col;
    return std::max(dr, dc);
}

Cell rotate_cell(Cell cell, std::size_t h, std::size_t w, int quarter_turns) {
    const int turns = ((quarter_turns % 4) + 4) % 4;
    for (int t = 0; t < turns; ++t) {
        // out[i][j] = in[j][w-1-i]: input (r, c) lands at (w-1-c, r).
        cell = {w - 1 - cell.col, cell.row};
        std::swap(h, w);
    }
    return cell;
}

EvalReport rotation_probe(const Predictor& predictor, const std::vector<OccurrenceSequence>& data,
                          const std::vector<std::string>& categories, int quarter_turns, PostProcess post,
                          std::size_t threads) {
    std::vector<OccurrenceSequence> rotated;
    rotated.reserve(data.size());
    for (const OccurrenceSequence& s : data) {
        rotated.push_back(quarter_turns % 4 == 0 ? s : apply_augmentation(s, {false, quarter_turns}));
    }
    EvalReport report = evaluate(predictor, rotated, categories, post, threads);
    if (!rotated.empty()) {
        const OccurrenceSequence& first = rotated.front();
        const Tensor prediction = postprocess(predictor(first.x), post);
        const Tensor last_input = frame_of(first.x, first.x.dim(0) - 1);
        const Tensor first_pred = frame_of(prediction, 0);
        for (std::size_t k = 0; k < report.categories.size(); ++k) {
            report.artifacts.push_back({"input_last_" + report.categories[k], frame_of(last_input, k)});
            report.artifacts.push_back({"prediction_0_" + report.categories[k], frame_of(first_pred, k)});
        }
    }
    return report;
}

namespace {

std::vector<Grid> frame_grids(const std::string& prefix, const Tensor& seq) {
    std::vector<Grid> grids;
    for (std::size_t t = 0; t < seq.dim(0); ++t) {
        const Tensor frame = frame_of(seq, t);
        for (std::size_t k = 0; k < frame.dim(0); ++k)
            grids.push_back({prefix + "_t" + std::to_string(t) + "_k" + std::to_string(k), frame_of(frame, k)});
    }
    return grids;
}

}  // namespace

SemanticsProbe semantics_probe(const Predictor& predictor, const OccurrenceSequence& seq, std::size_t k,
                               PostProcess post) {
    SemanticsProbe probe;
    probe.input = aggregate_into_category(seq, k).x;
    probe.prediction = postprocess(predictor(probe.input), post);
    const std::size_t c = probe.prediction.dim(1);
    for (std::size_t kk = 0; kk < c; ++kk) {
        const double mass = category_slice(probe.prediction, kk).sum();
        probe.total_mass += mass;
        if (kk != k) probe.leaked_mass += mass;
    }
    probe.frames = frame_grids("input", probe.input);
    for (Grid& g : frame_grids("prediction", probe.prediction)) probe.frames.push_back(std::move(g));
    return probe;
}

DynamicsProbe dynamics_probe(const Predictor& predictor, const GridSpec& spec, std::size_t offset, double mass,
                             PostProcess post) {
    DynamicsProbe probe;
    probe.stimulus = moving_hotspot(spec, offset, mass);
    probe.prediction = postprocess(predictor(probe.stimulus.x), post);
    for (std::size_t tau = 0; tau < probe.prediction.dim(0); ++tau) {
        const std::size_t diag = spec.m + tau + offset;
        probe.distances.push_back(chebyshev(argmax_cell(frame_of(probe.prediction, tau)), {diag, diag}));
    }
    probe.frames = frame_grids("input", probe.stimulus.x);
    for (Grid& g : frame_grids("prediction", probe.prediction)) probe.frames.push_back(std::move(g));
    return probe;
}

// ----------------------------------------------------------------------- CSV

std::string grid_csv(const Tensor& grid) {
    if (grid.rank() != 2) throw DimensionError("grid_csv: expected h×w, got " + shape_to_string(grid.shape()));
    std::ostringstream out;
    for (std::size_t i = 0; i < grid.dim(0); ++i) {
        for (std::size_t j = 0; j < grid.dim(1); ++j) {
            if (j) out << ',';
            out << format_double(grid[i * grid.dim(1) + j]);
        }
        out << '\n';
    }
    return out.str();
}

std::string metrics_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "category,rmse,mae\n";
    for (std::size_t k = 0; k < report.categories.size(); ++k)
        out << report.categories[k] << ',' << format_double(report.rmse[k]) << ',' << format_double(report.mae[k])
            << '\n';
    return out.str();
}

void write_grids(const std::string& directory, const std::vector<Grid>& grids) {
    for (const Grid& g : grids) write_file_atomic((std::filesystem::path(directory) / (g.name + ".csv")).string(), grid_csv(g.values));
}

}  // namespace mapsed
