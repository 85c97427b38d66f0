#pragma once

#include "mapsed/data.hpp"
#include "mapsed/keyvalue.hpp"
#include "mapsed/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mapsed {

/// Maps an m×c×h×w history to an n×c×h×w forecast. Must be thread-safe.
using Predictor = std::function<Tensor(const Tensor& x)>;

enum class PostProcess { Clamp, Round, None };

PostProcess parse_postprocess(const std::string& name);
std::string to_string(PostProcess p);
/// Clamp: max(v, 0). Round: clamp, then round half away from zero.
Tensor postprocess(Tensor prediction, PostProcess mode);

/// Root of the mean squared error over all entries.
double rmse(const Tensor& truth, const Tensor& prediction);
/// Mean absolute error over all entries.
double mae(const Tensor& truth, const Tensor& prediction);
/// Category k of an n×c×h×w tensor as n×h×w.
Tensor category_slice(const Tensor& y, std::size_t k);

struct Grid {
    std::string name;
    Tensor values;  // h×w
};

struct EvalReport {
    std::vector<std::string> categories;
    std::vector<double> rmse;  // per category: mean over sequences of per-sequence RMSE
    std::vector<double> mae;
    double macro_rmse = 0.0;
    double macro_mae = 0.0;
    std::size_t sequences = 0;
    /// Mean |Y − Y′| over sequences, n×c×h×w.
    Tensor abs_error;
    std::vector<Grid> artifacts;
    KeyValues config_echo;
};

EvalReport evaluate(const Predictor& predictor, const std::vector<OccurrenceSequence>& data,
                    const std::vector<std::string>& categories, PostProcess post = PostProcess::Clamp,
                    std::size_t threads = 1);

Predictor model_predictor(const ModelParams& params);

/// Repeats the last input frame n times.
Tensor history_baseline(const Tensor& x, std::size_t n);
Predictor history_predictor(std::size_t n);

struct LinearBaselineConfig {
    double ridge = 1e-6;
    bool fit_intercept = true;
};

/// One linear model per output scalar, all sharing the flattened history as
/// features. Weights are (d + intercept) × (n·c·h·w); the intercept row is last.
struct LinearBaseline {
    Shape input_shape;
    Shape output_shape;
    bool intercept = true;
    Tensor weights;

    Tensor predict(const Tensor& x) const;
};

/// Ridge-damped least squares; solves the primal system when features+1 ≤
/// samples and the equivalent dual system otherwise.
LinearBaseline lr_baseline_fit(const std::vector<OccurrenceSequence>& train, const LinearBaselineConfig& cfg = {});
Predictor lr_predictor(const LinearBaseline& model);

struct Cell {
    std::size_t row = 0, col = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

/// Argmax over an h×w map, or over the category sum of a c×h×w frame.
/// Ties resolve to the first cell in row-major order.
Cell argmax_cell(const Tensor& frame);
std::size_t chebyshev(Cell a, Cell b);
/// Cell (r, c) after `quarter_turns` counter-clockwise turns of an h×w grid.
Cell rotate_cell(Cell cell, std::size_t h, std::size_t w, int quarter_turns);

/// Evaluates on inputs and targets rotated together; adds heatmaps of the
/// first sequence's last input frame and first predicted frame per category.
EvalReport rotation_probe(const Predictor& predictor, const std::vector<OccurrenceSequence>& data,
                          const std::vector<std::string>& categories, int quarter_turns,
                          PostProcess post = PostProcess::Clamp, std::size_t threads = 1);

struct SemanticsProbe {
    Tensor input;       // aggregated history
    Tensor prediction;  // post-processed, n×c×h×w
    double total_mass = 0.0;
    double leaked_mass = 0.0;  // mass outside category k
    std::vector<Grid> frames;
};

SemanticsProbe semantics_probe(const Predictor& predictor, const OccurrenceSequence& seq, std::size_t k,
                               PostProcess post = PostProcess::Clamp);

struct DynamicsProbe {
    OccurrenceSequence stimulus;
    Tensor prediction;
    /// Chebyshev distance from each predicted frame's argmax to the diagonal
    /// extrapolation (m + τ + offset, m + τ + offset).
    std::vector<std::size_t> distances;
    std::vector<Grid> frames;
};

DynamicsProbe dynamics_probe(const Predictor& predictor, const GridSpec& spec, std::size_t offset, double mass,
                             PostProcess post = PostProcess::Clamp);

// CSV output.
std::string grid_csv(const Tensor& grid);
std::string metrics_csv(const EvalReport& report);
void write_grids(const std::string& directory, const std::vector<Grid>& grids);

}  // namespace mapsed
