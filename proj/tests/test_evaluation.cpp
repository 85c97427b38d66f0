#include "support.hpp"

#include "mapsed/evaluation.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mapsed;
using namespace testing_support;

namespace {

GridSpec hotspot_spec(std::size_t hw, std::size_t c, std::size_t m, std::size_t n) {
    GridSpec s;
    s.h = s.w = hw;
    for (std::size_t k = 0; k < c; ++k) s.categories.push_back(std::string(1, static_cast<char>('A' + k)));
    s.m = m;
    s.n = n;
    return s;
}

/// Predicts the exact diagonal continuation of a moving hotspot.
Predictor diagonal_oracle(const GridSpec& spec) {
    return [spec](const Tensor& x) {
        const Cell last = argmax_cell(frame_of(x, spec.m - 1));
        const double mass = frame_of(x, spec.m - 1).at({0, last.row, last.col});
        Tensor y(Shape{spec.n, spec.c(), spec.h, spec.w});
        for (std::size_t t = 0; t < spec.n; ++t)
            for (std::size_t k = 0; k < spec.c(); ++k) y.at({t, k, last.row + t + 1, last.col + t + 1}) = mass;
        return y;
    };
}

}  // namespace

TEST_CASE("rmse and mae examples") {
    const Tensor truth = Tensor::from({{1.0, 2.0}, {3.0, 4.0}});
    const Tensor zero(truth.shape());
    CHECK(mae(truth, zero) == doctest::Approx(2.5));
    CHECK(rmse(truth, zero) == doctest::Approx(std::sqrt(7.5)));
    CHECK(rmse(truth, truth) == 0.0);
    CHECK_THROWS(rmse(truth, Tensor(Shape{4})));
}

TEST_CASE("post-processing") {
    const Tensor p = Tensor::from({-1.0, 0.4, 0.5, 2.49});
    CHECK(postprocess(p, PostProcess::None) == p);
    CHECK(postprocess(p, PostProcess::Clamp) == Tensor::from({0.0, 0.4, 0.5, 2.49}));
    CHECK(postprocess(p, PostProcess::Round) == Tensor::from({0.0, 0.0, 1.0, 2.0}));
    CHECK(parse_postprocess(to_string(PostProcess::Round)) == PostProcess::Round);
    CHECK_THROWS(parse_postprocess("floor"));
}

TEST_CASE("history baseline repeats the last frame") {
    Rng rng(31);
    const Tensor x = random_tensor({3, 2, 2, 2}, rng);
    const Tensor y = history_baseline(x, 2);
    CHECK(y.shape() == Shape{2, 2, 2, 2});
    CHECK(frame_of(y, 0) == frame_of(x, 2));
    CHECK(frame_of(y, 1) == frame_of(x, 2));
}

TEST_CASE("evaluate averages per-sequence metrics per category") {
    std::vector<OccurrenceSequence> data(2);
    for (auto& s : data) {
        s.x = Tensor(Shape{1, 2, 1, 2});
        s.y = Tensor(Shape{1, 2, 1, 2});
    }
    data[0].y.at({0, 0, 0, 0}) = 2.0;  // category A error 2 in one of two cells
    data[1].y.at({0, 1, 0, 1}) = 4.0;  // category B error 4 in one of two cells
    const auto zero = [](const Tensor& x) { return Tensor(Shape{1, x.dim(1), x.dim(2), x.dim(3)}); };
    const EvalReport r = evaluate(zero, data, {"A", "B"});
    CHECK(r.sequences == 2);
    CHECK(r.mae[0] == doctest::Approx(0.5));
    CHECK(r.rmse[0] == doctest::Approx(std::sqrt(2.0) / 2.0));
    CHECK(r.mae[1] == doctest::Approx(1.0));
    CHECK(r.macro_mae == doctest::Approx(0.75));
    CHECK(r.abs_error.at({0, 1, 0, 1}) == doctest::Approx(2.0));

    const std::string csv = metrics_csv(r);
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "category,rmse,mae");
    CHECK(csv.find("\nA,") != std::string::npos);
}

TEST_CASE("evaluation is identical across thread counts") {
    const GridSpec spec = hotspot_spec(8, 2, 3, 2);
    Rng rng(32);
    const auto data = synth_moving_hotspot(spec, 6, rng);
    const auto a = evaluate(history_predictor(2), data, spec.categories, PostProcess::Clamp, 1);
    const auto b = evaluate(history_predictor(2), data, spec.categories, PostProcess::Clamp, 4);
    CHECK(metrics_csv(a) == metrics_csv(b));
}

TEST_CASE("linear baseline") {
    const GridSpec spec = hotspot_spec(3, 1, 2, 1);
    Rng rng(33);
    std::vector<OccurrenceSequence> data(30);
    for (auto& s : data) {
        s.x = random_tensor({2, 1, 3, 3}, rng, 0.0, 3.0);
        s.y = Tensor(Shape{1, 1, 3, 3});
    }
    SUBCASE("zero targets give zero weights") {
        const LinearBaseline lb = lr_baseline_fit(data);
        double worst = 0.0;
        for (std::size_t i = 0; i < lb.weights.size(); ++i) worst = std::max(worst, std::abs(lb.weights[i]));
        CHECK(worst <= 1e-12);
    }
    SUBCASE("copying the last frame matches the history baseline") {
        for (auto& s : data) s.y = history_baseline(s.x, 1);
        const LinearBaseline lb = lr_baseline_fit(data);
        for (const auto& s : data) CHECK(max_abs_diff(lb.predict(s.x), s.y) <= 1e-6);
    }
    SUBCASE("planted doubling is recovered") {
        for (auto& s : data) s.y = frame_of(s.x, 1) * 2.0;
        for (auto& s : data) s.y = s.y.reshaped({1, 1, 3, 3});
        const LinearBaseline lb = lr_baseline_fit(data, {.ridge = 1e-10});
        const std::size_t d = 18;
        for (std::size_t out = 0; out < 9; ++out)
            for (std::size_t f = 0; f <= d; ++f) {
                const double expect = f == 9 + out ? 2.0 : 0.0;
                CHECK(std::abs(lb.weights.at({f, out}) - expect) <= 1e-6);
            }
    }
    SUBCASE("fewer samples than features uses the dual system") {
        data.resize(5);
        for (auto& s : data) s.y = history_baseline(s.x, 1);
        const LinearBaseline lb = lr_baseline_fit(data);
        for (const auto& s : data) CHECK(max_abs_diff(lb.predict(s.x), s.y) <= 1e-4);
    }
}

TEST_CASE("argmax, chebyshev and rotate_cell") {
    Tensor g(Shape{3, 4});
    g.at({1, 2}) = 5.0;
    g.at({2, 3}) = 5.0;
    CHECK(argmax_cell(g) == Cell{1, 2});
    CHECK(argmax_cell(Tensor(Shape{2, 2})) == Cell{0, 0});
    CHECK(chebyshev({0, 0}, {2, 1}) == 2);
    CHECK(chebyshev({3, 3}, {3, 3}) == 0);
    // rotate_cell tracks rotate90.
    Rng rng(34);
    const Tensor grid = random_tensor({4, 4}, rng);
    for (int turns = 0; turns < 4; ++turns) {
        const Tensor r = rotate90(grid, turns);
        const std::size_t rh = r.dim(0), rw = r.dim(1);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                const Cell c = rotate_cell({i, j}, 4, 4, turns);
                REQUIRE(c.row < rh);
                REQUIRE(c.col < rw);
                CHECK(r.at({c.row, c.col}) == grid.at({i, j}));
            }
    }
    CHECK(rotate_cell({0, 1}, 3, 4, 2) == Cell{2, 2});
}

TEST_CASE("rotation probe") {
    const GridSpec spec = hotspot_spec(8, 2, 3, 2);
    Rng rng(35);
    const auto data = synth_moving_hotspot(spec, 4, rng);
    const auto predictor = history_predictor(2);
    const auto plain = evaluate(predictor, data, spec.categories);
    const auto none = rotation_probe(predictor, data, spec.categories, 0);
    CHECK(metrics_csv(plain) == metrics_csv(none));
    // A rotation-equivariant predictor scores identically under every turn.
    for (int t = 1; t < 4; ++t) CHECK(rotation_probe(predictor, data, spec.categories, t).rmse == plain.rmse);
    CHECK_FALSE(none.artifacts.empty());

    const auto perfect = [](const Tensor& x) { return x; };
    std::vector<OccurrenceSequence> same(1);
    same[0].x = data[0].y;
    same[0].y = data[0].y;
    CHECK(rotation_probe(perfect, same, spec.categories, 1).macro_mae == 0.0);
}

TEST_CASE("dynamics probe") {
    const GridSpec spec = hotspot_spec(10, 2, 4, 2);
    const auto oracle = dynamics_probe(diagonal_oracle(spec), spec, 2, 5.0);
    CHECK(oracle.distances == std::vector<std::size_t>{0, 0});
    CHECK(oracle.stimulus.x.at({3, 0, 5, 5}) == 5.0);
    const auto hist = dynamics_probe(history_predictor(2), spec, 2, 5.0);
    CHECK(hist.distances == std::vector<std::size_t>{1, 2});
    CHECK_FALSE(hist.frames.empty());
}

TEST_CASE("semantics probe measures leaked mass") {
    const GridSpec spec = hotspot_spec(6, 3, 2, 1);
    Rng rng(36);
    OccurrenceSequence seq;
    seq.x = random_tensor({2, 3, 6, 6}, rng, 0.0, 2.0);
    seq.y = Tensor(Shape{1, 3, 6, 6});
    const auto hist = semantics_probe(history_predictor(1), seq, 1);
    CHECK(hist.total_mass == doctest::Approx(frame_of(seq.x, 1).sum()).epsilon(1e-12));
    CHECK(hist.leaked_mass == doctest::Approx(0.0));
    CHECK(hist.input.at({0, 0, 0, 0}) == 0.0);

    const auto spread = [](const Tensor& x) {
        Tensor y(Shape{1, x.dim(1), x.dim(2), x.dim(3)});
        y.fill(1.0);
        return y;
    };
    const auto s = semantics_probe(spread, seq, 0);
    CHECK(s.total_mass == doctest::Approx(108.0));
    CHECK(s.leaked_mass == doctest::Approx(72.0));
}

TEST_CASE("grid csv layout") {
    const std::string csv = grid_csv(Tensor::from({{1.0, 2.5}, {0.0, 4.0}}));
    CHECK(csv == "1,2.5\n0,4\n");
}
