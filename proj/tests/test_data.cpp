#include "support.hpp"

#include "mapsed/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace mapsed;
using namespace testing_support;

namespace {

std::string write_temp(const std::string& name, const std::string& contents) {
    const auto path = std::filesystem::temp_directory_path() / ("mapsed_test_data_" + name);
    std::ofstream(path) << contents;
    return path.string();
}

GridSpec unit_spec(std::size_t h, std::size_t w, std::vector<std::string> cats) {
    GridSpec s;
    s.bbox = {0.0, 1.0, 0.0, 1.0};
    s.h = h;
    s.w = w;
    s.categories = std::move(cats);
    s.interval_days = 7;
    s.m = 2;
    s.n = 1;
    return s;
}

EventRecord record(const char* date, double lat, double lon, const char* cat) {
    return {Seconds(parse_date(date)), lat, lon, cat};
}

struct SilenceWarnings {
    std::vector<std::string> seen;
    WarningSink previous = set_warning_sink([this](const std::string& m) { seen.push_back(m); });
    ~SilenceWarnings() { set_warning_sink(previous); }
};

double category_sum(const Tensor& stacked, std::size_t t, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < stacked.dim(2); ++i)
        for (std::size_t j = 0; j < stacked.dim(3); ++j) s += stacked.at({t, k, i, j});
    return s;
}

FrameRun run_of(std::size_t frames) {
    FrameRun r;
    r.start = parse_date("2020-01-06");
    for (std::size_t t = 0; t < frames; ++t) {
        Tensor f(Shape{1, 2, 2});
        f.fill(static_cast<double>(t));
        r.frames.push_back(f);
    }
    return r;
}

}  // namespace

TEST_CASE("dates parse and format") {
    CHECK(format_date(parse_date("2021-02-28")) == "2021-02-28");
    CHECK_THROWS_AS(parse_date("2021-13-01"), DataError);
    const auto iso = parse_timestamp("2020-01-03T10:30", "");
    REQUIRE(iso.has_value());
    CHECK(*iso == Seconds(parse_date("2020-01-03")) + std::chrono::minutes(630));
    const auto us = parse_timestamp("01/03/2020", "%m/%d/%Y");
    REQUIRE(us.has_value());
    CHECK(*us == Seconds(parse_date("2020-01-03")));
    CHECK_FALSE(parse_timestamp("not a date", "").has_value());
}

TEST_CASE("csv line splitting honours quotes") {
    CHECK(split_csv_line("a,b,c") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_csv_line("\"x, y\",2,\"say \"\"hi\"\"\"") == std::vector<std::string>{"x, y", "2", "say \"hi\""});
    CHECK(split_csv_line("a,,") == std::vector<std::string>{"a", "", ""});
}

TEST_CASE("cell_index edges") {
    CHECK(cell_index(0.0, 0.0, 1.0, 4) == std::optional<std::size_t>(0));
    CHECK(cell_index(0.25, 0.0, 1.0, 4) == std::optional<std::size_t>(1));
    CHECK(cell_index(1.0, 0.0, 1.0, 4) == std::optional<std::size_t>(3));
    CHECK_FALSE(cell_index(-0.01, 0.0, 1.0, 4).has_value());
    CHECK_FALSE(cell_index(1.01, 0.0, 1.0, 4).has_value());
}

TEST_CASE("rasterize examples") {
    const GridSpec spec = unit_spec(2, 2, {"A", "B"});
    const Days start = parse_date("2020-01-06"), end = parse_date("2020-01-20");

    const auto empty = rasterize({}, spec, start, end);
    REQUIRE(empty.size() == 2);
    CHECK(empty[0].sum() == 0.0);

    // South-west quadrant, category B, second week.
    const auto one = rasterize({record("2020-01-14", 0.1, 0.2, "B")}, spec, start, end);
    CHECK(one[0].sum() == 0.0);
    CHECK(one[1].at({1, 0, 0}) == 1.0);
    CHECK(one[1].sum() == 1.0);

    // Out-of-range time, place and category are dropped.
    const auto none = rasterize({record("2020-01-20", 0.5, 0.5, "A"), record("2020-01-07", 2.0, 0.5, "A"),
                                 record("2020-01-07", 0.5, 0.5, "C")},
                                spec, start, end);
    CHECK(none[0].sum() + none[1].sum() == 0.0);
}

TEST_CASE("rasterize matches the edge-comparison oracle") {
    Rng rng(21);
    const GridSpec spec = unit_spec(5, 4, {"A", "B", "C"});
    const Days start = parse_date("2020-01-06"), end = parse_date("2020-02-03");
    const char* cats[] = {"A", "B", "C", "D"};
    std::vector<EventRecord> recs;
    for (int i = 0; i < 300; ++i) {
        EventRecord r;
        r.timestamp = Seconds(start) + std::chrono::seconds(static_cast<long>(rng.below(30ULL * 86400)));
        r.latitude = rng.uniform() * 1.1 - 0.05;
        r.longitude = rng.below(5) == 0 ? 1.0 : rng.uniform();
        r.category = cats[rng.below(4)];
        recs.push_back(r);
    }
    const auto fast = rasterize(recs, spec, start, end);
    const auto slow = naive_rasterize(recs, spec, start, end);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t t = 0; t < fast.size(); ++t) CHECK(fast[t] == slow[t]);
}

TEST_CASE("sliding windows counts and contents") {
    SilenceWarnings quiet;
    CHECK(sliding_windows(run_of(8), 5, 3).size() == 1);
    CHECK(sliding_windows(run_of(16), 5, 3).size() == 9);
    CHECK(sliding_windows(run_of(7), 5, 3).empty());
    CHECK(quiet.seen.size() == 1);

    const auto seqs = sliding_windows(run_of(10), 3, 2);
    REQUIRE(seqs.size() == 6);
    CHECK(seqs[2].x.shape() == Shape{3, 1, 2, 2});
    CHECK(seqs[2].x.at({0, 0, 0, 0}) == 2.0);
    CHECK(seqs[2].y.at({1, 0, 1, 1}) == 6.0);
    CHECK(seqs[2].start_time == parse_date("2020-01-20"));
}

TEST_CASE("split periods") {
    const auto parts = split_periods(run_of(32), {0.5, 0.25, 0.25});
    CHECK(parts[0].frames.size() == 16);
    CHECK(parts[1].frames.size() == 8);
    CHECK(parts[2].frames.size() == 8);
    CHECK(parts[1].start == parse_date("2020-01-06") + std::chrono::days(16 * 7));
    CHECK(parts[2].frames[0].at({0, 0, 0}) == 24.0);
    CHECK_THROWS_AS(split_periods(run_of(4), {0.5, 0.5, 0.5}), DataError);
    SilenceWarnings quiet;
    split_periods(run_of(10), {0.8, 0.1, 0.1}, 3);
    CHECK(quiet.seen.size() == 2);
}

TEST_CASE("augmentation transforms every frame and preserves counts") {
    Rng rng(22);
    OccurrenceSequence s;
    s.x = random_tensor({3, 2, 4, 4}, rng, 0.0, 3.0);
    s.y = random_tensor({2, 2, 4, 4}, rng, 0.0, 3.0);
    const auto same = apply_augmentation(s, {false, 0});
    CHECK(same.x == s.x);
    CHECK(same.y == s.y);
    const auto turned = apply_augmentation(s, {false, 1});
    CHECK(turned.x == rotate90(s.x, 1));
    CHECK(turned.y == rotate90(s.y, 1));
    const auto flipped = apply_augmentation(s, {true, 3});
    CHECK(flipped.x == rotate90(flip_horizontal(s.x), 3));
    CHECK(flipped.x.sum() == doctest::Approx(s.x.sum()));

    int flips = 0;
    std::array<int, 4> turns{};
    for (int i = 0; i < 4000; ++i) {
        const AugmentChoice c = draw_augmentation(rng);
        flips += c.flip ? 1 : 0;
        ++turns[static_cast<std::size_t>(c.quarter_turns)];
    }
    CHECK(std::abs(flips / 4000.0 - 0.5) < 0.03);
    for (int t : turns) CHECK(std::abs(t / 4000.0 - 0.25) < 0.03);
}

TEST_CASE("moving hotspot places mass on the diagonal") {
    GridSpec spec = unit_spec(8, 8, {"A", "B"});
    spec.m = 3;
    spec.n = 2;
    const auto s = moving_hotspot(spec, 1, 4.0);
    CHECK(s.x.shape() == Shape{3, 2, 8, 8});
    CHECK(s.y.shape() == Shape{2, 2, 8, 8});
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(s.x.at({t, 0, t + 1, t + 1}) == 4.0);
        CHECK(s.x.at({t, 1, t + 1, t + 1}) == 4.0);
    }
    CHECK(s.y.at({1, 0, 5, 5}) == 4.0);
    CHECK(s.x.sum() == 3 * 2 * 4.0);

    Rng rng(23);
    const auto many = synth_moving_hotspot(spec, 5, rng);
    CHECK(many.size() == 5);
    for (const auto& q : many) CHECK(q.y.sum() == 2 * 2 * 5.0);
}

TEST_CASE("correlated generator shares counts across categories") {
    GridSpec spec = unit_spec(6, 6, {"A", "B", "C"});
    Rng rng(24);
    for (const auto& s : synth_correlated(spec, 3, rng)) {
        for (std::size_t t = 0; t < spec.m; ++t)
            for (std::size_t i = 0; i < 6; ++i)
                for (std::size_t j = 0; j < 6; ++j) CHECK(s.x.at({t, 0, i, j}) == s.x.at({t, 2, i, j}));
    }
}

TEST_CASE("aggregate into one category") {
    Rng rng(25);
    OccurrenceSequence s;
    s.x = random_tensor({2, 3, 2, 2}, rng, 0.0, 2.0);
    s.y = random_tensor({1, 3, 2, 2}, rng);
    const auto a = aggregate_into_category(s, 1);
    CHECK(a.y == s.y);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                const double total = s.x.at({t, 0, i, j}) + s.x.at({t, 1, i, j}) + s.x.at({t, 2, i, j});
                CHECK(a.x.at({t, 1, i, j}) == doctest::Approx(total));
                CHECK(a.x.at({t, 0, i, j}) == 0.0);
                CHECK(a.x.at({t, 2, i, j}) == 0.0);
            }
    CHECK_THROWS(aggregate_into_category(s, 3));
}

TEST_CASE("csv ingestion") {
    const SchemaMap schema;
    const std::string ok = write_temp("ok.csv",
                                      "timestamp,latitude,longitude,category\n"
                                      "2020-01-01,37.7,-122.4,THEFT\n"
                                      "2020-01-02T08:00,37.8,-122.5,\"ASSAULT\"\n"
                                      "2020-01-03,37.75,-122.45,THEFT\n");
    const auto r = ingest_csv(ok, schema);
    CHECK(r.skipped == 0);
    REQUIRE(r.records.size() == 3);
    CHECK(r.records[1].category == "ASSAULT");
    CHECK(r.records[1].longitude == -122.5);
    CHECK(top_categories(r.records, parse_date("2020-01-01"), parse_date("2020-02-01"), 1) ==
          std::vector<std::string>{"THEFT"});
    const BoundingBox b = bounding_box(r.records, parse_date("2020-01-01"), parse_date("2020-02-01"));
    CHECK(b.lat_min == 37.7);
    CHECK(b.lon_max == -122.4);

    SilenceWarnings quiet;
    const std::string bad = write_temp("bad.csv",
                                       "timestamp,latitude,longitude,category\n"
                                       "2020-01-01,1,2,A\n"
                                       "yesterday,1,2,A\n"
                                       "2020-01-03,1,2,A\n"
                                       "2020-01-04,1,2,A\n");
    const auto rb = ingest_csv(bad, schema);
    CHECK(rb.records.size() == 3);
    CHECK(rb.skipped == 1);

    const std::string missing = write_temp("missing.csv", "timestamp,latitude,category\n2020-01-01,1,A\n");
    CHECK_THROWS_AS(ingest_csv(missing, schema), DataError);
    CHECK_THROWS(ingest_csv("/nonexistent/mapsed.csv", schema));
}

TEST_CASE("stack and slice frames") {
    Rng rng(26);
    std::vector<Tensor> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(random_tensor({2, 3, 3}, rng));
    const Tensor st = stack_frames(frames, 1, 2);
    CHECK(st.shape() == Shape{2, 2, 3, 3});
    CHECK(frame_of(st, 0) == frames[1]);
    CHECK(frame_of(st, 1) == frames[2]);
}

TEST_CASE("open-data incident header maps through the schema") {
    const std::string path = write_temp("incidents.csv",
                                        "IncidntNum,Category,Descript,DayOfWeek,Date,Time,PdDistrict,Resolution,"
                                        "Address,X,Y,Location,PdId\n"
                                        "1,LARCENY/THEFT,x,Monday,01/05/2015,10:00,MISSION,NONE,\"A ST, SF\","
                                        "-122.41,37.76,\"(37.76, -122.41)\",11\n"
                                        "2,ASSAULT,x,Monday,01/05/2015,11:00,MISSION,NONE,B ST,-122.42,37.77,,12\n"
                                        "3,LARCENY/THEFT,x,Tuesday,01/06/2015,12:00,PARK,NONE,C ST,-122.45,37.77,,13\n"
                                        "4,BURGLARY,x,Tuesday,01/06/2015,12:00,PARK,NONE,D ST,-122.44,37.78,,14\n"
                                        "5,VANDALISM,x,Friday,01/09/2015,09:00,PARK,NONE,E ST,-122.43,37.75,,15\n"
                                        "6,ASSAULT,x,Friday,01/09/2015,09:30,PARK,NONE,F ST,-122.43,37.75,,16\n"
                                        "7,DRUNKENNESS,x,Friday,01/09/2015,09:30,PARK,NONE,G ST,-122.43,37.75,,17\n");
    SchemaMap schema;
    schema.timestamp_column = "Date";
    schema.latitude_column = "Y";
    schema.longitude_column = "X";
    schema.category_column = "Category";
    schema.timestamp_format = "%m/%d/%Y";
    const auto r = ingest_csv(path, schema);
    CHECK(r.skipped == 0);
    REQUIRE(r.records.size() == 7);
    CHECK(r.records[0].latitude == 37.76);
    CHECK(r.records[0].longitude == -122.41);
    const auto top = top_categories(r.records, parse_date("2015-01-05"), parse_date("2015-01-12"), 4);
    CHECK(top == std::vector<std::string>{"ASSAULT", "LARCENY/THEFT", "BURGLARY", "DRUNKENNESS"});
}

TEST_CASE("a record at the bbox centre lands in exactly one cell") {
    const GridSpec spec = unit_spec(3, 3, {"A"});
    const auto f = rasterize({record("2020-01-06", 0.5, 0.5, "A")}, spec, parse_date("2020-01-06"),
                             parse_date("2020-01-13"));
    CHECK(f[0].at({0, 1, 1}) == 1.0);
    CHECK(f[0].sum() == 1.0);
    GridSpec none = spec;
    none.categories.clear();
    CHECK_THROWS(rasterize({}, none, parse_date("2020-01-06"), parse_date("2020-01-13")));
}

TEST_CASE("rasterize conserves the in-scope record count") {
    Rng rng(27);
    const GridSpec spec = unit_spec(4, 4, {"A", "B"});
    const Days start = parse_date("2020-01-06"), end = parse_date("2020-02-03");
    std::vector<EventRecord> recs;
    std::size_t in_scope = 0;
    for (int i = 0; i < 500; ++i) {
        EventRecord r;
        r.timestamp = Seconds(start) + std::chrono::seconds(static_cast<long>(rng.below(35ULL * 86400)));
        r.latitude = rng.uniform() * 1.2 - 0.1;
        r.longitude = rng.uniform();
        r.category = rng.coin() ? "A" : (rng.coin() ? "B" : "Z");
        if (r.timestamp < Seconds(end) && r.latitude >= 0.0 && r.latitude <= 1.0 && r.category != "Z") ++in_scope;
        recs.push_back(r);
    }
    double total = 0.0;
    for (const Tensor& f : rasterize(recs, spec, start, end)) total += f.sum();
    CHECK(total == static_cast<double>(in_scope));
}

TEST_CASE("window count formula holds for every short run") {
    SilenceWarnings quiet;
    for (std::size_t T = 0; T <= 30; ++T) {
        const std::size_t expect = T >= 8 ? T - 7 : 0;
        CHECK(sliding_windows(run_of(T), 5, 3).size() == expect);
    }
}

TEST_CASE("split partitions cover the input in order and windows never straddle") {
    const FrameRun all = run_of(20);
    const auto parts = split_periods(all, {0.6, 0.2, 0.2});
    double next = 0.0;
    for (const FrameRun& p : parts)
        for (const Tensor& f : p.frames) {
            CHECK(f.at({0, 0, 0}) == next);
            next += 1.0;
        }
    CHECK(next == 20.0);
    const auto train = sliding_windows(parts[0], 2, 1);
    const double val_start = parts[1].frames.front().at({0, 0, 0});
    for (const auto& s : train) CHECK(frame_of(s.y, 0).at({0, 0, 0}) < val_start);
}

TEST_CASE("flip then half turn is applied identically to every frame") {
    Rng rng(28);
    OccurrenceSequence s;
    s.x = random_tensor({3, 2, 4, 4}, rng, 0.0, 3.0);
    s.y = random_tensor({2, 2, 4, 4}, rng, 0.0, 3.0);
    const auto a = apply_augmentation(s, {true, 2});
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(frame_of(a.x, t) == rotate90(flip_horizontal(frame_of(s.x, t)), 2));
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(category_sum(a.x, t, k) == doctest::Approx(category_sum(s.x, t, k)).epsilon(1e-15));
    }
    CHECK(frame_of(a.y, 1) == rotate90(flip_horizontal(frame_of(s.y, 1)), 2));

    OccurrenceSequence wide;
    wide.x = Tensor(Shape{1, 1, 2, 3});
    wide.y = Tensor(Shape{1, 1, 2, 3});
    CHECK_THROWS_AS(apply_augmentation(wide, {false, 1}), DimensionError);
    CHECK(apply_augmentation(wide, {true, 2}).x.shape() == wide.x.shape());
}

TEST_CASE("moving hotspot from offset zero") {
    GridSpec spec = unit_spec(8, 8, {"A"});
    spec.m = 5;
    spec.n = 3;
    const auto s = moving_hotspot(spec, 0, 2.0);
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(s.x.at({t, 0, t, t}) == 2.0);
        CHECK(frame_of(s.x, t).sum() == 2.0);
    }
    CHECK(s.y.at({0, 0, 5, 5}) == 2.0);
    spec.h = spec.w = 7;
    Rng rng(29);
    CHECK_THROWS(synth_moving_hotspot(spec, 1, rng));
}

TEST_CASE("aggregation is idempotent and conserves counts") {
    Rng rng(30);
    OccurrenceSequence s;
    s.x = random_tensor({2, 3, 2, 2}, rng, 0.0, 2.0);
    s.y = Tensor(Shape{1, 3, 2, 2});
    const auto once = aggregate_into_category(s, 2);
    CHECK(once.x.sum() == doctest::Approx(s.x.sum()).epsilon(1e-15));
    CHECK(aggregate_into_category(once, 2).x == once.x);
}
