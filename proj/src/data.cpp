#include "mapsed/data.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

namespace mapsed {

namespace {

std::mutex warning_mutex;
WarningSink warning_sink;

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard<std::mutex> lock(warning_mutex);
    std::swap(sink, warning_sink);
    return sink;
}

void log_warning(const std::string& message) {
    std::lock_guard<std::mutex> lock(warning_mutex);
    if (warning_sink) {
        warning_sink(message);
    } else {
        std::cerr << "[warn] " << message << '\n';
    }
}

void GridSpec::validate() const {
    if (!(bbox.lat_min < bbox.lat_max)) throw DataError("grid: lat_min must be below lat_max");
    if (!(bbox.lon_min < bbox.lon_max)) throw DataError("grid: lon_min must be below lon_max");
    if (h == 0 || w == 0 || m == 0 || n == 0) throw DataError("grid: h, w, m, n must be at least 1");
    if (categories.empty()) throw DataError("grid: category list is empty");
    if (interval_days < 1) throw DataError("grid: interval must be at least one day");
}

// ---------------------------------------------------------------------------
// Time parsing

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_fixed(const std::string& s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

std::optional<Seconds> make_time(int y, int mo, int d, int hh, int mm, int ss) {
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0 || ss > 60) return std::nullopt;
    return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
}

std::optional<Seconds> parse_iso(const std::string& s) {
    int y, mo, d;
    if (!parse_fixed(s, 0, 4, y) || s.size() < 10 || s[4] != '-' || !parse_fixed(s, 5, 2, mo) || s[7] != '-' ||
        !parse_fixed(s, 8, 2, d)) {
        return std::nullopt;
    }
    int hh = 0, mm = 0, ss = 0;
    if (s.size() > 10) {
        if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
        if (!parse_fixed(s, 11, 2, hh) || s.size() < 16 || s[13] != ':' || !parse_fixed(s, 14, 2, mm)) {
            return std::nullopt;
        }
        std::size_t rest = 16;
        if (s.size() > 16 && s[16] == ':') {
            if (!parse_fixed(s, 17, 2, ss)) return std::nullopt;
            rest = 19;
        }
        // Fractional seconds and zone suffixes are accepted and ignored.
        if (rest < s.size() && s[rest] != '.' && s[rest] != 'Z' && s[rest] != '+' && s[rest] != '-') {
            return std::nullopt;
        }
    }
    return make_time(y, mo, d, hh, mm, ss);
}

}  // namespace

std::optional<Seconds> parse_timestamp(const std::string& raw, const std::string& format) {
    const std::string text = trim(raw);
    if (text.empty()) return std::nullopt;
    if (format.empty()) return parse_iso(text);
    std::tm tm{};
    const char* end = ::strptime(text.c_str(), format.c_str(), &tm);
    if (end == nullptr) return std::nullopt;
    while (*end == ' ') ++end;
    if (*end != '\0') return std::nullopt;
    return make_time(tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
}

Days parse_date(const std::string& text) {
    auto t = parse_iso(trim(text));
    if (!t) throw DataError("invalid date '" + text + "' (expected YYYY-MM-DD)");
    return std::chrono::floor<std::chrono::days>(*t);
}

std::string format_date(Days d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

// ---------------------------------------------------------------------------
// CSV ingestion

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

IngestResult ingest_csv(const std::string& path, const SchemaMap& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV file '" + path + "' is empty (no header)");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv_line(line);
    auto column = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return i;
        throw DataError("CSV file '" + path + "' has no column '" + name + "'");
    };
    const std::size_t ts_col = column(schema.timestamp_column);
    const std::size_t lat_col = column(schema.latitude_column);
    const std::size_t lon_col = column(schema.longitude_column);
    const std::size_t cat_col = column(schema.category_column);
    const std::size_t needed = std::max({ts_col, lat_col, lon_col, cat_col}) + 1;

    IngestResult result;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() < needed) {
            ++result.skipped;
            continue;
        }
        const auto ts = parse_timestamp(fields[ts_col], schema.timestamp_format);
        EventRecord rec;
        char* end = nullptr;
        const std::string lat_s = trim(fields[lat_col]);
        const std::string lon_s = trim(fields[lon_col]);
        rec.latitude = std::strtod(lat_s.c_str(), &end);
        const bool lat_ok = !lat_s.empty() && end && *end == '\0';
        rec.longitude = std::strtod(lon_s.c_str(), &end);
        const bool lon_ok = !lon_s.empty() && end && *end == '\0';
        rec.category = trim(fields[cat_col]);
        if (!ts || !lat_ok || !lon_ok || !std::isfinite(rec.latitude) || !std::isfinite(rec.longitude) ||
            rec.category.empty()) {
            ++result.skipped;
            continue;
        }
        rec.timestamp = *ts;
        result.records.push_back(std::move(rec));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Rasterization

namespace {

bool in_period(const EventRecord& r, Days start, Days end) {
    return r.timestamp >= Seconds(start) && r.timestamp < Seconds(end);
}

}  // namespace

BoundingBox bounding_box(const std::vector<EventRecord>& records, Days start, Days end) {
    BoundingBox box{INFINITY, -INFINITY, INFINITY, -INFINITY};
    bool any = false;
    for (const auto& r : records) {
        if (!in_period(r, start, end)) continue;
        any = true;
        box.lat_min = std::min(box.lat_min, r.latitude);
        box.lat_max = std::max(box.lat_max, r.latitude);
        box.lon_min = std::min(box.lon_min, r.longitude);
        box.lon_max = std::max(box.lon_max, r.longitude);
    }
    if (!any) throw DataError("bounding box: no records in the training period");
    if (!(box.lat_min < box.lat_max) || !(box.lon_min < box.lon_max)) {
        throw DataError("bounding box: training records span a degenerate area");
    }
    return box;
}

std::vector<std::string> top_categories(const std::vector<EventRecord>& records, Days start, Days end,
                                        std::size_t count) {
    std::map<std::string, std::size_t> freq;
    for (const auto& r : records)
        if (in_period(r, start, end)) ++freq[r.category];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ranked.size() && i < count; ++i) out.push_back(ranked[i].first);
    return out;
}

std::optional<std::size_t> cell_index(double value, double lo, double hi, std::size_t cells) {
    if (!(value >= lo) || !(value <= hi)) return std::nullopt;
    if (value == hi) return cells - 1;
    const double width = (hi - lo) / static_cast<double>(cells);
    auto edge = [&](std::size_t i) { return lo + static_cast<double>(i) * width; };
    auto idx = static_cast<std::size_t>(std::floor((value - lo) / width));
    idx = std::min(idx, cells - 1);
    // Settle against the same edge formula so values exactly on an interior
    // edge land in the higher cell regardless of division rounding.
    while (idx + 1 < cells && value >= edge(idx + 1)) ++idx;
    while (idx > 0 && value < edge(idx)) --idx;
    return idx;
}

std::vector<Tensor> rasterize(const std::vector<EventRecord>& records, const GridSpec& spec, Days period_start,
                              Days period_end) {
    if (spec.categories.empty()) throw DataError("rasterize: empty category list");
    spec.validate();
    const auto span = (period_end - period_start).count();
    if (span < 0 || span % spec.interval_days != 0) {
        throw DataError("rasterize: period length must be a non-negative multiple of the interval");
    }
    const std::size_t frames = static_cast<std::size_t>(span / spec.interval_days);
    std::vector<Tensor> out(frames, Tensor(spec.frame_shape()));
    std::map<std::string, std::size_t> cat_index;
    for (std::size_t k = 0; k < spec.categories.size(); ++k) cat_index.emplace(spec.categories[k], k);
    const auto interval = std::chrono::seconds(std::chrono::days(spec.interval_days));
    for (const auto& r : records) {
        if (!in_period(r, period_start, period_end)) continue;
        auto cat = cat_index.find(r.category);
        if (cat == cat_index.end()) continue;
        const auto row = cell_index(r.latitude, spec.bbox.lat_min, spec.bbox.lat_max, spec.h);
        const auto col = cell_index(r.longitude, spec.bbox.lon_min, spec.bbox.lon_max, spec.w);
        if (!row || !col) continue;
        const auto t = static_cast<std::size_t>((r.timestamp - Seconds(period_start)) / interval);
        out[t][(cat->second * spec.h + *row) * spec.w + *col] += 1.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Windowing and splits

Tensor stack_frames(const std::vector<Tensor>& frames, std::size_t begin, std::size_t count) {
    if (begin + count > frames.size()) throw DimensionError("stack_frames: range exceeds frame count", 0);
    if (count == 0) throw DimensionError("stack_frames: empty range", 0);
    const Shape& fs = frames[begin].shape();
    Shape shape{count};
    shape.insert(shape.end(), fs.begin(), fs.end());
    Tensor out(shape);
    const std::size_t plane = shape_numel(fs);
    for (std::size_t t = 0; t < count; ++t) {
        if (frames[begin + t].shape() != fs) throw DimensionError("stack_frames: frame shapes differ", 1);
        std::copy(frames[begin + t].data().begin(), frames[begin + t].data().end(), out.data().begin() + t * plane);
    }
    return out;
}

Tensor frame_of(const Tensor& stacked, std::size_t t) {
    Shape fs(stacked.shape().begin() + 1, stacked.shape().end());
    const std::size_t plane = shape_numel(fs);
    if (t >= stacked.dim(0)) throw std::out_of_range("frame_of: index out of range");
    std::vector<double> data(stacked.data().begin() + t * plane, stacked.data().begin() + (t + 1) * plane);
    return Tensor(fs, std::move(data));
}

std::vector<OccurrenceSequence> sliding_windows(const FrameRun& run, std::size_t m, std::size_t n) {
    std::vector<OccurrenceSequence> out;
    const std::size_t T = run.frames.size();
    if (T < m + n) {
        log_warning("sliding_windows: " + std::to_string(T) + " frames is fewer than a window of " +
                    std::to_string(m + n) + "; no sequences produced");
        return out;
    }
    out.reserve(T - (m + n) + 1);
    for (std::size_t t = 0; t + m + n <= T; ++t) {
        OccurrenceSequence s;
        s.x = stack_frames(run.frames, t, m);
        s.y = stack_frames(run.frames, t + m, n);
        s.start_time = run.start + std::chrono::days(static_cast<long>(t) * run.interval_days);
        out.push_back(std::move(s));
    }
    return out;
}

std::array<FrameRun, 3> split_periods(const FrameRun& run, const std::array<double, 3>& ratios, std::size_t window) {
    double total = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0)) throw DataError("split_periods: ratios must be non-negative");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DataError("split_periods: ratios must sum to 1");
    const std::size_t T = run.frames.size();
    std::array<std::size_t, 3> counts{};
    counts[0] = static_cast<std::size_t>(std::llround(static_cast<double>(T) * ratios[0]));
    counts[1] = std::min(T - counts[0], static_cast<std::size_t>(std::llround(static_cast<double>(T) * ratios[1])));
    counts[2] = T - counts[0] - counts[1];
    std::array<FrameRun, 3> parts;
    static constexpr const char* names[] = {"train", "val", "test"};
    std::size_t begin = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        parts[p].start = run.start + std::chrono::days(static_cast<long>(begin) * run.interval_days);
        parts[p].interval_days = run.interval_days;
        parts[p].frames.assign(run.frames.begin() + static_cast<std::ptrdiff_t>(begin),
                               run.frames.begin() + static_cast<std::ptrdiff_t>(begin + counts[p]));
        if (window > 0 && ratios[p] > 0.0 && counts[p] < window) {
            log_warning(std::string("split_periods: ") + names[p] + " partition has " + std::to_string(counts[p]) +
                        " frames, fewer than a window of " + std::to_string(window));
        }
        begin += counts[p];
    }
    return parts;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentChoice draw_augmentation(Rng& rng) {
    AugmentChoice c;
    c.flip = rng.coin();
    c.quarter_turns = static_cast<int>(rng.below(4));
    return c;
}

OccurrenceSequence apply_augmentation(const OccurrenceSequence& seq, AugmentChoice choice) {
    auto transform = [&](const Tensor& t) {
        Tensor out = choice.flip ? flip_horizontal(t) : t;
        return rotate90(out, choice.quarter_turns);
    };
    OccurrenceSequence out;
    out.x = transform(seq.x);
    out.y = transform(seq.y);
    out.start_time = seq.start_time;
    return out;
}

OccurrenceSequence augment(const OccurrenceSequence& seq, Rng& rng) {
    return apply_augmentation(seq, draw_augmentation(rng));
}

// ---------------------------------------------------------------------------
// Synthetic generators

OccurrenceSequence moving_hotspot(const GridSpec& spec, std::size_t offset, double mass) {
    const std::size_t steps = spec.m + spec.n;
    if (spec.h != spec.w) throw DataError("moving hotspot: grid must be square");
    if (spec.h < steps) {
        throw DataError("moving hotspot: grid of " + std::to_string(spec.h) + " cells cannot hold " +
                        std::to_string(steps) + " diagonal steps");
    }
    if (offset + steps > spec.h) {
        throw DataError("moving hotspot: offset " + std::to_string(offset) + " exceeds the largest valid offset " +
                        std::to_string(spec.h - steps));
    }
    const std::size_t c = spec.c(), h = spec.h, w = spec.w;
    Tensor all(Shape{steps, c, h, w});
    for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t p = t + offset;
        for (std::size_t k = 0; k < c; ++k) all[((t * c + k) * h + p) * w + p] = mass;
    }
    OccurrenceSequence s;
    s.x = narrow(all, 0, 0, spec.m);
    s.y = narrow(all, 0, spec.m, spec.n);
    return s;
}

std::vector<OccurrenceSequence> synth_moving_hotspot(const GridSpec& spec, std::size_t num_sequences, Rng& rng,
                                                     const HotspotConfig& config) {
    if (spec.h != spec.w || spec.h < spec.m + spec.n) {
        throw DataError("moving hotspot: need a square grid with h >= m + n");
    }
    const std::size_t limit = spec.h - (spec.m + spec.n);
    const std::size_t max_offset = config.max_offset.value_or(limit);
    if (max_offset > limit) {
        throw DataError("moving hotspot: max offset " + std::to_string(max_offset) + " exceeds grid limit " +
                        std::to_string(limit));
    }
    std::vector<OccurrenceSequence> out;
    out.reserve(num_sequences);
    for (std::size_t i = 0; i < num_sequences; ++i) {
        const std::size_t o = static_cast<std::size_t>(rng.below(max_offset + 1));
        out.push_back(moving_hotspot(spec, o, config.mass));
    }
    return out;
}

std::vector<OccurrenceSequence> synth_correlated(const GridSpec& spec, std::size_t num_sequences, Rng& rng,
                                                 const CorrelatedConfig& config) {
    spec.validate();
    const std::size_t c = spec.c(), h = spec.h, w = spec.w;
    const std::size_t steps = spec.m + spec.n;
    std::vector<OccurrenceSequence> out;
    out.reserve(num_sequences);
    for (std::size_t s = 0; s < num_sequences; ++s) {
        std::vector<std::size_t> cells;
        for (std::size_t k = 0; k < config.hotspots; ++k) cells.push_back(rng.below(h * w));
        Tensor all(Shape{steps, c, h, w});
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t cell : cells) {
                const auto count = static_cast<double>(rng.poisson(config.rate));
                for (std::size_t k = 0; k < c; ++k) all[(t * c + k) * h * w + cell] += count;
            }
        }
        OccurrenceSequence seq;
        seq.x = narrow(all, 0, 0, spec.m);
        seq.y = narrow(all, 0, spec.m, spec.n);
        out.push_back(std::move(seq));
    }
    return out;
}

OccurrenceSequence aggregate_into_category(const OccurrenceSequence& seq, std::size_t k) {
    const Tensor& x = seq.x;
    if (x.rank() != 4) throw DimensionError("aggregate_into_category: X must be m×c×h×w");
    const std::size_t m = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    if (k >= c) {
        throw std::out_of_range("aggregate_into_category: category " + std::to_string(k) + " out of range for c=" +
                                std::to_string(c));
    }
    OccurrenceSequence out = seq;
    out.x = Tensor(x.shape());
    for (std::size_t t = 0; t < m; ++t) {
        for (std::size_t cat = 0; cat < c; ++cat) {
            const double* src = x.data().data() + (t * c + cat) * plane;
            double* dst = out.x.data().data() + (t * c + k) * plane;
            for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
        }
    }
    return out;
}

}  // namespace mapsed
