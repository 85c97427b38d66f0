#pragma once

#include "mapsed/rng.hpp"
#include "mapsed/tensor.hpp"

#include <array>
#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapsed {

using Days = std::chrono::sys_days;
using Seconds = std::chrono::sys_seconds;

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EventRecord {
    Seconds timestamp;
    double latitude = 0.0;
    double longitude = 0.0;
    std::string category;
};

/// Which CSV columns hold the record fields. An empty timestamp_format means
/// ISO-8601 (date, optionally followed by 'T' or ' ' and hh:mm[:ss]);
/// otherwise it is a strptime pattern.
struct SchemaMap {
    std::string timestamp_column = "timestamp";
    std::string latitude_column = "latitude";
    std::string longitude_column = "longitude";
    std::string category_column = "category";
    std::string timestamp_format;
};

struct IngestResult {
    std::vector<EventRecord> records;
    std::size_t skipped = 0;
};

struct BoundingBox {
    double lat_min = 0.0, lat_max = 1.0, lon_min = 0.0, lon_max = 1.0;
};

/// Grid geometry and windowing. Rows index latitude (row 0 is the southern
/// edge), columns index longitude (column 0 is the western edge).
struct GridSpec {
    BoundingBox bbox;
    std::size_t h = 10;
    std::size_t w = 10;
    std::vector<std::string> categories;
    int interval_days = 7;
    std::size_t m = 5;
    std::size_t n = 3;

    std::size_t c() const { return categories.size(); }
    Shape frame_shape() const { return {c(), h, w}; }
    void validate() const;
};

struct OccurrenceSequence {
    Tensor x;  // m×c×h×w
    Tensor y;  // n×c×h×w
    Days start_time{};
};

/// Contiguous frames starting at `start`, one per interval.
struct FrameRun {
    Days start{};
    int interval_days = 7;
    std::vector<Tensor> frames;
};

std::optional<Seconds> parse_timestamp(const std::string& text, const std::string& format);
Days parse_date(const std::string& text);
std::string format_date(Days d);

/// Splits one CSV line into fields (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split_csv_line(const std::string& line);

IngestResult ingest_csv(const std::string& path, const SchemaMap& schema);

/// Bounding box of the records whose timestamps fall in [start, end).
BoundingBox bounding_box(const std::vector<EventRecord>& records, Days start, Days end);
/// The `count` most frequent categories in [start, end); ties broken by name.
std::vector<std::string> top_categories(const std::vector<EventRecord>& records, Days start, Days end,
                                        std::size_t count);

/// Cell index along one axis: half-open cells, max edge belongs to the last cell.
/// Returns nullopt for coordinates outside [lo, hi].
std::optional<std::size_t> cell_index(double value, double lo, double hi, std::size_t cells);

std::vector<Tensor> rasterize(const std::vector<EventRecord>& records, const GridSpec& spec, Days period_start,
                              Days period_end);

std::vector<OccurrenceSequence> sliding_windows(const FrameRun& run, std::size_t m, std::size_t n);

/// Chronological train/val/test partition by frame counts (rounded).
std::array<FrameRun, 3> split_periods(const FrameRun& run, const std::array<double, 3>& ratios,
                                      std::size_t window = 0);

struct AugmentChoice {
    bool flip = false;
    int quarter_turns = 0;
};

AugmentChoice draw_augmentation(Rng& rng);
/// Applies one flip-then-rotate transform to every frame of X and Y.
OccurrenceSequence apply_augmentation(const OccurrenceSequence& seq, AugmentChoice choice);
OccurrenceSequence augment(const OccurrenceSequence& seq, Rng& rng);

struct HotspotConfig {
    double mass = 5.0;
    /// Largest offset drawn; defaults to h - (m + n).
    std::optional<std::size_t> max_offset;
};

/// Places `mass` events per category at cell (t+o, t+o) for frame t.
OccurrenceSequence moving_hotspot(const GridSpec& spec, std::size_t offset, double mass);
std::vector<OccurrenceSequence> synth_moving_hotspot(const GridSpec& spec, std::size_t num_sequences, Rng& rng,
                                                     const HotspotConfig& config = {});

struct CorrelatedConfig {
    std::size_t hotspots = 2;
    double rate = 3.0;
};

/// Static random hotspots whose Poisson counts are shared by every category,
/// so categories are perfectly correlated.
std::vector<OccurrenceSequence> synth_correlated(const GridSpec& spec, std::size_t num_sequences, Rng& rng,
                                                 const CorrelatedConfig& config = {});

/// Moves every category's counts of X into channel k; Y is untouched.
OccurrenceSequence aggregate_into_category(const OccurrenceSequence& seq, std::size_t k);

/// Stacks frames [begin, begin+count) into a count×c×h×w tensor.
Tensor stack_frames(const std::vector<Tensor>& frames, std::size_t begin, std::size_t count);
/// Frame t of a T×c×h×w tensor.
Tensor frame_of(const Tensor& stacked, std::size_t t);

using WarningSink = std::function<void(const std::string& message)>;

/// Routes warnings to `sink` (stderr when empty); returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void log_warning(const std::string& message);

}  // namespace mapsed
