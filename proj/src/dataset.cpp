#include "mapsed/dataset.hpp"

#include "mapsed/io.hpp"

namespace mapsed {

namespace {

constexpr char kMagic[] = "MAPSEDDS";
constexpr std::uint32_t kVersion = 1;

}  // namespace

const DatasetSplit* Dataset::find_split(const std::string& name) const {
    for (const auto& s : splits)
        if (s.name == name) return &s;
    return nullptr;
}

std::vector<OccurrenceSequence> Dataset::sequences(const std::string& split) const {
    std::vector<OccurrenceSequence> out;
    const DatasetSplit* s = find_split(split);
    if (!s) return out;
    for (const auto& run : s->runs) {
        if (run.frames.size() < spec.m + spec.n) continue;
        auto seqs = sliding_windows(run, spec.m, spec.n);
        for (auto& q : seqs) out.push_back(std::move(q));
    }
    return out;
}

std::size_t Dataset::frame_count(const std::string& split) const {
    const DatasetSplit* s = find_split(split);
    std::size_t n = 0;
    if (s)
        for (const auto& run : s->runs) n += run.frames.size();
    return n;
}

DatasetSplit split_from_sequences(std::string name, const std::vector<OccurrenceSequence>& seqs) {
    DatasetSplit split{std::move(name), {}};
    for (const auto& s : seqs) {
        FrameRun run;
        run.start = s.start_time;
        for (std::size_t t = 0; t < s.x.dim(0); ++t) run.frames.push_back(frame_of(s.x, t));
        for (std::size_t t = 0; t < s.y.dim(0); ++t) run.frames.push_back(frame_of(s.y, t));
        split.runs.push_back(std::move(run));
    }
    return split;
}

KeyValues grid_to_keyvalues(const GridSpec& spec) {
    KeyValues kv;
    kv.set("grid.h", std::to_string(spec.h));
    kv.set("grid.w", std::to_string(spec.w));
    kv.set("grid.m", std::to_string(spec.m));
    kv.set("grid.n", std::to_string(spec.n));
    kv.set("grid.interval_days", std::to_string(spec.interval_days));
    kv.set("grid.bbox", format_double(spec.bbox.lat_min) + "," + format_double(spec.bbox.lat_max) + "," +
                            format_double(spec.bbox.lon_min) + "," + format_double(spec.bbox.lon_max));
    std::string cats;
    for (std::size_t i = 0; i < spec.categories.size(); ++i) cats += (i ? "," : "") + spec.categories[i];
    kv.set("grid.categories", cats);
    return kv;
}

GridSpec grid_from_keyvalues(const KeyValues& kv) {
    GridSpec spec;
    spec.h = kv.get_size("grid.h", spec.h);
    spec.w = kv.get_size("grid.w", spec.w);
    spec.m = kv.get_size("grid.m", spec.m);
    spec.n = kv.get_size("grid.n", spec.n);
    spec.interval_days = static_cast<int>(kv.get_int("grid.interval_days", spec.interval_days));
    if (const std::string* b = kv.find("grid.bbox")) {
        const auto parts = split_list(*b);
        if (parts.size() != 4) throw ConfigError("grid.bbox needs lat_min,lat_max,lon_min,lon_max");
        spec.bbox = {parse_double("grid.bbox", parts[0]), parse_double("grid.bbox", parts[1]),
                     parse_double("grid.bbox", parts[2]), parse_double("grid.bbox", parts[3])};
    }
    if (const std::string* c = kv.find("grid.categories")) spec.categories = split_list(*c);
    return spec;
}

std::string serialize_dataset(const Dataset& ds) {
    ByteWriter w;
    w.bytes(std::string(kMagic, 8));
    w.u32(kVersion);
    KeyValues header = grid_to_keyvalues(ds.spec);
    for (const auto& [k, v] : ds.meta.entries())
        if (!header.has(k)) header.set(k, v);
    w.str(header.serialize());
    w.u32(static_cast<std::uint32_t>(ds.splits.size()));
    const Shape frame = ds.spec.frame_shape();
    for (const auto& split : ds.splits) {
        w.str(split.name);
        w.u32(static_cast<std::uint32_t>(split.runs.size()));
        for (const auto& run : split.runs) {
            w.i64(run.start.time_since_epoch().count());
            w.u32(4);
            w.u64(run.frames.size());
            for (std::size_t d : frame) w.u64(d);
            for (const auto& f : run.frames) {
                if (f.shape() != frame) {
                    throw FormatError("dataset frame " + shape_to_string(f.shape()) + " does not match grid " +
                                      shape_to_string(frame));
                }
                for (double v : f.data()) w.f64(v);
            }
        }
    }
    return w.buffer();
}

Dataset deserialize_dataset(const std::string& bytes) {
    ByteReader r(bytes);
    if (r.bytes(8) != std::string(kMagic, 8)) throw FormatError("not a MAPSED dataset file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    KeyValues header = KeyValues::parse(r.str());
    ds.spec = grid_from_keyvalues(header);
    for (const auto& [k, v] : header.entries())
        if (k.rfind("grid.", 0) != 0) ds.meta.set(k, v);
    const std::uint32_t nsplits = r.u32();
    for (std::uint32_t s = 0; s < nsplits; ++s) {
        DatasetSplit split;
        split.name = r.str();
        const std::uint32_t nruns = r.u32();
        for (std::uint32_t k = 0; k < nruns; ++k) {
            FrameRun run;
            run.start = Days(std::chrono::days(r.i64()));
            run.interval_days = ds.spec.interval_days;
            const std::uint32_t rank = r.u32();
            if (rank != 4) throw FormatError("dataset run must have rank 4");
            const std::uint64_t T = r.u64();
            Shape frame(3);
            for (auto& d : frame) d = r.u64();
            if (frame != ds.spec.frame_shape()) throw FormatError("dataset run shape disagrees with header grid");
            for (std::uint64_t t = 0; t < T; ++t) {
                Tensor f(frame);
                for (double& v : f.data()) v = r.f64();
                run.frames.push_back(std::move(f));
            }
            split.runs.push_back(std::move(run));
        }
        ds.splits.push_back(std::move(split));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after dataset payload");
    return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) { write_file_atomic(path, serialize_dataset(ds)); }

Dataset read_dataset(const std::string& path) { return deserialize_dataset(read_file(path)); }

}  // namespace mapsed
