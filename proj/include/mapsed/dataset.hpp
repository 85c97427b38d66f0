#pragma once

#include "mapsed/data.hpp"
#include "mapsed/keyvalue.hpp"

#include <string>
#include <vector>

namespace mapsed {

struct DatasetSplit {
    std::string name;
    std::vector<FrameRun> runs;
};

/// Frames grouped into named splits. Sequences are the stride-1 windows of
/// each run; windows never cross a run boundary. Synthetic data stores one
/// run of exactly m+n frames per sequence.
struct Dataset {
    GridSpec spec;
    KeyValues meta;
    std::vector<DatasetSplit> splits;

    const DatasetSplit* find_split(const std::string& name) const;
    std::vector<OccurrenceSequence> sequences(const std::string& split) const;
    std::size_t frame_count(const std::string& split) const;
};

/// Runs of m+n frames, one per sequence.
DatasetSplit split_from_sequences(std::string name, const std::vector<OccurrenceSequence>& seqs);

KeyValues grid_to_keyvalues(const GridSpec& spec);
GridSpec grid_from_keyvalues(const KeyValues& kv);

std::string serialize_dataset(const Dataset& ds);
Dataset deserialize_dataset(const std::string& bytes);
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

}  // namespace mapsed
