#pragma once

// Command layer shared by the executable and the tests.

#include "mapsed/evaluation.hpp"
#include "mapsed/keyvalue.hpp"
#include "mapsed/training.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mapsed::cli {

/// Flat key=value run configuration. Only registered keys are accepted; every
/// registered key has a default and is echoed with its effective value.
class RunConfig {
public:
    RunConfig() = default;
    static RunConfig from_kv(const KeyValues& kv);
    static RunConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    /// Effective value: explicit setting, else the registered default.
    std::string get(const std::string& key) const;
    bool is_set(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    /// Every registered key with its effective value, in registry order.
    KeyValues echo() const;

    GridSpec grid() const;
    ModelConfig model(const GridSpec& grid) const;
    TrainConfig train() const;
    LossConfig loss() const;

private:
    KeyValues values_;
};

struct KeySpec {
    const char* key;
    const char* fallback;
    const char* help;
};
const std::vector<KeySpec>& known_keys();

int cmd_build_dataset(const RunConfig& cfg, std::ostream& out);
int cmd_synth(const RunConfig& cfg, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);

/// Parses arguments and dispatches; returns the process exit status.
int run(int argc, char** argv);

}  // namespace mapsed::cli
