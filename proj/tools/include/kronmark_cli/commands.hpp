#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "kronmark/synth.hpp"

namespace kronmark::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kIo = 3,
    kCompatibility = 4,
};

inline constexpr const char* kVersion = "kronmark 0.1.0";
inline constexpr const char* kSeedEnv = "KRONMARK_SEED";

// KRONMARK_SEED when set to an unsigned integer, else 7.
std::uint64_t default_seed();

struct GenOptions {
    std::size_t count = 500;
    std::uint64_t seed = 7;
    fs::path out;
    synth::GeneratorConfig generator;
};

struct TrainOptions {
    fs::path data;
    fs::path out;
    std::size_t epochs = 200;
    double lr = 1e-3;
    std::size_t batch = 64;
    std::uint64_t seed = 7;
    bool literal_decay = false;
    bool augment = true;
    double sigma = 1.5;
    std::size_t order = 3;
    std::size_t workers = 0;
    std::optional<fs::path> config;  // KpfemConfig JSON; overrides `order`
};

struct EvalOptions {
    fs::path data;
    std::optional<fs::path> checkpoint;  // required unless oracle
    std::optional<fs::path> config;      // default: config.json next to the checkpoint, else defaults
    fs::path out;
    std::string split = "test";          // train | val | test | all
    std::uint64_t seed = 7;
    bool oracle = false;                 // ground truth re-encoded through heatmaps
    double sigma = 1.5;
    std::size_t workers = 0;
};

struct WeightOptions {
    fs::path data;
    fs::path out;
    std::string mode = "compare";  // compare | ablation
    std::uint64_t seed = 7;
    std::size_t epochs = 300;
    double threshold = 0.5;
    std::size_t workers = 0;
};

struct PcaOptions {
    fs::path data;
    fs::path out;
    std::size_t components = 0;  // 0: all available
};

struct BenchOptions {
    std::optional<fs::path> config;
    std::size_t input_size = 320;
    std::size_t passes = 100;
    std::size_t warmup = 10;
    fs::path out;
    std::optional<fs::path> data;        // adds validation losses when given with a checkpoint
    std::optional<fs::path> checkpoint;
    std::uint64_t seed = 7;
};

// Each command returns an ExitCode and reports failures on `err`.
int cmd_gen(const GenOptions& opts, std::ostream& err);
int cmd_train(const TrainOptions& opts, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& err);
int cmd_weight(const WeightOptions& opts, std::ostream& err);
int cmd_pca(const PcaOptions& opts, std::ostream& err);
int cmd_bench(const BenchOptions& opts, std::ostream& err);

// Parses argv and dispatches to a command.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kronmark::cli
