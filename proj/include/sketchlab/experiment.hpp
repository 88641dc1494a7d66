#pragma once

// Ablation-grid harness: a run config enumerates (model x permutation x seed)
// cells over one dataset; every cell trains, evaluates, checkpoints, and
// leaves a completion marker so interrupted grids resume. Reports aggregate
// seeds into mean/std and pivot into table-shaped CSV.

#include <optional>
#include <string>
#include <vector>

#include "sketchlab/dataio.hpp"
#include "sketchlab/model.hpp"
#include "sketchlab/permute.hpp"
#include "sketchlab/train.hpp"

namespace sketchlab {

struct DatasetSpec {
    std::string kind = "synth";  // "synth" or "cache"
    std::string cache_path;
    SynthSpec synth;
    SplitSpec split;
    int max_len = 0;  // 0 = 99th percentile of training lengths
};

struct RunConfig {
    DatasetSpec dataset;
    std::vector<ModelConfig> models;
    std::vector<PermutationSpec> permutations;  // empty = identity only
    std::optional<DenoiseSpec> denoise;
    TrainConfig train;  // grid seeds override the seed field
    std::vector<uint64_t> seeds = {1, 2, 3};
    std::string out_dir = "runs/out";
    bool free_running_ar = true;  // report AR reconstruction from own rollouts
};

// Human-readable JSON; unknown keys rejected. Throws ConfigError.
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_json(const RunConfig& rc);  // canonical form

// Stable name of one grid cell, e.g. "recon__nar_no_ca__abs2abs__pe-none__perm-none".
std::string cell_name(const ModelConfig& mc, const PermutationSpec& perm, bool denoised);

struct CellResult {
    std::string cell;
    uint64_t seed = 0;
    uint64_t cfg_hash = 0;  // hash of everything that determines this cell
    double metric = 0.0;    // reconstruction MSE-point / accuracy / P-metric
    double metric_teacher = 0.0;  // teacher-forced counterpart (recon), else = metric
    std::vector<double> epoch_losses;
    double wall_seconds = 0.0;
    size_t param_count = 0;
    std::string ckpt_stem;
    std::string error;  // nonempty = the cell failed and was isolated

    std::string to_json() const;
    static CellResult from_json(const std::string& text);
};

// Loads (or generates) the dataset and splits it. max_len 0 is resolved to
// the 99th-percentile training length, written back into the spec.
DatasetSplits load_dataset(DatasetSpec& spec);

uint64_t cell_hash(const RunConfig& rc, size_t model_idx, size_t perm_idx, uint64_t seed);

// Trains and evaluates one cell. With resume, a parseable result marker with a
// matching hash short-circuits. Never throws for training errors; they land in
// CellResult::error.
CellResult run_cell(const RunConfig& rc, size_t model_idx, size_t perm_idx, uint64_t seed,
                    const DatasetSplits& splits, bool resume);

// Whole grid, up to `jobs` cells in flight. Cell order in the result is
// deterministic (model-major, then permutation, then seed).
std::vector<CellResult> run_grid(const RunConfig& rc, const DatasetSplits& splits,
                                 int jobs = 1, bool resume = true);

// Emits report.json, report_long.csv (cell x seed), report_summary.csv
// (mean/std over seeds), and report_pivot_<task>.csv (rows = model/permutation
// signature, columns = frame combination).
void write_reports(const RunConfig& rc, const std::vector<CellResult>& results);

} // namespace sketchlab
