#pragma once

// Dataset ingestion: QuickDraw NDJSON and canonical SPG JSON parsers, a
// deterministic synthetic sketch generator, per-class splits, and a binary
// cache. Every ingested sketch is a raw absolute-frame stroke-5 sequence.

#include <cstdint>
#include <string>
#include <vector>

#include "sketchlab/stroke5.hpp"

namespace sketchlab {

struct LabeledSketch {
    uint64_t id = 0;
    Stroke5Sequence seq;            // raw absolute frame
    int class_label = -1;           // -1 when unlabeled
    std::vector<int> point_labels;  // one per point (stroke-constant) or empty
};

struct ParseIssue {
    int line = 0;  // 1-based record or line number
    std::string message;
};

struct Dataset {
    std::vector<LabeledSketch> items;
    std::vector<std::string> class_names;  // index = class_label, sorted by name
    std::vector<std::string> part_names;   // index = point label value
    std::vector<ParseIssue> issues;        // skipped records, with reasons
};

// Newline-delimited JSON, one record per line, each with a "drawing" field of
// strokes as [x[], y[]] array pairs and a "word" class field. Malformed lines
// are recorded in issues and skipped; the stream continues. class_filter keeps
// only the named classes (empty keeps all). per_class > 0 keeps a hash-ranked
// deterministic subsample per class keyed by subsample_seed.
Dataset parse_quickdraw_ndjson(const std::string& path,
                               const std::vector<std::string>& class_filter = {},
                               int per_class = 0, uint64_t subsample_seed = 0);

// Canonical SPG JSON: a top-level array of records
//   {"label": str, "strokes": [{"points": [[x,y],...], "part": int}, ...]}
// Point labels come from the per-stroke "part" ids, which must lie in
// [0, 109); violations are record-level issues.
Dataset parse_spg(const std::string& path);

struct SynthSpec {
    int n_classes = 10;   // up to the 10 built-in shape classes
    int per_class = 500;
    int max_strokes = 8;  // templates stay within this many strokes
    double jitter = 1.0;  // scales every random perturbation; 0 = pure templates
    uint64_t seed = 0;
};

// Parametric shape classes arranged in five deliberately confusable pairs, so
// that pen structure, point order, stroke membership, and within-stroke
// adjacency each carry class signal. Emits class labels and stroke-constant
// part labels; deterministic in (spec, seed).
Dataset synth_generate(const SynthSpec& spec);

struct SplitSpec {
    int train_per_class = 650;
    int val_per_class = 50;
    int test_per_class = 100;
    uint64_t split_seed = 0;
    int split_index = 0;  // five-split replication: vary 0..4
};

struct DatasetSplits {
    std::vector<LabeledSketch> train, val, test;
};

// Deterministic per-class split by hash rank of (sketch id, seed, index).
// Throws ConfigError when a class has fewer items than the spec requires.
DatasetSplits split_dataset(const std::vector<LabeledSketch>& items, const SplitSpec& spec);

// 99th percentile of training sketch lengths, rounded up.
int percentile99_len(const std::vector<LabeledSketch>& train);

// Binary cache with bit-exact round trip for coordinates, pens, and labels.
void save_cache(const std::string& path, const Dataset& ds);
Dataset load_cache(const std::string& path);

} // namespace sketchlab
