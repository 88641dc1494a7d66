#pragma once

#include <set>
#include <string>
#include <vector>

#include "sketchlab/stroke5.hpp"

// Positional-information channels added to point inputs: global sketch
// position, intra-stroke position, a learnable per-stroke embedding, and the
// pen state lifted to model width. All parts combine by unweighted addition.
// Functions here produce plain double matrices (row-major, N x d_model);
// model code routes the learnable parts through autodiff separately and can
// be cross-checked against these.

namespace sketchlab {

struct ConfigError : SketchError {
    using SketchError::SketchError;
};
struct LengthError : SketchError {
    using SketchError::SketchError;
};
struct CapacityError : SketchError {
    using SketchError::SketchError;
};

enum class PosEncPart { SketchPos, StrokePos, StrokeEmb, PenState };

const char* posenc_part_name(PosEncPart p);
PosEncPart posenc_part_from_name(const std::string& name);

struct PosEncSpec {
    std::set<PosEncPart> parts;  // empty set = no positional information
    int d_model = 64;
    int max_len = 64;
    int max_strokes = 16;
};

// Learnable tables, held here as raw values for oracle-style evaluation.
struct PosEncTables {
    std::vector<double> stroke_emb;  // [max_strokes x d_model]
    std::vector<double> pen_proj;    // [3 x d_model]
};

// component 2k = sin(pos / 10000^{2k/d}), component 2k+1 = cos of the same
std::vector<double> sinusoidal(int pos, int d_model);

// stroke ordinal of each point, 0-based, computed from the current layout
std::vector<int> stroke_indices(const Stroke5Sequence& seq);

// index of each point within its own stroke, resetting at stroke starts
std::vector<int> intra_stroke_indices(const Stroke5Sequence& seq);

std::vector<double> sketch_position(const Stroke5Sequence& seq, int d_model, int max_len);
std::vector<double> stroke_position(const Stroke5Sequence& seq, int d_model, int max_len);
std::vector<double> stroke_embedding(const Stroke5Sequence& seq, const std::vector<double>& table,
                                     int max_strokes, int d_model);
std::vector<double> pen_state_channels(const Stroke5Sequence& seq,
                                       const std::vector<double>& proj, int d_model);

// Elementwise sum of the selected parts; empty parts give a zero matrix.
std::vector<double> combine(const PosEncSpec& spec, const Stroke5Sequence& seq,
                            const PosEncTables& tables);

} // namespace sketchlab
