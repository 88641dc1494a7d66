#pragma once

// Sketch order permutations, applied to absolute coordinates. Each kind
// rearranges point order while preserving the drawn geometry: inter-stroke
// scatters points across the stroke skeleton, intra-stroke shuffles within
// strokes, intra-stroke-reverse flips a random subset of strokes, and
// stroke-shuffle reorders whole strokes. Specs compose into a chain and are
// deterministic given (spec, sketch id).

#include <memory>
#include <vector>

#include "sketchlab/stroke5.hpp"

namespace sketchlab {

enum class PermKind : uint8_t {
    None = 0,
    InterStroke,
    IntraStroke,
    IntraStrokeReverse,
    StrokeShuffle,
};

struct PermutationSpec {
    PermKind kind = PermKind::None;
    uint64_t seed = 0;
    double fraction = 0.5;  // IntraStrokeReverse: share of strokes reversed
    std::shared_ptr<const PermutationSpec> then;

    PermutationSpec() = default;
    PermutationSpec(PermKind k, uint64_t s, double f = 0.5) : kind(k), seed(s), fraction(f) {}
};

// apply(compose(a, b), s) == apply(b, apply(a, s))
PermutationSpec compose(const PermutationSpec& first, const PermutationSpec& second);

struct PermutedSketch {
    Stroke5Sequence seq;
    // mapping[i] = index in the input sequence of the point now at slot i
    std::vector<int> mapping;
};

PermutedSketch apply_with_mapping(const PermutationSpec& spec, const Stroke5Sequence& seq,
                                  uint64_t sketch_id = 0);

inline Stroke5Sequence apply(const PermutationSpec& spec, const Stroke5Sequence& seq,
                             uint64_t sketch_id = 0) {
    return apply_with_mapping(spec, seq, sketch_id).seq;
}

const char* perm_kind_name(PermKind k);
PermKind perm_kind_from_name(const std::string& name);

} // namespace sketchlab
