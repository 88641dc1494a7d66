#pragma once

// Double-precision finite-difference verification of every differentiable
// block the models are assembled from, as a callable suite. The optional
// injected-bug entry is a harness self-test: it must fail.

#include <cstdint>
#include <string>
#include <vector>

namespace sketchlab {

struct BlockCheck {
    std::string name;
    double max_rel_err = 0.0;
    double tol = 1e-4;
    bool pass = false;
    std::string worst_param;
};

std::vector<BlockCheck> run_block_gradchecks(uint64_t seed, bool inject_bug = false);

} // namespace sketchlab
