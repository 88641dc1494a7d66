#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sketchlab/tensor.hpp"

// Finite-difference verification of reverse-mode gradients, double precision.
// Central differences: (f(x+eps) - f(x-eps)) / (2 eps) against the analytic
// gradient, relative error denominator max(|analytic|, |numeric|, 1e-8).

namespace sketchlab {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool passes(double tol) const { return max_rel_err < tol; }
};

struct NamedParamD {
    std::string name;
    TensorT<double> tensor;
};

// loss_fn rebuilds the graph from the live parameter values on every call and
// returns a scalar tensor.
template <typename F>
GradCheckReport grad_check(std::vector<NamedParamD> params, F&& loss_fn, double eps = 1e-5) {
    for (auto& p : params) p.tensor.zero_grad();

    auto loss = loss_fn();
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: loss is not finite");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        p.tensor.n->ensure_grad();
        analytic.push_back(p.tensor.grad());
    }

    GradCheckReport rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].tensor.value();
        for (size_t i = 0; i < vals.size(); ++i) {
            double saved = vals[i];
            double lp, lm;
            {
                NoGrad ng;
                vals[i] = saved + eps;
                lp = loss_fn().item();
                vals[i] = saved - eps;
                lm = loss_fn().item();
            }
            vals[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw NumericError("grad_check: perturbed loss is not finite");
            double numeric = (lp - lm) / (2.0 * eps);
            double a = analytic[pi][i];
            if (!std::isfinite(a)) throw NumericError("grad_check: analytic gradient not finite");
            double abs_err = std::abs(a - numeric);
            double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = params[pi].name;
                rep.worst_index = int64_t(i);
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
            rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
        }
    }
    return rep;
}

} // namespace sketchlab
