#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "qpi/errors.hpp"
#include "qpi/param_registry.hpp"
#include "qpi/tensor.hpp"

namespace qpi {

struct GradCheckRow {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double tol = 0.0;
    bool pass = true;

    const GradCheckRow& worst() const {
        std::size_t w = 0;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].max_rel_error > rows[w].max_rel_error) w = i;
        }
        return rows[w];
    }
};

namespace detail {

inline double rel_error(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    // Central differences on an O(1) loss with h=1e-5 resolve gradients down
    // to ~1e-10; below that, absolute agreement is all that can be measured.
    if (diff < 1e-8) return 0.0;
    return diff / std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace detail

// Compares analytic gradients against central finite differences for every
// trainable parameter in the registry. `loss_fn` must rebuild the forward
// graph and return the scalar loss; it has to be deterministic (dropout
// disabled). Intended for double precision, where h=1e-5 leaves several
// orders of magnitude of headroom above round-off.
template <typename T>
GradCheckReport finite_diff_check(const std::function<Tensor<T>()>& loss_fn,
                                  ParamRegistry<T>& params, double h, double tol) {
    const T probe0 = loss_fn().item();
    const T probe1 = loss_fn().item();
    if (probe0 != probe1) {
        throw UsageError("finite_diff_check: loss function is stochastic (evaluations differ: " +
                         std::to_string(static_cast<double>(probe0)) + " vs " +
                         std::to_string(static_cast<double>(probe1)) + ")");
    }

    // Analytic gradients.
    params.zero_grads();
    backward(loss_fn());
    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& e : params.entries()) {
        if (!e.trainable) {
            analytic.emplace_back();
            continue;
        }
        if (e.tensor.has_grad()) {
            analytic.push_back(e.tensor.grad());
        } else {
            analytic.emplace_back(e.tensor.numel(), T(0));
        }
    }

    GradCheckReport report;
    report.tol = tol;
    std::size_t idx = 0;
    for (auto& e : params.entries()) {
        const std::size_t row_idx = idx++;
        if (!e.trainable) continue;
        GradCheckRow row;
        row.name = e.name;
        auto& data = e.tensor.values();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const T saved = data[i];
            data[i] = saved + static_cast<T>(h);
            const double f_plus = static_cast<double>(loss_fn().item());
            data[i] = saved - static_cast<T>(h);
            const double f_minus = static_cast<double>(loss_fn().item());
            data[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double err =
                detail::rel_error(static_cast<double>(analytic[row_idx][i]), numeric);
            if (err > row.max_rel_error) {
                row.max_rel_error = err;
                row.worst_index = i;
            }
        }
        row.pass = row.max_rel_error <= tol;
        report.pass = report.pass && row.pass;
        report.rows.push_back(std::move(row));
    }
    params.zero_grads();
    return report;
}

}  // namespace qpi
