#pragma once

// Central finite-difference oracle for numcore gradients. Independent of the
// backward closures: it only evaluates forward values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ntp/numcore.hpp"

namespace gradcheck {

inline ntp::Array random_array(const ntp::Shape& shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    ntp::Array a(shape);
    for (auto& v : a.data()) v = u(rng);
    return a;
}

using Fn = std::function<ntp::Var(const std::vector<ntp::Var>&)>;

/// Reduces f's output to a scalar with fixed random weights so that the
/// whole Jacobian is exercised, then compares backward() with central
/// differences. Returns the worst relative error.
inline double max_rel_error(const Fn& f, const std::vector<ntp::Array>& inputs, std::mt19937_64& rng,
                            double h = 1e-5) {
    std::vector<ntp::Var> probe;
    for (const auto& a : inputs) probe.push_back(ntp::constant(a));
    const ntp::Array w = random_array(f(probe)->value.shape(), rng, -1.0, 1.0);

    auto scalar = [&](const std::vector<ntp::Array>& xs) {
        std::vector<ntp::Var> vs;
        for (const auto& a : xs) vs.push_back(ntp::constant(a));
        const auto node = f(vs);
        const auto& out = node->value;
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
        return s;
    };

    std::vector<ntp::Var> params;
    for (const auto& a : inputs) params.push_back(ntp::param(a));
    auto root = ntp::sum(ntp::mul(f(params), ntp::constant(w)));
    ntp::backward(root);

    double worst = 0.0;
    std::vector<ntp::Array> xs = inputs;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto& g = params[k]->grad;
        for (std::size_t i = 0; i < xs[k].size(); ++i) {
            const double x0 = xs[k][i];
            xs[k][i] = x0 + h;
            const double fp = scalar(xs);
            xs[k][i] = x0 - h;
            const double fm = scalar(xs);
            xs[k][i] = x0;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = g.size() ? g[i] : 0.0;
            const double rel = std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace gradcheck

namespace gradcheck {

struct OpCase {
    const char* name;
    Fn fn;
    std::vector<ntp::Shape> shapes;
};

/// Every differentiable numcore op, with representative input shapes.
inline std::vector<OpCase> op_cases() {
    using namespace ntp;
    return {
        {"matmul", [](const auto& v) { return matmul(v[0], v[1]); }, {{3, 4}, {4, 2}}},
        {"matmul_nt", [](const auto& v) { return matmul_nt(v[0], v[1]); }, {{3, 4}, {5, 4}}},
        {"bmm", [](const auto& v) { return bmm(v[0], v[1]); }, {{2, 3, 4}, {2, 4, 3}}},
        {"bmm_nt", [](const auto& v) { return bmm_nt(v[0], v[1]); }, {{2, 3, 4}, {2, 5, 4}}},
        {"add", [](const auto& v) { return add(v[0], v[1]); }, {{3, 2}, {3, 2}}},
        {"add_scalar_broadcast", [](const auto& v) { return add(v[0], v[1]); }, {{3, 2}, {1}}},
        {"sub", [](const auto& v) { return sub(v[0], v[1]); }, {{4}, {4}}},
        {"mul", [](const auto& v) { return mul(v[0], v[1]); }, {{2, 3}, {2, 3}}},
        {"mul_scalar_broadcast", [](const auto& v) { return mul(v[0], v[1]); }, {{1}, {2, 3}}},
        {"scale", [](const auto& v) { return scale(v[0], -0.7); }, {{5}}},
        {"relu", [](const auto& v) { return relu(v[0]); }, {{3, 3}}},
        {"sin", [](const auto& v) { return ntp::sin(v[0]); }, {{6}}},
        {"cos", [](const auto& v) { return ntp::cos(v[0]); }, {{6}}},
        {"add_rowwise", [](const auto& v) { return add_rowwise(v[0], v[1]); }, {{4, 3}, {3}}},
        {"add_periodic_rows", [](const auto& v) { return add_periodic_rows(v[0], v[1], 3); }, {{6, 2}, {4, 2}}},
        {"sum", [](const auto& v) { return sum(v[0]); }, {{3, 2}}},
        {"mean", [](const auto& v) { return mean(v[0]); }, {{3, 2}}},
        {"masked_mse",
         [](const auto& v) {
             Array target({2, 3}, {0.1, -0.4, 0.9, 1.2, -1.0, 0.3});
             Array mask({2, 3}, {1, 0, 1, 1, 1, 0});
             return masked_mse(v[0], target, mask);
         },
         {{2, 3}}},
        {"layer_norm", [](const auto& v) { return layer_norm(v[0], v[1], v[2]); }, {{3, 5}, {5}, {5}}},
        {"softmax_lastdim", [](const auto& v) { return softmax_lastdim(v[0]); }, {{3, 4}}},
        {"causal_softmax", [](const auto& v) { return causal_softmax(v[0]); }, {{2, 4, 4}}},
        {"split_heads", [](const auto& v) { return split_heads(v[0], 2, 3, 2); }, {{6, 4}}},
        {"merge_heads", [](const auto& v) { return merge_heads(v[0], 2, 3, 2); }, {{4, 3, 2}}},
        {"concat_cols", [](const auto& v) { return concat_cols(v[0], v[1]); }, {{3, 2}, {3, 1}}},
        {"slice_cols", [](const auto& v) { return slice_cols(v[0], 1, 2); }, {{3, 4}}},
        {"strided_rows", [](const auto& v) { return strided_rows(v[0], 1, 2); }, {{5, 2}}},
        {"interleave_rows", [](const auto& v) { return interleave_rows(v[0], v[1]); }, {{3, 2}, {3, 2}}},
        {"substitute_rows",
         [](const auto& v) { return substitute_rows(v[0], v[1], {true, false, true, false}); },
         {{4, 3}, {3}}},
    };
}

} // namespace gradcheck
