#pragma once

// Test-only finite-difference oracle. Independent of the autodiff path: it
// re-runs the forward function with perturbed inputs and no active tape.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tinyvlm/tensor.hpp"

namespace tinyvlm::testing {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_location;
};

// Reduces an arbitrary output tensor to a scalar with a fixed random
// projection so the full Jacobian action gets exercised.
inline GradCheckReport gradcheck(const std::function<Tensor()>& forward, std::vector<Tensor> inputs,
                                 std::uint64_t projection_seed = 99, double step = 1e-5) {
    std::mt19937_64 rng(projection_seed);
    Tensor probe = forward();  // shape probe, no tape active yet
    Tensor weights = Tensor::randn(probe.shape(), rng);

    auto readout = [&]() {
        Tensor out = forward();
        double s = 0.0;
        for (std::size_t i = 0; i < out.data().size(); ++i) s += out.data()[i] * weights.data()[i];
        return s;
    };

    for (auto& in : inputs) in.set_requires_grad(true);
    std::vector<std::vector<double>> autodiff_grads;
    {
        Tape tape;
        Tensor out = forward();
        Tensor loss = sum(mul(out, weights));
        tape.backward(loss);
        for (auto& in : inputs)
            autodiff_grads.push_back(in.has_grad() ? in.grad() : std::vector<double>(in.data().size(), 0.0));
    }
    for (auto& in : inputs) in.set_requires_grad(false);

    GradCheckReport report;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto& values = inputs[t].data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = readout();
            values[i] = saved - step;
            const double down = readout();
            values[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double ad = autodiff_grads[t][i];
            const double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
            const double rel = std::abs(fd - ad) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_location = "input " + std::to_string(t) + " elem " + std::to_string(i) + " fd=" +
                                        std::to_string(fd) + " ad=" + std::to_string(ad);
            }
        }
    }
    return report;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double stddev = 1.0) {
    std::mt19937_64 rng(seed);
    return Tensor::randn(std::move(shape), rng, stddev);
}

}  // namespace tinyvlm::testing
