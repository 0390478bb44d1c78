#pragma once

// Finite-difference verification of every kernel and of the full model loss.

#include <cstdint>
#include <vector>

#include "rmsnet/grad_check.hpp"
#include "rmsnet/model.hpp"

namespace rmsnet {

enum class Precision { Double, Single };

struct GradCheckSuiteOptions {
    RmsNetConfig model;
    std::uint64_t seed = 1;
    double kernel_epsilon = 1e-6;
    double kernel_tolerance = 1e-7;
    double model_epsilon = 1e-5; // five-point stencil
    double model_tolerance_double = 1e-5;
    double model_tolerance_single = 1e-3;
    int directions = 4;
    int coordinates = 3;
    /// Test hook: corrupts the analytic gradient of conv1.weight.
    bool inject_fault = false;
};

/// linear, conv1d_same, relu, max_over_time, dropout and the head loss, in
/// 64-bit arithmetic.
std::vector<GradCheckReport> check_kernels(const GradCheckSuiteOptions& options);

/// Gradient of the batch loss (foreground and background clips, dropout on)
/// with respect to every parameter tensor. Probes whose perturbation flips a
/// ReLU or changes a max-over-time winner are discarded and redrawn. Single precision compares the
/// float analytic gradient with finite differences of the double loss at the
/// same point.
GradCheckReport check_model(const GradCheckSuiteOptions& options, Precision precision);

} // namespace rmsnet
