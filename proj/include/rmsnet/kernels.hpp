#pragma once

// Dense kernels with analytic backward passes. Every array operation used by
// the network lives here. Inputs that carry a time axis are "sequence
// batches": `batch * seq_len` rows, where rows [b*seq_len, (b+1)*seq_len)
// hold sequence b. A single sequence is the case batch == 1.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rmsnet/errors.hpp"

namespace rmsnet {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

using Rng = std::mt19937_64;

using Index = Eigen::Index;

namespace detail {

inline void check_seq_len(Index rows, Index seq_len) {
    RMSNET_REQUIRE(seq_len >= 1, EmptyInput, "sequence length must be >= 1, got ", seq_len);
    RMSNET_REQUIRE(rows % seq_len == 0, Dimension, "input has ", rows,
                   " rows, not a multiple of sequence length ", seq_len);
}

} // namespace detail

// ---------------------------------------------------------------------------
// linear: out = input * weight + bias

template <typename Scalar>
struct LinearGrads {
    Matrix<Scalar> input;
    Matrix<Scalar> weight;
    Matrix<Scalar> bias;
};

template <typename DerivedIn, typename DerivedW, typename DerivedB>
Matrix<typename DerivedIn::Scalar> linear(const Eigen::MatrixBase<DerivedIn>& input,
                                          const Eigen::MatrixBase<DerivedW>& weight,
                                          const Eigen::MatrixBase<DerivedB>& bias) {
    RMSNET_REQUIRE(input.cols() == weight.rows(), Dimension, "linear: input is ",
                   input.rows(), "x", input.cols(), ", weight expects ", weight.rows(),
                   " input channels");
    RMSNET_REQUIRE(bias.rows() == 1 && bias.cols() == weight.cols(), Dimension,
                   "linear: bias must be 1x", weight.cols(), ", got ", bias.rows(), "x",
                   bias.cols());
    Matrix<typename DerivedIn::Scalar> out(input.rows(), weight.cols());
    out.noalias() = input * weight;
    out.rowwise() += bias.row(0);
    return out;
}

template <typename Scalar>
LinearGrads<Scalar> linear_backward(const Matrix<Scalar>& input, const Matrix<Scalar>& weight,
                                    const Matrix<Scalar>& grad_out) {
    RMSNET_REQUIRE(grad_out.rows() == input.rows() && grad_out.cols() == weight.cols(),
                   Dimension, "linear_backward: grad is ", grad_out.rows(), "x",
                   grad_out.cols(), ", expected ", input.rows(), "x", weight.cols());
    LinearGrads<Scalar> g;
    g.input.noalias() = grad_out * weight.transpose();
    g.weight.noalias() = input.transpose() * grad_out;
    g.bias = grad_out.colwise().sum();
    return g;
}

// ---------------------------------------------------------------------------
// conv1d_same: stride 1, zero padding, odd kernel size. Kernels are stored as
// a (k*Cin) x Cout matrix whose row `tap*Cin + i` holds kernels[tap - (k-1)/2, i, :].

template <typename Scalar>
struct Conv1dGrads {
    Matrix<Scalar> input;
    Matrix<Scalar> kernels;
    Matrix<Scalar> bias;
};

/// Unfolds each sequence into rows of k consecutive (zero-padded) frames.
template <typename Derived>
Matrix<typename Derived::Scalar> im2col_same(const Eigen::MatrixBase<Derived>& input,
                                             Index kernel_size, Index seq_len) {
    RMSNET_REQUIRE(kernel_size >= 1 && kernel_size % 2 == 1, Config,
                   "conv1d kernel size must be odd, got ", kernel_size);
    detail::check_seq_len(input.rows(), seq_len);
    const Index channels = input.cols();
    const Index half = (kernel_size - 1) / 2;
    const Index batch = input.rows() / seq_len;
    Matrix<typename Derived::Scalar> cols =
        Matrix<typename Derived::Scalar>::Zero(input.rows(), kernel_size * channels);
    for (Index b = 0; b < batch; ++b) {
        const Index base = b * seq_len;
        for (Index t = 0; t < seq_len; ++t) {
            for (Index tap = 0; tap < kernel_size; ++tap) {
                const Index src = t + tap - half;
                if (src < 0 || src >= seq_len) continue;
                cols.row(base + t).segment(tap * channels, channels) = input.row(base + src);
            }
        }
    }
    return cols;
}

template <typename DerivedIn, typename DerivedK, typename DerivedB>
Matrix<typename DerivedIn::Scalar> conv1d_same(const Eigen::MatrixBase<DerivedIn>& input,
                                               const Eigen::MatrixBase<DerivedK>& kernels,
                                               const Eigen::MatrixBase<DerivedB>& bias,
                                               Index kernel_size, Index seq_len) {
    RMSNET_REQUIRE(kernel_size >= 1 && kernel_size % 2 == 1, Config,
                   "conv1d kernel size must be odd, got ", kernel_size);
    RMSNET_REQUIRE(kernels.rows() == kernel_size * input.cols(), Dimension,
                   "conv1d: kernels have ", kernels.rows(), " rows, expected ", kernel_size,
                   "*", input.cols());
    const auto cols = im2col_same(input, kernel_size, seq_len);
    return linear(cols, kernels, bias);
}

template <typename DerivedIn, typename DerivedK, typename DerivedB>
Matrix<typename DerivedIn::Scalar> conv1d_same(const Eigen::MatrixBase<DerivedIn>& input,
                                               const Eigen::MatrixBase<DerivedK>& kernels,
                                               const Eigen::MatrixBase<DerivedB>& bias,
                                               Index kernel_size) {
    return conv1d_same(input, kernels, bias, kernel_size, input.rows());
}

/// Backward from the unfolded input cached by the forward pass.
template <typename Scalar>
Conv1dGrads<Scalar> conv1d_same_backward(const Matrix<Scalar>& cols, Index in_channels,
                                         const Matrix<Scalar>& kernels,
                                         const Matrix<Scalar>& grad_out, Index kernel_size,
                                         Index seq_len) {
    detail::check_seq_len(cols.rows(), seq_len);
    auto lin = linear_backward(cols, kernels, grad_out);
    const Index half = (kernel_size - 1) / 2;
    const Index batch = cols.rows() / seq_len;
    Conv1dGrads<Scalar> g;
    g.kernels = std::move(lin.weight);
    g.bias = std::move(lin.bias);
    g.input = Matrix<Scalar>::Zero(cols.rows(), in_channels);
    for (Index b = 0; b < batch; ++b) {
        const Index base = b * seq_len;
        for (Index t = 0; t < seq_len; ++t) {
            for (Index tap = 0; tap < kernel_size; ++tap) {
                const Index src = t + tap - half;
                if (src < 0 || src >= seq_len) continue;
                g.input.row(base + src) +=
                    lin.input.row(base + t).segment(tap * in_channels, in_channels);
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// relu

template <typename Derived>
Matrix<typename Derived::Scalar> relu(const Eigen::MatrixBase<Derived>& input) {
    return input.cwiseMax(typename Derived::Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> relu_backward(const Matrix<Scalar>& input, const Matrix<Scalar>& grad_out) {
    return (input.array() > Scalar(0)).select(grad_out, Scalar(0));
}

// ---------------------------------------------------------------------------
// dropout (inverted): training entries survive with probability 1 - rate and
// are scaled by 1 / (1 - rate).

inline void check_dropout_rate(double rate) {
    RMSNET_REQUIRE(rate >= 0.0 && rate < 1.0, Config, "dropout rate must be in [0, 1), got ",
                   rate);
}

/// Multiplicative mask with entries 0 or 1/(1-rate).
template <typename Scalar>
Matrix<Scalar> dropout_mask(Index rows, Index cols, double rate, Rng& rng) {
    check_dropout_rate(rate);
    const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
    Matrix<Scalar> mask(rows, cols);
    if (rate == 0.0) {
        mask.setOnes();
        return mask;
    }
    std::bernoulli_distribution drop(rate);
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = drop(rng) ? Scalar(0) : keep_scale;
    return mask;
}

template <typename Derived>
Matrix<typename Derived::Scalar> dropout(const Eigen::MatrixBase<Derived>& input, double rate,
                                         bool training, Rng& rng) {
    check_dropout_rate(rate);
    if (!training || rate == 0.0) return input;
    using Scalar = typename Derived::Scalar;
    return input.cwiseProduct(dropout_mask<Scalar>(input.rows(), input.cols(), rate, rng));
}

// ---------------------------------------------------------------------------
// max_over_time: per sequence and channel, the maximum over the time axis.

template <typename Scalar>
struct MaxOverTime {
    Matrix<Scalar> values;                                       // batch x C
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax; // absolute rows
};

template <typename Derived>
MaxOverTime<typename Derived::Scalar> max_over_time(const Eigen::MatrixBase<Derived>& input,
                                                    Index seq_len) {
    RMSNET_REQUIRE(input.rows() > 0, EmptyInput, "max_over_time on an empty time axis");
    detail::check_seq_len(input.rows(), seq_len);
    const Index batch = input.rows() / seq_len;
    const Index channels = input.cols();
    MaxOverTime<typename Derived::Scalar> out;
    out.values.resize(batch, channels);
    out.argmax.resize(batch, channels);
    for (Index b = 0; b < batch; ++b) {
        const Index base = b * seq_len;
        out.values.row(b) = input.row(base);
        out.argmax.row(b).setConstant(base);
        for (Index t = 1; t < seq_len; ++t) {
            for (Index c = 0; c < channels; ++c) {
                // strict > keeps the first occurrence on ties
                if (input(base + t, c) > out.values(b, c)) {
                    out.values(b, c) = input(base + t, c);
                    out.argmax(b, c) = base + t;
                }
            }
        }
    }
    return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> max_over_time(const Eigen::MatrixBase<Derived>& input) {
    return max_over_time(input, input.rows()).values.row(0).transpose();
}

template <typename Scalar>
Matrix<Scalar> max_over_time_backward(const MaxOverTime<Scalar>& forward, Index input_rows,
                                      const Matrix<Scalar>& grad_out) {
    Matrix<Scalar> grad = Matrix<Scalar>::Zero(input_rows, grad_out.cols());
    for (Index b = 0; b < grad_out.rows(); ++b)
        for (Index c = 0; c < grad_out.cols(); ++c) grad(forward.argmax(b, c), c) += grad_out(b, c);
    return grad;
}

// ---------------------------------------------------------------------------
// softmax over each row, shifted by the row maximum.

template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    RMSNET_REQUIRE(logits.allFinite(), Numeric, "softmax: non-finite logit");
    Matrix<Scalar> out(logits.rows(), logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) {
        const Scalar shift = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - shift).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
    return softmax_rows(logits.reshaped().transpose()).row(0).transpose();
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

} // namespace rmsnet
