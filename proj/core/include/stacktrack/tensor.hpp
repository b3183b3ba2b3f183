#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stacktrack/errors.hpp"

namespace stacktrack {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major double tensor. Copies of a Tensor share storage; all model
// math runs in double precision. Gradients live next to the data and are
// allocated lazily on first access.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double v);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
    // Normal(0, stddev) with samples beyond 2*stddev redrawn.
    static Tensor trunc_normal(Shape shape, std::mt19937_64& rng, double stddev);
    static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

    bool defined() const { return s_ != nullptr; }
    const Shape& shape() const;
    int ndim() const;
    int dim(int i) const;
    std::size_t numel() const;

    std::span<double> values();
    std::span<const double> values() const;
    double* data();
    const double* data() const;
    double& operator[](std::size_t i) { return data()[i]; }
    double operator[](std::size_t i) const { return data()[i]; }
    double item() const;
    // Multi-index access, mostly for tests and decoding.
    double at(std::initializer_list<int> idx) const;
    double& at(std::initializer_list<int> idx);

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    // Allocates a zeroed gradient buffer on first call. Gradient state lives
    // in the shared storage, so these are callable through const handles.
    std::span<double> grad() const;
    double* maybe_grad() const;
    bool has_grad() const;
    void zero_grad() const;

    Tensor clone() const;
    bool same_storage(const Tensor& o) const { return s_ == o.s_; }
    bool all_finite() const;

private:
    struct Storage {
        Shape shape;
        std::vector<double> data;
        bool requires_grad = false;
        std::vector<double> grad; // empty until first grad() on a leaf/interior
    };
    std::shared_ptr<Storage> s_;
    explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
    Storage& st();
    const Storage& st() const;
};

enum class PointwiseOp { sigmoid, tanh, relu };

// Reverse-mode tape. Ops executed through a Graph record a backward rule when
// any input requires gradients; backward() replays the tape once in reverse,
// accumulating into leaf grads. A Graph is confined to one thread.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Tensor matmul(const Tensor& a, const Tensor& b);
    // input [C,H,W], kernel [O,C,P,P], valid convolution.
    Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride);
    Tensor pad2d(const Tensor& input, int pad);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& x, double c);
    Tensor add_scalar(const Tensor& x, double c);

    Tensor pointwise(PointwiseOp op, const Tensor& x);
    Tensor sigmoid(const Tensor& x) { return pointwise(PointwiseOp::sigmoid, x); }
    Tensor tanh(const Tensor& x) { return pointwise(PointwiseOp::tanh, x); }
    Tensor relu(const Tensor& x) { return pointwise(PointwiseOp::relu, x); }
    Tensor log(const Tensor& x);
    Tensor abs(const Tensor& x);
    Tensor clamp(const Tensor& x, double lo, double hi);
    Tensor pow_const(const Tensor& x, double p);

    Tensor softmax_lastdim(const Tensor& x);
    Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

    // x [N,D] + bias [D], broadcast over rows.
    Tensor add_row_bias(const Tensor& x, const Tensor& bias);
    // x [C,H,W] + bias [C], broadcast over the spatial plane.
    Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

    Tensor transpose(const Tensor& x);
    Tensor reshape(const Tensor& x, Shape shape);
    Tensor slice_rows(const Tensor& x, int r0, int r1);
    Tensor slice_cols(const Tensor& x, int c0, int c1);
    Tensor concat_rows(const std::vector<Tensor>& xs);
    Tensor concat_cols(const std::vector<Tensor>& xs);

    Tensor sum(const Tensor& x);
    Tensor mean(const Tensor& x);

    // loss must be a scalar produced on this tape. Repeated calls accumulate.
    void backward(const Tensor& loss);

    // Multiplies executed by matmul/conv2d since construction.
    std::uint64_t mul_count() const { return mul_count_; }
    std::size_t node_count() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Tensor output; // zeroed at the start of each backward pass
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
    std::uint64_t mul_count_ = 0;

    Tensor make_out(Shape shape, bool rg);
    void record(bool rg, const Tensor& out, std::function<void()> fn);
};

// Central-difference check of d(f)/dx against the tape gradient. Returns the
// max over elements of |analytic - numeric| / max(1e-12, |analytic|+|numeric|).
double grad_check(const std::function<Tensor(Graph&, const Tensor&)>& f,
                  const Tensor& x, double eps);

// Same check restricted to max_coords randomly chosen coordinates; used for
// large parameter tensors where the full sweep is wasteful.
double grad_check_sampled(const std::function<Tensor(Graph&, const Tensor&)>& f,
                          const Tensor& x, double eps, int max_coords,
                          std::mt19937_64& rng);

} // namespace stacktrack
