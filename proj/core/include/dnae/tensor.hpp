#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dnae/errors.hpp"

namespace dnae {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major double tensor with at most four axes.
///
/// Gradients live alongside the data: after Tape::backward, every tensor that
/// participated with requires_grad=true holds d(loss)/d(tensor) in `grad`.
/// Gradients accumulate (+=) across fan-out and across successive backward
/// calls; call zero_grad() between optimizer steps.
class Tensor {
public:
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;   // empty until a backward pass touches this tensor
    bool requires_grad = false;

    static TensorPtr make(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr from(std::vector<int> shape, std::vector<double> values,
                          bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    std::int64_t size() const;
    int ndim() const { return static_cast<int>(shape.size()); }
    double item() const;            // value of a 1-element tensor
    void zero_grad();
    void ensure_grad();             // allocate + zero `grad` if absent

    std::string shape_str() const;
    static std::int64_t shape_size(const std::vector<int>& shape);
};

/// Records an eager computation so it can be replayed in reverse.
///
/// Ops compute their forward result immediately and push a closure that, given
/// populated output gradients, scatters into input gradients. backward()
/// walks the record in reverse order; it throws StateError when nothing has
/// been recorded or the loss is not a recorded scalar.
class Tape {
public:
    // ---- graph ops ----
    TensorPtr conv2d(const TensorPtr& input, const TensorPtr& kernel, int stride, int padding);
    TensorPtr bias_channels(const TensorPtr& input, const TensorPtr& bias);
    TensorPtr pool2d(const TensorPtr& input, int window);
    TensorPtr upsample2x(const TensorPtr& input);
    TensorPtr dense(const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias);
    TensorPtr relu(const TensorPtr& x);
    TensorPtr tanh(const TensorPtr& x);
    TensorPtr sigmoid(const TensorPtr& x);
    TensorPtr clamp01(const TensorPtr& x);
    TensorPtr add(const TensorPtr& a, const TensorPtr& b);
    TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
    TensorPtr mul(const TensorPtr& a, const TensorPtr& b);      // elementwise
    TensorPtr scale(const TensorPtr& x, double c);
    TensorPtr axpy(double a, const TensorPtr& x, const TensorPtr& y); // a*x + y
    TensorPtr concat(std::span<const TensorPtr> parts);               // 1-D
    TensorPtr slice1d(const TensorPtr& x, int begin, int count);
    TensorPtr reshape(const TensorPtr& x, std::vector<int> shape);
    TensorPtr sum(const TensorPtr& x);
    TensorPtr sum_squares(const TensorPtr& x);
    TensorPtr mse(const TensorPtr& a, const TensorPtr& b);
    TensorPtr add_scalars(std::span<const TensorPtr> terms);

    /// Reverse pass from `loss` (a scalar recorded on this tape).
    void backward(const TensorPtr& loss);

    /// Forget all recorded nodes, recycling their buffers for later ops.
    void reset();

    std::size_t op_count() const { return steps_.size(); }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Step {
        std::function<void()> backward;
    };

    TensorPtr alloc(std::vector<int> shape, bool requires_grad);
    void record(const TensorPtr& out, std::function<void()> fn);

    std::vector<Step> steps_;
    std::vector<TensorPtr> nodes_;   // outputs, in creation order
    std::vector<TensorPtr> pool_;    // recycled buffers
};

// ---- plain (untaped) kernels, shared with the taped ops ----
namespace kernels {

struct ConvDims {
    int in_c, in_h, in_w;
    int out_c, out_h, out_w;
    int k, stride, padding;
};

ConvDims conv_dims(const std::vector<int>& input, const std::vector<int>& kernel,
                   int stride, int padding);

void conv2d_forward(const double* in, const double* k, double* out, const ConvDims& d);
void conv2d_backward_input(const double* gout, const double* k, double* gin, const ConvDims& d);
void conv2d_backward_kernel(const double* gout, const double* in, double* gk, const ConvDims& d);
void pool2d_forward(const double* in, double* out, int c, int h, int w, int window);
void upsample2x_forward(const double* in, double* out, int c, int h, int w);
void dense_forward(const double* x, const double* w, const double* b, double* y,
                   int n_out, int n_in);

} // namespace kernels

} // namespace dnae
