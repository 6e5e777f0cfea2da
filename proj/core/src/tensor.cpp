#include "dnae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace dnae {

// ============================ Tensor ============================

std::int64_t Tensor::shape_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

static void validate_shape(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 4)
        throw ValueError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
    for (int d : shape)
        if (d <= 0) throw ValueError("tensor dims must be positive, got " + std::to_string(d));
}

TensorPtr Tensor::make(std::vector<int> shape, bool requires_grad) {
    validate_shape(shape);
    auto t = std::make_shared<Tensor>();
    t->data.assign(static_cast<std::size_t>(shape_size(shape)), 0.0);
    t->shape = std::move(shape);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    validate_shape(shape);
    if (shape_size(shape) != static_cast<std::int64_t>(values.size()))
        throw ValueError("value count " + std::to_string(values.size()) +
                         " does not fill shape of " + std::to_string(shape_size(shape)));
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

std::int64_t Tensor::size() const { return static_cast<std::int64_t>(data.size()); }

double Tensor::item() const {
    if (data.size() != 1)
        throw StateError("item() on tensor of shape " + shape_str());
    return data[0];
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

// ============================ kernels ============================

namespace kernels {

ConvDims conv_dims(const std::vector<int>& input, const std::vector<int>& kernel,
                   int stride, int padding) {
    if (input.size() != 3)
        throw ValueError("conv2d input must be [C,H,W], got rank " + std::to_string(input.size()));
    if (kernel.size() != 4)
        throw ValueError("conv2d kernel must be [OC,IC,KH,KW], got rank " + std::to_string(kernel.size()));
    if (kernel[2] != kernel[3])
        throw ValueError("conv2d kernel must be square, got " + std::to_string(kernel[2]) + "x" +
                         std::to_string(kernel[3]));
    if (kernel[1] != input[0])
        throw ValueError("conv2d channel mismatch: input has " + std::to_string(input[0]) +
                         ", kernel expects " + std::to_string(kernel[1]));
    if (stride < 1) throw ValueError("conv2d stride must be >= 1");
    if (padding < 0) throw ValueError("conv2d padding must be >= 0");
    ConvDims d;
    d.in_c = input[0]; d.in_h = input[1]; d.in_w = input[2];
    d.out_c = kernel[0]; d.k = kernel[2]; d.stride = stride; d.padding = padding;
    d.out_h = (d.in_h + 2 * padding - d.k) / stride + 1;
    d.out_w = (d.in_w + 2 * padding - d.k) / stride + 1;
    if (d.out_h < 1 || d.out_w < 1)
        throw ValueError("conv2d output would be empty for input " + std::to_string(d.in_h) + "x" +
                         std::to_string(d.in_w) + " with k=" + std::to_string(d.k));
    return d;
}

// Valid output range for one kernel offset: positions where in-index stays in [0,n).
static inline void tap_range(int n_out, int n_in, int off, int stride, int pad,
                             int& o0, int& o1) {
    // in = o*stride + off - pad must lie in [0, n_in)
    int lo = pad - off;                       // o*stride >= lo
    o0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
    int hi = n_in - 1 + pad - off;            // o*stride <= hi
    o1 = hi < 0 ? -1 : hi / stride;
    if (o1 > n_out - 1) o1 = n_out - 1;
}

void conv2d_forward(const double* in, const double* k, double* out, const ConvDims& d) {
    std::fill(out, out + static_cast<std::size_t>(d.out_c) * d.out_h * d.out_w, 0.0);
    for (int oc = 0; oc < d.out_c; ++oc) {
        double* out_c = out + static_cast<std::size_t>(oc) * d.out_h * d.out_w;
        for (int ic = 0; ic < d.in_c; ++ic) {
            const double* in_c = in + static_cast<std::size_t>(ic) * d.in_h * d.in_w;
            const double* k_cc = k + ((static_cast<std::size_t>(oc) * d.in_c + ic) * d.k) * d.k;
            for (int kh = 0; kh < d.k; ++kh) {
                int oh0, oh1;
                tap_range(d.out_h, d.in_h, kh, d.stride, d.padding, oh0, oh1);
                for (int kw = 0; kw < d.k; ++kw) {
                    double w = k_cc[kh * d.k + kw];
                    if (w == 0.0) continue;
                    int ow0, ow1;
                    tap_range(d.out_w, d.in_w, kw, d.stride, d.padding, ow0, ow1);
                    for (int oh = oh0; oh <= oh1; ++oh) {
                        int ih = oh * d.stride + kh - d.padding;
                        const double* in_row = in_c + static_cast<std::size_t>(ih) * d.in_w + (kw - d.padding);
                        double* out_row = out_c + static_cast<std::size_t>(oh) * d.out_w;
                        if (d.stride == 1) {
                            for (int ow = ow0; ow <= ow1; ++ow) out_row[ow] += w * in_row[ow];
                        } else {
                            for (int ow = ow0; ow <= ow1; ++ow)
                                out_row[ow] += w * in_row[static_cast<std::size_t>(ow) * d.stride];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const double* gout, const double* k, double* gin, const ConvDims& d) {
    for (int oc = 0; oc < d.out_c; ++oc) {
        const double* g_c = gout + static_cast<std::size_t>(oc) * d.out_h * d.out_w;
        for (int ic = 0; ic < d.in_c; ++ic) {
            double* gin_c = gin + static_cast<std::size_t>(ic) * d.in_h * d.in_w;
            const double* k_cc = k + ((static_cast<std::size_t>(oc) * d.in_c + ic) * d.k) * d.k;
            for (int kh = 0; kh < d.k; ++kh) {
                int oh0, oh1;
                tap_range(d.out_h, d.in_h, kh, d.stride, d.padding, oh0, oh1);
                for (int kw = 0; kw < d.k; ++kw) {
                    double w = k_cc[kh * d.k + kw];
                    if (w == 0.0) continue;
                    int ow0, ow1;
                    tap_range(d.out_w, d.in_w, kw, d.stride, d.padding, ow0, ow1);
                    for (int oh = oh0; oh <= oh1; ++oh) {
                        int ih = oh * d.stride + kh - d.padding;
                        double* gin_row = gin_c + static_cast<std::size_t>(ih) * d.in_w + (kw - d.padding);
                        const double* g_row = g_c + static_cast<std::size_t>(oh) * d.out_w;
                        if (d.stride == 1) {
                            for (int ow = ow0; ow <= ow1; ++ow) gin_row[ow] += w * g_row[ow];
                        } else {
                            for (int ow = ow0; ow <= ow1; ++ow)
                                gin_row[static_cast<std::size_t>(ow) * d.stride] += w * g_row[ow];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernel(const double* gout, const double* in, double* gk, const ConvDims& d) {
    for (int oc = 0; oc < d.out_c; ++oc) {
        const double* g_c = gout + static_cast<std::size_t>(oc) * d.out_h * d.out_w;
        for (int ic = 0; ic < d.in_c; ++ic) {
            const double* in_c = in + static_cast<std::size_t>(ic) * d.in_h * d.in_w;
            double* gk_cc = gk + ((static_cast<std::size_t>(oc) * d.in_c + ic) * d.k) * d.k;
            for (int kh = 0; kh < d.k; ++kh) {
                int oh0, oh1;
                tap_range(d.out_h, d.in_h, kh, d.stride, d.padding, oh0, oh1);
                for (int kw = 0; kw < d.k; ++kw) {
                    int ow0, ow1;
                    tap_range(d.out_w, d.in_w, kw, d.stride, d.padding, ow0, ow1);
                    double acc = 0.0;
                    for (int oh = oh0; oh <= oh1; ++oh) {
                        int ih = oh * d.stride + kh - d.padding;
                        const double* in_row = in_c + static_cast<std::size_t>(ih) * d.in_w + (kw - d.padding);
                        const double* g_row = g_c + static_cast<std::size_t>(oh) * d.out_w;
                        if (d.stride == 1) {
                            for (int ow = ow0; ow <= ow1; ++ow) acc += g_row[ow] * in_row[ow];
                        } else {
                            for (int ow = ow0; ow <= ow1; ++ow)
                                acc += g_row[ow] * in_row[static_cast<std::size_t>(ow) * d.stride];
                        }
                    }
                    gk_cc[kh * d.k + kw] += acc;
                }
            }
        }
    }
}

void pool2d_forward(const double* in, double* out, int c, int h, int w, int window) {
    const int oh = h / window, ow = w / window;
    const double inv = 1.0 / (window * window);
    for (int ch = 0; ch < c; ++ch) {
        const double* in_c = in + static_cast<std::size_t>(ch) * h * w;
        double* out_c = out + static_cast<std::size_t>(ch) * oh * ow;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double acc = 0.0;
                for (int a = 0; a < window; ++a)
                    for (int b = 0; b < window; ++b)
                        acc += in_c[static_cast<std::size_t>(i * window + a) * w + j * window + b];
                out_c[static_cast<std::size_t>(i) * ow + j] = acc * inv;
            }
    }
}

void upsample2x_forward(const double* in, double* out, int c, int h, int w) {
    for (int ch = 0; ch < c; ++ch) {
        const double* in_c = in + static_cast<std::size_t>(ch) * h * w;
        double* out_c = out + static_cast<std::size_t>(ch) * (2 * h) * (2 * w);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double v = in_c[static_cast<std::size_t>(i) * w + j];
                double* r0 = out_c + static_cast<std::size_t>(2 * i) * (2 * w) + 2 * j;
                double* r1 = r0 + 2 * w;
                r0[0] = v; r0[1] = v; r1[0] = v; r1[1] = v;
            }
    }
}

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   int n_out, int n_in) {
    for (int i = 0; i < n_out; ++i) {
        const double* row = w + static_cast<std::size_t>(i) * n_in;
        double acc = b ? b[i] : 0.0;
        for (int j = 0; j < n_in; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

} // namespace kernels

// ============================ Tape ============================

TensorPtr Tape::alloc(std::vector<int> shape, bool requires_grad) {
    validate_shape(shape);
    const std::size_t n = static_cast<std::size_t>(Tensor::shape_size(shape));
    TensorPtr t;
    for (std::size_t i = pool_.size(); i-- > 0;) {
        if (pool_[i]->data.size() == n) {
            t = std::move(pool_[i]);
            pool_.erase(pool_.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!t) {
        t = std::make_shared<Tensor>();
        t->data.resize(n);
    }
    t->shape = std::move(shape);
    t->requires_grad = requires_grad;
    t->grad.clear();
    nodes_.push_back(t);
    return t;
}

void Tape::record(const TensorPtr& out, std::function<void()> fn) {
    if (out->requires_grad) steps_.push_back({std::move(fn)});
}

void Tape::reset() {
    steps_.clear();
    for (auto& n : nodes_) {
        if (n.use_count() == 1) {
            n->grad.clear();
            pool_.push_back(std::move(n));
        }
    }
    nodes_.clear();
}

void Tape::backward(const TensorPtr& loss) {
    if (nodes_.empty())
        throw StateError("backward() called before any forward op was recorded");
    if (!loss || loss->size() != 1)
        throw StateError("backward() needs a scalar loss tensor");
    bool on_tape = false;
    for (const auto& n : nodes_)
        if (n == loss) { on_tape = true; break; }
    if (!on_tape)
        throw StateError("loss tensor was not produced by this tape");
    if (!loss->requires_grad)
        throw StateError("loss does not depend on any tensor with requires_grad");
    for (auto& n : nodes_)
        if (n->requires_grad) { n->ensure_grad(); n->zero_grad(); }
    loss->grad[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->backward();
}

// ---- op helpers ----

static bool any_grad(std::initializer_list<const TensorPtr*> ts) {
    for (auto* t : ts)
        if ((*t)->requires_grad) return true;
    return false;
}

static void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape)
        throw ValueError(std::string(op) + ": shape mismatch " + a->shape_str() + " vs " + b->shape_str());
}

// ---- ops ----

TensorPtr Tape::conv2d(const TensorPtr& input, const TensorPtr& kernel, int stride, int padding) {
    auto d = kernels::conv_dims(input->shape, kernel->shape, stride, padding);
    auto out = alloc({d.out_c, d.out_h, d.out_w}, any_grad({&input, &kernel}));
    kernels::conv2d_forward(input->data.data(), kernel->data.data(), out->data.data(), d);
    record(out, [input, kernel, out, d]() {
        if (input->requires_grad) {
            input->ensure_grad();
            kernels::conv2d_backward_input(out->grad.data(), kernel->data.data(),
                                           input->grad.data(), d);
        }
        if (kernel->requires_grad) {
            kernel->ensure_grad();
            kernels::conv2d_backward_kernel(out->grad.data(), input->data.data(),
                                            kernel->grad.data(), d);
        }
    });
    return out;
}

TensorPtr Tape::bias_channels(const TensorPtr& input, const TensorPtr& bias) {
    if (input->ndim() != 3)
        throw ValueError("bias_channels input must be [C,H,W], got " + input->shape_str());
    if (bias->ndim() != 1 || bias->shape[0] != input->shape[0])
        throw ValueError("bias_channels: bias " + bias->shape_str() + " does not match channels of " +
                         input->shape_str());
    const int c = input->shape[0];
    const std::size_t plane = static_cast<std::size_t>(input->shape[1]) * input->shape[2];
    auto out = alloc(input->shape, any_grad({&input, &bias}));
    for (int ch = 0; ch < c; ++ch) {
        const double b = bias->data[ch];
        const double* src = input->data.data() + ch * plane;
        double* dst = out->data.data() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + b;
    }
    record(out, [input, bias, out, c, plane]() {
        if (input->requires_grad) {
            input->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) input->grad[i] += out->grad[i];
        }
        if (bias->requires_grad) {
            bias->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                const double* g = out->grad.data() + ch * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += g[i];
                bias->grad[ch] += acc;
            }
        }
    });
    return out;
}

TensorPtr Tape::pool2d(const TensorPtr& input, int window) {
    if (input->ndim() != 3)
        throw ValueError("pool2d input must be [C,H,W], got " + input->shape_str());
    if (window < 1) throw ValueError("pool2d window must be >= 1");
    const int c = input->shape[0], h = input->shape[1], w = input->shape[2];
    if (h % window != 0 || w % window != 0)
        throw ValueError("pool2d: input " + input->shape_str() + " not divisible by window " +
                         std::to_string(window));
    auto out = alloc({c, h / window, w / window}, input->requires_grad);
    kernels::pool2d_forward(input->data.data(), out->data.data(), c, h, w, window);
    record(out, [input, out, c, h, w, window]() {
        input->ensure_grad();
        const int oh = h / window, ow = w / window;
        const double inv = 1.0 / (window * window);
        for (int ch = 0; ch < c; ++ch) {
            const double* g_c = out->grad.data() + static_cast<std::size_t>(ch) * oh * ow;
            double* gin_c = input->grad.data() + static_cast<std::size_t>(ch) * h * w;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    const double g = g_c[static_cast<std::size_t>(i) * ow + j] * inv;
                    for (int a = 0; a < window; ++a)
                        for (int b = 0; b < window; ++b)
                            gin_c[static_cast<std::size_t>(i * window + a) * w + j * window + b] += g;
                }
        }
    });
    return out;
}

TensorPtr Tape::upsample2x(const TensorPtr& input) {
    if (input->ndim() != 3)
        throw ValueError("upsample2x input must be [C,H,W], got " + input->shape_str());
    const int c = input->shape[0], h = input->shape[1], w = input->shape[2];
    auto out = alloc({c, 2 * h, 2 * w}, input->requires_grad);
    kernels::upsample2x_forward(input->data.data(), out->data.data(), c, h, w);
    record(out, [input, out, c, h, w]() {
        input->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            double* gin_c = input->grad.data() + static_cast<std::size_t>(ch) * h * w;
            const double* g_c = out->grad.data() + static_cast<std::size_t>(ch) * (2 * h) * (2 * w);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const double* r0 = g_c + static_cast<std::size_t>(2 * i) * (2 * w) + 2 * j;
                    const double* r1 = r0 + 2 * w;
                    gin_c[static_cast<std::size_t>(i) * w + j] += r0[0] + r0[1] + r1[0] + r1[1];
                }
        }
    });
    return out;
}

TensorPtr Tape::dense(const TensorPtr& x, const TensorPtr& weight, const TensorPtr& bias) {
    if (x->ndim() != 1)
        throw ValueError("dense input must be 1-D, got " + x->shape_str());
    if (weight->ndim() != 2 || weight->shape[1] != x->shape[0])
        throw ValueError("dense: weight " + weight->shape_str() + " incompatible with input " +
                         x->shape_str());
    const int n_out = weight->shape[0], n_in = weight->shape[1];
    if (bias && (bias->ndim() != 1 || bias->shape[0] != n_out))
        throw ValueError("dense: bias " + bias->shape_str() + " must be [" + std::to_string(n_out) + "]");
    bool rg = x->requires_grad || weight->requires_grad || (bias && bias->requires_grad);
    auto out = alloc({n_out}, rg);
    kernels::dense_forward(x->data.data(), weight->data.data(),
                           bias ? bias->data.data() : nullptr, out->data.data(), n_out, n_in);
    record(out, [x, weight, bias, out, n_out, n_in]() {
        const double* g = out->grad.data();
        if (x->requires_grad) {
            x->ensure_grad();
            for (int i = 0; i < n_out; ++i) {
                const double gi = g[i];
                const double* row = weight->data.data() + static_cast<std::size_t>(i) * n_in;
                for (int j = 0; j < n_in; ++j) x->grad[j] += gi * row[j];
            }
        }
        if (weight->requires_grad) {
            weight->ensure_grad();
            for (int i = 0; i < n_out; ++i) {
                const double gi = g[i];
                double* row = weight->grad.data() + static_cast<std::size_t>(i) * n_in;
                for (int j = 0; j < n_in; ++j) row[j] += gi * x->data[j];
            }
        }
        if (bias && bias->requires_grad) {
            bias->ensure_grad();
            for (int i = 0; i < n_out; ++i) bias->grad[i] += g[i];
        }
    });
    return out;
}

TensorPtr Tape::relu(const TensorPtr& x) {
    auto out = alloc(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->data.size(); ++i)
        out->data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
    record(out, [x, out]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->data.size(); ++i)
            if (x->data[i] > 0.0) x->grad[i] += out->grad[i];
    });
    return out;
}

TensorPtr Tape::tanh(const TensorPtr& x) {
    auto out = alloc(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = std::tanh(x->data[i]);
    record(out, [x, out]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->data.size(); ++i) {
            const double y = out->data[i];
            x->grad[i] += (1.0 - y * y) * out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::sigmoid(const TensorPtr& x) {
    auto out = alloc(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->data.size(); ++i)
        out->data[i] = 1.0 / (1.0 + std::exp(-x->data[i]));
    record(out, [x, out]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->data.size(); ++i) {
            const double y = out->data[i];
            x->grad[i] += y * (1.0 - y) * out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::clamp01(const TensorPtr& x) {
    auto out = alloc(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->data.size(); ++i)
        out->data[i] = std::min(1.0, std::max(0.0, x->data[i]));
    record(out, [x, out]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->data.size(); ++i)
            if (x->data[i] > 0.0 && x->data[i] < 1.0) x->grad[i] += out->grad[i];
    });
    return out;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    auto out = alloc(a->shape, any_grad({&a, &b}));
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    record(out, [a, b, out]() {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "sub");
    auto out = alloc(a->shape, any_grad({&a, &b}));
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
    record(out, [a, b, out]() {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] -= out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mul");
    auto out = alloc(a->shape, any_grad({&a, &b}));
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    record(out, [a, b, out]() {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += b->data[i] * out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += a->data[i] * out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::scale(const TensorPtr& x, double c) {
    auto out = alloc(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = c * x->data[i];
    record(out, [x, out, c]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += c * out->grad[i];
    });
    return out;
}

TensorPtr Tape::axpy(double a, const TensorPtr& x, const TensorPtr& y) {
    require_same_shape(x, y, "axpy");
    auto out = alloc(x->shape, any_grad({&x, &y}));
    for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = a * x->data[i] + y->data[i];
    record(out, [x, y, out, a]() {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += a * out->grad[i];
        }
        if (y->requires_grad) {
            y->ensure_grad();
            for (std::size_t i = 0; i < y->data.size(); ++i) y->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::concat(std::span<const TensorPtr> parts) {
    if (parts.empty()) throw ValueError("concat of zero tensors");
    int total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p->ndim() != 1)
            throw ValueError("concat expects 1-D tensors, got " + p->shape_str());
        total += p->shape[0];
        rg = rg || p->requires_grad;
    }
    auto out = alloc({total}, rg);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + static_cast<std::ptrdiff_t>(off));
        off += p->data.size();
    }
    std::vector<TensorPtr> held(parts.begin(), parts.end());
    record(out, [held = std::move(held), out]() {
        std::size_t off = 0;
        for (const auto& p : held) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->data.size(); ++i) p->grad[i] += out->grad[off + i];
            }
            off += p->data.size();
        }
    });
    return out;
}

TensorPtr Tape::slice1d(const TensorPtr& x, int begin, int count) {
    if (x->ndim() != 1) throw ValueError("slice1d expects 1-D tensor, got " + x->shape_str());
    if (begin < 0 || count < 1 || begin + count > x->shape[0])
        throw ValueError("slice1d [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of range for " + x->shape_str());
    auto out = alloc({count}, x->requires_grad);
    std::copy(x->data.begin() + begin, x->data.begin() + begin + count, out->data.begin());
    record(out, [x, out, begin, count]() {
        x->ensure_grad();
        for (int i = 0; i < count; ++i) x->grad[begin + i] += out->grad[i];
    });
    return out;
}

TensorPtr Tape::reshape(const TensorPtr& x, std::vector<int> shape) {
    if (Tensor::shape_size(shape) != x->size())
        throw ValueError("reshape to incompatible size: " + x->shape_str());
    auto out = alloc(std::move(shape), x->requires_grad);
    std::copy(x->data.begin(), x->data.end(), out->data.begin());
    record(out, [x, out]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += out->grad[i];
    });
    return out;
}

TensorPtr Tape::sum(const TensorPtr& x) {
    auto out = alloc({1}, x->requires_grad);
    double acc = 0.0;
    for (double v : x->data) acc += v;
    out->data[0] = acc;
    record(out, [x, out]() {
        x->ensure_grad();
        const double g = out->grad[0];
        for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += g;
    });
    return out;
}

TensorPtr Tape::sum_squares(const TensorPtr& x) {
    auto out = alloc({1}, x->requires_grad);
    double acc = 0.0;
    for (double v : x->data) acc += v * v;
    out->data[0] = acc;
    record(out, [x, out]() {
        x->ensure_grad();
        const double g = out->grad[0];
        for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += 2.0 * x->data[i] * g;
    });
    return out;
}

TensorPtr Tape::mse(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mse");
    auto out = alloc({1}, any_grad({&a, &b}));
    const double inv = 1.0 / static_cast<double>(a->data.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a->data.size(); ++i) {
        const double d = a->data[i] - b->data[i];
        acc += d * d;
    }
    out->data[0] = acc * inv;
    record(out, [a, b, out, inv]() {
        const double g = 2.0 * inv * out->grad[0];
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->data.size(); ++i)
                a->grad[i] += g * (a->data[i] - b->data[i]);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->data.size(); ++i)
                b->grad[i] -= g * (a->data[i] - b->data[i]);
        }
    });
    return out;
}

TensorPtr Tape::add_scalars(std::span<const TensorPtr> terms) {
    if (terms.empty()) throw ValueError("add_scalars of zero tensors");
    bool rg = false;
    double acc = 0.0;
    for (const auto& t : terms) {
        if (t->size() != 1)
            throw ValueError("add_scalars expects scalar tensors, got " + t->shape_str());
        acc += t->data[0];
        rg = rg || t->requires_grad;
    }
    auto out = alloc({1}, rg);
    out->data[0] = acc;
    std::vector<TensorPtr> held(terms.begin(), terms.end());
    record(out, [held = std::move(held), out]() {
        for (const auto& t : held) {
            if (t->requires_grad) {
                t->ensure_grad();
                t->grad[0] += out->grad[0];
            }
        }
    });
    return out;
}

} // namespace dnae
