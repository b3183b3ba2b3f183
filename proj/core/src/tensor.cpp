#include "stacktrack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace stacktrack {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) {
            os << ",";
        }
        os << s[i];
    }
    os << "]";
    return os.str();
}

static void check_shape_valid(const Shape& s) {
    for (int d : s) {
        if (d <= 0) {
            throw ShapeError("tensor extents must be positive, got " + shape_str(s));
        }
    }
}

Tensor::Storage& Tensor::st() {
    if (!s_) {
        throw ContractError("use of undefined tensor");
    }
    return *s_;
}

const Tensor::Storage& Tensor::st() const {
    if (!s_) {
        throw ContractError("use of undefined tensor");
    }
    return *s_;
}

Tensor Tensor::zeros(Shape shape) {
    check_shape_valid(shape);
    auto s = std::make_shared<Storage>();
    s->data.assign(shape_numel(shape), 0.0);
    s->shape = std::move(shape);
    return Tensor(std::move(s));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.st().data.begin(), t.st().data.end(), value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    check_shape_valid(shape);
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape));
    }
    auto s = std::make_shared<Storage>();
    s->shape = std::move(shape);
    s->data = std::move(values);
    return Tensor(std::move(s));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
    Tensor t = zeros(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.st().data) {
        v = dist(rng);
    }
    return t;
}

Tensor Tensor::trunc_normal(Shape shape, std::mt19937_64& rng, double stddev) {
    Tensor t = zeros(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.st().data) {
        double z = dist(rng);
        while (std::fabs(z) > 2.0 * stddev) {
            z = dist(rng);
        }
        v = z;
    }
    return t;
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    Tensor t = zeros(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.st().data) {
        v = dist(rng);
    }
    return t;
}

const Shape& Tensor::shape() const { return st().shape; }
int Tensor::ndim() const { return static_cast<int>(st().shape.size()); }

int Tensor::dim(int i) const {
    const Shape& s = st().shape;
    if (i < 0 || i >= static_cast<int>(s.size())) {
        throw ShapeError("dim index " + std::to_string(i) + " out of range for " + shape_str(s));
    }
    return s[static_cast<std::size_t>(i)];
}

std::size_t Tensor::numel() const { return st().data.size(); }

std::span<double> Tensor::values() { return {st().data.data(), st().data.size()}; }
std::span<const double> Tensor::values() const { return {st().data.data(), st().data.size()}; }
double* Tensor::data() { return st().data.data(); }
const double* Tensor::data() const { return st().data.data(); }

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item() requires a scalar, shape is " + shape_str(shape()));
    }
    return st().data[0];
}

static std::size_t flat_index(const Shape& shape, std::initializer_list<int> idx) {
    if (idx.size() != shape.size()) {
        throw ShapeError("index rank mismatch");
    }
    std::size_t flat = 0;
    std::size_t i = 0;
    for (int v : idx) {
        if (v < 0 || v >= shape[i]) {
            throw ShapeError("index out of range");
        }
        flat = flat * static_cast<std::size_t>(shape[i]) + static_cast<std::size_t>(v);
        ++i;
    }
    return flat;
}

double Tensor::at(std::initializer_list<int> idx) const { return st().data[flat_index(shape(), idx)]; }
double& Tensor::at(std::initializer_list<int> idx) { return st().data[flat_index(shape(), idx)]; }

bool Tensor::requires_grad() const { return st().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    st().requires_grad = on;
    return *this;
}

std::span<double> Tensor::grad() const {
    if (!s_) {
        throw ContractError("use of undefined tensor");
    }
    Storage& s = *s_;
    if (s.grad.empty()) {
        s.grad.assign(s.data.size(), 0.0);
    }
    return {s.grad.data(), s.grad.size()};
}

double* Tensor::maybe_grad() const {
    const Storage& s = st();
    return s.grad.empty() ? nullptr : const_cast<double*>(s.grad.data());
}

bool Tensor::has_grad() const { return !st().grad.empty(); }

void Tensor::zero_grad() const {
    if (!s_) {
        throw ContractError("use of undefined tensor");
    }
    std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    auto s = std::make_shared<Storage>();
    s->shape = st().shape;
    s->data = st().data;
    s->requires_grad = st().requires_grad;
    return Tensor(std::move(s));
}

bool Tensor::all_finite() const {
    for (double v : st().data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- kernels

namespace {

// c[m,n] (+)= a[m,k] * b[k,n]
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<std::size_t>(i) * n;
        const double* ai = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) {
                continue;
            }
            const double* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                ci[j] += av * bp[j];
            }
        }
    }
}

// c[m,n] += a[m,k] * b^T where b is [n,k]
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* ci = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += ai[p] * bj[p];
            }
            ci[j] += acc;
        }
    }
}

// c[k,n] += a^T * b where a is [m,k], b is [m,n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        const double* bi = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) {
                continue;
            }
            double* cp = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                cp[j] += av * bi[j];
            }
        }
    }
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

// ---------------------------------------------------------------- graph

Tensor Graph::make_out(Shape shape, bool rg) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad(rg);
    return t;
}

void Graph::record(bool rg, const Tensor& out, std::function<void()> fn) {
    if (rg) {
        nodes_.push_back(Node{out, std::move(fn)});
    }
}

void Graph::clear() {
    nodes_.clear();
    mul_count_ = 0;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw ShapeError("matmul expects 2-d tensors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor out = make_out({m, n}, rg);
    mm_nn(a.data(), b.data(), out.data(), m, k, n);
    mul_count_ += static_cast<std::uint64_t>(m) * k * n;
    record(rg, out, [a, b, out, m, k, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        if (a.requires_grad()) {
            mm_nt(go, b.data(), a.grad().data(), m, n, k); // dA = dC * B^T
        }
        if (b.requires_grad()) {
            mm_tn(a.data(), go, b.grad().data(), m, k, n); // dB = A^T * dC
        }
    });
    return out;
}

Tensor Graph::conv2d(const Tensor& input, const Tensor& kernel, int stride) {
    if (input.ndim() != 3 || kernel.ndim() != 4) {
        throw ShapeError("conv2d expects input [C,H,W] and kernel [O,C,P,P]");
    }
    if (stride < 1) {
        throw ShapeError("conv2d stride must be >= 1");
    }
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int O = kernel.dim(0), KC = kernel.dim(1), P = kernel.dim(2), P2 = kernel.dim(3);
    if (KC != C) {
        throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         " kernel " + shape_str(kernel.shape()));
    }
    if (P != P2) {
        throw ShapeError("conv2d kernel must be square");
    }
    if (P > H || P > W) {
        throw ShapeError("conv2d kernel " + std::to_string(P) + " larger than input " +
                         std::to_string(H) + "x" + std::to_string(W));
    }
    const int OH = (H - P) / stride + 1;
    const int OW = (W - P) / stride + 1;
    const bool rg = input.requires_grad() || kernel.requires_grad();
    Tensor out = make_out({O, OH, OW}, rg);

    const double* in = input.data();
    const double* kw = kernel.data();
    double* op = out.data();
    for (int o = 0; o < O; ++o) {
        for (int i = 0; i < OH; ++i) {
            for (int j = 0; j < OW; ++j) {
                double acc = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double* inc = in + (static_cast<std::size_t>(c) * H + i * stride) * W + j * stride;
                    const double* kwc = kw + ((static_cast<std::size_t>(o) * C + c) * P) * P;
                    for (int u = 0; u < P; ++u) {
                        const double* row = inc + static_cast<std::size_t>(u) * W;
                        const double* krow = kwc + static_cast<std::size_t>(u) * P;
                        for (int v = 0; v < P; ++v) {
                            acc += row[v] * krow[v];
                        }
                    }
                }
                op[(static_cast<std::size_t>(o) * OH + i) * OW + j] = acc;
            }
        }
    }
    mul_count_ += static_cast<std::uint64_t>(O) * OH * OW * C * P * P;

    record(rg, out, [input, kernel, out, C, H, W, O, P, OH, OW, stride]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        const double* in = input.data();
        const double* kw = kernel.data();
        double* gin = input.requires_grad() ? input.grad().data() : nullptr;
        double* gk = kernel.requires_grad() ? kernel.grad().data() : nullptr;
        for (int o = 0; o < O; ++o) {
            for (int i = 0; i < OH; ++i) {
                for (int j = 0; j < OW; ++j) {
                    const double g = go[(static_cast<std::size_t>(o) * OH + i) * OW + j];
                    if (g == 0.0) {
                        continue;
                    }
                    for (int c = 0; c < C; ++c) {
                        const std::size_t in_base = (static_cast<std::size_t>(c) * H + i * stride) * W + j * stride;
                        const std::size_t k_base = ((static_cast<std::size_t>(o) * C + c) * P) * P;
                        for (int u = 0; u < P; ++u) {
                            for (int v = 0; v < P; ++v) {
                                const std::size_t ii = in_base + static_cast<std::size_t>(u) * W + v;
                                const std::size_t ki = k_base + static_cast<std::size_t>(u) * P + v;
                                if (gin) {
                                    gin[ii] += g * kw[ki];
                                }
                                if (gk) {
                                    gk[ki] += g * in[ii];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

Tensor Graph::pad2d(const Tensor& input, int pad) {
    if (input.ndim() != 3) {
        throw ShapeError("pad2d expects [C,H,W]");
    }
    if (pad < 0) {
        throw ShapeError("pad2d pad must be >= 0");
    }
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int PH = H + 2 * pad, PW = W + 2 * pad;
    const bool rg = input.requires_grad();
    Tensor out = make_out({C, PH, PW}, rg);
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < H; ++i) {
            const double* src = input.data() + (static_cast<std::size_t>(c) * H + i) * W;
            double* dst = out.data() + (static_cast<std::size_t>(c) * PH + i + pad) * PW + pad;
            std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(W));
        }
    }
    record(rg, out, [input, out, C, H, W, PH, PW, pad]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gin = input.grad().data();
        for (int c = 0; c < C; ++c) {
            for (int i = 0; i < H; ++i) {
                const double* src = go + (static_cast<std::size_t>(c) * PH + i + pad) * PW + pad;
                double* dst = gin + (static_cast<std::size_t>(c) * H + i) * W;
                for (int j = 0; j < W; ++j) {
                    dst[j] += src[j];
                }
            }
        }
    });
    return out;
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor out = make_out(a.shape(), rg);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a[i] + b[i];
    }
    record(rg, out, [a, b, out, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        if (a.requires_grad()) {
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += go[i];
            }
        }
        if (b.requires_grad()) {
            double* gb = b.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                gb[i] += go[i];
            }
        }
    });
    return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor out = make_out(a.shape(), rg);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a[i] - b[i];
    }
    record(rg, out, [a, b, out, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        if (a.requires_grad()) {
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += go[i];
            }
        }
        if (b.requires_grad()) {
            double* gb = b.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                gb[i] -= go[i];
            }
        }
    });
    return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor out = make_out(a.shape(), rg);
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a[i] * b[i];
    }
    record(rg, out, [a, b, out, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        if (a.requires_grad()) {
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += go[i] * b[i];
            }
        }
        if (b.requires_grad()) {
            double* gb = b.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                gb[i] += go[i] * a[i];
            }
        }
    });
    return out;
}

Tensor Graph::scale(const Tensor& x, double c) {
    const bool rg = x.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = x[i] * c;
    }
    record(rg, out, [x, out, c, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] += go[i] * c;
        }
    });
    return out;
}

Tensor Graph::add_scalar(const Tensor& x, double c) {
    const bool rg = x.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = x[i] + c;
    }
    record(rg, out, [x, out, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] += go[i];
        }
    });
    return out;
}

Tensor Graph::pointwise(PointwiseOp op, const Tensor& x) {
    const bool rg = x.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    const std::size_t n = x.numel();
    switch (op) {
    case PointwiseOp::sigmoid:
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = sigmoid_scalar(x[i]);
        }
        break;
    case PointwiseOp::tanh:
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = std::tanh(x[i]);
        }
        break;
    case PointwiseOp::relu:
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = x[i] > 0.0 ? x[i] : 0.0;
        }
        break;
    }
    record(rg, out, [x, out, op, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        switch (op) {
        case PointwiseOp::sigmoid:
            for (std::size_t i = 0; i < n; ++i) {
                const double y = out[i];
                gx[i] += go[i] * y * (1.0 - y);
            }
            break;
        case PointwiseOp::tanh:
            for (std::size_t i = 0; i < n; ++i) {
                const double y = out[i];
                gx[i] += go[i] * (1.0 - y * y);
            }
            break;
        case PointwiseOp::relu:
            for (std::size_t i = 0; i < n; ++i) {
                gx[i] += x[i] > 0.0 ? go[i] : 0.0;
            }
            break;
        }
    });
    return out;
}

Tensor Graph::log(const Tensor& x) {
    const bool rg = x.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::log(x[i]);
    }
    record(rg, out, [x, out, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] += go[i] / x[i];
        }
    });
    return out;
}

Tensor Graph::abs(const Tensor& x) {
    const bool rg = x.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::fabs(x[i]);
    }
    record(rg, out, [x, out, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            // subgradient 0 at x == 0
            gx[i] += go[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
        }
    });
    return out;
}

Tensor Graph::clamp(const Tensor& x, double lo, double hi) {
    if (!(lo < hi)) {
        throw ContractError("clamp requires lo < hi");
    }
    const bool rg = x.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::min(hi, std::max(lo, x[i]));
    }
    record(rg, out, [x, out, lo, hi, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            if (x[i] >= lo && x[i] <= hi) {
                gx[i] += go[i];
            }
        }
    });
    return out;
}

Tensor Graph::pow_const(const Tensor& x, double p) {
    const bool rg = x.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::pow(x[i], p);
    }
    record(rg, out, [x, out, p, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] += go[i] * p * std::pow(x[i], p - 1.0);
        }
    });
    return out;
}

Tensor Graph::softmax_lastdim(const Tensor& x) {
    if (x.ndim() < 1) {
        throw ShapeError("softmax_lastdim needs at least one dim");
    }
    const int d = x.dim(x.ndim() - 1);
    const std::size_t rows = x.numel() / static_cast<std::size_t>(d);
    const bool rg = x.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = x.data() + r * d;
        double* yo = out.data() + r * d;
        double mx = xi[0];
        for (int j = 1; j < d; ++j) {
            mx = std::max(mx, xi[j]);
        }
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            yo[j] = std::exp(xi[j] - mx);
            z += yo[j];
        }
        for (int j = 0; j < d; ++j) {
            yo[j] /= z;
        }
    }
    record(rg, out, [x, out, rows, d]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = out.data() + r * d;
            const double* g = go + r * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) {
                dot += g[j] * y[j];
            }
            double* gxr = gx + r * d;
            for (int j = 0; j < d; ++j) {
                gxr[j] += y[j] * (g[j] - dot);
            }
        }
    });
    return out;
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    if (x.ndim() < 1) {
        throw ShapeError("layer_norm needs at least one dim");
    }
    const int d = x.dim(x.ndim() - 1);
    if (gain.ndim() != 1 || gain.dim(0) != d || bias.ndim() != 1 || bias.dim(0) != d) {
        throw ShapeError("layer_norm gain/bias must be [" + std::to_string(d) + "]");
    }
    constexpr double kEps = 1e-5;
    const std::size_t rows = x.numel() / static_cast<std::size_t>(d);
    const bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    // keep normalized rows and inverse stddevs for backward
    Tensor xhat = Tensor::zeros(x.shape());
    Tensor istd = Tensor::zeros({static_cast<int>(rows)});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = x.data() + r * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) {
            mu += xi[j];
        }
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xi[j] - mu;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + kEps);
        istd[r] = is;
        double* xh = xhat.data() + r * d;
        double* yo = out.data() + r * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mu) * is;
            yo[j] = xh[j] * gain[static_cast<std::size_t>(j)] + bias[static_cast<std::size_t>(j)];
        }
    }
    record(rg, out, [x, gain, bias, out, xhat, istd, rows, d]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.requires_grad() ? x.grad().data() : nullptr;
        double* gg = gain.requires_grad() ? gain.grad().data() : nullptr;
        double* gb = bias.requires_grad() ? bias.grad().data() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = go + r * d;
            const double* xh = xhat.data() + r * d;
            if (gg || gb) {
                for (int j = 0; j < d; ++j) {
                    if (gg) {
                        gg[j] += g[j] * xh[j];
                    }
                    if (gb) {
                        gb[j] += g[j];
                    }
                }
            }
            if (gx) {
                // dx = istd * (dy*g - mean(dy*g) - xhat * mean(dy*g*xhat))
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double t = g[j] * gain[static_cast<std::size_t>(j)];
                    m1 += t;
                    m2 += t * xh[j];
                }
                m1 /= d;
                m2 /= d;
                double* gxr = gx + r * d;
                const double is = istd[r];
                for (int j = 0; j < d; ++j) {
                    const double t = g[j] * gain[static_cast<std::size_t>(j)];
                    gxr[j] += is * (t - m1 - xh[j] * m2);
                }
            }
        }
    });
    return out;
}

Tensor Graph::add_row_bias(const Tensor& x, const Tensor& bias) {
    if (x.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != x.dim(1)) {
        throw ShapeError("add_row_bias expects x [N,D] and bias [D]");
    }
    const int N = x.dim(0), D = x.dim(1);
    const bool rg = x.requires_grad() || bias.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    for (int i = 0; i < N; ++i) {
        const double* xi = x.data() + static_cast<std::size_t>(i) * D;
        double* yo = out.data() + static_cast<std::size_t>(i) * D;
        for (int j = 0; j < D; ++j) {
            yo[j] = xi[j] + bias[static_cast<std::size_t>(j)];
        }
    }
    record(rg, out, [x, bias, out, N, D]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        if (x.requires_grad()) {
            double* gx = x.grad().data();
            for (std::size_t i = 0; i < static_cast<std::size_t>(N) * D; ++i) {
                gx[i] += go[i];
            }
        }
        if (bias.requires_grad()) {
            double* gb = bias.grad().data();
            for (int i = 0; i < N; ++i) {
                const double* g = go + static_cast<std::size_t>(i) * D;
                for (int j = 0; j < D; ++j) {
                    gb[j] += g[j];
                }
            }
        }
    });
    return out;
}

Tensor Graph::add_channel_bias(const Tensor& x, const Tensor& bias) {
    if (x.ndim() != 3 || bias.ndim() != 1 || bias.dim(0) != x.dim(0)) {
        throw ShapeError("add_channel_bias expects x [C,H,W] and bias [C]");
    }
    const int C = x.dim(0);
    const std::size_t plane = x.numel() / static_cast<std::size_t>(C);
    const bool rg = x.requires_grad() || bias.requires_grad();
    Tensor out = make_out(x.shape(), rg);
    for (int c = 0; c < C; ++c) {
        const double b = bias[static_cast<std::size_t>(c)];
        const double* xi = x.data() + static_cast<std::size_t>(c) * plane;
        double* yo = out.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            yo[i] = xi[i] + b;
        }
    }
    record(rg, out, [x, bias, out, C, plane]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        if (x.requires_grad()) {
            double* gx = x.grad().data();
            for (std::size_t i = 0; i < static_cast<std::size_t>(C) * plane; ++i) {
                gx[i] += go[i];
            }
        }
        if (bias.requires_grad()) {
            double* gb = bias.grad().data();
            for (int c = 0; c < C; ++c) {
                const double* g = go + static_cast<std::size_t>(c) * plane;
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    acc += g[i];
                }
                gb[c] += acc;
            }
        }
    });
    return out;
}

Tensor Graph::transpose(const Tensor& x) {
    if (x.ndim() != 2) {
        throw ShapeError("transpose expects a 2-d tensor");
    }
    const int m = x.dim(0), n = x.dim(1);
    const bool rg = x.requires_grad();
    Tensor out = make_out({n, m}, rg);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.data()[static_cast<std::size_t>(j) * m + i] = x.data()[static_cast<std::size_t>(i) * n + j];
        }
    }
    record(rg, out, [x, out, m, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                gx[static_cast<std::size_t>(i) * n + j] += go[static_cast<std::size_t>(j) * m + i];
            }
        }
    });
    return out;
}

Tensor Graph::reshape(const Tensor& x, Shape shape) {
    check_shape_valid(shape);
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    }
    const bool rg = x.requires_grad();
    Tensor out = make_out(std::move(shape), rg);
    std::memcpy(out.data(), x.data(), sizeof(double) * x.numel());
    record(rg, out, [x, out]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        const std::size_t n = x.numel();
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] += go[i];
        }
    });
    return out;
}

Tensor Graph::slice_rows(const Tensor& x, int r0, int r1) {
    if (x.ndim() != 2) {
        throw ShapeError("slice_rows expects a 2-d tensor");
    }
    const int m = x.dim(0), n = x.dim(1);
    if (r0 < 0 || r1 > m || r0 >= r1) {
        throw ShapeError("slice_rows range invalid");
    }
    const bool rg = x.requires_grad();
    Tensor out = make_out({r1 - r0, n}, rg);
    std::memcpy(out.data(), x.data() + static_cast<std::size_t>(r0) * n,
                sizeof(double) * out.numel());
    record(rg, out, [x, out, r0, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data() + static_cast<std::size_t>(r0) * n;
        const std::size_t cnt = out.numel();
        for (std::size_t i = 0; i < cnt; ++i) {
            gx[i] += go[i];
        }
    });
    return out;
}

Tensor Graph::slice_cols(const Tensor& x, int c0, int c1) {
    if (x.ndim() != 2) {
        throw ShapeError("slice_cols expects a 2-d tensor");
    }
    const int m = x.dim(0), n = x.dim(1);
    if (c0 < 0 || c1 > n || c0 >= c1) {
        throw ShapeError("slice_cols range invalid");
    }
    const int w = c1 - c0;
    const bool rg = x.requires_grad();
    Tensor out = make_out({m, w}, rg);
    for (int i = 0; i < m; ++i) {
        std::memcpy(out.data() + static_cast<std::size_t>(i) * w,
                    x.data() + static_cast<std::size_t>(i) * n + c0, sizeof(double) * w);
    }
    record(rg, out, [x, out, c0, m, n, w]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (int i = 0; i < m; ++i) {
            const double* g = go + static_cast<std::size_t>(i) * w;
            double* gr = gx + static_cast<std::size_t>(i) * n + c0;
            for (int j = 0; j < w; ++j) {
                gr[j] += g[j];
            }
        }
    });
    return out;
}

Tensor Graph::concat_rows(const std::vector<Tensor>& xs) {
    if (xs.empty()) {
        throw ShapeError("concat_rows of nothing");
    }
    const int n = xs[0].dim(1);
    int m = 0;
    bool rg = false;
    for (const Tensor& t : xs) {
        if (t.ndim() != 2 || t.dim(1) != n) {
            throw ShapeError("concat_rows column mismatch");
        }
        m += t.dim(0);
        rg = rg || t.requires_grad();
    }
    Tensor out = make_out({m, n}, rg);
    std::size_t off = 0;
    for (const Tensor& t : xs) {
        std::memcpy(out.data() + off, t.data(), sizeof(double) * t.numel());
        off += t.numel();
    }
    record(rg, out, [xs, out]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        std::size_t off = 0;
        for (const Tensor& t : xs) {
            if (t.requires_grad()) {
                double* gx = t.grad().data();
                const double* g = go + off;
                const std::size_t cnt = t.numel();
                for (std::size_t i = 0; i < cnt; ++i) {
                    gx[i] += g[i];
                }
            }
            off += t.numel();
        }
    });
    return out;
}

Tensor Graph::concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) {
        throw ShapeError("concat_cols of nothing");
    }
    const int m = xs[0].dim(0);
    int n = 0;
    bool rg = false;
    for (const Tensor& t : xs) {
        if (t.ndim() != 2 || t.dim(0) != m) {
            throw ShapeError("concat_cols row mismatch");
        }
        n += t.dim(1);
        rg = rg || t.requires_grad();
    }
    Tensor out = make_out({m, n}, rg);
    int col = 0;
    for (const Tensor& t : xs) {
        const int w = t.dim(1);
        for (int i = 0; i < m; ++i) {
            std::memcpy(out.data() + static_cast<std::size_t>(i) * n + col,
                        t.data() + static_cast<std::size_t>(i) * w, sizeof(double) * w);
        }
        col += w;
    }
    record(rg, out, [xs, out, m, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        int col = 0;
        for (const Tensor& t : xs) {
            const int w = t.dim(1);
            if (t.requires_grad()) {
                double* gx = t.grad().data();
                for (int i = 0; i < m; ++i) {
                    const double* g = go + static_cast<std::size_t>(i) * n + col;
                    double* gr = gx + static_cast<std::size_t>(i) * w;
                    for (int j = 0; j < w; ++j) {
                        gr[j] += g[j];
                    }
                }
            }
            col += w;
        }
    });
    return out;
}

Tensor Graph::sum(const Tensor& x) {
    const bool rg = x.requires_grad();
    Tensor out = make_out({1}, rg);
    double acc = 0.0;
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        acc += x[i];
    }
    out[0] = acc;
    record(rg, out, [x, out, n]() mutable {
        const double* go = out.maybe_grad();
        if (!go) {
            return;
        }
        double* gx = x.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] += go[0];
        }
    });
    return out;
}

Tensor Graph::mean(const Tensor& x) {
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

void Graph::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss, shape is " + shape_str(loss.shape()));
    }
    // Each pass starts from fresh intermediate grads; leaf grads accumulate
    // across repeated calls.
    for (Node& node : nodes_) {
        node.output.zero_grad();
    }
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->backward();
    }
}

// ---------------------------------------------------------------- grad check

static double eval_scalar(const std::function<Tensor(Graph&, const Tensor&)>& f, const Tensor& x) {
    Graph g;
    Tensor y = f(g, x);
    return y.item();
}

static double check_coords(const std::function<Tensor(Graph&, const Tensor&)>& f,
                           const Tensor& x, double eps, const std::vector<std::size_t>& coords) {
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    {
        Graph g;
        Tensor y = f(g, probe);
        g.backward(y);
    }
    std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

    double worst = 0.0;
    Tensor wiggle = x.clone();
    wiggle.set_requires_grad(false);
    for (std::size_t i : coords) {
        const double orig = wiggle[i];
        wiggle[i] = orig + eps;
        const double hi = eval_scalar(f, wiggle);
        wiggle[i] = orig - eps;
        const double lo = eval_scalar(f, wiggle);
        wiggle[i] = orig;
        const double numeric = (hi - lo) / (2.0 * eps);
        const double denom = std::max(1e-12, std::fabs(analytic[i]) + std::fabs(numeric));
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

double grad_check(const std::function<Tensor(Graph&, const Tensor&)>& f, const Tensor& x,
                  double eps) {
    std::vector<std::size_t> coords(x.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    return check_coords(f, x, eps, coords);
}

double grad_check_sampled(const std::function<Tensor(Graph&, const Tensor&)>& f, const Tensor& x,
                          double eps, int max_coords, std::mt19937_64& rng) {
    const std::size_t n = x.numel();
    if (static_cast<std::size_t>(max_coords) >= n) {
        return grad_check(f, x, eps);
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(max_coords));
    return check_coords(f, x, eps, all);
}

} // namespace stacktrack
