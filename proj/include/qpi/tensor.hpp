#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "qpi/errors.hpp"
#include "qpi/rng.hpp"

namespace qpi {

namespace debug {
// Negative control for gradient checking: when set, the relu backward rule is
// deliberately scaled so finite-difference verification must report failures.
inline std::atomic<bool> corrupt_relu_backward{false};
}  // namespace debug

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a backward pass reaches this tensor
    bool requires_grad = false;

    // Backward-graph record. `parents` keeps the inputs alive; `backward_fn`
    // reads this node's grad and accumulates into the parents' grads.
    std::vector<std::shared_ptr<TensorImpl<T>>> parents;
    std::function<void(const TensorImpl<T>&)> backward_fn;

    std::size_t numel() const { return data.size(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

}  // namespace detail

// Dense row-major tensor of floats with reverse-mode autodiff. Copying a
// Tensor copies the handle, not the storage; values are treated as immutable
// once an op has consumed them (the optimizer mutates parameters only between
// graph constructions).
template <typename T>
class Tensor {
public:
    using Impl = detail::TensorImpl<T>;

    Tensor() : impl_(std::make_shared<Impl>()) { impl_->shape = {0}; }

    explicit Tensor(std::vector<std::size_t> shape)
        : impl_(std::make_shared<Impl>()) {
        impl_->shape = std::move(shape);
        impl_->data.assign(detail::shape_numel(impl_->shape), T(0));
    }

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : impl_(std::make_shared<Impl>()) {
        if (detail::shape_numel(shape) != data.size()) {
            throw ShapeError("tensor: shape " + detail::shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
        }
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
    std::size_t numel() const { return impl_->data.size(); }

    std::vector<T>& values() & { return impl_->data; }
    const std::vector<T>& values() const& { return impl_->data; }
    // Calling values() on a temporary must not hand out a dangling reference.
    std::vector<T> values() && { return impl_->data; }

    T& at(std::size_t i) { return impl_->data[i]; }
    T at(std::size_t i) const { return impl_->data[i]; }
    T& at(std::size_t i, std::size_t j) { return impl_->data[i * impl_->shape[1] + j]; }
    T at(std::size_t i, std::size_t j) const { return impl_->data[i * impl_->shape[1] + j]; }

    // Value of a scalar (shape [1]) tensor.
    T item() const {
        if (numel() != 1) {
            throw UsageError("item: tensor " + detail::shape_str(shape()) + " is not scalar");
        }
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<T>& grad() const { return impl_->grad; }
    std::vector<T>& grad_mut() {
        impl_->ensure_grad();
        return impl_->grad;
    }

    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
    }

    // Detaches from any recorded graph; keeps storage.
    void clear_graph() {
        impl_->parents.clear();
        impl_->backward_fn = nullptr;
    }

    std::shared_ptr<Impl> impl() const { return impl_; }

private:
    std::shared_ptr<Impl> impl_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(std::vector<std::size_t> shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(const TensorImpl<T>&)> backward_fn) {
    Tensor<T> out(std::move(shape), std::move(data));
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        out.set_requires_grad(true);
        auto impl = out.impl();
        impl->parents.reserve(inputs.size());
        for (const auto& in : inputs) impl->parents.push_back(in.impl());
        impl->backward_fn = std::move(backward_fn);
    }
    return out;
}

template <typename T>
void accum_into(TensorImpl<T>& target, const std::vector<T>& delta) {
    if (!target.requires_grad) return;
    target.ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) target.grad[i] += delta[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                         detail::shape_str(b.shape()));
    }
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    auto ai = a.impl();
    auto bi = b.impl();
    return detail::make_result<T>(
        a.shape(), std::move(out), {a, b}, [ai, bi](const detail::TensorImpl<T>& o) {
            if (ai->requires_grad) detail::accum_into(*ai, o.grad);
            if (bi->requires_grad) detail::accum_into(*bi, o.grad);
        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("sub: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                         detail::shape_str(b.shape()));
    }
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    auto ai = a.impl();
    auto bi = b.impl();
    return detail::make_result<T>(
        a.shape(), std::move(out), {a, b}, [ai, bi](const detail::TensorImpl<T>& o) {
            if (ai->requires_grad) detail::accum_into(*ai, o.grad);
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] -= o.grad[i];
            }
        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                         detail::shape_str(b.shape()));
    }
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    auto ai = a.impl();
    auto bi = b.impl();
    return detail::make_result<T>(
        a.shape(), std::move(out), {a, b}, [ai, bi](const detail::TensorImpl<T>& o) {
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i)
                    ai->grad[i] += o.grad[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i)
                    bi->grad[i] += o.grad[i] * ai->data[i];
            }
        });
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T c) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
    auto ai = a.impl();
    return detail::make_result<T>(a.shape(), std::move(out), {a},
                                  [ai, c](const detail::TensorImpl<T>& o) {
                                      ai->ensure_grad();
                                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                                          ai->grad[i] += o.grad[i] * c;
                                  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > T(0) ? x.at(i) : T(0);
    auto xi = x.impl();
    return detail::make_result<T>(
        x.shape(), std::move(out), {x}, [xi](const detail::TensorImpl<T>& o) {
            xi->ensure_grad();
            const T scale = debug::corrupt_relu_backward.load() ? T(1.05) : T(1);
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                if (xi->data[i] > T(0)) xi->grad[i] += o.grad[i] * scale;
            }
        });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = static_cast<double>(x.at(i));
        out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
    }
    auto xi = x.impl();
    return detail::make_result<T>(
        x.shape(), std::move(out), {x}, [xi](const detail::TensorImpl<T>& o) {
            xi->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const double v = static_cast<double>(xi->data[i]);
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                xi->grad[i] += o.grad[i] * static_cast<T>(cdf + v * pdf);
            }
        });
}

// max(x, lo) elementwise; gradient passes only where x > lo.
template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T lo) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > lo ? x.at(i) : lo;
    auto xi = x.impl();
    return detail::make_result<T>(x.shape(), std::move(out), {x},
                                  [xi, lo](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                          if (xi->data[i] > lo) xi->grad[i] += o.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> log_elem(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(x.at(i) > T(0))) {
            throw NumericError("log: non-positive input " + std::to_string(x.at(i)));
        }
        out[i] = std::log(x.at(i));
    }
    auto xi = x.impl();
    return detail::make_result<T>(x.shape(), std::move(out), {x},
                                  [xi](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                                          xi->grad[i] += o.grad[i] / xi->data[i];
                                  });
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + detail::shape_str(a.shape()) + " vs " +
                         detail::shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(m * n, T(0));
    const T* pa = a.values().data();
    const T* pb = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T av = pa[i * k + p];
            const T* brow = pb + p * n;
            T* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    auto ai = a.impl();
    auto bi = b.impl();
    return detail::make_result<T>(
        {m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](const detail::TensorImpl<T>& o) {
            if (ai->requires_grad) {
                // dA = dZ * B^T
                ai->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        T acc = T(0);
                        const T* orow = o.grad.data() + i * n;
                        const T* brow = bi->data.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += orow[j] * brow[j];
                        ai->grad[i * k + p] += acc;
                    }
                }
            }
            if (bi->requires_grad) {
                // dB = A^T * dZ
                bi->ensure_grad();
                for (std::size_t p = 0; p < k; ++p) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const T av = ai->data[i * k + p];
                        const T* orow = o.grad.data() + i * n;
                        T* brow = bi->grad.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) brow[j] += av * orow[j];
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2) {
        throw ShapeError("transpose: expected rank-2, got " + detail::shape_str(x.shape()));
    }
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.at(i, j);
    auto xi = x.impl();
    return detail::make_result<T>({n, m}, std::move(out), {x},
                                  [xi, m, n](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < m; ++i)
                                          for (std::size_t j = 0; j < n; ++j)
                                              xi->grad[i * n + j] += o.grad[j * m + i];
                                  });
}

// X[n,d] + b[d] broadcast over rows.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0)) {
        throw ShapeError("add_row_bias: incompatible shapes " + detail::shape_str(x.shape()) +
                         " vs " + detail::shape_str(b.shape()));
    }
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<T> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.at(i, j) + b.at(j);
    auto xi = x.impl();
    auto bi = b.impl();
    return detail::make_result<T>(
        x.shape(), std::move(out), {x, b}, [xi, bi, n, d](const detail::TensorImpl<T>& o) {
            if (xi->requires_grad) detail::accum_into(*xi, o.grad);
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) bi->grad[j] += o.grad[i * d + j];
            }
        });
}

// ---------------------------------------------------------------------------
// reductions and reshuffles
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T acc = T(0);
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
    auto xi = x.impl();
    return detail::make_result<T>({1}, {acc}, {x}, [xi](const detail::TensorImpl<T>& o) {
        xi->ensure_grad();
        for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += o.grad[0];
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    const T inv = T(1) / static_cast<T>(x.numel());
    return scalar_mul(sum_all(x), inv);
}

// Stacks scalar tensors into a vector of length k.
template <typename T>
Tensor<T> stack_scalars(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw UsageError("stack_scalars: empty input");
    std::vector<T> out(xs.size());
    std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
    impls.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = xs[i].item();
        impls.push_back(xs[i].impl());
    }
    return detail::make_result<T>({xs.size()}, std::move(out), xs,
                                  [impls](const detail::TensorImpl<T>& o) {
                                      for (std::size_t i = 0; i < impls.size(); ++i) {
                                          if (!impls[i]->requires_grad) continue;
                                          impls[i]->ensure_grad();
                                          impls[i]->grad[0] += o.grad[i];
                                      }
                                  });
}

// Element i of a rank-1 tensor as a scalar tensor.
template <typename T>
Tensor<T> pick(const Tensor<T>& x, std::size_t index) {
    if (x.rank() != 1 || index >= x.dim(0)) {
        throw UsageError("pick: index " + std::to_string(index) + " out of range for " +
                         detail::shape_str(x.shape()));
    }
    auto xi = x.impl();
    return detail::make_result<T>({1}, {x.at(index)}, {x},
                                  [xi, index](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      xi->grad[index] += o.grad[0];
                                  });
}

// Rows [r0, r0+h) of a rank-2 tensor.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t r0, std::size_t h) {
    if (x.rank() != 2 || r0 + h > x.dim(0)) {
        throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r0 + h) +
                         ") out of range for " + detail::shape_str(x.shape()));
    }
    const std::size_t d = x.dim(1);
    std::vector<T> out(h * d);
    std::copy(x.values().begin() + r0 * d, x.values().begin() + (r0 + h) * d, out.begin());
    auto xi = x.impl();
    return detail::make_result<T>({h, d}, std::move(out), {x},
                                  [xi, r0, h, d](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < h * d; ++i)
                                          xi->grad[r0 * d + i] += o.grad[i];
                                  });
}

// y = x W + b for a rank-1 x[k], W[k,m], b[m].
template <typename T>
Tensor<T> linear_vec(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 1 || w.rank() != 2 || x.dim(0) != w.dim(0) || b.rank() != 1 ||
        b.dim(0) != w.dim(1)) {
        throw UsageError("linear_vec: incompatible shapes " + detail::shape_str(x.shape()) +
                         ", " + detail::shape_str(w.shape()) + ", " +
                         detail::shape_str(b.shape()));
    }
    const std::size_t k = x.dim(0), m = w.dim(1);
    std::vector<T> out(b.values());
    for (std::size_t i = 0; i < k; ++i) {
        const T xv = x.at(i);
        const T* wrow = w.values().data() + i * m;
        for (std::size_t j = 0; j < m; ++j) out[j] += xv * wrow[j];
    }
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = b.impl();
    return detail::make_result<T>(
        {m}, std::move(out), {x, w, b}, [xi, wi, bi, k, m](const detail::TensorImpl<T>& o) {
            if (xi->requires_grad) {
                xi->ensure_grad();
                for (std::size_t i = 0; i < k; ++i) {
                    const T* wrow = wi->data.data() + i * m;
                    T acc = T(0);
                    for (std::size_t j = 0; j < m; ++j) acc += wrow[j] * o.grad[j];
                    xi->grad[i] += acc;
                }
            }
            if (wi->requires_grad) {
                wi->ensure_grad();
                for (std::size_t i = 0; i < k; ++i) {
                    const T xv = xi->data[i];
                    T* wrow = wi->grad.data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) wrow[j] += xv * o.grad[j];
                }
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t j = 0; j < m; ++j) bi->grad[j] += o.grad[j];
            }
        });
}

// Columns [c0, c0+w) of a rank-2 tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t w) {
    if (x.rank() != 2 || c0 + w > x.dim(1)) {
        throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c0 + w) +
                         ") out of range for " + detail::shape_str(x.shape()));
    }
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<T> out(n * w);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.at(i, c0 + j);
    auto xi = x.impl();
    return detail::make_result<T>({n, w}, std::move(out), {x},
                                  [xi, c0, w, n, d](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < n; ++i)
                                          for (std::size_t j = 0; j < w; ++j)
                                              xi->grad[i * d + c0 + j] += o.grad[i * w + j];
                                  });
}

// [n,d1],[n,d2],... -> [n, d1+d2+...]
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw UsageError("concat_cols: empty input");
    const std::size_t n = xs[0].dim(0);
    std::size_t total = 0;
    for (const auto& x : xs) {
        if (x.rank() != 2 || x.dim(0) != n) {
            throw ShapeError("concat_cols: row mismatch at " + detail::shape_str(x.shape()));
        }
        total += x.dim(1);
    }
    std::vector<T> out(n * total);
    std::size_t off = 0;
    for (const auto& x : xs) {
        const std::size_t w = x.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * total + off + j] = x.at(i, j);
        off += w;
    }
    std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
    std::vector<std::size_t> widths;
    for (const auto& x : xs) {
        impls.push_back(x.impl());
        widths.push_back(x.dim(1));
    }
    return detail::make_result<T>(
        {n, total}, std::move(out), xs,
        [impls, widths, n, total](const detail::TensorImpl<T>& o) {
            std::size_t off = 0;
            for (std::size_t s = 0; s < impls.size(); ++s) {
                const std::size_t w = widths[s];
                if (impls[s]->requires_grad) {
                    impls[s]->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                            impls[s]->grad[i * w + j] += o.grad[i * total + off + j];
                }
                off += w;
            }
        });
}

// [k1],[k2],... -> [k1+k2+...]
template <typename T>
Tensor<T> concat_vecs(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw UsageError("concat_vecs: empty input");
    std::size_t total = 0;
    for (const auto& x : xs) {
        if (x.rank() != 1) {
            throw ShapeError("concat_vecs: expected rank-1, got " + detail::shape_str(x.shape()));
        }
        total += x.dim(0);
    }
    std::vector<T> out;
    out.reserve(total);
    for (const auto& x : xs) out.insert(out.end(), x.values().begin(), x.values().end());
    std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
    std::vector<std::size_t> lens;
    for (const auto& x : xs) {
        impls.push_back(x.impl());
        lens.push_back(x.dim(0));
    }
    return detail::make_result<T>(
        {total}, std::move(out), xs, [impls, lens](const detail::TensorImpl<T>& o) {
            std::size_t off = 0;
            for (std::size_t s = 0; s < impls.size(); ++s) {
                if (impls[s]->requires_grad) {
                    impls[s]->ensure_grad();
                    for (std::size_t j = 0; j < lens[s]; ++j)
                        impls[s]->grad[j] += o.grad[off + j];
                }
                off += lens[s];
            }
        });
}

// Gathers rows of `table` by id; gradient scatter-adds into the table.
template <typename T>
Tensor<T> embedding_rows(const Tensor<T>& table, const std::vector<int>& ids) {
    if (table.rank() != 2) {
        throw ShapeError("embedding_rows: table must be rank-2, got " +
                         detail::shape_str(table.shape()));
    }
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw DataError("embedding_rows: id " + std::to_string(id) +
                            " out of range for table with " + std::to_string(v) + " rows");
        }
    }
    std::vector<T> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out[i * d + j] = table.at(static_cast<std::size_t>(ids[i]), j);
    auto ti = table.impl();
    return detail::make_result<T>(
        {ids.size(), d}, std::move(out), {table}, [ti, ids, d](const detail::TensorImpl<T>& o) {
            ti->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    ti->grad[static_cast<std::size_t>(ids[i]) * d + j] += o.grad[i * d + j];
        });
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

// Softmax over the last axis (rank 1 or 2), stabilized by max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    if (x.rank() < 1 || x.rank() > 2 || x.numel() == 0) {
        throw ShapeError("softmax_rows: expected non-empty rank-1/2, got " +
                         detail::shape_str(x.shape()));
    }
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (!std::isfinite(static_cast<double>(x.at(i)))) {
            throw NumericError("softmax_rows: non-finite input");
        }
    }
    const std::size_t n = x.rank() == 2 ? x.dim(0) : 1;
    const std::size_t d = x.rank() == 2 ? x.dim(1) : x.dim(0);
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x.values().data() + i * d;
        T* orow = out.data() + i * d;
        T mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        for (std::size_t j = 0; j < d; ++j) orow[j] /= denom;
    }
    auto xi = x.impl();
    return detail::make_result<T>(
        x.shape(), std::move(out), {x}, [xi, n, d](const detail::TensorImpl<T>& o) {
            xi->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const T* y = o.data.data() + i * d;
                const T* dy = o.grad.data() + i * d;
                T dot = T(0);
                for (std::size_t j = 0; j < d; ++j) dot += dy[j] * y[j];
                for (std::size_t j = 0; j < d; ++j)
                    xi->grad[i * d + j] += y[j] * (dy[j] - dot);
            }
        });
}

// Normalizes each last-axis slice to mean 0 / variance 1, then applies the
// gamma/beta affine. Population variance; eps inside the square root.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.rank() < 1 || x.rank() > 2) {
        throw ShapeError("layer_norm: expected rank-1/2, got " + detail::shape_str(x.shape()));
    }
    const std::size_t n = x.rank() == 2 ? x.dim(0) : 1;
    const std::size_t d = x.rank() == 2 ? x.dim(1) : x.dim(0);
    if (d < 2) {
        throw UsageError("layer_norm: last axis must have >= 2 elements, got " +
                         std::to_string(d));
    }
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "]");
    }
    std::vector<T> out(x.numel());
    std::vector<T> xhat(x.numel());
    std::vector<T> inv_sigma(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x.values().data() + i * d;
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + eps);
        inv_sigma[i] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (row[j] - mean) * inv;
            xhat[i * d + j] = h;
            out[i * d + j] = gamma.at(j) * h + beta.at(j);
        }
    }
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    return detail::make_result<T>(
        x.shape(), std::move(out), {x, gamma, beta},
        [xi, gi, bi, xhat, inv_sigma, n, d](const detail::TensorImpl<T>& o) {
            for (std::size_t i = 0; i < n; ++i) {
                const T* dz = o.grad.data() + i * d;
                const T* h = xhat.data() + i * d;
                if (gi->requires_grad) {
                    gi->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) gi->grad[j] += dz[j] * h[j];
                }
                if (bi->requires_grad) {
                    bi->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) bi->grad[j] += dz[j];
                }
                if (xi->requires_grad) {
                    xi->ensure_grad();
                    T sum_dh = T(0), sum_dh_h = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dh = dz[j] * gi->data[j];
                        sum_dh += dh;
                        sum_dh_h += dh * h[j];
                    }
                    const T inv_d = T(1) / static_cast<T>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dh = dz[j] * gi->data[j];
                        xi->grad[i * d + j] +=
                            inv_sigma[i] * (dh - sum_dh * inv_d - h[j] * sum_dh_h * inv_d);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// sequence-specific ops
// ---------------------------------------------------------------------------

// Mean of the rows of X where mask is true.
template <typename T>
Tensor<T> masked_mean_rows(const Tensor<T>& x, const std::vector<bool>& mask) {
    if (x.rank() != 2 || mask.size() != x.dim(0)) {
        throw ShapeError("masked_mean_rows: mask length " + std::to_string(mask.size()) +
                         " vs " + detail::shape_str(x.shape()));
    }
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::size_t count = 0;
    for (bool b : mask) count += b ? 1 : 0;
    if (count == 0) throw UsageError("masked_mean_rows: all positions masked");
    std::vector<T> out(d, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < d; ++j) out[j] += x.at(i, j);
    }
    const T inv = T(1) / static_cast<T>(count);
    for (std::size_t j = 0; j < d; ++j) out[j] *= inv;
    auto xi = x.impl();
    return detail::make_result<T>({d}, std::move(out), {x},
                                  [xi, mask, n, d, inv](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < n; ++i) {
                                          if (!mask[i]) continue;
                                          for (std::size_t j = 0; j < d; ++j)
                                              xi->grad[i * d + j] += o.grad[j] * inv;
                                      }
                                  });
}

// Maximum element of a rank-1 tensor; gradient routes to the first argmax.
template <typename T>
Tensor<T> max_vec(const Tensor<T>& x) {
    if (x.rank() != 1 || x.dim(0) == 0) {
        throw UsageError("max_vec: expected non-empty vector, got " +
                         detail::shape_str(x.shape()));
    }
    std::size_t arg = 0;
    for (std::size_t i = 1; i < x.dim(0); ++i) {
        if (x.at(i) > x.at(arg)) arg = i;
    }
    auto xi = x.impl();
    return detail::make_result<T>({1}, {x.at(arg)}, {x},
                                  [xi, arg](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      xi->grad[arg] += o.grad[0];
                                  });
}

// Sliding-window scores of one convolution filter over X[n,d]:
//   s_i = <w, X[i:i+g-1]> + b   for i in [0, n-g].
// The activation is applied by the caller.
template <typename T>
Tensor<T> conv_windows(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
        throw ShapeError("conv_windows: incompatible shapes " + detail::shape_str(x.shape()) +
                         " vs " + detail::shape_str(w.shape()));
    }
    if (b.numel() != 1) throw ShapeError("conv_windows: bias must be scalar");
    const std::size_t n = x.dim(0), d = x.dim(1), g = w.dim(0);
    if (n < g) {
        throw UsageError("conv_windows: sequence length " + std::to_string(n) +
                         " shorter than filter width " + std::to_string(g));
    }
    const std::size_t m = n - g + 1;
    std::vector<T> out(m, b.at(0));
    for (std::size_t i = 0; i < m; ++i) {
        T acc = T(0);
        for (std::size_t r = 0; r < g; ++r) {
            const T* xrow = x.values().data() + (i + r) * d;
            const T* wrow = w.values().data() + r * d;
            for (std::size_t c = 0; c < d; ++c) acc += xrow[c] * wrow[c];
        }
        out[i] += acc;
    }
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = b.impl();
    return detail::make_result<T>(
        {m}, std::move(out), {x, w, b}, [xi, wi, bi, m, g, d](const detail::TensorImpl<T>& o) {
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) bi->grad[0] += o.grad[i];
            }
            if (wi->requires_grad) {
                wi->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    const T ds = o.grad[i];
                    for (std::size_t r = 0; r < g; ++r) {
                        const T* xrow = xi->data.data() + (i + r) * d;
                        T* wrow = wi->grad.data() + r * d;
                        for (std::size_t c = 0; c < d; ++c) wrow[c] += ds * xrow[c];
                    }
                }
            }
            if (xi->requires_grad) {
                xi->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    const T ds = o.grad[i];
                    for (std::size_t r = 0; r < g; ++r) {
                        T* xrow = xi->grad.data() + (i + r) * d;
                        const T* wrow = wi->data.data() + r * d;
                        for (std::size_t c = 0; c < d; ++c) xrow[c] += ds * wrow[c];
                    }
                }
            }
        });
}

// Inverted dropout; identity when train is false.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0) {
        throw UsageError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) return x;
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> mask(x.numel());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = rng.uniform() < rate ? T(0) : scale;
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * mask[i];
    auto xi = x.impl();
    return detail::make_result<T>(x.shape(), std::move(out), {x},
                                  [xi, mask](const detail::TensorImpl<T>& o) {
                                      xi->ensure_grad();
                                      for (std::size_t i = 0; i < o.grad.size(); ++i)
                                          xi->grad[i] += o.grad[i] * mask[i];
                                  });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
// every reachable tensor with requires_grad; callers zero grads between steps.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
        throw UsageError("backward: loss must be scalar, got " +
                         detail::shape_str(loss.shape()));
    }
    using Impl = detail::TensorImpl<T>;
    // Iterative post-order DFS over parents.
    std::vector<Impl*> order;
    std::unordered_set<Impl*> visited;
    std::vector<std::pair<Impl*, std::size_t>> stack;
    stack.emplace_back(loss.impl().get(), 0);
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Impl* p = node->parents[next].get();
            ++next;
            if (!visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Impl* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

}  // namespace qpi
