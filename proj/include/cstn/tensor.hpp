#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "cstn/common.hpp"

namespace cstn {

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    bool requires_grad = false;
    std::vector<float> grad;  // empty until backward touches it

    int64_t numel() const { return numel_of(shape); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
    }
};

using ImplPtr = std::shared_ptr<TensorImpl>;

/// Dense row-major f32 tensor. Copies share the underlying buffer; use
/// clone() for an independent one. A scalar has empty shape and one element.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    static Tensor scalar(float v) { return Tensor(Shape{}, std::vector<float>{v}); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return impl_ ? impl_->numel() : 0; }

    std::span<const float> data() const { return impl_->data; }
    std::span<float> data() { return impl_->data; }
    float value() const;  // scalar access
    float at(std::initializer_list<int64_t> idx) const;
    float& at(std::initializer_list<int64_t> idx);

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::span<const float> grad() const { return impl_->grad; }
    std::span<float> grad() { return impl_->grad; }
    void clear_grad() { impl_->grad.clear(); }

    Tensor clone() const;
    bool all_finite() const;

    const ImplPtr& impl() const { return impl_; }
    explicit Tensor(ImplPtr impl) : impl_(std::move(impl)) {}

private:
    ImplPtr impl_;
};

/// Wengert list of recorded operations in execution order. One tape per
/// logical execution context; activation is thread-local via TapeScope.
class Tape {
public:
    struct Record {
        const char* op;
        std::vector<ImplPtr> inputs;
        ImplPtr output;
        std::function<void()> backward;
    };

    // Registers a gradient leaf. Leaves always receive a grad buffer on
    // backward, zero if disconnected from the loss.
    void watch(Tensor& t);

    // Reverse sweep from a scalar loss. Errors on a non-scalar loss and on a
    // second call without clear().
    void backward(const Tensor& loss);

    void clear();
    bool consumed() const { return consumed_; }
    size_t size() const { return records_.size(); }

    void record(const char* op, std::vector<ImplPtr> inputs, ImplPtr output,
                std::function<void()> fn);

    static Tape* active();

private:
    friend class TapeScope;
    std::vector<Record> records_;
    std::vector<ImplPtr> leaves_;
    bool consumed_ = false;
};

/// RAII activation of a tape on the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& t);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

namespace detail {

// Records on the active tape when gradients are wanted; returns whether the
// output participates in differentiation.
bool maybe_record(const char* op, std::vector<ImplPtr> inputs, const ImplPtr& output,
                  std::function<void()> fn);

inline void accumulate(const ImplPtr& t, const float* src, int64_t n) {
    t->ensure_grad();
    float* g = t->grad.data();
    for (int64_t i = 0; i < n; ++i) g[i] += src[i];
}

}  // namespace detail

}  // namespace cstn
