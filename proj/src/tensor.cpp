#include "cstn/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace cstn {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

double wrap_phase(double x) {
    double r = std::remainder(x, 2.0 * kPi);  // [-pi, pi]
    if (r <= -kPi) r += 2.0 * kPi;
    return r;
}

Tensor::Tensor(Shape shape, float fill) {
    for (int64_t d : shape)
        if (d <= 0) throw DataError("tensor extent must be positive, got shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<size_t>(numel_of(shape)), fill);
    impl->shape = std::move(shape);
    impl_ = std::move(impl);
}

Tensor::Tensor(Shape shape, std::vector<float> values) {
    if (numel_of(shape) != static_cast<int64_t>(values.size()))
        throw DataError("tensor data length " + std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl_ = std::move(impl);
}

float Tensor::value() const {
    if (numel() != 1) throw DataError("value() on non-scalar tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

static int64_t flat_index(const Shape& shape, std::initializer_list<int64_t> idx) {
    if (idx.size() != shape.size())
        throw DataError("index rank mismatch for shape " + shape_str(shape));
    int64_t flat = 0;
    size_t i = 0;
    for (int64_t v : idx) {
        if (v < 0 || v >= shape[i]) throw DataError("index out of range for shape " + shape_str(shape));
        flat = flat * shape[i] + v;
        ++i;
    }
    return flat;
}

float Tensor::at(std::initializer_list<int64_t> idx) const {
    return impl_->data[static_cast<size_t>(flat_index(impl_->shape, idx))];
}

float& Tensor::at(std::initializer_list<int64_t> idx) {
    return impl_->data[static_cast<size_t>(flat_index(impl_->shape, idx))];
}

Tensor Tensor::clone() const {
    if (!impl_) return Tensor();
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    impl->requires_grad = impl_->requires_grad;
    return Tensor(std::move(impl));
}

bool Tensor::all_finite() const {
    for (float v : impl_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

void Tape::watch(Tensor& t) {
    if (!t.defined()) throw DataError("watch() on undefined tensor");
    t.set_requires_grad(true);
    for (const auto& l : leaves_)
        if (l == t.impl()) return;
    leaves_.push_back(t.impl());
}

void Tape::record(const char* op, std::vector<ImplPtr> inputs, ImplPtr output,
                  std::function<void()> fn) {
    records_.push_back(Record{op, std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw Error("backward() called twice on the same tape; clear() and re-run forward");
    if (!loss.defined() || loss.numel() != 1)
        throw DataError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    consumed_ = true;
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] = 1.0f;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (!it->output->grad.empty() && it->backward) it->backward();
    }
    for (auto& leaf : leaves_) leaf->ensure_grad();
}

void Tape::clear() {
    records_.clear();
    consumed_ = false;
}

namespace detail {

bool maybe_record(const char* op, std::vector<ImplPtr> inputs, const ImplPtr& output,
                  std::function<void()> fn) {
    Tape* tape = Tape::active();
    if (!tape) return false;
    bool any = false;
    for (const auto& in : inputs)
        if (in->requires_grad) {
            any = true;
            break;
        }
    if (!any) return false;
    output->requires_grad = true;
    tape->record(op, std::move(inputs), output, std::move(fn));
    return true;
}

}  // namespace detail

}  // namespace cstn
