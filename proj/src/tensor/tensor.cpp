#include "nsnp/tensor.h"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "nsnp/error.h"

namespace nsnp {

namespace {

thread_local bool g_grad_enabled = true;

#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void TensorImpl::accumulate(std::size_t i, double g) { grad_buffer()[i] += g; }

std::vector<double>& TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    impl_->values.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= impl_->shape.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(impl_->shape));
    }
    return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->values.size(); }

std::span<const double> Tensor::values() const { return impl_->values; }

std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() needs one element, tensor is " + shape_str(shape()));
    return impl_->values[0];
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
    const Shape& s = impl_->shape;
    if (index.size() != s.size()) {
        throw ShapeError("index rank " + std::to_string(index.size()) + " != tensor rank " +
                         std::to_string(s.size()));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= s[axis]) throw ShapeError("index out of range on axis " + std::to_string(axis));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return flat;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return impl_->values[flat_index(index)]; }

double& Tensor::at(std::initializer_list<std::size_t> index) { return impl_->values[flat_index(index)]; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

std::vector<double> Tensor::grad() const {
    if (impl_->grad.empty()) return std::vector<double>(impl_->values.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

const std::shared_ptr<Node>& Tensor::grad_fn() const { return impl_->grad_fn; }

Tensor Tensor::clone() const {
    Tensor t(impl_->shape, impl_->values);
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->values); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void set_finite_checks(bool on) { g_finite_checks = on; }

bool finite_checks() { return g_finite_checks; }

Tensor make_op_result(std::string op, Shape shape, std::vector<double> values,
                      const std::vector<Tensor>& inputs,
                      std::function<void(const TensorImpl& out)> rule) {
    if (g_finite_checks && !all_finite(values)) {
        bool inputs_finite = true;
        for (const Tensor& in : inputs) inputs_finite = inputs_finite && all_finite(in.values());
        if (inputs_finite) throw NumericalError(op + " produced a non-finite value from finite input");
    }
    Tensor out(std::move(shape), std::move(values));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const Tensor& in : inputs) any = any || in.requires_grad();
    if (!any) return out;

    auto node = std::make_shared<Node>();
    node->op = std::move(op);
    for (const Tensor& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::move(rule);
    out.impl()->requires_grad = true;
    out.impl()->grad_fn = std::move(node);
    return out;
}

void backward(const Tensor& root) {
    if (!root.defined() || root.numel() != 1) {
        throw GraphError("backward needs a one-element root, got " +
                         (root.defined() ? shape_str(root.shape()) : std::string("undefined tensor")));
    }
    if (!root.requires_grad()) throw GraphError("backward root is detached from any graph");

    // Iterative post-order DFS yields a topological order (inputs first).
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root.impl().get(), 0);
    visited.insert(root.impl().get());
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        const Node* node = impl->grad_fn.get();
        if (node && next < node->inputs.size()) {
            TensorImpl* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(impl);
            stack.pop_back();
        }
    }

    for (TensorImpl* impl : order) {
        if (impl->grad_fn && impl->grad_fn->consumed) {
            throw GraphError("graph already consumed by a previous backward (op " + impl->grad_fn->op + ")");
        }
    }

    root.impl()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* impl = *it;
        Node* node = impl->grad_fn.get();
        if (!node) continue;
        impl->grad_buffer();
        node->backward(*impl);
        node->consumed = true;
    }
}

}  // namespace nsnp
