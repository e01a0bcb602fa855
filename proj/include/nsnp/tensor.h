#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nsnp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// Backward rule of one recorded operation. `out` exposes the forward result and
// the gradient flowing into it; the rule accumulates into the inputs' grads.
struct Node {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(const TensorImpl& out)> backward;
    bool consumed = false;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;

    void accumulate(std::size_t i, double g);
    std::vector<double>& grad_buffer();
};

// Dense row-major array with an optional slot in the differentiation graph.
// Copies share storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    bool defined() const { return impl_ != nullptr; }

    std::span<const double> values() const;
    std::span<double> mutable_values();
    double item() const;
    double operator[](std::size_t i) const { return values()[i]; }
    double at(std::initializer_list<std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index);

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);
    // Zero vector of the right size when nothing has been accumulated yet.
    std::vector<double> grad() const;
    void zero_grad();

    bool is_leaf() const;
    const std::shared_ptr<Node>& grad_fn() const;

    Tensor clone() const;
    // Same values, no graph history.
    Tensor detach() const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::size_t flat_index(std::initializer_list<std::size_t> index) const;
    std::shared_ptr<TensorImpl> impl_;
};

// Runs reverse-mode differentiation from a one-element root. Each recorded op
// fires exactly once; a second call on the same graph throws GraphError.
void backward(const Tensor& root);

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// When on, every op result is scanned for NaN/Inf if its inputs were finite.
// Defaults to on in debug builds.
void set_finite_checks(bool on);
bool finite_checks();

// Extension point used by the op library (and by tests that need a custom
// backward rule): wraps forward values into a tensor that records `rule`
// when any input requires grad.
Tensor make_op_result(std::string op, Shape shape, std::vector<double> values,
                      const std::vector<Tensor>& inputs,
                      std::function<void(const TensorImpl& out)> rule);

}  // namespace nsnp
