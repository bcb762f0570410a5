#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace plab {

namespace detail {

// One record of the differentiation graph. Records form a DAG through
// `parents`; `backprop` scatters the record's accumulated gradient into its
// parents. A backward pass visits each reachable record exactly once in
// reverse topological order.
struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    int size() const { return rows * cols; }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

// Dense 2-d tensor of 64-bit floats, row-major. A scalar is 1x1 and a
// d-vector is 1xd. Copying a Tensor copies the handle, not the storage.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols, bool requires_grad = false);
    Tensor(int rows, int cols, std::vector<double> data, bool requires_grad = false);

    static Tensor scalar(double v);
    static Tensor row(std::vector<double> v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    int size() const { return node_->size(); }

    double at(int r, int c) const { return node_->data[static_cast<std::size_t>(r) * node_->cols + c]; }
    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& mutable_data() { return node_->data; }

    // Value of a 1x1 tensor.
    double value() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    // Accumulated gradient, or nullptr if none has been written.
    const std::vector<double>* grad() const;
    void zero_grad();

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// --- differentiable primitives ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int begin, int end);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor gelu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar
Tensor l2_normalize_rows(const Tensor& a);
Tensor transpose(const Tensor& a);

// --- compositions of the primitives above ---

Tensor slice_cols(const Tensor& a, int begin, int end);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Repeat a 1xd row vector n times (n x d), gradient summed back to the row.
Tensor broadcast_rows(const Tensor& rowvec, int n);

// Propagate d(loss)/d(leaf) to every requires_grad tensor reachable from
// `loss`. Leaves off the path keep a zero (or absent) gradient.
void backward(const Tensor& loss);

// param <- param - lr * grad for every param; clears gradients afterwards.
// A param without an accumulated gradient is an error.
void sgd_step(std::vector<Tensor>& params, double learning_rate);

// Compares analytic gradients of scalar_fn (which must rebuild its graph from
// the current param values on every call) against central finite differences.
// Returns max over coordinates of |analytic - fd| / max(1, |fd|).
double finite_difference_check(const std::function<Tensor()>& scalar_fn,
                               std::vector<Tensor> params, double step);

// Count of degenerate-input warnings (zero rows in l2_normalize_rows,
// clamped probabilities) issued so far.
long degenerate_warning_count();
void warn_degenerate(const std::string& what);

// FNV-1a over the raw bit patterns of the tensor values.
std::uint64_t checksum(const std::vector<Tensor>& tensors);

}  // namespace plab
