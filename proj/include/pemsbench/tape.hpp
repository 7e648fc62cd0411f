#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace pemsbench {

// Dense row-major double tensor. Small and value-semantic; all heavy tensor
// math funnels through the kernels module via the Tape ops below.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    // Product of all dims but the last; the 2-D view used by row-wise ops.
    std::int64_t rows() const;
    int last_dim() const { return shape.empty() ? 1 : shape.back(); }

    void fill(double v);
};

// Named trainable tensor with a persistent gradient buffer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape);
    }
    void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape. A fresh tape is built per forward pass; backward()
// walks the nodes once in reverse creation order (creation order is a
// topological order by construction) and accumulates gradients. Parameter
// leaves accumulate directly into Parameter::grad, so the caller controls
// zeroing between steps.
class Tape {
public:
    using Id = int;

    Id constant(Tensor v); // leaf; gradient is tracked but unused
    Id leaf(Parameter& p); // leaf tied to a parameter

    // C[m,n] = A[m,k] * B[k,n]
    Id matmul(Id a, Id b);
    // C[m,n] = A[m,k] * B[n,k]^T
    Id matmul_nt(Id a, Id b);
    // Batched: A[B,m,k] * B[B,n,k]^T -> [B,m,n]
    Id bmm_nt(Id a, Id b);
    // Batched: A[B,m,k] * B[B,k,n] -> [B,m,n]
    Id bmm_nn(Id a, Id b);

    Id add(Id a, Id b); // same shape
    // a[..., d] + bias[d]
    Id add_rowvec(Id a, Id bias);
    Id mul_scalar(Id a, double s);
    Id relu(Id a);
    Id gelu(Id a); // exact erf form
    // Row-stochastic softmax over the last dim, max-subtracted.
    Id softmax_lastdim(Id a);
    // Layer norm over the last dim with learned gain/bias vectors.
    Id layer_norm(Id a, Id gain, Id bias, double eps = 1e-5);

    // Inverted dropout with a caller-supplied keep mask (one entry per
    // element): out = a * mask / keep_prob.
    Id dropout(Id a, std::vector<std::uint8_t> keep_mask, double keep_prob);

    Id reshape(Id a, std::vector<int> shape);
    Id slice_lastdim(Id a, int start, int len);
    Id concat_lastdim(const std::vector<Id>& parts);
    // v[d] -> [rows, d]
    Id broadcast_rows(Id v, int rows);

    // Mean squared error over all elements; scalar node. No gradient flows
    // into `target`.
    Id mse_loss(Id pred, Id target);

    void backward(Id root); // root must be a scalar node

    const Tensor& value(Id id) const;
    const Tensor& grad(Id id) const;
    int size() const { return static_cast<int>(nodes_.size()); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        Tensor owned_value;
        Tensor owned_grad;
        Parameter* param = nullptr; // when set, value/grad live in the param
        std::function<void(Tape&, Id)> back;
    };

    Id push(Tensor value, std::function<void(Tape&, Id)> back);
    Tensor& grad_mut(Id id);

    std::vector<Node> nodes_;
};

} // namespace pemsbench
