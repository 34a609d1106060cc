#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace takevla::ad {

/// Parameter tensor with persistent gradient accumulator of identical shape.
struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;

    static Tensor make(std::string name, std::vector<int> shape);
    std::size_t size() const { return value.size(); }
    void zero_grad();
    bool all_finite() const;
};

/// Reverse-mode tape over small dense vectors. Build a scalar loss with the
/// op methods, then call backward() once; gradients of registered parameters
/// are accumulated into their Tensor::grad buffers.
class Tape {
  public:
    using NodeId = int;

    /// Registers a parameter leaf; backward() adds into t.grad.
    NodeId param(Tensor& t);
    /// Constant leaf (no gradient).
    NodeId constant(std::vector<double> v);
    NodeId constant_scalar(double v);

    const std::vector<double>& value(NodeId id) const { return nodes_[id].value; }
    double scalar(NodeId id) const;

    // vector ops
    NodeId affine(NodeId weight, NodeId bias, NodeId x, int rows, int cols);  // W x + b
    NodeId tanh(NodeId x);
    NodeId concat(NodeId a, NodeId b);
    NodeId log_softmax(NodeId logits, double temperature);
    NodeId pick(NodeId x, int index);  // -> scalar
    /// Row `index` of an (rows x cols) embedding matrix.
    NodeId embed_row(NodeId table, int index, int rows, int cols);

    // scalar ops
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_const(NodeId a, double c);
    NodeId exp(NodeId a);
    NodeId sum(const std::vector<NodeId>& xs);
    NodeId mean(const std::vector<NodeId>& xs);

    // composite losses
    /// -log softmax(logits / T)[label]
    NodeId cross_entropy(NodeId logits, int label, double temperature = 1.0);
    /// sum_i -(s_i-mu_i)^2/(2 sigma^2) - log(sigma sqrt(2 pi)) over coords
    NodeId gaussian_logprob(NodeId mean, const std::vector<double>& sample, double sigma);
    /// smooth-L1 between prediction and target, summed per point pair (x,y)
    /// and averaged over point pairs
    NodeId smooth_l1(NodeId pred, const std::vector<double>& target, double beta);
    /// KL(softmax(cur/T) || softmax(ref/T)), ref treated as a constant
    NodeId kl_categorical(NodeId cur_logits, const std::vector<double>& ref_logits,
                          double temperature = 1.0);
    /// ||mu - ref||^2 / (2 sigma^2): Gaussian KL with shared fixed sigma
    NodeId gaussian_kl(NodeId mean, const std::vector<double>& ref_mean, double sigma);

    /// Seeds d(loss)/d(loss)=1 at `loss` (must be scalar) and propagates.
    /// A tape can only be run backward once; reuse throws.
    void backward(NodeId loss);

  private:
    struct Node {
        std::vector<double> value;
        std::vector<double> grad;
        std::function<void(Tape&, Node&)> backprop;  // null for leaves
        Tensor* param = nullptr;
    };

    NodeId push(std::vector<double> value, std::function<void(Tape&, Node&)> backprop);
    std::vector<double>& grad(NodeId id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

/// Central finite-difference gradient of `f` with respect to every entry of
/// `params`, used as the independent oracle in tests.
std::vector<std::vector<double>> finite_difference(const std::function<double()>& f,
                                                   std::vector<Tensor*> params, double eps = 1e-5);

}  // namespace takevla::ad
