#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "boxdiff/tensor.hpp"

namespace boxdiff {

using Rng = std::mt19937_64;

double draw_normal(Rng& rng);
double draw_uniform(Rng& rng);  // in [0, 1)

/// Named parameter with paired gradient and AdamW moment storage.
struct Param {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
};

/// Flat collection of named parameter tensors. Iteration order is the map
/// order, which keeps optimizer updates and serialization deterministic.
struct ParamStore {
    std::map<std::string, Param> params;
    std::int64_t step = 0;

    Param& add(const std::string& name, Tensor init);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool has(const std::string& name) const;
    void zero_grads();
};

Tensor xavier_init(std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

/// Extension point for differentiable ops owned by other modules.
struct CustomOp {
    virtual ~CustomOp() = default;
    virtual void backward(const Tensor& out_grad,
                          const std::vector<const Tensor*>& inputs,
                          const std::vector<Tensor*>& input_grads) const = 0;
};

/// Reverse-mode tape over Tensor-valued primitives. Build a graph with the
/// op methods (each returns a node id), then call backward once; gradients
/// of Param leaves land in their ParamStore entries.
class Tape {
public:
    int input(Tensor value);
    int param(ParamStore& store, const std::string& name);

    int matmul(int a, int b);
    int add(int a, int b);       // same shape
    int add_bias(int x, int b);  // x: [N,M], b: [M], broadcast over rows
    int mul(int a, int b);       // elementwise
    int relu(int x);
    int gelu(int x);
    int sigmoid(int x);
    int layernorm(int x, int gain, int bias);       // over last axis, eps 1e-5
    int concat_cols(const std::vector<int>& parts);  // along axis 1
    int sum(int x);  // -> scalar
    /// Per-column clamp; backward passes gradient where lo <= x <= hi.
    int clamp_cols(int x, std::vector<double> lo, std::vector<double> hi);
    int custom(std::shared_ptr<const CustomOp> op, std::vector<int> inputs, Tensor value);

    const Tensor& value(int node) const;
    std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }

    /// Seed each listed node with a gradient and propagate to all leaves.
    void backward(const std::vector<std::pair<int, Tensor>>& seeds);
    /// Scalar-loss convenience: seeds the node with 1.0. Rejects non-scalars.
    void backward(int loss_node);

    /// Gradient accumulated at a node during the last backward pass (empty
    /// tensor if the node was never reached). Mainly for tests.
    const Tensor& grad(int node) const;

private:
    enum class Op {
        Input, ParamRef, MatMul, Add, AddBias, Mul, Relu, Gelu, Sigmoid,
        LayerNorm, ConcatCols, Sum, ClampCols, Custom,
    };

    struct Node {
        Op op;
        std::vector<int> inputs;
        Tensor value;
        Tensor grad;
        Param* bound = nullptr;
        Tensor saved_a;  // op-specific (layernorm xhat, ...)
        Tensor saved_b;  // op-specific (layernorm rstd, ...)
        std::vector<double> lo, hi;
        std::shared_ptr<const CustomOp> custom_op;
    };

    int push(Node n);
    void accumulate(int node, const Tensor& g);

    std::vector<Node> nodes_;
    std::map<const Param*, int> param_nodes_;
    Tensor empty_;
};

/// Sinusoidal embedding of an integer timestep; dim must be even. The first
/// dim/2 entries are sines, the rest cosines, frequencies geometric in
/// [1, 1/10000].
Tensor timestep_embedding(int t, int dim, int T);

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

/// Decoupled-weight-decay Adam update with bias-corrected moments; zeroes
/// all gradients afterwards and advances the store's step count.
void adamw_step(ParamStore& store, const AdamWConfig& config);

/// Scale all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_grad_norm(ParamStore& store, double max_norm);

}  // namespace boxdiff
