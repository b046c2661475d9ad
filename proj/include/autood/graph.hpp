#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "autood/tensor.hpp"

namespace autood {

// Named trainable (or stateful) tensor. Parameters are shared between
// graphs via shared_ptr, which is what makes weight sharing across child
// models work: two graphs built from the same store see the same object.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool requires_grad = true;

    void ensure_grad() {
        if (grad.shape != value.shape) {
            grad = Tensor(value.shape);
        }
    }
    void zero_grad() {
        ensure_grad();
        grad.zero();
    }
};
using ParamPtr = std::shared_ptr<Param>;

inline ParamPtr make_param(std::string name, Tensor value, bool requires_grad = true) {
    auto p = std::make_shared<Param>();
    p->name = std::move(name);
    p->value = std::move(value);
    p->requires_grad = requires_grad;
    return p;
}

using NodeId = int;

enum class Op {
    kInput,
    kParam,
    kConst,
    // elementwise unary
    kIdentity,
    kRelu,
    kLeakyRelu,
    kRelu6,
    kElu,
    kSigmoid,
    kTanh,
    kSoftplus,
    kExp,
    kLog,
    kSqrt,
    kSquare,
    kAbs,
    kNeg,
    kScale,
    kAddConst,
    kClamp,
    // elementwise binary, identical shapes
    kAdd,
    kSub,
    kMul,
    kDiv,
    // broadcasting forms
    kAddBias,     // x[B,K] + v[K]
    kSubVec,      // x[B,K] - v[K]
    kSubPerRow,   // x[B,K] - r[B]
    kDivPerRow,   // x[B,K] / r[B]
    kSubScalar,   // x - s[1], broadcast
    // linear algebra
    kMatMul,      // x[B,M] * w[M,N]
    // image ops (NCHW)
    kConv2d,      // same padding, stride 1
    kConvT2d,     // transposed conv, same padding, stride 1
    kMaxPool,     // stride 2 when k>1, identity when k==1
    kAvgPool,
    kBoxFilter,   // stride-1 mean filter, border-count normalized
    kNNUnpool,    // nearest-neighbor upsample to explicit target size
    kBatchNorm,
    kInstanceNorm,
    // reductions / shape
    kSumAll,          // -> [1]
    kMeanAll,         // -> [1]
    kPerSampleSum,    // [B,...] -> [B]
    kPerSampleMean,   // [B,...] -> [B]
    kRowMax,          // [B,K] -> [B]
    kChannelSum,      // [B,C,H,W] -> [B,1,H,W]
    kChannelMean,     // [B,C,H,W] -> [B,1,H,W]
    kReshape,
    kSliceCols,       // columns [i0, i1) of [B,K]
    kGatherRows,      // rows of table [V,E] by constant indices
    kSoftmaxRows,
    kLogSoftmaxRows,
    kPickPerRow,      // one column per row of [B,K] -> [B]
    // detector-specific composites (gradient w.r.t. z only; the state
    // tensors are estimated outside the graph and treated as constants)
    kGaussianEnergy,  // z[B,D] with state {phi[K], mu[K,D], var[K,D]} -> [B]
    kClusterKL,       // z[B,D] with state {centroids[J,D]} -> [B]
};

const char* op_name(Op op);

struct Node {
    Op op;
    std::vector<NodeId> in;
    std::string name;          // leaf name or empty

    // attributes (meaning depends on op)
    int i0 = 0;
    int i1 = 0;
    double a0 = 0.0;
    double a1 = 0.0;
    std::vector<int> dims;     // reshape target / pick indices / gather rows

    ParamPtr param;                  // kParam
    std::vector<ParamPtr> state;     // running stats, hypothesis state

    Tensor value;
    Tensor grad;
    std::vector<Tensor> aux;   // saved intermediates for backward
    bool computed = false;
    bool bound = false;        // kInput only
};

// Retained computation DAG with reverse-mode gradients.
//
// Construction appends nodes in topological order. Evaluation is lazy:
// eval(id) computes every pending node up to id, which lets callers
// interleave construction with evaluation (the controller samples an
// action from a computed distribution before building the next step).
// forward() re-executes the whole recorded program against fresh inputs,
// so one graph can serve many training batches.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    // --- leaves ---
    NodeId input(const std::string& name, std::vector<int> shape);
    NodeId parameter(const ParamPtr& p);
    NodeId constant(Tensor t, std::string name = "");

    // --- elementwise ---
    NodeId identity(NodeId x) { return unary(Op::kIdentity, x); }
    NodeId relu(NodeId x) { return unary(Op::kRelu, x); }
    NodeId leaky_relu(NodeId x, double slope = 0.01);
    NodeId relu6(NodeId x) { return unary(Op::kRelu6, x); }
    NodeId elu(NodeId x, double alpha = 1.0);
    NodeId sigmoid(NodeId x) { return unary(Op::kSigmoid, x); }
    NodeId tanh(NodeId x) { return unary(Op::kTanh, x); }
    NodeId softplus(NodeId x) { return unary(Op::kSoftplus, x); }
    NodeId exp(NodeId x) { return unary(Op::kExp, x); }
    NodeId log(NodeId x) { return unary(Op::kLog, x); }
    NodeId sqrt(NodeId x) { return unary(Op::kSqrt, x); }
    NodeId square(NodeId x) { return unary(Op::kSquare, x); }
    NodeId abs(NodeId x) { return unary(Op::kAbs, x); }
    NodeId neg(NodeId x) { return unary(Op::kNeg, x); }
    NodeId scale(NodeId x, double c);
    NodeId add_const(NodeId x, double c);
    NodeId clamp(NodeId x, double lo, double hi);

    NodeId add(NodeId a, NodeId b) { return binary(Op::kAdd, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::kSub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::kMul, a, b); }
    NodeId div(NodeId a, NodeId b) { return binary(Op::kDiv, a, b); }

    NodeId add_bias(NodeId x, NodeId v);
    NodeId sub_vec(NodeId x, NodeId v);
    NodeId sub_per_row(NodeId x, NodeId r);
    NodeId div_per_row(NodeId x, NodeId r);
    NodeId sub_scalar(NodeId x, NodeId s);

    // --- linear algebra / layers ---
    NodeId matmul(NodeId x, NodeId w);
    NodeId dense(NodeId x, NodeId w, NodeId b) { return add_bias(matmul(x, w), b); }

    NodeId conv2d(NodeId x, NodeId w, NodeId b, int kernel);
    NodeId conv_t2d(NodeId x, NodeId w, NodeId b, int kernel);
    NodeId max_pool(NodeId x, int kernel);
    NodeId avg_pool(NodeId x, int kernel);
    NodeId box_filter(NodeId x, int kernel);
    NodeId nn_unpool(NodeId x, int target_h, int target_w);
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, ParamPtr running_mean,
                      ParamPtr running_var, double momentum = 0.99, double eps = 1e-5);
    NodeId instance_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);

    // --- reductions / shape ---
    NodeId sum_all(NodeId x) { return unary(Op::kSumAll, x); }
    NodeId mean_all(NodeId x) { return unary(Op::kMeanAll, x); }
    NodeId per_sample_sum(NodeId x) { return unary(Op::kPerSampleSum, x); }
    NodeId per_sample_mean(NodeId x) { return unary(Op::kPerSampleMean, x); }
    NodeId row_max(NodeId x) { return unary(Op::kRowMax, x); }
    NodeId channel_sum(NodeId x) { return unary(Op::kChannelSum, x); }
    NodeId channel_mean(NodeId x) { return unary(Op::kChannelMean, x); }
    NodeId reshape(NodeId x, std::vector<int> target);  // target[0] == -1 keeps dim 0
    NodeId slice_cols(NodeId x, int begin, int end);
    NodeId gather_rows(NodeId table, std::vector<int> rows);
    NodeId softmax_rows(NodeId x) { return unary(Op::kSoftmaxRows, x); }
    NodeId log_softmax_rows(NodeId x) { return unary(Op::kLogSoftmaxRows, x); }
    NodeId pick_per_row(NodeId x, std::vector<int> cols);

    // --- detector composites ---
    NodeId gaussian_energy(NodeId z, ParamPtr phi, ParamPtr mu, ParamPtr var);
    NodeId cluster_kl(NodeId z, ParamPtr centroids);

    // LSTM cell from primitives; gate order i,f,g,o. Returns {h, c}.
    std::pair<NodeId, NodeId> lstm_cell(NodeId x, NodeId h, NodeId c, NodeId wx, NodeId wh,
                                        NodeId b);

    // --- outputs ---
    void mark_output(const std::string& name, NodeId id);
    NodeId output_id(const std::string& name) const;

    // --- execution ---
    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    void bind(const std::string& name, Tensor v);
    const Tensor& eval(NodeId id);
    TensorMap forward(const TensorMap& inputs);
    void invalidate();  // force full recompute on next eval

    // Reverse sweep from a scalar loss node. Accumulates into Param::grad
    // for every requires_grad parameter and also returns the map by name.
    std::map<std::string, Tensor> backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }
    std::vector<ParamPtr> params() const;

private:
    NodeId unary(Op op, NodeId x);
    NodeId binary(Op op, NodeId a, NodeId b);
    NodeId push(Node n);
    void check_built(NodeId id) const;
    void infer_shape(Node& n) const;
    void compute(Node& n);
    [[noreturn]] void fail_shape(const Node& n, const std::string& why) const;

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> inputs_;
    std::map<std::string, NodeId> outputs_;
    int watermark_ = 0;  // nodes before this are computed
    bool training_ = true;
};

}  // namespace autood
