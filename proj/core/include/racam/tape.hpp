#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "racam/fgbp.hpp"
#include "racam/ops.hpp"
#include "racam/tensor.hpp"

namespace racam {

enum class OpKind : std::uint8_t {
    Input,
    Param,
    Conv2d,
    LeakyRelu,
    MaxPool2d,
    GlobalAvgPool,
    Linear,
    BilinearResize,
    SoftmaxXent,
    PixelXent,
};

struct TapeNode {
    OpKind kind = OpKind::Input;
    int in0 = -1, in1 = -1, in2 = -1;  // data / weight / bias node ids
    Tensor value;                      // saved output
    int stride = 1, pad = 0, k = 0;    // conv / pool params
    float slope = 0.0f;                // leaky-relu
    int out_h = 0, out_w = 0;          // bilinear resize
    int label = -1;                    // softmax xent
    Tensor target;                     // pixel xent target
    std::vector<std::int32_t> argmax;  // maxpool routing
    int layer_id = -1;                 // model layer index, -1 for leaves
};

/// Recorded forward computation. Ops execute eagerly on add; every
/// node's inputs precede it, so the node list is topologically ordered.
class Tape {
  public:
    int add_input(Tensor value);
    int add_param(Tensor value);
    int add_conv2d(int x, int w, int b, int stride, int pad, int layer_id = -1);
    int add_leaky_relu(int x, float slope, int layer_id = -1);
    int add_maxpool2d(int x, int k, int stride, int layer_id = -1);
    int add_global_avg_pool(int x, int layer_id = -1);
    int add_linear(int x, int w, int b, int layer_id = -1);
    int add_bilinear_resize(int x, int out_h, int out_w, int layer_id = -1);
    int add_softmax_xent(int logits, int label);
    int add_pixel_xent(int logits, Tensor target);

    const TapeNode& node(int id) const { return nodes_[std::size_t(id)]; }
    int size() const { return int(nodes_.size()); }

    int output_id() const { return output_id_; }
    void set_output(int id) { output_id_ = id; }

    /// Re-executes every non-leaf node from the leaf values; the result
    /// must match the saved activations bitwise.
    std::vector<Tensor> replay_values() const;

  private:
    int push(TapeNode node);
    std::vector<TapeNode> nodes_;
    int output_id_ = -1;
};

/// Number of reverse sweeps executed so far in this process. Lets tests
/// verify that gradient-free methods stay gradient-free.
std::uint64_t backward_call_count();

/// Gradient of every node's output. The seed tensor is placed at
/// `seed_node`; activation nodes apply `mode`, everything else exact
/// calculus. Nodes with no path to the seed get an empty tensor.
std::vector<Tensor> backward_nodes(const Tape& tape, int seed_node, const Tensor& seed,
                                   const PropagationMode& mode);

/// Seeds d y^c = 1 at the tape output (a vector of pre-softmax scores)
/// and returns the gradient at every recorded activation layer, keyed by
/// layer id.
std::map<int, Tensor> backward(const Tape& tape, int class_index, const PropagationMode& mode);

/// Seeds 1 at a scalar loss output; standard rules.
std::vector<Tensor> backward_loss(const Tape& tape);

}  // namespace racam
