#pragma once

#include <functional>
#include <vector>

#include "afford/kernels.hpp"
#include "afford/tensor.hpp"

namespace afford {

enum class Pointwise { Relu, Sigmoid };

/// Reverse-mode tape. Each recorded op stores its output value and a closure
/// that routes the output gradient to its inputs. Nodes only reference
/// earlier nodes, so reverse creation order is a valid backward schedule.
///
/// One Graph covers one forward+backward; Parameters outlive graphs and
/// accumulate gradients across them until explicitly zeroed.
class Graph {
 public:
  struct Ref {
    int id = -1;
  };

  Ref constant(Tensor value);
  Ref param(Parameter& p);

  Ref conv2d(Ref input, Ref kernels, int stride, int padding);
  Ref add_channel_bias(Ref x, Ref bias);
  Ref pointwise(Ref x, Pointwise kind);
  Ref relu(Ref x) { return pointwise(x, Pointwise::Relu); }
  Ref sigmoid(Ref x) { return pointwise(x, Pointwise::Sigmoid); }
  Ref bilinear_upsample2x(Ref x);
  Ref upsample2x_window(Ref x, const UpsampleSpec& spec);
  Ref concat_channels(Ref a, Ref b);
  Ref crop(Ref x, int src_row0, int src_col0, const Window& dst, int plane_h, int plane_w);
  Ref gather_pixel(Ref x, int row, int col);
  Ref stack_scalars(const std::vector<Ref>& xs);
  Ref bce_loss(Ref probs, std::vector<double> labels, double clamp, double scale);

  // Small algebra used by losses and gradient tests.
  Ref sum(Ref x);
  Ref square(Ref x);
  Ref hadamard(Ref a, Ref b);
  Ref scale(Ref x, double s);
  Ref add(Ref a, Ref b);
  Ref dot(Ref x, Tensor weights);

  const Tensor& value(Ref r) const { return nodes_[static_cast<std::size_t>(r.id)].value; }
  /// Gradient of the last backward() with respect to node r (empty tensor if
  /// the node was not reached).
  const Tensor& grad(Ref r) const { return nodes_[static_cast<std::size_t>(r.id)].grad; }

  /// Accumulate d(loss)/d(parameter) into every reachable Parameter's grad.
  /// loss must be scalar (one element).
  void backward(Ref loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation during backward
    Parameter* parameter = nullptr;
    std::function<void(Graph&, const Tensor&)> backprop;  // nullptr for leaves
  };

  Ref push(Tensor value, std::function<void(Graph&, const Tensor&)> backprop);
  void accumulate(int id, Tensor&& g);
  const Tensor& node_value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  std::vector<Node> nodes_;
};

}  // namespace afford
