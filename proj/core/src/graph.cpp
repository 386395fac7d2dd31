#include "afford/graph.hpp"

#include <stdexcept>
#include <utility>

namespace afford {

Graph::Ref Graph::push(Tensor value, std::function<void(Graph&, const Tensor&)> backprop) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, std::move(backprop)});
  return Ref{static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(int id, Tensor&& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) {
    n.grad = std::move(g);
    return;
  }
  for (std::int64_t i = 0; i < n.grad.size(); ++i) n.grad[i] += g[i];
}

Graph::Ref Graph::constant(Tensor value) { return push(std::move(value), nullptr); }

Graph::Ref Graph::param(Parameter& p) {
  Ref r = push(p.value, nullptr);
  nodes_.back().parameter = &p;
  return r;
}

Graph::Ref Graph::conv2d(Ref input, Ref kernels, int stride, int padding) {
  Tensor out = kernels::conv2d_forward(node_value(input.id), node_value(kernels.id), stride, padding);
  const int in_id = input.id, k_id = kernels.id;
  return push(std::move(out), [in_id, k_id, stride, padding](Graph& g, const Tensor& go) {
    const Tensor& in = g.node_value(in_id);
    const Tensor& ker = g.node_value(k_id);
    g.accumulate(in_id, kernels::conv2d_backward_input(go, ker, stride, padding, in.dim(1), in.dim(2)));
    g.accumulate(k_id, kernels::conv2d_backward_kernels(go, in, stride, padding, ker.dim(2)));
  });
}

Graph::Ref Graph::add_channel_bias(Ref x, Ref bias) {
  Tensor out = kernels::add_channel_bias_forward(node_value(x.id), node_value(bias.id));
  const int x_id = x.id, b_id = bias.id;
  return push(std::move(out), [x_id, b_id](Graph& g, const Tensor& go) {
    g.accumulate(b_id, kernels::channel_bias_grad(go));
    Tensor gx = go;
    g.accumulate(x_id, std::move(gx));
  });
}

Graph::Ref Graph::pointwise(Ref x, Pointwise kind) {
  const int x_id = x.id;
  if (kind == Pointwise::Relu) {
    Tensor out = kernels::relu_forward(node_value(x.id));
    return push(std::move(out), [x_id](Graph& g, const Tensor& go) {
      g.accumulate(x_id, kernels::relu_backward(go, g.node_value(x_id)));
    });
  }
  Tensor out = kernels::sigmoid_forward(node_value(x.id));
  Ref r = push(std::move(out), nullptr);
  const int out_id = r.id;
  nodes_.back().backprop = [x_id, out_id](Graph& g, const Tensor& go) {
    g.accumulate(x_id, kernels::sigmoid_backward(go, g.node_value(out_id)));
  };
  return r;
}

Graph::Ref Graph::bilinear_upsample2x(Ref x) {
  const Tensor& in = node_value(x.id);
  if (in.rank() != 3) throw std::invalid_argument("bilinear_upsample2x: input must be [C,H,W]");
  UpsampleSpec spec;
  spec.src_global_h = in.dim(1);
  spec.src_global_w = in.dim(2);
  spec.out_rows = 2 * in.dim(1);
  spec.out_cols = 2 * in.dim(2);
  return upsample2x_window(x, spec);
}

Graph::Ref Graph::upsample2x_window(Ref x, const UpsampleSpec& spec) {
  Tensor out = kernels::upsample2x_forward(node_value(x.id), spec);
  const int x_id = x.id;
  return push(std::move(out), [x_id, spec](Graph& g, const Tensor& go) {
    g.accumulate(x_id, kernels::upsample2x_backward(go, g.node_value(x_id).shape(), spec));
  });
}

Graph::Ref Graph::concat_channels(Ref a, Ref b) {
  Tensor out = kernels::concat_channels_forward(node_value(a.id), node_value(b.id));
  const int a_id = a.id, b_id = b.id;
  const int ca = node_value(a.id).dim(0);
  return push(std::move(out), [a_id, b_id, ca](Graph& g, const Tensor& go) {
    Tensor ga, gb;
    kernels::concat_channels_backward(go, ca, ga, gb);
    g.accumulate(a_id, std::move(ga));
    g.accumulate(b_id, std::move(gb));
  });
}

Graph::Ref Graph::crop(Ref x, int src_row0, int src_col0, const Window& dst, int plane_h, int plane_w) {
  Tensor out = kernels::crop_forward(node_value(x.id), src_row0, src_col0, dst, plane_h, plane_w);
  const int x_id = x.id;
  return push(std::move(out), [x_id, src_row0, src_col0, dst, plane_h, plane_w](Graph& g, const Tensor& go) {
    g.accumulate(x_id, kernels::crop_backward(go, g.node_value(x_id).shape(), src_row0, src_col0, dst, plane_h,
                                              plane_w));
  });
}

Graph::Ref Graph::gather_pixel(Ref x, int row, int col) {
  Tensor out = kernels::gather_pixel_forward(node_value(x.id), row, col);
  const int x_id = x.id;
  return push(std::move(out), [x_id, row, col](Graph& g, const Tensor& go) {
    g.accumulate(x_id, kernels::gather_pixel_backward(go, g.node_value(x_id).shape(), row, col));
  });
}

Graph::Ref Graph::stack_scalars(const std::vector<Ref>& xs) {
  Tensor out({static_cast<int>(xs.size())});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor& v = node_value(xs[i].id);
    if (v.size() != 1) throw std::invalid_argument("stack_scalars: all inputs must be scalar");
    out[static_cast<std::int64_t>(i)] = v[0];
  }
  std::vector<int> ids(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ids[i] = xs[i].id;
  return push(std::move(out), [ids](Graph& g, const Tensor& go) {
    for (std::size_t i = 0; i < ids.size(); ++i) g.accumulate(ids[i], Tensor({1}, {go[static_cast<std::int64_t>(i)]}));
  });
}

Graph::Ref Graph::bce_loss(Ref probs, std::vector<double> labels, double clamp, double scale) {
  const Tensor& p = node_value(probs.id);
  if (static_cast<std::size_t>(p.size()) != labels.size())
    throw std::invalid_argument("bce_loss: probs/labels length mismatch");
  const double loss =
      kernels::bce_forward(p.data(), labels.data(), labels.size(), clamp, scale);
  const int p_id = probs.id;
  return push(Tensor::scalar(loss), [p_id, labels = std::move(labels), clamp, scale](Graph& g, const Tensor& go) {
    const Tensor& pv = g.node_value(p_id);
    Tensor gp(pv.shape());
    kernels::bce_backward(go[0], pv.data(), labels.data(), labels.size(), clamp, scale, gp.data());
    g.accumulate(p_id, std::move(gp));
  });
}

Graph::Ref Graph::sum(Ref x) {
  const Tensor& v = node_value(x.id);
  double s = 0.0;
  for (std::int64_t i = 0; i < v.size(); ++i) s += v[i];
  const int x_id = x.id;
  return push(Tensor::scalar(s), [x_id](Graph& g, const Tensor& go) {
    g.accumulate(x_id, Tensor::full(g.node_value(x_id).shape(), go[0]));
  });
}

Graph::Ref Graph::square(Ref x) {
  const Tensor& v = node_value(x.id);
  Tensor out = v;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= out[i];
  const int x_id = x.id;
  return push(std::move(out), [x_id](Graph& g, const Tensor& go) {
    const Tensor& xv = g.node_value(x_id);
    Tensor gx(xv.shape());
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = 2.0 * xv[i] * go[i];
    g.accumulate(x_id, std::move(gx));
  });
}

Graph::Ref Graph::hadamard(Ref a, Ref b) {
  const Tensor& av = node_value(a.id);
  const Tensor& bv = node_value(b.id);
  if (!av.same_shape(bv)) throw std::invalid_argument("hadamard: shape mismatch");
  Tensor out = av;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int a_id = a.id, b_id = b.id;
  return push(std::move(out), [a_id, b_id](Graph& g, const Tensor& go) {
    const Tensor& avv = g.node_value(a_id);
    const Tensor& bvv = g.node_value(b_id);
    Tensor ga(avv.shape()), gb(bvv.shape());
    for (std::int64_t i = 0; i < ga.size(); ++i) {
      ga[i] = go[i] * bvv[i];
      gb[i] = go[i] * avv[i];
    }
    g.accumulate(a_id, std::move(ga));
    g.accumulate(b_id, std::move(gb));
  });
}

Graph::Ref Graph::scale(Ref x, double s) {
  Tensor out = node_value(x.id);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= s;
  const int x_id = x.id;
  return push(std::move(out), [x_id, s](Graph& g, const Tensor& go) {
    Tensor gx = go;
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] *= s;
    g.accumulate(x_id, std::move(gx));
  });
}

Graph::Ref Graph::add(Ref a, Ref b) {
  const Tensor& av = node_value(a.id);
  const Tensor& bv = node_value(b.id);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = av;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int a_id = a.id, b_id = b.id;
  return push(std::move(out), [a_id, b_id](Graph& g, const Tensor& go) {
    Tensor ga = go, gb = go;
    g.accumulate(a_id, std::move(ga));
    g.accumulate(b_id, std::move(gb));
  });
}

Graph::Ref Graph::dot(Ref x, Tensor weights) {
  const Tensor& v = node_value(x.id);
  if (v.size() != weights.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::int64_t i = 0; i < v.size(); ++i) s += v[i] * weights[i];
  const int x_id = x.id;
  return push(Tensor::scalar(s), [x_id, weights = std::move(weights)](Graph& g, const Tensor& go) {
    Tensor gx(g.node_value(x_id).shape());
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = go[0] * weights[i];
    g.accumulate(x_id, std::move(gx));
  });
}

void Graph::backward(Ref loss) {
  Node& loss_node = nodes_[static_cast<std::size_t>(loss.id)];
  if (loss_node.value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                Tensor::shape_string(loss_node.value.shape()));
  accumulate(loss.id, Tensor({1}, {1.0}));
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty()) continue;
    if (n.parameter != nullptr) {
      Tensor& pg = n.parameter->grad;
      for (std::int64_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
    }
    if (n.backprop) n.backprop(*this, n.grad);
  }
}

}  // namespace afford
