#include "afford/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "afford/kernels.hpp"

namespace afford {

namespace {

// Inclusive index interval in global plane coordinates. Consumer-side
// intervals may extend outside the plane (zero padding); producer-side
// intervals are clamped to it.
struct Iv {
  int lo = 0, hi = 0;
  int size() const { return hi - lo + 1; }
};

Iv conv_in_need(Iv out, int k, int s, int p) { return {s * out.lo - p, s * out.hi + k - 1 - p}; }
Iv clamp_iv(Iv x, int n) { return {std::max(x.lo, 0), std::min(x.hi, n - 1)}; }
Iv union_iv(Iv a, Iv b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

// Source rows a 2x bilinear upsample reads to produce the (in-plane) window.
Iv upsample_src_need(Iv out, int src_n) {
  const double plo = std::clamp((out.lo + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(src_n - 1));
  const double phi = std::clamp((out.hi + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(src_n - 1));
  return {static_cast<int>(std::floor(plo)), std::min(src_n - 1, static_cast<int>(std::floor(phi)) + 1)};
}

// Dependency cone of one output pixel through the U-Net, used to run the
// training forward/backward on windows instead of full planes.
struct FocusedPlan {
  Iv d3_in_r, d3_in_c;        // cat3 = (u2, e1 skip) window at H
  Iv d2_valid_r, d2_valid_c;  // d2 output window at H/2
  Iv d2_in_r, d2_in_c;        // cat2 = (u1, e2 skip) window at H/2
  Iv d1_valid_r, d1_valid_c;  // d1 output window at H/4
  Iv d1_in_r, d1_in_c;        // cat1 = (e3, one-hot) window at H/4
  Iv e3_valid_r, e3_valid_c;
  Iv e3_in_r, e3_in_c;  // e2 crop feeding encoder conv3, at H/2
  Iv e2_valid_r, e2_valid_c;
  Iv e2_in_r, e2_in_c;  // e1 crop feeding encoder conv2, at H
  Iv e1_valid_r, e1_valid_c;
  Iv in_r, in_c;  // raw input crop at H
};

FocusedPlan make_plan(int h, int w, int pr, int pc) {
  const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  FocusedPlan plan;
  const Iv d3out_r{pr, pr}, d3out_c{pc, pc};
  plan.d3_in_r = conv_in_need(d3out_r, 3, 1, 1);
  plan.d3_in_c = conv_in_need(d3out_c, 3, 1, 1);
  plan.d2_valid_r = upsample_src_need(clamp_iv(plan.d3_in_r, h), h2);
  plan.d2_valid_c = upsample_src_need(clamp_iv(plan.d3_in_c, w), w2);
  plan.d2_in_r = conv_in_need(plan.d2_valid_r, 5, 1, 2);
  plan.d2_in_c = conv_in_need(plan.d2_valid_c, 5, 1, 2);
  plan.d1_valid_r = upsample_src_need(clamp_iv(plan.d2_in_r, h2), h4);
  plan.d1_valid_c = upsample_src_need(clamp_iv(plan.d2_in_c, w2), w4);
  plan.d1_in_r = conv_in_need(plan.d1_valid_r, 5, 1, 2);
  plan.d1_in_c = conv_in_need(plan.d1_valid_c, 5, 1, 2);
  plan.e3_valid_r = clamp_iv(plan.d1_in_r, h4);
  plan.e3_valid_c = clamp_iv(plan.d1_in_c, w4);
  plan.e3_in_r = conv_in_need(plan.e3_valid_r, 5, 2, 2);
  plan.e3_in_c = conv_in_need(plan.e3_valid_c, 5, 2, 2);
  plan.e2_valid_r = clamp_iv(union_iv(plan.e3_in_r, plan.d2_in_r), h2);
  plan.e2_valid_c = clamp_iv(union_iv(plan.e3_in_c, plan.d2_in_c), w2);
  plan.e2_in_r = conv_in_need(plan.e2_valid_r, 5, 2, 2);
  plan.e2_in_c = conv_in_need(plan.e2_valid_c, 5, 2, 2);
  plan.e1_valid_r = clamp_iv(union_iv(plan.e2_in_r, plan.d3_in_r), h);
  plan.e1_valid_c = clamp_iv(union_iv(plan.e2_in_c, plan.d3_in_c), w);
  plan.in_r = conv_in_need(plan.e1_valid_r, 3, 1, 1);
  plan.in_c = conv_in_need(plan.e1_valid_c, 3, 1, 1);
  return plan;
}

Window win(Iv r, Iv c) { return Window{r.lo, c.lo, r.size(), c.size()}; }

// One-hot orientation plane over a window: channel q is 1 on in-plane cells
// (zero elsewhere, matching the conv padding of the dense pass).
Tensor onehot_window(int orientation, int channels, Iv r, Iv c, int plane_h, int plane_w) {
  Tensor t({channels, r.size(), c.size()});
  for (int i = 0; i < r.size(); ++i) {
    const int gr = r.lo + i;
    if (gr < 0 || gr >= plane_h) continue;
    for (int j = 0; j < c.size(); ++j) {
      const int gc = c.lo + j;
      if (gc < 0 || gc >= plane_w) continue;
      t.at(orientation, i, j) = 1.0;
    }
  }
  return t;
}

}  // namespace

void ModelConfig::validate() const {
  if (height < 8 || width < 8) throw std::invalid_argument("ModelConfig: grid must be at least 8x8");
  if (height % 4 != 0 || width % 4 != 0)
    throw std::invalid_argument("ModelConfig: grid dimensions must be divisible by 4");
  if (ensemble_size < 1) throw std::invalid_argument("ModelConfig: ensemble_size must be >= 1");
  if (orientation_count < 1) throw std::invalid_argument("ModelConfig: orientation_count must be >= 1");
}

EnsembleModel::ConvLayer EnsembleModel::make_conv(int cout, int cin, int k, int stride, int padding,
                                                  const std::string& name, Rng& rng, int& next_id) {
  ConvLayer layer;
  layer.kernel = k;
  layer.stride = stride;
  layer.padding = padding;
  Tensor w({cout, cin, k, k});
  const double bound = std::sqrt(1.0 / (cin * k * k));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  layer.weights = Parameter(std::move(w), next_id++, name + ".weight");
  layer.bias = Parameter(Tensor({cout}), next_id++, name + ".bias");
  return layer;
}

EnsembleModel::EnsembleModel(ModelConfig config, Rng& init_rng) : config_(config) {
  config_.validate();
  int next_id = 0;
  const int q = config_.orientation_count;
  enc1_ = make_conv(8, 1, 3, 1, 1, "enc1", init_rng, next_id);
  enc2_ = make_conv(16, 8, 5, 2, 2, "enc2", init_rng, next_id);
  enc3_ = make_conv(16, 16, 5, 2, 2, "enc3", init_rng, next_id);
  decoders_.reserve(static_cast<std::size_t>(config_.ensemble_size));
  for (int m = 0; m < config_.ensemble_size; ++m) {
    const std::string base = "dec" + std::to_string(m);
    Decoder d;
    d.d1 = make_conv(16, 16 + q, 5, 1, 2, base + ".d1", init_rng, next_id);
    d.d2 = make_conv(16, 32, 5, 1, 2, base + ".d2", init_rng, next_id);
    d.d3 = make_conv(8, 24, 3, 1, 1, base + ".d3", init_rng, next_id);
    d.head = make_conv(1, 8, 1, 1, 0, base + ".head", init_rng, next_id);
    decoders_.push_back(std::move(d));
  }
  adam_ = AdamState(parameters(), config_.adam);
}

std::vector<Parameter*> EnsembleModel::parameters() {
  std::vector<Parameter*> out;
  for (ConvLayer* layer : {&enc1_, &enc2_, &enc3_}) {
    out.push_back(&layer->weights);
    out.push_back(&layer->bias);
  }
  for (Decoder& d : decoders_) {
    for (ConvLayer* layer : {&d.d1, &d.d2, &d.d3, &d.head}) {
      out.push_back(&layer->weights);
      out.push_back(&layer->bias);
    }
  }
  return out;
}

std::vector<const Parameter*> EnsembleModel::parameters() const {
  std::vector<const Parameter*> out;
  auto* self = const_cast<EnsembleModel*>(this);
  for (Parameter* p : self->parameters()) out.push_back(p);
  return out;
}

Tensor EnsembleModel::observation_input(const SceneObservation& obs) const {
  if (obs.height != config_.height || obs.width != config_.width)
    throw std::invalid_argument("observation size " + std::to_string(obs.height) + "x" + std::to_string(obs.width) +
                                " does not match model " + std::to_string(config_.height) + "x" +
                                std::to_string(config_.width));
  return Tensor({1, obs.height, obs.width}, obs.heightmap);
}

EnsembleModel::EncoderActs EnsembleModel::encode(const Tensor& input) const {
  ++encoder_passes_;
  EncoderActs acts;
  acts.e1 = kernels::relu_forward(
      kernels::add_channel_bias_forward(kernels::conv2d_forward(input, enc1_.weights.value, 1, 1), enc1_.bias.value));
  acts.e2 = kernels::relu_forward(kernels::add_channel_bias_forward(
      kernels::conv2d_forward(acts.e1, enc2_.weights.value, 2, 2), enc2_.bias.value));
  acts.e3 = kernels::relu_forward(kernels::add_channel_bias_forward(
      kernels::conv2d_forward(acts.e2, enc3_.weights.value, 2, 2), enc3_.bias.value));
  return acts;
}

Tensor EnsembleModel::decode(const EncoderActs& acts, int member, int orientation) const {
  ++decoder_passes_;
  const Decoder& dec = decoders_[static_cast<std::size_t>(member)];
  const int h4 = config_.height / 4, w4 = config_.width / 4;
  Tensor onehot({config_.orientation_count, h4, w4});
  std::fill_n(onehot.data() + static_cast<std::size_t>(orientation) * h4 * w4, static_cast<std::size_t>(h4) * w4,
              1.0);
  Tensor cat1 = kernels::concat_channels_forward(acts.e3, onehot);
  Tensor d1 = kernels::relu_forward(
      kernels::add_channel_bias_forward(kernels::conv2d_forward(cat1, dec.d1.weights.value, 1, 2), dec.d1.bias.value));
  UpsampleSpec up1;
  up1.src_global_h = h4;
  up1.src_global_w = w4;
  up1.out_rows = 2 * h4;
  up1.out_cols = 2 * w4;
  Tensor u1 = kernels::upsample2x_forward(d1, up1);
  Tensor cat2 = kernels::concat_channels_forward(u1, acts.e2);
  Tensor d2 = kernels::relu_forward(
      kernels::add_channel_bias_forward(kernels::conv2d_forward(cat2, dec.d2.weights.value, 1, 2), dec.d2.bias.value));
  UpsampleSpec up2;
  up2.src_global_h = 2 * h4;
  up2.src_global_w = 2 * w4;
  up2.out_rows = config_.height;
  up2.out_cols = config_.width;
  Tensor u2 = kernels::upsample2x_forward(d2, up2);
  Tensor cat3 = kernels::concat_channels_forward(u2, acts.e1);
  Tensor d3 = kernels::relu_forward(
      kernels::add_channel_bias_forward(kernels::conv2d_forward(cat3, dec.d3.weights.value, 1, 1), dec.d3.bias.value));
  Tensor out = kernels::sigmoid_forward(kernels::add_channel_bias_forward(
      kernels::conv2d_forward(d3, dec.head.weights.value, 1, 0), dec.head.bias.value));
  return Tensor({config_.height, config_.width}, std::move(out.vec()));
}

Tensor EnsembleModel::forward_member(const SceneObservation& obs, int orientation, int member) const {
  if (orientation < 0 || orientation >= config_.orientation_count)
    throw std::invalid_argument("forward_member: orientation index out of range");
  if (member < 0 || member >= config_.ensemble_size)
    throw std::invalid_argument("forward_member: member index out of range");
  return decode(encode(observation_input(obs)), member, orientation);
}

EnsembleModel::ForwardAll EnsembleModel::forward_all(const SceneObservation& obs, int orientation) const {
  if (orientation < 0 || orientation >= config_.orientation_count)
    throw std::invalid_argument("forward_all: orientation index out of range");
  const EncoderActs acts = encode(observation_input(obs));
  ForwardAll result;
  result.member_grids.reserve(static_cast<std::size_t>(config_.ensemble_size));
  for (int m = 0; m < config_.ensemble_size; ++m) result.member_grids.push_back(decode(acts, m, orientation));
  result.mean_grid = Tensor({config_.height, config_.width});
  for (const Tensor& grid : result.member_grids)
    for (std::int64_t i = 0; i < grid.size(); ++i) result.mean_grid[i] += grid[i];
  for (std::int64_t i = 0; i < result.mean_grid.size(); ++i) result.mean_grid[i] /= config_.ensemble_size;
  return result;
}

EnsembleModel::MapStack EnsembleModel::affordance_maps(const SceneObservation& obs) const {
  const EncoderActs acts = encode(observation_input(obs));
  const int q = config_.orientation_count, h = config_.height, w = config_.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  MapStack stack;
  stack.member_maps.reserve(static_cast<std::size_t>(config_.ensemble_size));
  for (int m = 0; m < config_.ensemble_size; ++m) {
    Tensor map({q, h, w});
    for (int o = 0; o < q; ++o) {
      Tensor grid = decode(acts, m, o);
      std::copy(grid.data(), grid.data() + plane, map.data() + static_cast<std::size_t>(o) * plane);
    }
    stack.member_maps.push_back(std::move(map));
  }
  stack.mean_map = Tensor({q, h, w});
  for (const Tensor& map : stack.member_maps)
    for (std::int64_t i = 0; i < map.size(); ++i) stack.mean_map[i] += map[i];
  for (std::int64_t i = 0; i < stack.mean_map.size(); ++i) stack.mean_map[i] /= config_.ensemble_size;
  return stack;
}

Graph::Ref EnsembleModel::build_sample_loss(Graph& g, const SceneObservation& obs, const Action& action, double label,
                                            double scale, bool focused) {
  const Tensor input = observation_input(obs);
  if (action.orientation < 0 || action.orientation >= config_.orientation_count)
    throw std::invalid_argument("build_sample_loss: orientation index out of range");
  if (action.row < 0 || action.row >= config_.height || action.col < 0 || action.col >= config_.width)
    throw std::invalid_argument("build_sample_loss: action position out of range");
  return focused ? build_sample_loss_focused(g, input, action, label, scale)
                 : build_sample_loss_dense(g, input, action, label, scale);
}

Graph::Ref EnsembleModel::build_sample_loss_dense(Graph& g, const Tensor& input, const Action& action, double label,
                                                  double scale) {
  const int h = config_.height, w = config_.width;
  const int h4 = h / 4, w4 = w / 4;
  auto conv_block = [&](Graph::Ref x, ConvLayer& layer) {
    return g.relu(g.add_channel_bias(g.conv2d(x, g.param(layer.weights), layer.stride, layer.padding),
                                     g.param(layer.bias)));
  };
  Graph::Ref x = g.constant(input);
  Graph::Ref e1 = conv_block(x, enc1_);
  Graph::Ref e2 = conv_block(e1, enc2_);
  Graph::Ref e3 = conv_block(e2, enc3_);
  Tensor onehot({config_.orientation_count, h4, w4});
  std::fill_n(onehot.data() + static_cast<std::size_t>(action.orientation) * h4 * w4,
              static_cast<std::size_t>(h4) * w4, 1.0);
  Graph::Ref onehot_ref = g.constant(std::move(onehot));
  std::vector<Graph::Ref> member_probs;
  member_probs.reserve(decoders_.size());
  for (Decoder& dec : decoders_) {
    Graph::Ref d1 = conv_block(g.concat_channels(e3, onehot_ref), dec.d1);
    Graph::Ref d2 = conv_block(g.concat_channels(g.bilinear_upsample2x(d1), e2), dec.d2);
    Graph::Ref d3 = conv_block(g.concat_channels(g.bilinear_upsample2x(d2), e1), dec.d3);
    Graph::Ref logits = g.add_channel_bias(g.conv2d(d3, g.param(dec.head.weights), 1, 0), g.param(dec.head.bias));
    Graph::Ref probs = g.sigmoid(logits);
    member_probs.push_back(g.gather_pixel(probs, action.row, action.col));
  }
  Graph::Ref stacked = g.stack_scalars(member_probs);
  return g.bce_loss(stacked, std::vector<double>(member_probs.size(), label), config_.prob_clamp, scale);
}

Graph::Ref EnsembleModel::build_sample_loss_focused(Graph& g, const Tensor& input, const Action& action, double label,
                                                    double scale) {
  const int h = config_.height, w = config_.width;
  const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  const FocusedPlan plan = make_plan(h, w, action.row, action.col);
  auto conv_block = [&](Graph::Ref x, ConvLayer& layer) {
    return g.relu(g.add_channel_bias(g.conv2d(x, g.param(layer.weights), layer.stride, 0), g.param(layer.bias)));
  };

  Graph::Ref x = g.constant(input);
  Graph::Ref in_crop = g.crop(x, 0, 0, win(plan.in_r, plan.in_c), h, w);
  Graph::Ref e1 = conv_block(in_crop, enc1_);  // covers e1_valid
  Graph::Ref e1_for_e2 = g.crop(e1, plan.e1_valid_r.lo, plan.e1_valid_c.lo, win(plan.e2_in_r, plan.e2_in_c), h, w);
  Graph::Ref e2 = conv_block(e1_for_e2, enc2_);  // covers e2_valid
  Graph::Ref e2_for_e3 = g.crop(e2, plan.e2_valid_r.lo, plan.e2_valid_c.lo, win(plan.e3_in_r, plan.e3_in_c), h2, w2);
  Graph::Ref e3 = conv_block(e2_for_e3, enc3_);  // covers e3_valid

  Graph::Ref e3_cropped =
      g.crop(e3, plan.e3_valid_r.lo, plan.e3_valid_c.lo, win(plan.d1_in_r, plan.d1_in_c), h4, w4);
  Graph::Ref onehot = g.constant(
      onehot_window(action.orientation, config_.orientation_count, plan.d1_in_r, plan.d1_in_c, h4, w4));
  Graph::Ref e2_skip = g.crop(e2, plan.e2_valid_r.lo, plan.e2_valid_c.lo, win(plan.d2_in_r, plan.d2_in_c), h2, w2);
  Graph::Ref e1_skip = g.crop(e1, plan.e1_valid_r.lo, plan.e1_valid_c.lo, win(plan.d3_in_r, plan.d3_in_c), h, w);

  std::vector<Graph::Ref> member_probs;
  member_probs.reserve(decoders_.size());
  for (Decoder& dec : decoders_) {
    Graph::Ref d1 = conv_block(g.concat_channels(e3_cropped, onehot), dec.d1);  // covers d1_valid
    UpsampleSpec up1;
    up1.src_global_h = h4;
    up1.src_global_w = w4;
    up1.src_row0 = plan.d1_valid_r.lo;
    up1.src_col0 = plan.d1_valid_c.lo;
    up1.out_row0 = plan.d2_in_r.lo;
    up1.out_col0 = plan.d2_in_c.lo;
    up1.out_rows = plan.d2_in_r.size();
    up1.out_cols = plan.d2_in_c.size();
    Graph::Ref u1 = g.upsample2x_window(d1, up1);
    Graph::Ref d2 = conv_block(g.concat_channels(u1, e2_skip), dec.d2);  // covers d2_valid
    UpsampleSpec up2;
    up2.src_global_h = h2;
    up2.src_global_w = w2;
    up2.src_row0 = plan.d2_valid_r.lo;
    up2.src_col0 = plan.d2_valid_c.lo;
    up2.out_row0 = plan.d3_in_r.lo;
    up2.out_col0 = plan.d3_in_c.lo;
    up2.out_rows = plan.d3_in_r.size();
    up2.out_cols = plan.d3_in_c.size();
    Graph::Ref u2 = g.upsample2x_window(d2, up2);
    Graph::Ref d3 = conv_block(g.concat_channels(u2, e1_skip), dec.d3);  // 1x1: the pixel
    Graph::Ref logits = g.add_channel_bias(g.conv2d(d3, g.param(dec.head.weights), 1, 0), g.param(dec.head.bias));
    Graph::Ref probs = g.sigmoid(logits);
    member_probs.push_back(g.gather_pixel(probs, 0, 0));
  }
  Graph::Ref stacked = g.stack_scalars(member_probs);
  return g.bce_loss(stacked, std::vector<double>(member_probs.size(), label), config_.prob_clamp, scale);
}

UpdateStats EnsembleModel::update(const ReplayBuffer& buffer, int steps, int batch_size, Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("update: replay buffer is empty");
  if (batch_size < 1) throw std::invalid_argument("update: batch size must be >= 1");
  UpdateStats stats;
  stats.steps = steps;
  double loss_sum = 0.0;
  const int n = static_cast<int>(buffer.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int step = 0; step < steps; ++step) {
    std::vector<int> indices;
    indices.reserve(static_cast<std::size_t>(batch_size));
    if (n < batch_size) {
      for (int i = 0; i < batch_size; ++i) indices.push_back(rng.uniform_int(n));
    } else {
      for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
      for (int i = 0; i < batch_size; ++i) {
        const int j = i + rng.uniform_int(n - i);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        indices.push_back(order[static_cast<std::size_t>(i)]);
      }
    }
    std::sort(indices.begin(), indices.end());
    stats.last_step_indices = indices;

    double step_loss = 0.0;
    for (std::size_t i = 0; i < indices.size();) {
      std::size_t j = i;
      while (j < indices.size() && indices[j] == indices[i]) ++j;
      const int multiplicity = static_cast<int>(j - i);
      const Transition& t = buffer[static_cast<std::size_t>(indices[i])];
      Graph g;
      Graph::Ref loss = build_sample_loss(g, t.observation, t.action, static_cast<double>(t.outcome.success),
                                          static_cast<double>(multiplicity) / batch_size, config_.focused_training);
      g.backward(loss);
      step_loss += g.value(loss)[0];
      i = j;
    }
    adam_.step();
    for (Parameter* p : parameters()) p->zero_grad();
    loss_sum += step_loss;
  }
  stats.mean_loss = steps > 0 ? loss_sum / steps : 0.0;
  return stats;
}

double EnsembleModel::ensemble_bce(const std::vector<std::vector<double>>& member_probs,
                                   const std::vector<double>& labels, double clamp) {
  if (labels.empty()) throw std::invalid_argument("ensemble_bce: empty batch");
  double loss = 0.0;
  for (const std::vector<double>& probs : member_probs) {
    if (probs.size() != labels.size()) throw std::invalid_argument("ensemble_bce: probs/labels length mismatch");
    loss += kernels::bce_forward(probs.data(), labels.data(), labels.size(), clamp, 1.0 / labels.size());
  }
  return loss;
}

namespace {

constexpr char kCheckpointMagic[4] = {'A', 'F', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes a little-endian host");

void write_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void EnsembleModel::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  const auto params = parameters();
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    write_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (int d : p->value.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const Parameter* p : params)
    out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * 8));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

void EnsembleModel::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("not an afford checkpoint: " + path);
  if (read_u32(in) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version: " + path);
  const auto params = parameters();
  if (read_u32(in) != params.size()) throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  for (const Parameter* p : params) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != p->name) throw std::runtime_error("checkpoint parameter name mismatch: " + name + " vs " + p->name);
    const std::uint32_t ndim = read_u32(in);
    std::vector<int> dims(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) dims[i] = static_cast<int>(read_u32(in));
    if (dims != p->value.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": expected " +
                               Tensor::shape_string(p->value.shape()) + ", got " + Tensor::shape_string(dims));
  }
  for (Parameter* p : parameters())
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * 8));
  if (!in) throw std::runtime_error("checkpoint truncated: " + path);
}

}  // namespace afford
