#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "manograph/graph.hpp"
#include "manograph/ops.hpp"
#include "manograph/tensor.hpp"

namespace manograph {

/// Named reference to a trainable tensor inside a model struct.
struct ParamRef {
  std::string name;
  Tensor* value;
};

/// Gradient accumulator keyed by parameter identity. Parameters live inside
/// model structs that stay put for the duration of a training step, so the
/// tensor address is a stable key.
class GradStore {
 public:
  // Zero tensor of the parameter's shape on first access.
  Tensor& slot(const Tensor& param);
  void add(const Tensor& param, const Tensor& grad);
  // Null when the parameter received no gradient.
  const Tensor* find(const Tensor& param) const;
  void clear() { grads_.clear(); }

 private:
  std::unordered_map<const Tensor*, Tensor> grads_;
};

// ---- linear ----

struct LinearLayer {
  Tensor weight;  // (C_in, C_out)
  Tensor bias;    // (C_out)
};

LinearLayer make_linear(Rng& rng, std::size_t c_in, std::size_t c_out);
// Final layers of residual heads start at zero so the head is the identity.
LinearLayer make_zero_linear(std::size_t c_in, std::size_t c_out);

// x (n, C_in) -> (n, C_out)
Tensor linear_forward(const LinearLayer& layer, const Tensor& x);
// Accumulates weight/bias grads; returns grad_x.
Tensor linear_backward(const LinearLayer& layer, const Tensor& x, const Tensor& grad_out,
                       GradStore& grads);

void collect_linear_params(LinearLayer& layer, const std::string& prefix,
                           std::vector<ParamRef>& out);

// ---- two-layer perceptron (identity output activation) ----

struct Mlp {
  LinearLayer hidden;
  LinearLayer out;
  Activation hidden_act = Activation::kRelu;
};

struct MlpCtx {
  Tensor x;
  Tensor pre_hidden;
  Tensor activated;
};

Mlp make_mlp(Rng& rng, std::size_t c_in, std::size_t c_hidden, std::size_t c_out,
             bool zero_out_layer = false);
Tensor mlp_forward(const Mlp& mlp, const Tensor& x, MlpCtx* ctx = nullptr);
Tensor mlp_backward(const Mlp& mlp, const MlpCtx& ctx, const Tensor& grad_out,
                    GradStore& grads);
void collect_mlp_params(Mlp& mlp, const std::string& prefix, std::vector<ParamRef>& out);

// ---- semantic graph convolution ----

/// Graph convolution with a learnable per-edge weighting matrix. The
/// weighting is normalized by a softmax restricted to each node's
/// neighborhood (self-loop included); non-neighbors contribute exactly 0.
struct SemGConvLayer {
  Tensor weight;  // (C_in, C_out)
  Tensor bias;    // (C_out)
  Tensor mask;    // (n, n) learnable edge weighting, all-ones at init
  Activation act = Activation::kRelu;
};

struct SemGConvCtx {
  Tensor x;
  Tensor attn;  // row-softmax of mask over the neighborhood
  Tensor agg;   // attn * x
  Tensor pre;   // agg * W + b
};

SemGConvLayer make_semgconv(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t n,
                            Activation act = Activation::kRelu);
Tensor semgconv_forward(const SemGConvLayer& layer, const Tensor& x, const Graph& g,
                        SemGConvCtx* ctx = nullptr);
// Accumulates grads for weight, bias and mask; returns grad_x.
Tensor semgconv_backward(const SemGConvLayer& layer, const Graph& g, const SemGConvCtx& ctx,
                         const Tensor& grad_out, GradStore& grads);
void collect_semgconv_params(SemGConvLayer& layer, const std::string& prefix,
                             std::vector<ParamRef>& out);

// ---- ordinary graph convolution ----

struct GConvLayer {
  Tensor weight;  // (C_in, C_out)
  Tensor bias;    // (C_out)
  Activation act = Activation::kRelu;
};

struct GConvCtx {
  Tensor x;
  Tensor agg;  // norm_adj * x
  Tensor pre;
};

GConvLayer make_gconv(Rng& rng, std::size_t c_in, std::size_t c_out,
                      Activation act = Activation::kRelu);
// out = act(norm_adj * x * W + b) with norm_adj from normalize_adjacency.
Tensor gconv_forward(const GConvLayer& layer, const Tensor& x, const Tensor& norm_adj,
                     GConvCtx* ctx = nullptr);
Tensor gconv_backward(const GConvLayer& layer, const Tensor& norm_adj, const GConvCtx& ctx,
                      const Tensor& grad_out, GradStore& grads);
void collect_gconv_params(GConvLayer& layer, const std::string& prefix,
                          std::vector<ParamRef>& out);

}  // namespace manograph
