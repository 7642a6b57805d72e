#include "manograph/layers.hpp"

namespace manograph {

Tensor& GradStore::slot(const Tensor& param) {
  auto it = grads_.find(&param);
  if (it == grads_.end())
    it = grads_.emplace(&param, Tensor::zeros(param.shape())).first;
  return it->second;
}

void GradStore::add(const Tensor& param, const Tensor& grad) {
  add_inplace(slot(param), grad);
}

const Tensor* GradStore::find(const Tensor& param) const {
  auto it = grads_.find(&param);
  return it == grads_.end() ? nullptr : &it->second;
}

LinearLayer make_linear(Rng& rng, std::size_t c_in, std::size_t c_out) {
  return LinearLayer{xavier_init(rng, c_in, c_out), Tensor({c_out})};
}

LinearLayer make_zero_linear(std::size_t c_in, std::size_t c_out) {
  return LinearLayer{Tensor({c_in, c_out}), Tensor({c_out})};
}

Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
  check(x.ndim() == 2 && x.cols() == layer.weight.rows(),
        "linear: input " + x.shape_str() + " vs weight " + layer.weight.shape_str());
  return add_row_broadcast(matmul(x, layer.weight), layer.bias);
}

Tensor linear_backward(const LinearLayer& layer, const Tensor& x, const Tensor& grad_out,
                       GradStore& grads) {
  grads.add(layer.weight, matmul_tn(x, grad_out));
  grads.add(layer.bias, col_sums(grad_out));
  return matmul_nt(grad_out, layer.weight);
}

void collect_linear_params(LinearLayer& layer, const std::string& prefix,
                           std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &layer.weight});
  out.push_back({prefix + ".bias", &layer.bias});
}

Mlp make_mlp(Rng& rng, std::size_t c_in, std::size_t c_hidden, std::size_t c_out,
             bool zero_out_layer) {
  Mlp mlp;
  mlp.hidden = make_linear(rng, c_in, c_hidden);
  mlp.out = zero_out_layer ? make_zero_linear(c_hidden, c_out)
                           : make_linear(rng, c_hidden, c_out);
  return mlp;
}

Tensor mlp_forward(const Mlp& mlp, const Tensor& x, MlpCtx* ctx) {
  Tensor pre = linear_forward(mlp.hidden, x);
  Tensor act = activate(pre, mlp.hidden_act);
  Tensor out = linear_forward(mlp.out, act);
  if (ctx) {
    ctx->x = x;
    ctx->pre_hidden = std::move(pre);
    ctx->activated = std::move(act);
  }
  return out;
}

Tensor mlp_backward(const Mlp& mlp, const MlpCtx& ctx, const Tensor& grad_out,
                    GradStore& grads) {
  Tensor g_act = linear_backward(mlp.out, ctx.activated, grad_out, grads);
  Tensor g_pre = activate_backward(ctx.pre_hidden, g_act, mlp.hidden_act);
  return linear_backward(mlp.hidden, ctx.x, g_pre, grads);
}

void collect_mlp_params(Mlp& mlp, const std::string& prefix, std::vector<ParamRef>& out) {
  collect_linear_params(mlp.hidden, prefix + ".hidden", out);
  collect_linear_params(mlp.out, prefix + ".out", out);
}

SemGConvLayer make_semgconv(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t n,
                            Activation act) {
  SemGConvLayer layer;
  layer.weight = xavier_init(rng, c_in, c_out);
  layer.bias = Tensor({c_out});
  // All-ones M makes the first forward plain neighborhood averaging.
  layer.mask = Tensor::full({n, n}, Scalar(1));
  layer.act = act;
  return layer;
}

Tensor semgconv_forward(const SemGConvLayer& layer, const Tensor& x, const Graph& g,
                        SemGConvCtx* ctx) {
  const std::size_t n = g.size();
  check(x.ndim() == 2 && x.rows() == n,
        "semgconv: features " + x.shape_str() + " vs graph of " + std::to_string(n) + " nodes");
  check(layer.mask.ndim() == 2 && layer.mask.rows() == n && layer.mask.cols() == n,
        "semgconv: mask " + layer.mask.shape_str() + " vs graph of " + std::to_string(n) +
            " nodes");
  const Tensor hood = g.adjacency_with_self_loops();
  Tensor attn = softmax_rows(layer.mask, &hood);
  Tensor agg = matmul(attn, x);
  Tensor pre = add_row_broadcast(matmul(agg, layer.weight), layer.bias);
  Tensor out = activate(pre, layer.act);
  if (ctx) {
    ctx->x = x;
    ctx->attn = std::move(attn);
    ctx->agg = std::move(agg);
    ctx->pre = std::move(pre);
  }
  return out;
}

Tensor semgconv_backward(const SemGConvLayer& layer, const Graph& g, const SemGConvCtx& ctx,
                         const Tensor& grad_out, GradStore& grads) {
  (void)g;
  Tensor g_pre = activate_backward(ctx.pre, grad_out, layer.act);
  grads.add(layer.weight, matmul_tn(ctx.agg, g_pre));
  grads.add(layer.bias, col_sums(g_pre));
  Tensor g_agg = matmul_nt(g_pre, layer.weight);
  Tensor g_x = matmul_tn(ctx.attn, g_agg);
  Tensor g_attn = matmul_nt(g_agg, ctx.x);
  // Masked entries have attn == 0 so the softmax backward already yields
  // exact zeros there.
  grads.add(layer.mask, softmax_rows_backward(ctx.attn, g_attn));
  return g_x;
}

void collect_semgconv_params(SemGConvLayer& layer, const std::string& prefix,
                             std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &layer.weight});
  out.push_back({prefix + ".bias", &layer.bias});
  out.push_back({prefix + ".mask", &layer.mask});
}

GConvLayer make_gconv(Rng& rng, std::size_t c_in, std::size_t c_out, Activation act) {
  return GConvLayer{xavier_init(rng, c_in, c_out), Tensor({c_out}), act};
}

Tensor gconv_forward(const GConvLayer& layer, const Tensor& x, const Tensor& norm_adj,
                     GConvCtx* ctx) {
  check(norm_adj.ndim() == 2 && norm_adj.rows() == norm_adj.cols() &&
            norm_adj.rows() == x.rows(),
        "gconv: norm_adj " + norm_adj.shape_str() + " vs features " + x.shape_str());
  Tensor agg = matmul(norm_adj, x);
  Tensor pre = add_row_broadcast(matmul(agg, layer.weight), layer.bias);
  Tensor out = activate(pre, layer.act);
  if (ctx) {
    ctx->x = x;
    ctx->agg = std::move(agg);
    ctx->pre = std::move(pre);
  }
  return out;
}

Tensor gconv_backward(const GConvLayer& layer, const Tensor& norm_adj, const GConvCtx& ctx,
                      const Tensor& grad_out, GradStore& grads) {
  Tensor g_pre = activate_backward(ctx.pre, grad_out, layer.act);
  grads.add(layer.weight, matmul_tn(ctx.agg, g_pre));
  grads.add(layer.bias, col_sums(g_pre));
  Tensor g_agg = matmul_nt(g_pre, layer.weight);
  return matmul_tn(norm_adj, g_agg);
}

void collect_gconv_params(GConvLayer& layer, const std::string& prefix,
                          std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &layer.weight});
  out.push_back({prefix + ".bias", &layer.bias});
}

}  // namespace manograph
