#include "manograph/refiner.hpp"

#include <cmath>

namespace manograph {

namespace {

constexpr std::size_t kGlobalFeatureDim = 2048;

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows(), "concat_cols: row mismatch");
  Tensor out({a.rows(), a.cols() + b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
  }
  return out;
}

void split_cols(const Tensor& cat, std::size_t left_cols, Tensor* left, Tensor* right) {
  const std::size_t rows = cat.rows(), right_cols = cat.cols() - left_cols;
  *left = Tensor({rows, left_cols});
  *right = Tensor({rows, right_cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < left_cols; ++j) (*left)(i, j) = cat(i, j);
    for (std::size_t j = 0; j < right_cols; ++j) (*right)(i, j) = cat(i, left_cols + j);
  }
}

}  // namespace

NodeFeatures init_node_features(const Tensor& f_global, const Joints3D& j3d,
                                const HandMesh& mesh) {
  check(f_global.ndim() == 1 && f_global.size() == kGlobalFeatureDim,
        "init_node_features: f_global must have length " +
            std::to_string(kGlobalFeatureDim) + ", got " + std::to_string(f_global.size()));
  check(f_global.all_finite() && j3d.joints.all_finite() && mesh.vertices.all_finite(),
        "init_node_features: non-finite input");
  const std::size_t nj = j3d.joints.rows(), nv = mesh.vertices.rows();
  const std::size_t c = kGlobalFeatureDim + 3;
  NodeFeatures nf{Tensor({nj, c}), Tensor({nv, c})};
  for (std::size_t i = 0; i < nj; ++i) {
    for (std::size_t k = 0; k < kGlobalFeatureDim; ++k) nf.joint_feats(i, k) = f_global[k];
    for (int k = 0; k < 3; ++k) nf.joint_feats(i, kGlobalFeatureDim + k) = j3d.joints(i, k);
  }
  for (std::size_t i = 0; i < nv; ++i) {
    for (std::size_t k = 0; k < kGlobalFeatureDim; ++k) nf.vertex_feats(i, k) = f_global[k];
    for (int k = 0; k < 3; ++k)
      nf.vertex_feats(i, kGlobalFeatureDim + k) = mesh.vertices(i, k);
  }
  return nf;
}

NodeFeatures intra_graph_update(const NodeFeatures& nf, const RefinerBlock& block,
                                const Tensor& joint_norm_adj, const Graph& vertex_graph,
                                RefinerBlockCtx* ctx) {
  Tensor jf = gconv_forward(block.joint_intra, nf.joint_feats, joint_norm_adj,
                            ctx ? &ctx->joint_intra : nullptr);
  Tensor vf = semgconv_forward(block.vertex_intra, nf.vertex_feats, vertex_graph,
                               ctx ? &ctx->vertex_intra : nullptr);
  return NodeFeatures{std::move(jf), std::move(vf)};
}

CrossAttentionResult cross_attention(const NodeFeatures& nf,
                                     const MutualAttentionLayer& layer,
                                     AttentionDirection direction, CrossAttentionCtx* ctx) {
  const bool to_joint = direction == AttentionDirection::kVertexToJoint;
  const Tensor& query_in = to_joint ? nf.joint_feats : nf.vertex_feats;
  const Tensor& kv_in = to_joint ? nf.vertex_feats : nf.joint_feats;
  const LinearLayer& wq = to_joint ? layer.query_j : layer.query_v;
  const LinearLayer& wk = to_joint ? layer.key_v : layer.key_j;
  const LinearLayer& wv = to_joint ? layer.value_v : layer.value_j;

  Tensor q = linear_forward(wq, query_in);
  Tensor k = linear_forward(wk, kv_in);
  Tensor v = linear_forward(wv, kv_in);
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  Tensor logits = scaled(matmul_nt(q, k), scale);
  Tensor attn = softmax_rows(logits);
  Tensor agg = matmul(attn, v);
  if (ctx) {
    ctx->query_in = query_in;
    ctx->key_in = kv_in;
    ctx->value_in = kv_in;
    ctx->q = std::move(q);
    ctx->k = std::move(k);
    ctx->v = std::move(v);
    ctx->attn = attn;
  }
  return CrossAttentionResult{std::move(attn), std::move(agg)};
}

void cross_attention_backward(const MutualAttentionLayer& layer,
                              AttentionDirection direction, const CrossAttentionCtx& ctx,
                              const Tensor& grad_agg, Tensor& g_query_feats,
                              Tensor& g_kv_feats, GradStore& grads) {
  const bool to_joint = direction == AttentionDirection::kVertexToJoint;
  const LinearLayer& wq = to_joint ? layer.query_j : layer.query_v;
  const LinearLayer& wk = to_joint ? layer.key_v : layer.key_j;
  const LinearLayer& wv = to_joint ? layer.value_v : layer.value_j;

  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(ctx.q.cols()));
  Tensor g_attn = matmul_nt(grad_agg, ctx.v);
  Tensor g_v = matmul_tn(ctx.attn, grad_agg);
  Tensor g_logits = scaled(softmax_rows_backward(ctx.attn, g_attn), scale);
  Tensor g_q = matmul(g_logits, ctx.k);
  Tensor g_k = matmul_tn(g_logits, ctx.q);

  add_inplace(g_query_feats, linear_backward(wq, ctx.query_in, g_q, grads));
  add_inplace(g_kv_feats, linear_backward(wk, ctx.key_in, g_k, grads));
  add_inplace(g_kv_feats, linear_backward(wv, ctx.value_in, g_v, grads));
}

NodeFeatures fuse(const NodeFeatures& nf_hat, const Tensor& agg_j, const Tensor& agg_v,
                  const MutualAttentionLayer& layer, FuseCtx* ctx) {
  check(agg_j.rows() == nf_hat.joint_feats.rows() &&
            agg_j.cols() == nf_hat.joint_feats.cols(),
        "fuse: aggregated joint features shape mismatch");
  check(agg_v.rows() == nf_hat.vertex_feats.rows() &&
            agg_v.cols() == nf_hat.vertex_feats.cols(),
        "fuse: aggregated vertex features shape mismatch");
  Tensor jf = mlp_forward(layer.fuse_j, concat_cols(nf_hat.joint_feats, agg_j),
                          ctx ? &ctx->joint_mlp : nullptr);
  Tensor vf = mlp_forward(layer.fuse_v, concat_cols(nf_hat.vertex_feats, agg_v),
                          ctx ? &ctx->vertex_mlp : nullptr);
  return NodeFeatures{std::move(jf), std::move(vf)};
}

FuseGrads fuse_backward(const MutualAttentionLayer& layer, const FuseCtx& ctx,
                        const Tensor& grad_joint_out, const Tensor& grad_vertex_out,
                        GradStore& grads) {
  Tensor g_cat_j = mlp_backward(layer.fuse_j, ctx.joint_mlp, grad_joint_out, grads);
  Tensor g_cat_v = mlp_backward(layer.fuse_v, ctx.vertex_mlp, grad_vertex_out, grads);
  FuseGrads out;
  split_cols(g_cat_j, g_cat_j.cols() / 2, &out.joint_own, &out.joint_agg);
  split_cols(g_cat_v, g_cat_v.cols() / 2, &out.vertex_own, &out.vertex_agg);
  return out;
}

RefinerStack make_refiner(Rng& rng, std::size_t num_joints, std::size_t num_vertices,
                          std::size_t width, std::size_t num_blocks, bool use_intra,
                          bool use_attention) {
  check(num_blocks >= 1, "refiner needs at least one block");
  RefinerStack stack;
  stack.width = width;
  const std::size_t c = width;
  stack.joint_embed = make_linear(rng, kGlobalFeatureDim + 3, c);
  stack.vertex_embed = make_linear(rng, kGlobalFeatureDim + 3, c);
  for (std::size_t b = 0; b < num_blocks; ++b) {
    RefinerBlock block;
    block.has_intra = use_intra;
    block.has_attention = use_attention;
    if (use_intra) {
      block.joint_intra = make_gconv(rng, c, c);
      block.vertex_intra = make_semgconv(rng, c, c, num_vertices);
    }
    if (use_attention) {
      block.attention.query_j = make_linear(rng, c, c);
      block.attention.key_j = make_linear(rng, c, c);
      block.attention.value_j = make_linear(rng, c, c);
      block.attention.query_v = make_linear(rng, c, c);
      block.attention.key_v = make_linear(rng, c, c);
      block.attention.value_v = make_linear(rng, c, c);
      block.attention.fuse_j = make_mlp(rng, 2 * c, c, c);
      block.attention.fuse_v = make_mlp(rng, 2 * c, c, c);
    }
    stack.blocks.push_back(std::move(block));
  }
  stack.joint_head = make_mlp(rng, c, c, 3, /*zero_out_layer=*/true);
  stack.vertex_head = make_mlp(rng, c, c, 3, /*zero_out_layer=*/true);
  return stack;
}

RefineResult refine_forward(const RefinerStack& stack, const Tensor& f_global,
                            const Joints3D& j3d, const HandMesh& mesh,
                            const Tensor& joint_norm_adj, const Graph& vertex_graph,
                            RefinerCtx* ctx) {
  NodeFeatures init = init_node_features(f_global, j3d, mesh);
  if (ctx) {
    ctx->init_joint_feats = init.joint_feats;
    ctx->init_vertex_feats = init.vertex_feats;
    ctx->blocks.resize(stack.blocks.size());
  }
  NodeFeatures nf{linear_forward(stack.joint_embed, init.joint_feats),
                  linear_forward(stack.vertex_embed, init.vertex_feats)};
  for (std::size_t b = 0; b < stack.blocks.size(); ++b) {
    const RefinerBlock& block = stack.blocks[b];
    RefinerBlockCtx* bctx = ctx ? &ctx->blocks[b] : nullptr;
    if (block.has_intra)
      nf = intra_graph_update(nf, block, joint_norm_adj, vertex_graph, bctx);
    if (block.has_attention) {
      CrossAttentionResult to_joint =
          cross_attention(nf, block.attention, AttentionDirection::kVertexToJoint,
                          bctx ? &bctx->to_joint : nullptr);
      CrossAttentionResult to_vertex =
          cross_attention(nf, block.attention, AttentionDirection::kJointToVertex,
                          bctx ? &bctx->to_vertex : nullptr);
      nf = fuse(nf, to_joint.aggregated, to_vertex.aggregated, block.attention,
                bctx ? &bctx->fuse : nullptr);
    }
  }
  Tensor joint_delta = mlp_forward(stack.joint_head, nf.joint_feats,
                                   ctx ? &ctx->joint_head : nullptr);
  Tensor vertex_delta = mlp_forward(stack.vertex_head, nf.vertex_feats,
                                    ctx ? &ctx->vertex_head : nullptr);
  return RefineResult{HandMesh{add(mesh.vertices, vertex_delta)},
                      Joints3D{add(j3d.joints, joint_delta)}};
}

RefineInputGrads refine_backward(const RefinerStack& stack, const Tensor& joint_norm_adj,
                                 const Graph& vertex_graph, const RefinerCtx& ctx,
                                 const Tensor& grad_vertices, const Tensor& grad_joints,
                                 GradStore& grads) {
  // Residual heads: coordinates pass straight through.
  Tensor g_jf = mlp_backward(stack.joint_head, ctx.joint_head, grad_joints, grads);
  Tensor g_vf = mlp_backward(stack.vertex_head, ctx.vertex_head, grad_vertices, grads);

  for (std::size_t b = stack.blocks.size(); b-- > 0;) {
    const RefinerBlock& block = stack.blocks[b];
    const RefinerBlockCtx& bctx = ctx.blocks[b];
    if (block.has_attention) {
      FuseGrads fg = fuse_backward(block.attention, bctx.fuse, g_jf, g_vf, grads);
      g_jf = std::move(fg.joint_own);
      g_vf = std::move(fg.vertex_own);
      cross_attention_backward(block.attention, AttentionDirection::kVertexToJoint,
                               bctx.to_joint, fg.joint_agg, g_jf, g_vf, grads);
      cross_attention_backward(block.attention, AttentionDirection::kJointToVertex,
                               bctx.to_vertex, fg.vertex_agg, g_vf, g_jf, grads);
    }
    if (block.has_intra) {
      g_jf = gconv_backward(block.joint_intra, joint_norm_adj, bctx.joint_intra, g_jf, grads);
      g_vf = semgconv_backward(block.vertex_intra, vertex_graph, bctx.vertex_intra, g_vf,
                               grads);
    }
  }

  Tensor g_init_j = linear_backward(stack.joint_embed, ctx.init_joint_feats, g_jf, grads);
  Tensor g_init_v = linear_backward(stack.vertex_embed, ctx.init_vertex_feats, g_vf, grads);

  RefineInputGrads out{Tensor({kGlobalFeatureDim}),
                       Tensor({g_init_j.rows(), std::size_t(3)}),
                       Tensor({g_init_v.rows(), std::size_t(3)})};
  for (std::size_t i = 0; i < g_init_j.rows(); ++i) {
    for (std::size_t k = 0; k < kGlobalFeatureDim; ++k) out.f_global[k] += g_init_j(i, k);
    for (int k = 0; k < 3; ++k) out.joints(i, k) = g_init_j(i, kGlobalFeatureDim + k);
  }
  for (std::size_t i = 0; i < g_init_v.rows(); ++i) {
    for (std::size_t k = 0; k < kGlobalFeatureDim; ++k) out.f_global[k] += g_init_v(i, k);
    for (int k = 0; k < 3; ++k) out.vertices(i, k) = g_init_v(i, kGlobalFeatureDim + k);
  }
  // Residual skips from the coordinate heads.
  add_inplace(out.joints, grad_joints);
  add_inplace(out.vertices, grad_vertices);
  return out;
}

void collect_refiner_params(RefinerStack& stack, std::vector<ParamRef>& out) {
  collect_linear_params(stack.joint_embed, "refiner.joint_embed", out);
  collect_linear_params(stack.vertex_embed, "refiner.vertex_embed", out);
  for (std::size_t b = 0; b < stack.blocks.size(); ++b) {
    RefinerBlock& block = stack.blocks[b];
    const std::string p = "refiner.block" + std::to_string(b);
    if (block.has_intra) {
      collect_gconv_params(block.joint_intra, p + ".joint_intra", out);
      collect_semgconv_params(block.vertex_intra, p + ".vertex_intra", out);
    }
    if (block.has_attention) {
      MutualAttentionLayer& a = block.attention;
      collect_linear_params(a.query_j, p + ".attn.query_j", out);
      collect_linear_params(a.key_j, p + ".attn.key_j", out);
      collect_linear_params(a.value_j, p + ".attn.value_j", out);
      collect_linear_params(a.query_v, p + ".attn.query_v", out);
      collect_linear_params(a.key_v, p + ".attn.key_v", out);
      collect_linear_params(a.value_v, p + ".attn.value_v", out);
      collect_mlp_params(a.fuse_j, p + ".attn.fuse_j", out);
      collect_mlp_params(a.fuse_v, p + ".attn.fuse_v", out);
    }
  }
  collect_mlp_params(stack.joint_head, "refiner.joint_head", out);
  collect_mlp_params(stack.vertex_head, "refiner.vertex_head", out);
}

}  // namespace manograph
