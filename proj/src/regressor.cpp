#include "manograph/regressor.hpp"

#include <cmath>

namespace manograph {

namespace {

// Residual pair of graph layers; the skip is added after the second layer.
template <typename Layer, typename Ctx, typename Fwd>
Tensor residual_pair(const Layer& first, const Layer& second, const Tensor& x, Fwd&& fwd,
                     std::array<Ctx, 2>* ctx) {
  Tensor h = fwd(first, x, ctx ? &(*ctx)[0] : nullptr);
  Tensor out = fwd(second, h, ctx ? &(*ctx)[1] : nullptr);
  add_inplace(out, x);
  return out;
}

}  // namespace

PoseEncoder make_pose_encoder(Rng& rng, EncoderKind kind, std::size_t num_graph_nodes,
                              std::size_t num_joints, std::size_t latent_width,
                              std::size_t num_blocks) {
  PoseEncoder e;
  e.kind = kind;
  e.latent_width = latent_width;
  const std::size_t n = num_graph_nodes, c = latent_width;
  switch (kind) {
    case EncoderKind::kSemGcn:
      e.sem_lift = make_semgconv(rng, 2, c, n);
      for (std::size_t b = 0; b < num_blocks; ++b)
        e.sem_blocks.push_back({make_semgconv(rng, c, c, n), make_semgconv(rng, c, c, n)});
      break;
    case EncoderKind::kGcn:
      e.gcn_lift = make_gconv(rng, 2, c);
      for (std::size_t b = 0; b < num_blocks; ++b)
        e.gcn_blocks.push_back({make_gconv(rng, c, c), make_gconv(rng, c, c)});
      break;
    case EncoderKind::kMlp:
      e.mlp = make_mlp(rng, n * 2, c, num_joints * c);
      break;
  }
  if (kind != EncoderKind::kMlp) {
    // Select the articulated joints at init.
    e.reduce = Tensor({num_joints, n});
    for (std::size_t j = 0; j < num_joints; ++j) e.reduce(j, j) = Scalar(1);
  }
  return e;
}

PoseLatent encode_pose(const PoseEncoder& encoder, const Joints2D& j2d,
                       const Graph& joint_graph, const Tensor& joint_norm_adj,
                       EncoderCtx* ctx) {
  const Tensor& x = j2d.joints;
  check(x.ndim() == 2 && x.cols() == 2, "encode_pose: joints must be (n, 2)");
  check(x.all_finite(), "encode_pose: non-finite joints");
  if (ctx) ctx->j2d = x;

  if (encoder.kind == EncoderKind::kMlp) {
    Tensor flat = x.reshaped({1, x.size()});
    Tensor latent = mlp_forward(encoder.mlp, flat, ctx ? &ctx->mlp_ctx : nullptr);
    const std::size_t k = latent.size() / encoder.latent_width;
    return PoseLatent{latent.reshaped({k, encoder.latent_width})};
  }

  Tensor h;
  if (encoder.kind == EncoderKind::kSemGcn) {
    if (ctx) ctx->sem_block_ctx.resize(encoder.sem_blocks.size());
    h = semgconv_forward(encoder.sem_lift, x, joint_graph,
                         ctx ? &ctx->sem_lift_ctx : nullptr);
    for (std::size_t b = 0; b < encoder.sem_blocks.size(); ++b)
      h = residual_pair<SemGConvLayer, SemGConvCtx>(
          encoder.sem_blocks[b].first, encoder.sem_blocks[b].second, h,
          [&](const SemGConvLayer& l, const Tensor& in, SemGConvCtx* c) {
            return semgconv_forward(l, in, joint_graph, c);
          },
          ctx ? &ctx->sem_block_ctx[b] : nullptr);
  } else {
    if (ctx) ctx->gcn_block_ctx.resize(encoder.gcn_blocks.size());
    h = gconv_forward(encoder.gcn_lift, x, joint_norm_adj,
                      ctx ? &ctx->gcn_lift_ctx : nullptr);
    for (std::size_t b = 0; b < encoder.gcn_blocks.size(); ++b)
      h = residual_pair<GConvLayer, GConvCtx>(
          encoder.gcn_blocks[b].first, encoder.gcn_blocks[b].second, h,
          [&](const GConvLayer& l, const Tensor& in, GConvCtx* c) {
            return gconv_forward(l, in, joint_norm_adj, c);
          },
          ctx ? &ctx->gcn_block_ctx[b] : nullptr);
  }
  if (ctx) ctx->node_feats = h;
  return PoseLatent{matmul(encoder.reduce, h)};
}

Tensor encode_pose_backward(const PoseEncoder& encoder, const Graph& joint_graph,
                            const Tensor& joint_norm_adj, const EncoderCtx& ctx,
                            const Tensor& grad_latent, GradStore& grads) {
  if (encoder.kind == EncoderKind::kMlp) {
    Tensor g_flat = grad_latent.reshaped({1, grad_latent.size()});
    Tensor g_in = mlp_backward(encoder.mlp, ctx.mlp_ctx, g_flat, grads);
    return g_in.reshaped({ctx.j2d.rows(), std::size_t(2)});
  }

  grads.add(encoder.reduce, matmul_nt(grad_latent, ctx.node_feats));
  Tensor g_h = matmul_tn(encoder.reduce, grad_latent);

  if (encoder.kind == EncoderKind::kSemGcn) {
    for (std::size_t b = encoder.sem_blocks.size(); b-- > 0;) {
      Tensor g_mid = semgconv_backward(encoder.sem_blocks[b].second, joint_graph,
                                       ctx.sem_block_ctx[b][1], g_h, grads);
      Tensor g_in = semgconv_backward(encoder.sem_blocks[b].first, joint_graph,
                                      ctx.sem_block_ctx[b][0], g_mid, grads);
      add_inplace(g_in, g_h);  // skip connection
      g_h = std::move(g_in);
    }
    return semgconv_backward(encoder.sem_lift, joint_graph, ctx.sem_lift_ctx, g_h, grads);
  }

  for (std::size_t b = encoder.gcn_blocks.size(); b-- > 0;) {
    Tensor g_mid = gconv_backward(encoder.gcn_blocks[b].second, joint_norm_adj,
                                  ctx.gcn_block_ctx[b][1], g_h, grads);
    Tensor g_in = gconv_backward(encoder.gcn_blocks[b].first, joint_norm_adj,
                                 ctx.gcn_block_ctx[b][0], g_mid, grads);
    add_inplace(g_in, g_h);
    g_h = std::move(g_in);
  }
  return gconv_backward(encoder.gcn_lift, joint_norm_adj, ctx.gcn_lift_ctx, g_h, grads);
}

void collect_encoder_params(PoseEncoder& encoder, std::vector<ParamRef>& out) {
  switch (encoder.kind) {
    case EncoderKind::kSemGcn:
      collect_semgconv_params(encoder.sem_lift, "encoder.lift", out);
      for (std::size_t b = 0; b < encoder.sem_blocks.size(); ++b) {
        const std::string p = "encoder.block" + std::to_string(b);
        collect_semgconv_params(encoder.sem_blocks[b].first, p + ".first", out);
        collect_semgconv_params(encoder.sem_blocks[b].second, p + ".second", out);
      }
      break;
    case EncoderKind::kGcn:
      collect_gconv_params(encoder.gcn_lift, "encoder.lift", out);
      for (std::size_t b = 0; b < encoder.gcn_blocks.size(); ++b) {
        const std::string p = "encoder.block" + std::to_string(b);
        collect_gconv_params(encoder.gcn_blocks[b].first, p + ".first", out);
        collect_gconv_params(encoder.gcn_blocks[b].second, p + ".second", out);
      }
      break;
    case EncoderKind::kMlp:
      collect_mlp_params(encoder.mlp, "encoder.mlp", out);
      break;
  }
  if (encoder.kind != EncoderKind::kMlp)
    out.push_back({"encoder.reduce", &encoder.reduce});
}

PoseDecoder make_pose_decoder(Rng& rng, EncoderKind kind, std::size_t num_joints,
                              std::size_t latent_width) {
  PoseDecoder d;
  d.kind = kind;
  const std::size_t c = latent_width;
  if (kind == EncoderKind::kSemGcn)
    d.sem = make_semgconv(rng, c, c, num_joints);
  else if (kind == EncoderKind::kGcn)
    d.gcn = make_gconv(rng, c, c);
  // Zero output layer: theta starts at the rest pose.
  d.mlp = make_mlp(rng, c, c, 3, /*zero_out_layer=*/true);
  return d;
}

PoseParams decode_pose(const PoseDecoder& decoder, const PoseLatent& latent,
                       const Graph& kinematic_graph, const Tensor& kin_norm_adj,
                       DecoderCtx* ctx) {
  const Tensor& z = latent.theta_latent;
  check(z.ndim() == 2, "decode_pose: latent must be (K, C)");
  check(z.all_finite(), "decode_pose: non-finite latent");
  if (ctx) ctx->latent = z;
  Tensor h;
  switch (decoder.kind) {
    case EncoderKind::kSemGcn:
      h = semgconv_forward(decoder.sem, z, kinematic_graph, ctx ? &ctx->sem_ctx : nullptr);
      break;
    case EncoderKind::kGcn:
      h = gconv_forward(decoder.gcn, z, kin_norm_adj, ctx ? &ctx->gcn_ctx : nullptr);
      break;
    case EncoderKind::kMlp:
      h = z;
      break;
  }
  if (ctx) ctx->graph_out = h;
  Tensor theta = mlp_forward(decoder.mlp, h, ctx ? &ctx->mlp_ctx : nullptr);
  return PoseParams{theta};
}

Tensor decode_pose_backward(const PoseDecoder& decoder, const Graph& kinematic_graph,
                            const Tensor& kin_norm_adj, const DecoderCtx& ctx,
                            const Tensor& grad_theta, GradStore& grads) {
  Tensor g_h = mlp_backward(decoder.mlp, ctx.mlp_ctx, grad_theta, grads);
  switch (decoder.kind) {
    case EncoderKind::kSemGcn:
      return semgconv_backward(decoder.sem, kinematic_graph, ctx.sem_ctx, g_h, grads);
    case EncoderKind::kGcn:
      return gconv_backward(decoder.gcn, kin_norm_adj, ctx.gcn_ctx, g_h, grads);
    case EncoderKind::kMlp:
      return g_h;
  }
  return g_h;
}

void collect_decoder_params(PoseDecoder& decoder, std::vector<ParamRef>& out) {
  if (decoder.kind == EncoderKind::kSemGcn)
    collect_semgconv_params(decoder.sem, "decoder.graph", out);
  else if (decoder.kind == EncoderKind::kGcn)
    collect_gconv_params(decoder.gcn, "decoder.graph", out);
  collect_mlp_params(decoder.mlp, "decoder.mlp", out);
}

ShapeHead make_shape_head(Rng& rng, std::size_t feature_dim, std::size_t hidden,
                          std::size_t num_coeffs) {
  // Zero output layer: beta starts at the mean shape.
  return ShapeHead{make_mlp(rng, feature_dim, hidden, num_coeffs, /*zero_out_layer=*/true)};
}

ShapeParams shape_head_forward(const ShapeHead& head, const Tensor& f_global, MlpCtx* ctx) {
  check(f_global.ndim() == 1 && f_global.size() == head.mlp.hidden.weight.rows(),
        "shape_head: feature length " + std::to_string(f_global.size()) + ", expected " +
            std::to_string(head.mlp.hidden.weight.rows()));
  Tensor row = f_global.reshaped({1, f_global.size()});
  Tensor beta = mlp_forward(head.mlp, row, ctx);
  return ShapeParams{beta.reshaped({beta.size()})};
}

Tensor shape_head_backward(const ShapeHead& head, const MlpCtx& ctx, const Tensor& grad_beta,
                           GradStore& grads) {
  Tensor g = mlp_backward(head.mlp, ctx, grad_beta.reshaped({1, grad_beta.size()}), grads);
  return g.reshaped({g.size()});
}

void collect_shape_head_params(ShapeHead& head, std::vector<ParamRef>& out) {
  collect_mlp_params(head.mlp, "shape_head", out);
}

Joints2D soft_argmax(const Heatmaps& heatmaps, SoftArgmaxCtx* ctx) {
  const Tensor& h = heatmaps.maps;
  check(h.ndim() == 3, "soft_argmax: heatmaps must be (n, h, w)");
  check(h.all_finite(), "soft_argmax: non-finite heatmap");
  const std::size_t n = h.dim(0), rows = h.dim(1), cols = h.dim(2);
  Tensor flat = h.reshaped({n, rows * cols});
  Tensor probs = softmax_rows(flat);
  Tensor out({n, 2});
  for (std::size_t j = 0; j < n; ++j) {
    Scalar x = 0, y = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const Scalar p = probs(j, r * cols + c);
        x += p * (Scalar(c) + Scalar(0.5)) / Scalar(cols);
        y += p * (Scalar(r) + Scalar(0.5)) / Scalar(rows);
      }
    }
    out(j, 0) = x;
    out(j, 1) = y;
  }
  if (ctx) ctx->probs = std::move(probs);
  return Joints2D{out};
}

Tensor soft_argmax_backward(const Heatmaps& heatmaps, const SoftArgmaxCtx& ctx,
                            const Tensor& grad_joints2d) {
  const Tensor& h = heatmaps.maps;
  const std::size_t n = h.dim(0), rows = h.dim(1), cols = h.dim(2);
  Tensor g_probs({n, rows * cols});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        g_probs(j, r * cols + c) =
            grad_joints2d(j, 0) * (Scalar(c) + Scalar(0.5)) / Scalar(cols) +
            grad_joints2d(j, 1) * (Scalar(r) + Scalar(0.5)) / Scalar(rows);
  Tensor g_flat = softmax_rows_backward(ctx.probs, g_probs);
  return g_flat.reshaped({n, rows, cols});
}

}  // namespace manograph
