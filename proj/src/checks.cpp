#include "manograph/checks.hpp"

#include "manograph/losses.hpp"
#include "manograph/mano.hpp"
#include "manograph/pipeline.hpp"
#include "manograph/refiner.hpp"
#include "manograph/regressor.hpp"

namespace manograph {

GradCheckReport finite_diff_against(Tensor* target, const std::function<Scalar()>& forward,
                                    const Tensor& analytic, Scalar eps) {
  const Tensor saved = *target;
  auto f = [&](const Tensor& x) {
    *target = x;
    return forward();
  };
  GradCheckReport report = finite_diff_grad_check(f, analytic, saved, eps);
  *target = saved;
  return report;
}

namespace {

// Random but fixed cotangent so op outputs reduce to a scalar.
Scalar contract(const Tensor& out, const Tensor& cotangent) { return dot(out, cotangent); }

void add_rodrigues_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  Tensor w = rng.uniform_tensor({3}, -1.5, 1.5);
  const Tensor cot = rng.uniform_tensor({3, 3}, -1, 1);
  auto forward = [&]() { return contract(rodrigues(w), cot); };
  const Tensor analytic = rodrigues_backward(w, cot);
  cases.push_back({"rodrigues.axis_angle", finite_diff_against(&w, forward, analytic)});
}

void add_mano_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  Rng model_rng = rng.fork(11);
  ManoModel model = make_toy_model(model_rng, 10, 3);
  PoseParams pose{rng.uniform_tensor({3, 3}, -0.6, 0.6)};
  ShapeParams shape{rng.uniform_tensor({10}, -1, 1)};
  const Tensor cot_v = rng.uniform_tensor({10, 3}, -1, 1);
  const Tensor cot_j = rng.uniform_tensor({3, 3}, -1, 1);

  auto forward = [&]() {
    ManoOutput out = mano_forward(model, pose, shape);
    return contract(out.mesh.vertices, cot_v) + contract(out.joints, cot_j);
  };
  auto analytic = [&]() {
    ManoCache cache;
    mano_forward(model, pose, shape, &cache);
    return mano_backward(model, cache, cot_v, cot_j);
  };
  cases.push_back({"mano_forward.theta",
                   finite_diff_against(&pose.theta, forward, analytic().theta)});
  cases.push_back({"mano_forward.beta",
                   finite_diff_against(&shape.beta, forward, analytic().beta)});
}

void add_semgconv_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  const Graph chain = Graph::from_parents({-1, 0, 1}, {});
  SemGConvLayer layer = make_semgconv(rng, 4, 5, 3);
  layer.mask = rng.uniform_tensor({3, 3}, -1, 1);
  layer.bias = rng.uniform_tensor({5}, -0.5, 0.5);
  Tensor x = rng.uniform_tensor({3, 4}, -1, 1);
  const Tensor cot = rng.uniform_tensor({3, 5}, -1, 1);

  auto forward = [&]() { return contract(semgconv_forward(layer, x, chain), cot); };
  auto grads_at = [&]() {
    SemGConvCtx ctx;
    semgconv_forward(layer, x, chain, &ctx);
    GradStore gs;
    Tensor gx = semgconv_backward(layer, chain, ctx, cot, gs);
    return std::tuple<Tensor, Tensor, Tensor>(gx, *gs.find(layer.weight), *gs.find(layer.mask));
  };
  auto [gx, gw, gm] = grads_at();
  cases.push_back({"semgconv.x", finite_diff_against(&x, forward, gx)});
  cases.push_back({"semgconv.weight", finite_diff_against(&layer.weight, forward, gw)});
  cases.push_back({"semgconv.mask", finite_diff_against(&layer.mask, forward, gm)});
}

void add_gconv_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  const Graph g = Graph::from_parents({-1, 0, 0, 2}, {});
  const Tensor norm_adj = normalize_adjacency(g);
  GConvLayer layer = make_gconv(rng, 3, 4);
  layer.bias = rng.uniform_tensor({4}, -0.5, 0.5);
  Tensor x = rng.uniform_tensor({4, 3}, -1, 1);
  const Tensor cot = rng.uniform_tensor({4, 4}, -1, 1);

  auto forward = [&]() { return contract(gconv_forward(layer, x, norm_adj), cot); };
  GConvCtx ctx;
  gconv_forward(layer, x, norm_adj, &ctx);
  GradStore gs;
  Tensor gx = gconv_backward(layer, norm_adj, ctx, cot, gs);
  cases.push_back({"gconv.x", finite_diff_against(&x, forward, gx)});
  cases.push_back(
      {"gconv.weight", finite_diff_against(&layer.weight, forward, *gs.find(layer.weight))});
}

void add_soft_argmax_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  Heatmaps h{rng.uniform_tensor({2, 4, 5}, -1, 2)};
  const Tensor cot = rng.uniform_tensor({2, 2}, -1, 1);
  auto forward = [&]() { return contract(soft_argmax(h).joints, cot); };
  SoftArgmaxCtx ctx;
  soft_argmax(h, &ctx);
  const Tensor analytic = soft_argmax_backward(h, ctx, cot);
  cases.push_back({"soft_argmax.heatmaps", finite_diff_against(&h.maps, forward, analytic)});
}

MutualAttentionLayer toy_attention(Rng& rng, std::size_t c) {
  MutualAttentionLayer layer;
  layer.query_j = make_linear(rng, c, c);
  layer.key_j = make_linear(rng, c, c);
  layer.value_j = make_linear(rng, c, c);
  layer.query_v = make_linear(rng, c, c);
  layer.key_v = make_linear(rng, c, c);
  layer.value_v = make_linear(rng, c, c);
  layer.fuse_j = make_mlp(rng, 2 * c, c, c);
  layer.fuse_v = make_mlp(rng, 2 * c, c, c);
  return layer;
}

void add_cross_attention_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  const std::size_t c = 4;
  MutualAttentionLayer layer = toy_attention(rng, c);
  NodeFeatures nf{rng.uniform_tensor({3, c}, -1, 1), rng.uniform_tensor({6, c}, -1, 1)};
  const Tensor cot = rng.uniform_tensor({3, c}, -1, 1);

  auto forward = [&]() {
    return contract(
        cross_attention(nf, layer, AttentionDirection::kVertexToJoint).aggregated, cot);
  };
  auto grads_at = [&]() {
    CrossAttentionCtx ctx;
    cross_attention(nf, layer, AttentionDirection::kVertexToJoint, &ctx);
    GradStore gs;
    Tensor gq = Tensor::zeros(nf.joint_feats.shape());
    Tensor gkv = Tensor::zeros(nf.vertex_feats.shape());
    cross_attention_backward(layer, AttentionDirection::kVertexToJoint, ctx, cot, gq, gkv, gs);
    return std::tuple<Tensor, Tensor, Tensor, Tensor>(
        gq, gkv, *gs.find(layer.query_j.weight), *gs.find(layer.value_v.weight));
  };
  auto [gq, gkv, gwq, gwv] = grads_at();
  cases.push_back({"cross_attention.query_feats",
                   finite_diff_against(&nf.joint_feats, forward, gq)});
  cases.push_back({"cross_attention.kv_feats",
                   finite_diff_against(&nf.vertex_feats, forward, gkv)});
  cases.push_back({"cross_attention.query_proj",
                   finite_diff_against(&layer.query_j.weight, forward, gwq)});
  cases.push_back({"cross_attention.value_proj",
                   finite_diff_against(&layer.value_v.weight, forward, gwv)});
}

void add_fuse_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  const std::size_t c = 4;
  MutualAttentionLayer layer = toy_attention(rng, c);
  NodeFeatures nf{rng.uniform_tensor({3, c}, -1, 1), rng.uniform_tensor({6, c}, -1, 1)};
  Tensor agg_j = rng.uniform_tensor({3, c}, -1, 1);
  Tensor agg_v = rng.uniform_tensor({6, c}, -1, 1);
  const Tensor cot_j = rng.uniform_tensor({3, c}, -1, 1);
  const Tensor cot_v = rng.uniform_tensor({6, c}, -1, 1);

  auto forward = [&]() {
    NodeFeatures out = fuse(nf, agg_j, agg_v, layer);
    return contract(out.joint_feats, cot_j) + contract(out.vertex_feats, cot_v);
  };
  FuseCtx ctx;
  fuse(nf, agg_j, agg_v, layer, &ctx);
  GradStore gs;
  FuseGrads fg = fuse_backward(layer, ctx, cot_j, cot_v, gs);
  cases.push_back({"fuse.joint_feats", finite_diff_against(&nf.joint_feats, forward, fg.joint_own)});
  cases.push_back({"fuse.joint_agg", finite_diff_against(&agg_j, forward, fg.joint_agg)});
  cases.push_back({"fuse.vertex_agg", finite_diff_against(&agg_v, forward, fg.vertex_agg)});
  cases.push_back({"fuse.mlp_weight", finite_diff_against(&layer.fuse_j.hidden.weight, forward,
                                                          *gs.find(layer.fuse_j.hidden.weight))});
}

void add_refine_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  // Toy refiner: 12 vertices, 2 articulated joints + 5 tips, narrow width.
  Rng model_rng = rng.fork(23);
  ManoModel model = make_toy_model(model_rng, 12, 2);
  GraphContext graphs = build_graphs(model);
  RefinerStack stack = make_refiner(rng, graphs.joint_graph.size(), model.num_vertices(), 6,
                                    1, true, true);
  // Heads start at zero; give them signal so their grads are exercised too.
  stack.joint_head.out = make_linear(rng, 6, 3);
  stack.vertex_head.out = make_linear(rng, 6, 3);
  // The shared f_global channels make node features near-identical at init,
  // which leaves the attention logits row-constant and the query/key
  // gradients too small for central differences to resolve. Boosting the
  // coordinate channels of the embeddings gives a generic, well-conditioned
  // point for the Jacobian check.
  for (Tensor* w : {&stack.joint_embed.weight, &stack.vertex_embed.weight})
    for (std::size_t r = 2048; r < w->rows(); ++r)
      for (std::size_t c = 0; c < w->cols(); ++c) (*w)(r, c) *= Scalar(20);

  Tensor f_global = rng.uniform_tensor({2048}, -1, 1);
  Joints3D j3d{rng.uniform_tensor({graphs.joint_graph.size(), 3}, -1, 1)};
  HandMesh mesh{rng.uniform_tensor({model.num_vertices(), 3}, -1, 1)};
  const Tensor cot_v = rng.uniform_tensor({model.num_vertices(), 3}, -1, 1);
  const Tensor cot_j = rng.uniform_tensor({graphs.joint_graph.size(), 3}, -1, 1);

  auto forward = [&]() {
    RefineResult out = refine_forward(stack, f_global, j3d, mesh, graphs.joint_norm_adj,
                                      graphs.vertex_graph);
    return contract(out.mesh.vertices, cot_v) + contract(out.joints.joints, cot_j);
  };
  RefinerCtx ctx;
  refine_forward(stack, f_global, j3d, mesh, graphs.joint_norm_adj, graphs.vertex_graph, &ctx);
  GradStore gs;
  RefineInputGrads rig = refine_backward(stack, graphs.joint_norm_adj, graphs.vertex_graph,
                                         ctx, cot_v, cot_j, gs);
  cases.push_back({"refine.vertices", finite_diff_against(&mesh.vertices, forward, rig.vertices)});
  cases.push_back({"refine.joints", finite_diff_against(&j3d.joints, forward, rig.joints)});
  cases.push_back({"refine.f_global", finite_diff_against(&f_global, forward, rig.f_global)});

  // Every parameter of the single basic block, plus the heads.
  std::vector<ParamRef> params;
  collect_refiner_params(stack, params);
  for (ParamRef& ref : params) {
    if (ref.name.find(".block0.") == std::string::npos &&
        ref.name.find("_head") == std::string::npos)
      continue;
    cases.push_back(
        {"refine." + ref.name, finite_diff_against(ref.value, forward, *gs.find(*ref.value))});
  }
}

void add_loss_cases(Rng& rng, std::vector<GradCheckCase>& cases) {
  Rng model_rng = rng.fork(31);
  const ManoModel model = make_toy_model(model_rng, 9, 3);
  const auto& faces = model.faces;

  ManoQuantities pred;
  pred.vertices = rng.uniform_tensor({9, 3}, -0.1, 0.1);
  pred.joints = rng.uniform_tensor({8, 3}, -0.1, 0.1);
  pred.theta = rng.uniform_tensor({3, 3}, -0.5, 0.5);
  pred.beta = rng.uniform_tensor({10}, -1, 1);
  pred.heatmaps = rng.uniform_tensor({8, 4, 4}, 0, 1);
  pred.joints2d = rng.uniform_tensor({8, 2}, 0, 1);
  ManoQuantities gt;
  gt.vertices = rng.uniform_tensor({9, 3}, -0.1, 0.1);
  gt.joints = rng.uniform_tensor({8, 3}, -0.1, 0.1);
  gt.theta = rng.uniform_tensor({3, 3}, -0.5, 0.5);
  gt.beta = rng.uniform_tensor({10}, -1, 1);
  gt.heatmaps = rng.uniform_tensor({8, 4, 4}, 0, 1);
  gt.joints2d = rng.uniform_tensor({8, 2}, 0, 1);

  const ManoLossFlags all;
  auto mano_forward_fn = [&]() { return mano_loss(pred, gt, all).total; };
  const ManoQuantities g = mano_loss_backward(pred, gt, all, 1);
  cases.push_back({"mano_loss.vertices", finite_diff_against(&pred.vertices, mano_forward_fn, g.vertices)});
  cases.push_back({"mano_loss.joints", finite_diff_against(&pred.joints, mano_forward_fn, g.joints)});
  cases.push_back({"mano_loss.theta", finite_diff_against(&pred.theta, mano_forward_fn, g.theta)});
  cases.push_back({"mano_loss.beta", finite_diff_against(&pred.beta, mano_forward_fn, g.beta)});
  cases.push_back({"mano_loss.heatmaps", finite_diff_against(&pred.heatmaps, mano_forward_fn, g.heatmaps)});
  cases.push_back({"mano_loss.joints2d", finite_diff_against(&pred.joints2d, mano_forward_fn, g.joints2d)});

  HandMesh v_tilde{rng.uniform_tensor({9, 3}, -0.1, 0.1)};
  Joints3D j_tilde{rng.uniform_tensor({8, 3}, -0.1, 0.1)};
  const HandMesh gt_mesh{rng.uniform_tensor({9, 3}, -0.1, 0.1)};
  const Joints3D gt_joints{rng.uniform_tensor({8, 3}, -0.1, 0.1)};

  auto ref_forward = [&]() { return refinement_loss(v_tilde, j_tilde, gt_mesh, gt_joints); };
  Tensor grv, grj;
  refinement_loss_backward(v_tilde, j_tilde, gt_mesh, gt_joints, 1, &grv, &grj);
  cases.push_back({"refinement_loss.vertices", finite_diff_against(&v_tilde.vertices, ref_forward, grv)});
  cases.push_back({"refinement_loss.joints", finite_diff_against(&j_tilde.joints, ref_forward, grj)});

  auto edge_forward = [&]() { return edge_loss(v_tilde, gt_mesh, faces).value; };
  cases.push_back({"edge_loss.vertices",
                   finite_diff_against(&v_tilde.vertices, edge_forward,
                                       edge_loss_backward(v_tilde, gt_mesh, faces, 1))});

  auto normal_forward = [&]() { return normal_loss(v_tilde, gt_mesh, faces).value; };
  cases.push_back({"normal_loss.vertices",
                   finite_diff_against(&v_tilde.vertices, normal_forward,
                                       normal_loss_backward(v_tilde, gt_mesh, faces, 1))});

  LossWeights weights;
  weights.lambda1 = 0.7;
  weights.lambda2 = 1.3;
  weights.lambda3 = 0.5;
  weights.lambda4 = 0.2;
  Tensor terms = rng.uniform_tensor({4}, 0, 2);
  auto total_forward = [&]() {
    return total_loss(weights, terms[0], terms[1], terms[2], terms[3]).total;
  };
  const Tensor lambdas =
      Tensor::vector({weights.lambda1, weights.lambda2, weights.lambda3, weights.lambda4});
  cases.push_back({"total_loss.terms", finite_diff_against(&terms, total_forward, lambdas)});
}

}  // namespace

std::vector<GradCheckCase> gradient_check_suite() {
  Rng rng(7243001);
  std::vector<GradCheckCase> cases;
  add_rodrigues_cases(rng, cases);
  add_mano_cases(rng, cases);
  add_semgconv_cases(rng, cases);
  add_gconv_cases(rng, cases);
  add_soft_argmax_cases(rng, cases);
  add_cross_attention_cases(rng, cases);
  add_fuse_cases(rng, cases);
  add_refine_cases(rng, cases);
  add_loss_cases(rng, cases);
  return cases;
}

}  // namespace manograph
