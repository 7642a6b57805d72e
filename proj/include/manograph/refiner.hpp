#pragma once

#include <vector>

#include "manograph/layers.hpp"
#include "manograph/mano.hpp"

namespace manograph {

/// Per-node feature matrices for the joint and vertex graphs, node-major.
/// Initialized at 2048 + 3 channels, embedded to the working width after.
struct NodeFeatures {
  Tensor joint_feats;   // (n_joints, C)
  Tensor vertex_feats;  // (n_vertices, C)
};

/// Bidirectional single-head attention between the two graphs plus the
/// per-graph fusion units combining own and aggregated features.
struct MutualAttentionLayer {
  LinearLayer query_j, key_j, value_j;  // (C, C) each, applied per node
  LinearLayer query_v, key_v, value_v;
  Mlp fuse_j;  // (2C) -> C
  Mlp fuse_v;
};

struct RefinerBlock {
  GConvLayer joint_intra;      // joint graph update
  SemGConvLayer vertex_intra;  // vertex graph update
  MutualAttentionLayer attention;
  bool has_intra = true;
  bool has_attention = true;
};

/// The refinement stage: feature init, embedding, basic blocks, and residual
/// coordinate heads (zero-initialized, so refinement starts at the identity).
struct RefinerStack {
  LinearLayer joint_embed;   // (2051, C)
  LinearLayer vertex_embed;  // (2051, C)
  std::vector<RefinerBlock> blocks;
  Mlp joint_head;   // C -> 3
  Mlp vertex_head;  // C -> 3
  std::size_t width = 128;
};

enum class AttentionDirection { kVertexToJoint, kJointToVertex };

struct CrossAttentionResult {
  Tensor attention;   // rows sum to 1
  Tensor aggregated;  // attention * values
};

struct CrossAttentionCtx {
  Tensor query_in, key_in, value_in;
  Tensor q, k, v;
  Tensor attn;
};

struct FuseCtx {
  MlpCtx joint_mlp;
  MlpCtx vertex_mlp;
};

struct RefinerBlockCtx {
  GConvCtx joint_intra;
  SemGConvCtx vertex_intra;
  CrossAttentionCtx to_joint;
  CrossAttentionCtx to_vertex;
  FuseCtx fuse;
};

struct RefinerCtx {
  Tensor init_joint_feats;   // (n_j, 2051)
  Tensor init_vertex_feats;  // (n_v, 2051)
  std::vector<RefinerBlockCtx> blocks;
  MlpCtx joint_head;
  MlpCtx vertex_head;
};

// concat(f_global, coordinates) per node.
NodeFeatures init_node_features(const Tensor& f_global, const Joints3D& j3d,
                                const HandMesh& mesh);

// Joint features via ordinary GConv, vertex features via SemGConv.
NodeFeatures intra_graph_update(const NodeFeatures& nf, const RefinerBlock& block,
                                const Tensor& joint_norm_adj, const Graph& vertex_graph,
                                RefinerBlockCtx* ctx = nullptr);

// Scaled dot-product attention across the two graphs; softmax over the key
// axis with 1/sqrt(C) scaling.
CrossAttentionResult cross_attention(const NodeFeatures& nf,
                                     const MutualAttentionLayer& layer,
                                     AttentionDirection direction,
                                     CrossAttentionCtx* ctx = nullptr);

// Accumulates projection grads into `grads` and the feature grads into
// g_query_feats / g_kv_feats (sized like the corresponding node features).
void cross_attention_backward(const MutualAttentionLayer& layer,
                              AttentionDirection direction, const CrossAttentionCtx& ctx,
                              const Tensor& grad_aggregated, Tensor& g_query_feats,
                              Tensor& g_kv_feats, GradStore& grads);

// Channel-concatenates own and aggregated features and applies the fusion
// perceptrons.
NodeFeatures fuse(const NodeFeatures& nf_hat, const Tensor& agg_j, const Tensor& agg_v,
                  const MutualAttentionLayer& layer, FuseCtx* ctx = nullptr);

struct FuseGrads {
  Tensor joint_own, joint_agg;
  Tensor vertex_own, vertex_agg;
};

FuseGrads fuse_backward(const MutualAttentionLayer& layer, const FuseCtx& ctx,
                        const Tensor& grad_joint_out, const Tensor& grad_vertex_out,
                        GradStore& grads);

struct RefineResult {
  HandMesh mesh;    // refined vertices
  Joints3D joints;  // refined joints
};

RefinerStack make_refiner(Rng& rng, std::size_t num_joints, std::size_t num_vertices,
                          std::size_t width, std::size_t num_blocks, bool use_intra,
                          bool use_attention);

RefineResult refine_forward(const RefinerStack& stack, const Tensor& f_global,
                            const Joints3D& j3d, const HandMesh& mesh,
                            const Tensor& joint_norm_adj, const Graph& vertex_graph,
                            RefinerCtx* ctx = nullptr);

struct RefineInputGrads {
  Tensor f_global;  // (2048)
  Tensor joints;    // (n_j, 3)
  Tensor vertices;  // (n_v, 3)
};

RefineInputGrads refine_backward(const RefinerStack& stack, const Tensor& joint_norm_adj,
                                 const Graph& vertex_graph, const RefinerCtx& ctx,
                                 const Tensor& grad_vertices, const Tensor& grad_joints,
                                 GradStore& grads);

void collect_refiner_params(RefinerStack& stack, std::vector<ParamRef>& out);

}  // namespace manograph
