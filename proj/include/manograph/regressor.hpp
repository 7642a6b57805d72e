#pragma once

#include <vector>

#include "manograph/layers.hpp"
#include "manograph/mano.hpp"

namespace manograph {

struct Joints2D {
  Tensor joints;  // (n, 2) normalized image coordinates, nominally [0, 1]
};

struct Heatmaps {
  Tensor maps;  // (n, h, w) activations
};

struct PoseLatent {
  Tensor theta_latent;  // (K, C)
};

// ---- pose encoder ----

enum class EncoderKind { kMlp, kGcn, kSemGcn };

struct ResidualSemBlock {
  SemGConvLayer first;
  SemGConvLayer second;
};

struct ResidualGcnBlock {
  GConvLayer first;
  GConvLayer second;
};

/// Maps 2D joints on the (K+5)-node joint graph to the K x C latent pose.
/// The graph path lifts 2 -> C, runs residual blocks, then applies a learned
/// (K, K+5) node-reduction map initialized to select the articulated joints.
/// The MLP ablation flattens the joints and regresses the latent directly.
struct PoseEncoder {
  EncoderKind kind = EncoderKind::kSemGcn;
  std::size_t latent_width = 128;
  SemGConvLayer sem_lift;
  std::vector<ResidualSemBlock> sem_blocks;
  GConvLayer gcn_lift;
  std::vector<ResidualGcnBlock> gcn_blocks;
  Mlp mlp;        // (n*2) -> hidden -> (K*C), used when kind == kMlp
  Tensor reduce;  // (K, n) node reduction
};

struct EncoderCtx {
  Tensor j2d;
  SemGConvCtx sem_lift_ctx;
  std::vector<std::array<SemGConvCtx, 2>> sem_block_ctx;
  GConvCtx gcn_lift_ctx;
  std::vector<std::array<GConvCtx, 2>> gcn_block_ctx;
  MlpCtx mlp_ctx;
  Tensor node_feats;  // (n, C) before reduction
};

PoseEncoder make_pose_encoder(Rng& rng, EncoderKind kind, std::size_t num_graph_nodes,
                              std::size_t num_joints, std::size_t latent_width,
                              std::size_t num_blocks);

PoseLatent encode_pose(const PoseEncoder& encoder, const Joints2D& j2d,
                       const Graph& joint_graph, const Tensor& joint_norm_adj,
                       EncoderCtx* ctx = nullptr);

// Returns grad w.r.t. the 2D joints.
Tensor encode_pose_backward(const PoseEncoder& encoder, const Graph& joint_graph,
                            const Tensor& joint_norm_adj, const EncoderCtx& ctx,
                            const Tensor& grad_latent, GradStore& grads);

void collect_encoder_params(PoseEncoder& encoder, std::vector<ParamRef>& out);

// ---- pose decoder ----

/// One graph-conv layer over the K-node kinematic graph followed by a
/// per-node perceptron; the final layer has no activation (axis-angle is
/// unbounded). The graph layer follows the encoder ablation kind.
struct PoseDecoder {
  EncoderKind kind = EncoderKind::kSemGcn;
  SemGConvLayer sem;
  GConvLayer gcn;
  Mlp mlp;  // per-node C -> C -> 3
};

struct DecoderCtx {
  Tensor latent;
  SemGConvCtx sem_ctx;
  GConvCtx gcn_ctx;
  Tensor graph_out;
  MlpCtx mlp_ctx;
};

PoseDecoder make_pose_decoder(Rng& rng, EncoderKind kind, std::size_t num_joints,
                              std::size_t latent_width);

PoseParams decode_pose(const PoseDecoder& decoder, const PoseLatent& latent,
                       const Graph& kinematic_graph, const Tensor& kin_norm_adj,
                       DecoderCtx* ctx = nullptr);

Tensor decode_pose_backward(const PoseDecoder& decoder, const Graph& kinematic_graph,
                            const Tensor& kin_norm_adj, const DecoderCtx& ctx,
                            const Tensor& grad_theta, GradStore& grads);

void collect_decoder_params(PoseDecoder& decoder, std::vector<ParamRef>& out);

// ---- shape head ----

/// Two fully-connected layers from the 2048-d global feature to beta.
struct ShapeHead {
  Mlp mlp;
};

ShapeHead make_shape_head(Rng& rng, std::size_t feature_dim, std::size_t hidden,
                          std::size_t num_coeffs);
ShapeParams shape_head_forward(const ShapeHead& head, const Tensor& f_global,
                               MlpCtx* ctx = nullptr);
Tensor shape_head_backward(const ShapeHead& head, const MlpCtx& ctx,
                           const Tensor& grad_beta, GradStore& grads);
void collect_shape_head_params(ShapeHead& head, std::vector<ParamRef>& out);

// ---- heatmap decoding ----

struct SoftArgmaxCtx {
  Tensor probs;  // (n, h*w) spatial softmax per joint
};

/// Center-of-mass decoding: spatial softmax per map, then the expectation of
/// normalized pixel-center coordinates ((c+0.5)/w, (r+0.5)/h).
Joints2D soft_argmax(const Heatmaps& heatmaps, SoftArgmaxCtx* ctx = nullptr);
// grad w.r.t. the raw heatmaps.
Tensor soft_argmax_backward(const Heatmaps& heatmaps, const SoftArgmaxCtx& ctx,
                            const Tensor& grad_joints2d);

}  // namespace manograph
