#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "manograph/archive.hpp"
#include "manograph/gradcheck.hpp"
#include "manograph/graph.hpp"
#include "manograph/losses.hpp"
#include "manograph/mano.hpp"
#include "manograph/metrics.hpp"
#include "manograph/refiner.hpp"
#include "manograph/regressor.hpp"
#include "manograph/synth.hpp"

namespace manograph {

struct PipelineConfig {
  // toy model size (the real model arrives through an archive)
  std::size_t toy_vertices = 64;
  std::size_t toy_joints = 8;
  // widths and depths
  std::size_t latent_width = 128;
  std::size_t encoder_blocks = 2;
  std::size_t refiner_width = 128;
  std::size_t refiner_blocks = 2;
  std::size_t shape_hidden = 512;
  std::size_t heatmap_size = 32;
  Scalar heatmap_sigma_px = 1.5;
  // ablation toggles
  std::string encoder_kind = "semgcn";  // "mlp" | "gcn" | "semgcn"
  bool refiner_intra = true;
  bool refiner_attention = true;
  // training
  Scalar learning_rate = 1e-4;
  std::size_t batch_size = 24;
  LossWeights loss_weights;
  std::uint64_t seed = 0;

  void validate() const;
  // Rejects unknown keys.
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  EncoderKind encoder_kind_enum() const;
};

// Named ablation presets: "B", "B+OG", "B+SG", "B+SG+G", "B+SG+G+MA".
PipelineConfig ablation_config(const std::string& name, PipelineConfig base = {});
const std::vector<std::string>& ablation_names();

/// The fixed graphs of one model plus their cached normalizations.
struct GraphContext {
  Graph joint_graph;      // K + 5 nodes: joints plus fingertip nodes
  Graph kinematic_graph;  // K articulated joints
  Graph vertex_graph;     // mesh vertices
  Tensor joint_norm_adj;
  Tensor kin_norm_adj;
};

GraphContext build_graphs(const ManoModel& model);

struct Pipeline {
  PipelineConfig config;
  ManoModel model;
  GraphContext graphs;
  PoseEncoder encoder;
  PoseDecoder decoder;
  ShapeHead shape_head;
  RefinerStack refiner;
};

// Initializes every stage from the config; parameters are drawn from rng.
Pipeline build_pipeline(const PipelineConfig& config, ManoModel model, Rng& rng);

// Stable, ordered list of every trainable tensor.
std::vector<ParamRef> collect_params(Pipeline& p);
std::size_t param_count(Pipeline& p);

// ---- inference ----

struct InferInputs {
  Joints2D joints2d;  // used directly when nonempty
  Heatmaps heatmaps;  // decoded via soft_argmax when joints2d is empty
  Tensor f_global;    // (2048)
};

/// Every stage output, kept for inspection.
struct InferResult {
  Joints2D joints2d;  // 2D joints fed to the encoder
  PoseLatent latent;
  PoseParams theta;
  ShapeParams beta;
  HandMesh mesh;            // initial-stage vertices
  Tensor posed_joints;      // (K, 3) articulated joints
  Joints3D joints21;        // initial-stage joint set
  HandMesh refined_mesh;
  Joints3D refined_joints;
};

InferResult infer(const Pipeline& p, const InferInputs& inputs);

// ---- training ----

// Mean loss over the batch (forward only).
LossReport pipeline_loss(const Pipeline& p, const std::vector<SyntheticSample>& batch);
// Mean loss plus parameter gradients accumulated into `grads`.
LossReport pipeline_loss_and_grads(const Pipeline& p,
                                   const std::vector<SyntheticSample>& batch,
                                   GradStore& grads);

struct TrainState {
  std::size_t steps = 0;
  std::vector<Scalar> loss_history;  // one total-loss entry per step
};

// Adam on the total loss with analytic backward passes. Deterministic given
// the pipeline and dataset; aborts with the step index on a non-finite loss.
TrainState train_toy(Pipeline& p, const std::vector<SyntheticSample>& dataset,
                     std::size_t steps);

// ---- persistence ----

void save_pipeline(const std::filesystem::path& path, Pipeline& p,
                   const std::string& float_dtype = sizeof(Scalar) == 8 ? "f64" : "f32");
Pipeline load_pipeline(const std::filesystem::path& path);

Archive model_to_archive(const ManoModel& model);
ManoModel model_from_archive(const Archive& archive);

// ---- prediction interchange and evaluation ----

// JSON array of per-sample {"joints": (J,3), "vertices": (V,3)} in meters.
void save_predictions(const std::filesystem::path& path, const PredictionSet& set);
PredictionSet load_predictions(const std::filesystem::path& path);
MetricReport evaluate_files(const std::filesystem::path& pred_path,
                            const std::filesystem::path& gt_path);

}  // namespace manograph
