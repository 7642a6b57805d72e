#include "manograph/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace manograph {

namespace {

constexpr std::size_t kGlobalFeatureDim = 2048;

nlohmann::json tensor_rows_to_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor tensor_rows_from_json(const nlohmann::json& rows, const char* what) {
  if (!rows.is_array() || rows.empty())
    throw std::runtime_error(std::string("predictions: '") + what + "' must be a non-empty array");
  const std::size_t n = rows.size();
  const std::size_t d = rows[0].size();
  Tensor t({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != d)
      throw std::runtime_error(std::string("predictions: ragged rows in '") + what + "'");
    for (std::size_t j = 0; j < d; ++j) t(i, j) = rows[i][j].get<Scalar>();
  }
  return t;
}

}  // namespace

void PipelineConfig::validate() const {
  check(toy_vertices >= 5 && toy_joints >= 2 && toy_vertices >= toy_joints,
        "config: toy model needs vertices >= 5 and vertices >= joints >= 2");
  check(latent_width >= 1 && refiner_width >= 1 && shape_hidden >= 1,
        "config: widths must be >= 1");
  check(encoder_blocks >= 1 && refiner_blocks >= 1, "config: block counts must be >= 1");
  check(refiner_blocks <= 4, "config: refiner_blocks must be in 1..4");
  check(heatmap_size >= 2, "config: heatmap_size must be >= 2");
  check(heatmap_sigma_px > 0, "config: heatmap_sigma_px must be positive");
  check(encoder_kind == "mlp" || encoder_kind == "gcn" || encoder_kind == "semgcn",
        "config: encoder_kind must be one of mlp|gcn|semgcn");
  check(learning_rate >= 0, "config: learning_rate must be >= 0");
  check(batch_size >= 1, "config: batch_size must be >= 1");
  loss_weights.validate();
}

EncoderKind PipelineConfig::encoder_kind_enum() const {
  if (encoder_kind == "mlp") return EncoderKind::kMlp;
  if (encoder_kind == "gcn") return EncoderKind::kGcn;
  return EncoderKind::kSemGcn;
}

nlohmann::json PipelineConfig::to_json() const {
  return nlohmann::json{{"toy_vertices", toy_vertices},
                        {"toy_joints", toy_joints},
                        {"latent_width", latent_width},
                        {"encoder_blocks", encoder_blocks},
                        {"refiner_width", refiner_width},
                        {"refiner_blocks", refiner_blocks},
                        {"shape_hidden", shape_hidden},
                        {"heatmap_size", heatmap_size},
                        {"heatmap_sigma_px", heatmap_sigma_px},
                        {"encoder_kind", encoder_kind},
                        {"refiner_intra", refiner_intra},
                        {"refiner_attention", refiner_attention},
                        {"learning_rate", learning_rate},
                        {"batch_size", batch_size},
                        {"lambda1", loss_weights.lambda1},
                        {"lambda2", loss_weights.lambda2},
                        {"lambda3", loss_weights.lambda3},
                        {"lambda4", loss_weights.lambda4},
                        {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "toy_vertices",  "toy_joints",     "latent_width",   "encoder_blocks",
      "refiner_width", "refiner_blocks", "shape_hidden",   "heatmap_size",
      "heatmap_sigma_px", "encoder_kind", "refiner_intra", "refiner_attention",
      "learning_rate", "batch_size",     "lambda1",        "lambda2",
      "lambda3",       "lambda4",        "seed"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "'");

  PipelineConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("toy_vertices", c.toy_vertices);
  get("toy_joints", c.toy_joints);
  get("latent_width", c.latent_width);
  get("encoder_blocks", c.encoder_blocks);
  get("refiner_width", c.refiner_width);
  get("refiner_blocks", c.refiner_blocks);
  get("shape_hidden", c.shape_hidden);
  get("heatmap_size", c.heatmap_size);
  get("heatmap_sigma_px", c.heatmap_sigma_px);
  get("encoder_kind", c.encoder_kind);
  get("refiner_intra", c.refiner_intra);
  get("refiner_attention", c.refiner_attention);
  get("learning_rate", c.learning_rate);
  get("batch_size", c.batch_size);
  get("lambda1", c.loss_weights.lambda1);
  get("lambda2", c.loss_weights.lambda2);
  get("lambda3", c.loss_weights.lambda3);
  get("lambda4", c.loss_weights.lambda4);
  get("seed", c.seed);
  c.validate();
  return c;
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"B", "B+OG", "B+SG", "B+SG+G", "B+SG+G+MA"};
  return names;
}

PipelineConfig ablation_config(const std::string& name, PipelineConfig base) {
  if (name == "B") {
    base.encoder_kind = "mlp";
    base.refiner_intra = false;
    base.refiner_attention = false;
  } else if (name == "B+OG") {
    base.encoder_kind = "gcn";
    base.refiner_intra = false;
    base.refiner_attention = false;
  } else if (name == "B+SG") {
    base.encoder_kind = "semgcn";
    base.refiner_intra = false;
    base.refiner_attention = false;
  } else if (name == "B+SG+G") {
    base.encoder_kind = "semgcn";
    base.refiner_intra = true;
    base.refiner_attention = false;
  } else if (name == "B+SG+G+MA") {
    base.encoder_kind = "semgcn";
    base.refiner_intra = true;
    base.refiner_attention = true;
  } else {
    throw std::invalid_argument("unknown ablation '" + name + "'");
  }
  return base;
}

GraphContext build_graphs(const ManoModel& model) {
  const std::size_t k = model.num_joints();
  const std::vector<int> leaves = model.leaf_joints();
  std::vector<std::pair<int, int>> tip_attach;
  for (std::size_t t = 0; t < model.fingertip_ids.size(); ++t)
    tip_attach.emplace_back(static_cast<int>(k + t),
                            leaves[t % leaves.size()]);

  GraphContext g;
  g.joint_graph = Graph::from_parents(model.parents, tip_attach);
  g.kinematic_graph = Graph::from_parents(model.parents, {});
  g.vertex_graph = Graph::from_faces(model.faces, model.num_vertices());
  check(g.joint_graph.connected() && g.vertex_graph.connected(),
        "build_graphs: production graphs must be connected");
  g.joint_norm_adj = normalize_adjacency(g.joint_graph);
  g.kin_norm_adj = normalize_adjacency(g.kinematic_graph);
  return g;
}

Pipeline build_pipeline(const PipelineConfig& config, ManoModel model, Rng& rng) {
  config.validate();
  model.validate();
  Pipeline p;
  p.config = config;
  p.graphs = build_graphs(model);
  const std::size_t k = model.num_joints();
  const EncoderKind kind = config.encoder_kind_enum();
  p.encoder = make_pose_encoder(rng, kind, p.graphs.joint_graph.size(), k,
                                config.latent_width, config.encoder_blocks);
  p.decoder = make_pose_decoder(rng, kind, k, config.latent_width);
  p.shape_head =
      make_shape_head(rng, kGlobalFeatureDim, config.shape_hidden, model.num_shape_coeffs());
  p.refiner = make_refiner(rng, p.graphs.joint_graph.size(), model.num_vertices(),
                           config.refiner_width, config.refiner_blocks, config.refiner_intra,
                           config.refiner_attention);
  p.model = std::move(model);
  return p;
}

std::vector<ParamRef> collect_params(Pipeline& p) {
  std::vector<ParamRef> out;
  collect_encoder_params(p.encoder, out);
  collect_decoder_params(p.decoder, out);
  collect_shape_head_params(p.shape_head, out);
  collect_refiner_params(p.refiner, out);
  return out;
}

std::size_t param_count(Pipeline& p) {
  std::size_t n = 0;
  for (const ParamRef& ref : collect_params(p)) n += ref.value->size();
  return n;
}

namespace {

struct SampleCtx {
  EncoderCtx encoder;
  DecoderCtx decoder;
  MlpCtx shape;
  ManoCache mano;
  RefinerCtx refiner;
};

InferResult forward_sample(const Pipeline& p, const Joints2D& joints2d,
                           const Tensor& f_global, SampleCtx* ctx) {
  InferResult r;
  r.joints2d = joints2d;
  r.latent = encode_pose(p.encoder, joints2d, p.graphs.joint_graph, p.graphs.joint_norm_adj,
                         ctx ? &ctx->encoder : nullptr);
  r.theta = decode_pose(p.decoder, r.latent, p.graphs.kinematic_graph, p.graphs.kin_norm_adj,
                        ctx ? &ctx->decoder : nullptr);
  r.beta = shape_head_forward(p.shape_head, f_global, ctx ? &ctx->shape : nullptr);
  ManoOutput mano = mano_forward(p.model, r.theta, r.beta, ctx ? &ctx->mano : nullptr);
  r.mesh = std::move(mano.mesh);
  r.posed_joints = std::move(mano.joints);
  r.joints21 = joints_to_21(r.posed_joints, r.mesh, p.model.fingertip_ids);
  RefineResult refined =
      refine_forward(p.refiner, f_global, r.joints21, r.mesh, p.graphs.joint_norm_adj,
                     p.graphs.vertex_graph, ctx ? &ctx->refiner : nullptr);
  r.refined_mesh = std::move(refined.mesh);
  r.refined_joints = std::move(refined.joints);
  return r;
}

// Supervision available in synthetic training: geometry and parameters. The
// heatmap and 2D-joint terms have no in-pipeline prediction (the image
// backbone is external), so they are reported as skipped.
constexpr ManoLossFlags kSynthFlags{true, true, true, true, false, false};

ManoQuantities mano_pred_quantities(const InferResult& r) {
  ManoQuantities q;
  q.vertices = r.mesh.vertices;
  q.joints = r.joints21.joints;
  q.theta = r.theta.theta;
  q.beta = r.beta.beta;
  return q;
}

ManoQuantities mano_gt_quantities(const SyntheticSample& s) {
  ManoQuantities q;
  q.vertices = s.mesh_gt.vertices;
  q.joints = s.joints3d_gt.joints;
  q.theta = s.theta_gt.theta;
  q.beta = s.beta_gt.beta;
  return q;
}

LossReport sample_loss(const Pipeline& p, const InferResult& r, const SyntheticSample& s) {
  const ManoLossBreakdown mano =
      mano_loss(mano_pred_quantities(r), mano_gt_quantities(s), kSynthFlags);
  const Scalar l_r = refinement_loss(r.refined_mesh, r.refined_joints, s.mesh_gt, s.joints3d_gt);
  const Scalar l_e = edge_loss(r.refined_mesh, s.mesh_gt, p.model.faces).value;
  const Scalar l_n = normal_loss(r.refined_mesh, s.mesh_gt, p.model.faces).value;
  return total_loss(p.config.loss_weights, mano.total, l_r, l_e, l_n);
}

void backward_sample(const Pipeline& p, const SampleCtx& ctx, const InferResult& r,
                     const SyntheticSample& s, Scalar upstream, GradStore& grads) {
  const LossWeights& lw = p.config.loss_weights;

  Tensor g_refined_v, g_refined_j;
  refinement_loss_backward(r.refined_mesh, r.refined_joints, s.mesh_gt, s.joints3d_gt,
                           upstream * lw.lambda2, &g_refined_v, &g_refined_j);
  if (lw.lambda3 != 0)
    add_inplace(g_refined_v,
                edge_loss_backward(r.refined_mesh, s.mesh_gt, p.model.faces,
                                   upstream * lw.lambda3));
  if (lw.lambda4 != 0)
    add_inplace(g_refined_v,
                normal_loss_backward(r.refined_mesh, s.mesh_gt, p.model.faces,
                                     upstream * lw.lambda4));

  RefineInputGrads rig =
      refine_backward(p.refiner, p.graphs.joint_norm_adj, p.graphs.vertex_graph, ctx.refiner,
                      g_refined_v, g_refined_j, grads);

  const ManoQuantities g_mano = mano_loss_backward(
      mano_pred_quantities(r), mano_gt_quantities(s), kSynthFlags, upstream * lw.lambda1);

  Tensor g_vertices = add(rig.vertices, g_mano.vertices);
  Tensor g_joints21 = add(rig.joints, g_mano.joints);
  Joints21Grads jg = joints_to_21_backward(g_joints21, p.model.num_joints(),
                                           p.model.num_vertices(), p.model.fingertip_ids);
  add_inplace(g_vertices, jg.vertices);

  ManoGrads mg = mano_backward(p.model, ctx.mano, g_vertices, jg.posed_joints);
  Tensor g_theta = add(mg.theta, g_mano.theta);
  Tensor g_beta = add(mg.beta, g_mano.beta);

  Tensor g_latent = decode_pose_backward(p.decoder, p.graphs.kinematic_graph,
                                         p.graphs.kin_norm_adj, ctx.decoder, g_theta, grads);
  encode_pose_backward(p.encoder, p.graphs.joint_graph, p.graphs.joint_norm_adj, ctx.encoder,
                       g_latent, grads);
  shape_head_backward(p.shape_head, ctx.shape, g_beta, grads);
}

LossReport accumulate_batch(const Pipeline& p, const std::vector<SyntheticSample>& batch,
                            GradStore* grads) {
  check(!batch.empty(), "pipeline loss: empty batch");
  LossReport mean;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(batch.size());
  for (const SyntheticSample& s : batch) {
    SampleCtx ctx;
    const InferResult r = forward_sample(p, s.joints2d_gt, s.f_global, grads ? &ctx : nullptr);
    const LossReport lr = sample_loss(p, r, s);
    mean.l_mano += inv * lr.l_mano;
    mean.l_r += inv * lr.l_r;
    mean.l_e += inv * lr.l_e;
    mean.l_n += inv * lr.l_n;
    mean.total += inv * lr.total;
    if (grads) backward_sample(p, ctx, r, s, inv, *grads);
  }
  return mean;
}

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t t = 0;
  Scalar beta1 = Scalar(0.9), beta2 = Scalar(0.999), eps = Scalar(1e-8);
};

void adam_step(std::vector<ParamRef>& params, const GradStore& grads, AdamState& st,
               Scalar lr) {
  if (st.m.empty()) {
    for (const ParamRef& ref : params) {
      st.m.push_back(Tensor::zeros(ref.value->shape()));
      st.v.push_back(Tensor::zeros(ref.value->shape()));
    }
  }
  ++st.t;
  const Scalar bc1 = 1 - std::pow(st.beta1, static_cast<Scalar>(st.t));
  const Scalar bc2 = 1 - std::pow(st.beta2, static_cast<Scalar>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* g = grads.find(*params[i].value);
    if (!g) continue;
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    Tensor& w = *params[i].value;
    for (std::size_t e = 0; e < w.size(); ++e) {
      m[e] = st.beta1 * m[e] + (1 - st.beta1) * (*g)[e];
      v[e] = st.beta2 * v[e] + (1 - st.beta2) * (*g)[e] * (*g)[e];
      w[e] -= lr * (m[e] / bc1) / (std::sqrt(v[e] / bc2) + st.eps);
    }
  }
}

}  // namespace

InferResult infer(const Pipeline& p, const InferInputs& inputs) {
  check(inputs.f_global.ndim() == 1 && inputs.f_global.size() == kGlobalFeatureDim,
        "infer: f_global must have length " + std::to_string(kGlobalFeatureDim));
  Joints2D joints2d;
  if (!inputs.joints2d.joints.empty()) {
    joints2d = inputs.joints2d;
  } else {
    check(!inputs.heatmaps.maps.empty(), "infer: need joints2d or heatmaps");
    joints2d = soft_argmax(inputs.heatmaps);
  }
  check(joints2d.joints.rows() == p.graphs.joint_graph.size(),
        "infer: expected " + std::to_string(p.graphs.joint_graph.size()) +
            " 2D joints, got " + std::to_string(joints2d.joints.rows()));
  return forward_sample(p, joints2d, inputs.f_global, nullptr);
}

LossReport pipeline_loss(const Pipeline& p, const std::vector<SyntheticSample>& batch) {
  return accumulate_batch(p, batch, nullptr);
}

LossReport pipeline_loss_and_grads(const Pipeline& p,
                                   const std::vector<SyntheticSample>& batch,
                                   GradStore& grads) {
  return accumulate_batch(p, batch, &grads);
}

TrainState train_toy(Pipeline& p, const std::vector<SyntheticSample>& dataset,
                     std::size_t steps) {
  check(!dataset.empty(), "train_toy: empty dataset");
  std::vector<ParamRef> params = collect_params(p);
  AdamState adam;
  TrainState state;
  const std::size_t bs = std::min(p.config.batch_size, dataset.size());
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<SyntheticSample> batch;
    batch.reserve(bs);
    for (std::size_t i = 0; i < bs; ++i)
      batch.push_back(dataset[(step * bs + i) % dataset.size()]);
    GradStore grads;
    const LossReport report = pipeline_loss_and_grads(p, batch, grads);
    if (!std::isfinite(report.total))
      throw std::runtime_error("train_toy: non-finite loss at step " + std::to_string(step));
    state.loss_history.push_back(report.total);
    adam_step(params, grads, adam, p.config.learning_rate);
    ++state.steps;
  }
  return state;
}

Archive model_to_archive(const ManoModel& model) {
  Archive a;
  a.config = {{"kind", "mano_model"}};
  a.tensors["mano.template"] = model.template_verts;
  a.tensors["mano.shape_basis"] = model.shape_basis;
  a.tensors["mano.pose_basis"] = model.pose_basis;
  a.tensors["mano.joint_regressor"] = model.joint_regressor;
  a.tensors["mano.skin_weights"] = model.skin_weights;
  a.ints["mano.parents"] = {model.parents.begin(), model.parents.end()};
  std::vector<std::int64_t> faces;
  for (const auto& f : model.faces) faces.insert(faces.end(), {f[0], f[1], f[2]});
  a.ints["mano.faces"] = std::move(faces);
  a.ints["mano.fingertip_ids"] = {model.fingertip_ids.begin(), model.fingertip_ids.end()};
  return a;
}

ManoModel model_from_archive(const Archive& archive) {
  auto tensor = [&archive](const char* name) {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end())
      throw std::runtime_error(std::string("model archive missing tensor '") + name + "'");
    return it->second;
  };
  auto ints = [&archive](const char* name) {
    auto it = archive.ints.find(name);
    if (it == archive.ints.end())
      throw std::runtime_error(std::string("model archive missing ints '") + name + "'");
    return it->second;
  };
  ManoModel m;
  m.template_verts = tensor("mano.template");
  m.shape_basis = tensor("mano.shape_basis");
  m.pose_basis = tensor("mano.pose_basis");
  m.joint_regressor = tensor("mano.joint_regressor");
  m.skin_weights = tensor("mano.skin_weights");
  for (std::int64_t v : ints("mano.parents")) m.parents.push_back(static_cast<int>(v));
  const auto face_values = ints("mano.faces");
  check(face_values.size() % 3 == 0, "model archive: face list not a multiple of 3");
  for (std::size_t i = 0; i < face_values.size(); i += 3)
    m.faces.push_back({static_cast<int>(face_values[i]), static_cast<int>(face_values[i + 1]),
                       static_cast<int>(face_values[i + 2])});
  for (std::int64_t v : ints("mano.fingertip_ids"))
    m.fingertip_ids.push_back(static_cast<int>(v));
  m.validate();
  return m;
}

void save_pipeline(const std::filesystem::path& path, Pipeline& p,
                   const std::string& float_dtype) {
  Archive a = model_to_archive(p.model);
  a.config = {{"kind", "pipeline"}, {"config", p.config.to_json()}};
  for (const ParamRef& ref : collect_params(p)) a.tensors["param." + ref.name] = *ref.value;
  save_archive(path, a, float_dtype);
}

Pipeline load_pipeline(const std::filesystem::path& path) {
  Archive a = load_archive(path);
  if (!a.config.contains("kind") || a.config["kind"] != "pipeline")
    throw std::runtime_error("archive at '" + path.string() + "' is not a pipeline");
  PipelineConfig config = PipelineConfig::from_json(a.config.at("config"));
  ManoModel model = model_from_archive(a);
  Rng rng(config.seed);
  Pipeline p = build_pipeline(config, std::move(model), rng);
  for (const ParamRef& ref : collect_params(p)) {
    auto it = a.tensors.find("param." + ref.name);
    if (it == a.tensors.end())
      throw std::runtime_error("pipeline archive missing parameter '" + ref.name + "'");
    check(it->second.same_shape(*ref.value),
          "pipeline archive parameter '" + ref.name + "' has shape " +
              it->second.shape_str() + ", expected " + ref.value->shape_str());
    *ref.value = it->second;
  }
  return p;
}

void save_predictions(const std::filesystem::path& path, const PredictionSet& set) {
  check(set.joints.size() == set.vertices.size(), "predictions: sample count mismatch");
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < set.joints.size(); ++i)
    arr.push_back({{"joints", tensor_rows_to_json(set.joints[i])},
                   {"vertices", tensor_rows_to_json(set.vertices[i])}});
  std::ofstream os(path);
  if (!os) throw std::runtime_error("predictions: cannot open '" + path.string() + "'");
  os << arr.dump(2) << "\n";
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("predictions: cannot open '" + path.string() + "'");
  nlohmann::json arr;
  try {
    is >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("predictions: parse error in '" + path.string() + "': " + e.what());
  }
  if (!arr.is_array()) throw std::runtime_error("predictions: expected a JSON array");
  PredictionSet set;
  for (const auto& entry : arr) {
    set.joints.push_back(tensor_rows_from_json(entry.at("joints"), "joints"));
    set.vertices.push_back(tensor_rows_from_json(entry.at("vertices"), "vertices"));
  }
  return set;
}

MetricReport evaluate_files(const std::filesystem::path& pred_path,
                            const std::filesystem::path& gt_path) {
  return compute_metrics(load_predictions(pred_path), load_predictions(gt_path));
}

}  // namespace manograph
