#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "manograph/checks.hpp"
#include "manograph/obj_io.hpp"
#include "manograph/pipeline.hpp"

namespace fs = std::filesystem;
using namespace manograph;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string precision = sizeof(Scalar) == 8 ? "f64" : "f32";
  std::string out_dir = ".";
};

PipelineConfig load_config(const GlobalOpts& g) {
  PipelineConfig config;
  if (!g.config_path.empty()) {
    std::ifstream is(g.config_path);
    if (!is) throw std::runtime_error("cannot open config '" + g.config_path + "'");
    nlohmann::json j;
    is >> j;
    config = PipelineConfig::from_json(j);
  }
  if (g.seed) config.seed = *g.seed;
  return config;
}

fs::path out_path(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << j.dump(2) << "\n";
}

ManoModel obtain_model(const GlobalOpts& g, const PipelineConfig& config,
                       const std::string& model_path) {
  if (!model_path.empty()) return model_from_archive(load_archive(model_path));
  Rng rng(config.seed);
  return make_toy_model(rng, config.toy_vertices, config.toy_joints);
}

PredictionSet dataset_gt_predictions(const std::vector<SyntheticSample>& samples) {
  PredictionSet set;
  for (const SyntheticSample& s : samples) {
    set.joints.push_back(s.joints3d_gt.joints);
    set.vertices.push_back(s.mesh_gt.vertices);
  }
  return set;
}

int run_synth(const GlobalOpts& g, const std::string& model_path, std::size_t count) {
  PipelineConfig config = load_config(g);
  ManoModel model = obtain_model(g, config, model_path);
  SynthOptions options;
  options.heatmap_size = config.heatmap_size;
  options.heatmap_sigma_px = config.heatmap_sigma_px;
  // Sample stream is forked off the model stream so explicitly-loaded models
  // see the same data as freshly built ones.
  Rng rng = Rng(config.seed).fork(1);
  std::vector<SyntheticSample> samples = synth_dataset(rng, count, model, options);

  save_archive(out_path(g, "model.mgar"), model_to_archive(model), g.precision);
  save_archive(out_path(g, "dataset.mgar"), dataset_to_archive(samples), g.precision);
  save_predictions(out_path(g, "gt.json"), dataset_gt_predictions(samples));
  std::cout << "wrote " << count << " samples to " << out_path(g, "dataset.mgar").string()
            << "\n";
  return 0;
}

int run_train(const GlobalOpts& g, const std::string& model_path,
              const std::string& dataset_path, std::size_t steps,
              const std::string& ablation) {
  PipelineConfig config = load_config(g);
  if (!ablation.empty()) config = ablation_config(ablation, config);
  check(!dataset_path.empty(), "train-toy: --dataset is required");
  std::vector<SyntheticSample> dataset = dataset_from_archive(load_archive(dataset_path));

  ManoModel model = obtain_model(g, config, model_path);
  Rng rng = Rng(config.seed).fork(2);
  Pipeline pipeline = build_pipeline(config, std::move(model), rng);

  const LossReport initial = pipeline_loss(pipeline, dataset);
  TrainState state = train_toy(pipeline, dataset, steps);
  const LossReport final_report = pipeline_loss(pipeline, dataset);

  save_pipeline(out_path(g, "pipeline.mgar"), pipeline, g.precision);
  nlohmann::json report{{"steps", state.steps},
                        {"param_count", param_count(pipeline)},
                        {"initial_loss", initial.total},
                        {"final_loss", final_report.total},
                        {"loss_history", state.loss_history},
                        {"config", config.to_json()}};
  if (!ablation.empty()) report["ablation"] = ablation;
  write_json(out_path(g, "train_report.json"), report);
  std::printf("trained %zu steps: loss %.6f -> %.6f (%zu parameters)\n", state.steps,
              static_cast<double>(initial.total), static_cast<double>(final_report.total),
              param_count(pipeline));
  return 0;
}

int run_infer(const GlobalOpts& g, const std::string& pipeline_path,
              const std::string& dataset_path, bool use_heatmaps) {
  check(!pipeline_path.empty(), "infer: --pipeline is required");
  check(!dataset_path.empty(), "infer: --dataset is required");
  Pipeline pipeline = load_pipeline(pipeline_path);
  std::vector<SyntheticSample> dataset = dataset_from_archive(load_archive(dataset_path));

  PredictionSet refined, initial;
  for (const SyntheticSample& s : dataset) {
    InferInputs inputs;
    if (use_heatmaps)
      inputs.heatmaps = s.heatmaps_gt;
    else
      inputs.joints2d = s.joints2d_gt;
    inputs.f_global = s.f_global;
    InferResult r = infer(pipeline, inputs);
    refined.joints.push_back(r.refined_joints.joints);
    refined.vertices.push_back(r.refined_mesh.vertices);
    initial.joints.push_back(r.joints21.joints);
    initial.vertices.push_back(r.mesh.vertices);
  }
  save_predictions(out_path(g, "pred.json"), refined);
  save_predictions(out_path(g, "pred_initial.json"), initial);
  std::cout << "wrote predictions for " << dataset.size() << " samples to "
            << out_path(g, "pred.json").string() << "\n";
  return 0;
}

int run_eval(const GlobalOpts& g, const std::string& pred_path, const std::string& gt_path) {
  check(!pred_path.empty() && !gt_path.empty(), "eval: --pred and --gt are required");
  const MetricReport report = evaluate_files(pred_path, gt_path);
  const nlohmann::json j = report.to_json();
  write_json(out_path(g, "metrics.json"), j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_gradcheck(const GlobalOpts&) {
  const auto cases = gradient_check_suite();
  const Scalar tolerance = Scalar(1e-5);
  std::size_t failures = 0;
  for (const GradCheckCase& c : cases) {
    const bool ok = c.report.max_rel_error < tolerance;
    if (!ok) ++failures;
    std::printf("%-40s %-4s max_rel_error=%.3e\n", c.name.c_str(), ok ? "ok" : "FAIL",
                static_cast<double>(c.report.max_rel_error));
  }
  std::printf("%zu/%zu gradient checks passed\n", cases.size() - failures, cases.size());
  return failures == 0 ? 0 : 1;
}

int run_export_obj(const GlobalOpts& g, const std::string& model_path,
                   const std::string& pred_path, std::size_t index) {
  check(!model_path.empty(), "export-obj: --model is required");
  ManoModel model = model_from_archive(load_archive(model_path));
  HandMesh mesh{model.template_verts};
  if (!pred_path.empty()) {
    PredictionSet set = load_predictions(pred_path);
    check(index < set.vertices.size(),
          "export-obj: index " + std::to_string(index) + " out of range (have " +
              std::to_string(set.vertices.size()) + " samples)");
    mesh.vertices = set.vertices[index];
  }
  const fs::path path = out_path(g, "mesh.obj");
  export_obj(mesh, model.faces, path);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manograph: differentiable hand mesh recovery pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "pipeline config JSON");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--precision", g.precision, "archive storage dtype")
      ->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--out", g.out_dir, "output directory");

  std::string model_path, dataset_path, pipeline_path, pred_path, gt_path, ablation;
  std::size_t count = 8, steps = 100, index = 0;
  bool use_heatmaps = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--model", model_path, "model archive (default: build a toy model)");
  synth->add_option("--count", count, "number of samples");

  CLI::App* train = app.add_subcommand("train-toy", "desk-scale training run");
  train->add_option("--model", model_path, "model archive (default: build a toy model)");
  train->add_option("--dataset", dataset_path, "dataset archive")->required();
  train->add_option("--steps", steps, "optimizer steps");
  train->add_option("--ablation", ablation, "ablation preset")
      ->check(CLI::IsMember(ablation_names()));

  CLI::App* inf = app.add_subcommand("infer", "run the two-stage pipeline");
  inf->add_option("--pipeline", pipeline_path, "trained pipeline archive")->required();
  inf->add_option("--dataset", dataset_path, "dataset archive")->required();
  inf->add_flag("--use-heatmaps", use_heatmaps, "decode 2D joints from heatmaps");

  CLI::App* ev = app.add_subcommand("eval", "compare prediction files");
  ev->add_option("--pred", pred_path, "predictions JSON")->required();
  ev->add_option("--gt", gt_path, "ground-truth JSON")->required();

  app.add_subcommand("gradcheck", "finite-difference oracle suite");

  CLI::App* exp = app.add_subcommand("export-obj", "write a mesh as Wavefront OBJ");
  exp->add_option("--model", model_path, "model archive (for faces/template)")->required();
  exp->add_option("--pred", pred_path, "predictions JSON (default: export the template)");
  exp->add_option("--index", index, "sample index within --pred");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand("synth")) return run_synth(g, model_path, count);
    if (app.got_subcommand("train-toy"))
      return run_train(g, model_path, dataset_path, steps, ablation);
    if (app.got_subcommand("infer")) return run_infer(g, pipeline_path, dataset_path, use_heatmaps);
    if (app.got_subcommand("eval")) return run_eval(g, pred_path, gt_path);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(g);
    if (app.got_subcommand("export-obj")) return run_export_obj(g, model_path, pred_path, index);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
