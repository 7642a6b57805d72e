#include "manograph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace manograph {

Heatmaps render_heatmaps(const Joints2D& joints2d, std::size_t h, std::size_t w,
                         Scalar sigma_px) {
  check(sigma_px > 0, "render_heatmaps: sigma must be positive");
  const std::size_t n = joints2d.joints.rows();
  Tensor maps({n, h, w});
  const Scalar inv = Scalar(1) / (2 * sigma_px * sigma_px);
  for (std::size_t j = 0; j < n; ++j) {
    const Scalar px = joints2d.joints(j, 0) * static_cast<Scalar>(w);
    const Scalar py = joints2d.joints(j, 1) * static_cast<Scalar>(h);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const Scalar dx = static_cast<Scalar>(c) + Scalar(0.5) - px;
        const Scalar dy = static_cast<Scalar>(r) + Scalar(0.5) - py;
        maps(j, r, c) = std::exp(-(dx * dx + dy * dy) * inv);
      }
  }
  return Heatmaps{maps};
}

std::vector<SyntheticSample> synth_dataset(Rng& rng, std::size_t n, const ManoModel& model,
                                           const SynthOptions& options) {
  check(n >= 1, "synth_dataset: need at least one sample");
  const std::size_t k = model.num_joints();
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    SyntheticSample sample;
    sample.theta_gt.theta =
        rng.uniform_tensor({k, 3}, -options.theta_range, options.theta_range);
    sample.beta_gt.beta = rng.uniform_tensor({model.num_shape_coeffs()}, -options.beta_range,
                                             options.beta_range);
    ManoOutput mano = mano_forward(model, sample.theta_gt, sample.beta_gt);
    sample.joints3d_gt = joints_to_21(mano.joints, mano.mesh, model.fingertip_ids);
    sample.mesh_gt = std::move(mano.mesh);

    // Fit the camera so the hand spans ~70% of the unit image, with a bit
    // of jitter that keeps every joint inside the frame.
    const Tensor& j3 = sample.joints3d_gt.joints;
    Scalar lo_x = j3(0, 0), hi_x = j3(0, 0), lo_y = j3(0, 1), hi_y = j3(0, 1);
    for (std::size_t i = 1; i < j3.rows(); ++i) {
      lo_x = std::min(lo_x, j3(i, 0));
      hi_x = std::max(hi_x, j3(i, 0));
      lo_y = std::min(lo_y, j3(i, 1));
      hi_y = std::max(hi_y, j3(i, 1));
    }
    const Scalar extent = std::max({hi_x - lo_x, hi_y - lo_y, Scalar(1e-6)});
    const Scalar scale = Scalar(0.7) / extent * static_cast<Scalar>(rng.uniform(0.9, 1.1));
    const Scalar cx = (lo_x + hi_x) / 2, cy = (lo_y + hi_y) / 2;
    sample.camera.scale = scale;
    sample.camera.translation = {
        Scalar(0.5) - scale * cx + static_cast<Scalar>(rng.uniform(-0.03, 0.03)),
        Scalar(0.5) - scale * cy + static_cast<Scalar>(rng.uniform(-0.03, 0.03))};

    sample.joints2d_gt = Joints2D{project_weak_perspective(j3, sample.camera)};
    sample.heatmaps_gt = render_heatmaps(sample.joints2d_gt, options.heatmap_size,
                                         options.heatmap_size, options.heatmap_sigma_px);
    sample.f_global = rng.uniform_tensor({2048}, -1, 1);
    out.push_back(std::move(sample));
  }
  return out;
}

Archive dataset_to_archive(const std::vector<SyntheticSample>& samples) {
  check(!samples.empty(), "dataset_to_archive: empty dataset");
  const std::size_t n = samples.size();
  Archive archive;
  archive.config = {{"kind", "dataset"}, {"num_samples", n}};

  auto stack = [n, &samples](const char* name, auto getter) {
    const Tensor& first = getter(samples[0]);
    std::vector<std::size_t> shape = first.shape();
    shape.insert(shape.begin(), n);
    Tensor out(shape);
    for (std::size_t s = 0; s < n; ++s) {
      const Tensor& t = getter(samples[s]);
      check(t.same_shape(first), std::string("dataset: inconsistent shape for ") + name);
      std::copy(t.data(), t.data() + t.size(), out.data() + s * t.size());
    }
    return out;
  };

  archive.tensors["theta"] = stack("theta", [](const SyntheticSample& s) -> const Tensor& {
    return s.theta_gt.theta;
  });
  archive.tensors["beta"] = stack("beta", [](const SyntheticSample& s) -> const Tensor& {
    return s.beta_gt.beta;
  });
  archive.tensors["vertices"] = stack("vertices", [](const SyntheticSample& s) -> const Tensor& {
    return s.mesh_gt.vertices;
  });
  archive.tensors["joints3d"] = stack("joints3d", [](const SyntheticSample& s) -> const Tensor& {
    return s.joints3d_gt.joints;
  });
  archive.tensors["joints2d"] = stack("joints2d", [](const SyntheticSample& s) -> const Tensor& {
    return s.joints2d_gt.joints;
  });
  archive.tensors["heatmaps"] = stack("heatmaps", [](const SyntheticSample& s) -> const Tensor& {
    return s.heatmaps_gt.maps;
  });
  archive.tensors["f_global"] = stack("f_global", [](const SyntheticSample& s) -> const Tensor& {
    return s.f_global;
  });

  Tensor cameras({n, 3});
  for (std::size_t s = 0; s < n; ++s) {
    cameras(s, 0) = samples[s].camera.scale;
    cameras(s, 1) = samples[s].camera.translation[0];
    cameras(s, 2) = samples[s].camera.translation[1];
  }
  archive.tensors["camera"] = std::move(cameras);
  return archive;
}

std::vector<SyntheticSample> dataset_from_archive(const Archive& archive) {
  auto get = [&archive](const char* name) -> const Tensor& {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end())
      throw std::runtime_error(std::string("dataset archive missing tensor '") + name + "'");
    return it->second;
  };
  const Tensor& theta = get("theta");
  const std::size_t n = theta.dim(0);

  auto slice = [n](const Tensor& stacked, std::size_t s) {
    std::vector<std::size_t> shape(stacked.shape().begin() + 1, stacked.shape().end());
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    Tensor out(shape);
    std::copy(stacked.data() + s * count, stacked.data() + (s + 1) * count, out.data());
    return out;
  };

  std::vector<SyntheticSample> samples(n);
  const Tensor& cameras = get("camera");
  for (std::size_t s = 0; s < n; ++s) {
    samples[s].theta_gt.theta = slice(theta, s);
    samples[s].beta_gt.beta = slice(get("beta"), s);
    samples[s].mesh_gt.vertices = slice(get("vertices"), s);
    samples[s].joints3d_gt.joints = slice(get("joints3d"), s);
    samples[s].joints2d_gt.joints = slice(get("joints2d"), s);
    samples[s].heatmaps_gt.maps = slice(get("heatmaps"), s);
    samples[s].f_global = slice(get("f_global"), s);
    samples[s].camera.scale = cameras(s, 0);
    samples[s].camera.translation = {cameras(s, 1), cameras(s, 2)};
  }
  return samples;
}

}  // namespace manograph
