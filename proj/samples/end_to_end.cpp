// Minimal in-process tour: simulate a small labeled gaze dataset, recover
// fixations from the raw logs, render scanpath images, train the CNN and the
// feature baselines on one split, and write a class-average attention map.
// Runs in well under a minute and leaves its artifacts in ./sample_out.

#include <gazelens/gazelens.hpp>

#include <filesystem>
#include <iostream>

namespace gz = gazelens;

int main() {
  const std::filesystem::path out = "sample_out";
  std::filesystem::create_directories(out);

  // 1. Simulate 24 trials per class and serialize one of them as a raw log.
  gz::synth::SynthConfig sc;
  const std::uint64_t seed = 7;
  const auto trials = gz::synth::generate_dataset(24, sc, seed);
  std::cout << "simulated " << trials.size() << " trials, first id " << trials[0].path.trial_id
            << " with " << trials[0].path.fixations.size() << " fixations\n";

  gz::Rng log_rng(gz::derive_seed(seed, 999));
  const auto log = gz::synth::to_gaze_log(trials[0].path, log_rng);
  const auto fixes = gz::fixdet::detect_fixations(log, {});
  std::cout << "raw log has " << log.size() << " samples at 250 Hz; detector recovered "
            << fixes.size() << " fixations\n";

  // 2. Render one scanpath image and extract its feature vector.
  gz::render::RenderConfig rc;
  rc.out_w = rc.out_h = 224;
  const auto img = gz::render::render_scanpath(trials[0].path, rc);
  gz::render::write_png(img, (out / "scanpath.png").string());
  const auto fv = gz::features::extract_features(trials[0].path);
  std::cout << "features: fixation_count " << fv.fixation_count << ", hv_ratio "
            << fv.hv_ratio << ", total_v_move " << fv.total_v_move << "\n";

  // 3. Split deterministically and run the comparative harness at 64x64.
  std::vector<gz::eval::ExperimentTrial> ex;
  for (const auto& t : trials)
    ex.push_back({t.path.trial_id, t.label, gz::Split::unassigned, t.path});
  {
    gz::ingest::DatasetManifest m;
    for (const auto& t : trials) {
      gz::TrialRecord r;
      r.trial_id = t.path.trial_id;
      r.label = t.label;
      r.fixation_count = static_cast<int>(t.path.fixations.size());
      m.trials.push_back(r);
    }
    gz::eval::SplitConfig split_cfg;
    split_cfg.seed = seed;
    gz::eval::balance_and_split(m, split_cfg);
    for (std::size_t i = 0; i < ex.size(); ++i) ex[i].split = m.trials[i].split;
  }

  gz::eval::ExperimentConfig cfg;
  cfg.render.out_w = cfg.render.out_h = 64;
  cfg.train.epochs = 3;
  cfg.train.seed = seed;
  cfg.forest.seed = seed;
  cfg.svm.seed = seed;
  cfg.checkpoint_path = (out / "model.ckpt").string();
  const auto report = gz::eval::run_experiment(ex, cfg);
  std::cout << "test accuracy: cnn " << report.cnn.test.accuracy << ", forest "
            << report.forest.test.accuracy << ", svm " << report.svm.test.accuracy << "\n";
  std::cout << "most informative feature: " << report.importances[0].first << "\n";

  // 4. Explain the relevant class with an average attention map.
  gz::nn::MiniVggSpec spec;
  spec.in_h = spec.in_w = 64;
  gz::nn::MiniVgg<float> model(spec, 0);
  gz::nn::load_checkpoint(model, cfg.checkpoint_path);
  std::vector<std::vector<float>> images;
  for (const auto& t : ex) {
    if (t.split != gz::Split::test || t.label != gz::RelevanceLabel::relevant) continue;
    const auto im = gz::render::render_scanpath(t.path, cfg.render);
    std::vector<float> chw(im.pixels.size());
    const std::size_t plane = static_cast<std::size_t>(64) * 64;
    for (std::size_t p = 0; p < plane; ++p) {
      chw[p] = static_cast<float>(im.pixels[3 * p] / 255.0);
      chw[plane + p] = static_cast<float>(im.pixels[3 * p + 1] / 255.0);
      chw[2 * plane + p] = static_cast<float>(im.pixels[3 * p + 2] / 255.0);
    }
    images.push_back(std::move(chw));
  }
  const auto maps = gz::gradcam::gradcam_batch(model, images, gz::RelevanceLabel::relevant);
  const auto avg = gz::gradcam::average_heatmap(maps);
  gz::render::write_png(gz::gradcam::heatmap_image(avg), (out / "heatmap.png").string());
  const auto rm = gz::gradcam::region_mass(avg);
  std::cout << "relevant-class attention: left " << rm.left << ", right " << rm.right << "\n";
  std::cout << "artifacts in " << out.string() << "/\n";
  return 0;
}
