// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.
//   acceptance [--work-dir DIR] [--only N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include "covidseg/cli/cli.hpp"
#include "covidseg/cli/gradcheck_suite.hpp"
#include "covidseg/core/ops.hpp"
#include "covidseg/core/rng.hpp"
#include "covidseg/ctio/nifti.hpp"
#include "covidseg/ctio/preprocess.hpp"
#include "covidseg/phantom/phantom.hpp"
#include "covidseg/segnet/checkpoint.hpp"
#include "covidseg/trainer/folds.hpp"
#include "covidseg/trainer/gdl.hpp"
#include "covidseg/trainer/trainer.hpp"
#include "oracles.hpp"
#include "reference_unet.hpp"

using namespace covidseg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Overfit probe setup.
constexpr std::uint64_t kProbePhantomSeed = 7;
constexpr std::size_t kProbeSlices[4] = {5, 7, 9, 11};
constexpr int kProbeSteps = 200;

// Training hyperparameters shared by the probe and the phantom experiment.
constexpr double kLearningRate = 1e-3;
constexpr double kBeta2 = 0.999;
constexpr std::uint64_t kProbeSeed = 1;

// Phantom experiment.
constexpr std::uint64_t kPhantomSeed = 100;
constexpr std::uint64_t kCrossvalSeed = 1;
constexpr double kMinNormalDice = 0.85;
constexpr double kMinInfectionDice = 0.60;
constexpr double kAblationMargin = 0.02;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(Rng& rng, Shape s) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json load_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  if (code != 0) std::cerr << "covidseg " << args.front() << " exited " << code << ": " << err.str();
  return code;
}

// 1. Finite-difference gradient suite.
Outcome gradient_suite() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteOptions opts;
  opts.seed = 0;
  const GradSuiteResult r = run_gradcheck_suite(opts);
  const double secs = seconds_since(t0);
  std::set<std::string> ops;
  double worst = 0.0;
  for (const auto& rep : r.reports) {
    ops.insert(rep.op);
    worst = std::max(worst, rep.max_rel_error());
    o.check(rep.passed(1e-4), rep.op + " rel error " + fmt("%.3g", rep.max_rel_error()));
  }
  for (const char* required : {"conv2d", "conv2d_dilation2", "conv2d_dilation4", "avg_pool2", "max_pool2",
                               "mixed_pool", "upsample_nearest2", "concat_channels", "relu", "softmax_channels",
                               "generalized_dice_loss", "model_end_to_end"})
    o.check(ops.count(required) == 1, std::string("missing check ") + required);
  o.note(std::to_string(r.reports.size()) + " checks, max rel error " + fmt("%.2e", worst) + ", " +
         fmt("%.1f s", secs));
  return o;
}

// 2. Bitwise oracle equivalences.
Outcome oracle_equivalences() {
  Outcome o;
  Rng rng(2);
  std::size_t cases = 0;
  for (int d : {2, 4}) {
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t ci = 1 + rng.below(4), co = 1 + rng.below(4), h = 9 + rng.below(12), w = 9 + rng.below(12);
      const Tensor x = random_tensor(rng, {2, ci, h, w});
      const Tensor k = random_tensor(rng, {co, ci, 3, 3});
      const Tensor b = random_tensor(rng, {co});
      Graph g;
      const Tensor dil = conv2d(g.view(x), g.view(k), g.view(b), {.stride = 1, .padding = d, .dilation = d}).value();
      const Tensor big = oracle::zero_insert(k, d);
      const Tensor ins = conv2d(g.view(x), g.view(big), g.view(b), {.stride = 1, .padding = d, .dilation = 1}).value();
      o.check(bitwise_equal(dil.data(), ins.data()), "dilation " + std::to_string(d) + " vs zero-inserted kernel");
      ++cases;
    }
  }
  const struct {
    std::size_t n, ci, co, h, w, k;
    int stride, pad, dil;
  } convs[] = {{2, 3, 8, 32, 32, 3, 1, 1, 1},  {1, 33, 11, 16, 16, 3, 1, 2, 2}, {1, 64, 22, 8, 8, 3, 1, 4, 4},
               {3, 8, 4, 16, 16, 1, 1, 0, 1},   {1, 5, 7, 13, 11, 3, 2, 1, 1},   {2, 2, 3, 10, 12, 2, 1, 0, 1},
               {1, 189, 16, 6, 6, 3, 1, 1, 1}};
  for (const auto& c : convs) {
    const Tensor x = random_tensor(rng, {c.n, c.ci, c.h, c.w});
    const Tensor k = random_tensor(rng, {c.co, c.ci, c.k, c.k});
    const Tensor b = random_tensor(rng, {c.co});
    Graph g;
    const Tensor fast =
        conv2d(g.view(x), g.view(k), g.view(b), {.stride = c.stride, .padding = c.pad, .dilation = c.dil}).value();
    o.check(bitwise_equal(fast.data(), oracle::naive_conv2d(x, k, b, c.stride, c.pad, c.dil).data()),
            "optimized conv vs naive loop " + shape_string(x.shape()));
    ++cases;
  }
  for (std::uint64_t seed : {1u, 2u}) {
    ModelConfig mc;
    mc.image_size = 32;
    mc.ablation_unet = true;
    Model m = build_model(mc, seed);
    for (auto& [name, t] : m.params)
      if (name.ends_with(".bias"))
        for (double& v : t.data()) v = rng.normal(0.0, 0.1);
    const Tensor x = random_tensor(rng, {2, 3, 32, 32});
    o.check(bitwise_equal(predict(m, x).data(), oracle::reference_unet(m, x).data()),
            "ablation U-Net vs reference assembly");
    ++cases;
  }
  o.note(std::to_string(cases) + " bitwise comparisons");
  return o;
}

// 3. Analytic loss values.
Outcome loss_values() {
  Outcome o;
  Rng rng(3);
  Tensor r({2, 4, 8, 8}, 0.0);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 64; ++i) r[(b * 4 + rng.below(4)) * 64 + i] = 1.0;
  Graph g;
  const double perfect = generalized_dice_loss(g.constant(r), r).value()[0];
  const double uniform =
      generalized_dice_loss(g.constant(Tensor({1, 2, 1, 2}, 0.5)), Tensor({1, 2, 1, 2}, {1, 0, 0, 1})).value()[0];
  o.check(std::abs(perfect) < 1e-6, "perfect prediction " + fmt("%.3g", perfect));
  o.check(std::abs(uniform - 0.5) < 1e-4, "uniform 2-pixel case " + fmt("%.9f", uniform));
  o.note("perfect " + fmt("%.2e", perfect) + ", uniform " + fmt("%.9f", uniform));
  return o;
}

// 4. Pipeline exactness.
Outcome pipeline_exactness(const fs::path& dir) {
  Outcome o;
  fs::create_directories(dir);
  Rng rng(4);
  CtVolume ct(5, 16, 24);
  ct.spacing = {2.5, 0.7, 0.7};
  for (auto& v : ct.data) v = static_cast<std::int16_t>(static_cast<long>(rng.below(65536)) - 32768);
  write_nifti(ct, dir / "ct.nii");
  o.check(read_ct(dir / "ct.nii").data == ct.data, "int16 NIfTI round trip");
  LabelVolume lab(5, 16, 24);
  for (auto& v : lab.data) v = static_cast<std::uint8_t>(rng.below(4));
  write_nifti(lab, dir / "lab.nii");
  o.check(read_labels(dir / "lab.nii").data == lab.data, "uint8 NIfTI round trip");
  FloatVolume fv(2, 8, 8);
  for (auto& v : fv.data) v = static_cast<float>(rng.normal());
  write_nifti(fv, dir / "f.nii");
  const FloatVolume fv2 = std::get<FloatVolume>(read_nifti(dir / "f.nii"));
  o.check(fv2.data.size() == fv.data.size() &&
              std::memcmp(fv2.data.data(), fv.data.data(), fv.data.size() * sizeof(float)) == 0,
          "float32 NIfTI round trip");

  o.check(normalize_hu(-2050.0) == -1.0 && normalize_hu(950.0) == 1.0 && normalize_hu(-550.0) == 0.0,
          "normalize_hu endpoints");

  for (std::size_t z : {1u, 2u, 6u}) {
    std::vector<Slice> slices;
    for (std::size_t i = 0; i < z; ++i) slices.push_back({8, std::vector<double>(64, static_cast<double>(i))});
    const auto tr = make_triples(slices);
    bool ok = tr.size() == z;
    for (std::size_t i = 0; ok && i < z; ++i) {
      const double want[3] = {static_cast<double>(i == 0 ? 0 : i - 1), static_cast<double>(i),
                              static_cast<double>(std::min(i + 1, z - 1))};
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < 64; ++p) ok = ok && tr[i].image[c * 64 + p] == want[c];
    }
    o.check(ok, "triple replication for Z=" + std::to_string(z));
  }

  CtVolume grid(5, 16, 24);
  std::vector<Tensor> maps;
  LabelVolume sq(5, 16, 16);
  for (auto& v : sq.data) v = static_cast<std::uint8_t>(rng.below(4));
  CtVolume sq_ct(5, 16, 16);
  for (std::size_t z = 0; z < 5; ++z) maps.push_back(labels_to_onehot({sq.slice(z), 256}, 16, 4));
  o.check(reconstruct_volume(maps, sq_ct).data == sq.data, "reconstruct of one-hot is identity");

  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.push_back("vol" + std::to_string(i));
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const FoldPlan plan = make_folds(ids, 10, seed);
    std::set<std::string> seen;
    bool ok = true;
    for (int f = 0; f < 10; ++f) {
      const auto fold = plan.fold(f);
      ok = ok && fold.size() == 2;
      for (const auto& id : fold) ok = ok && seen.insert(id).second;
    }
    o.check(ok && seen.size() == 20, "20 volumes / 10 folds of exactly 2 (seed " + std::to_string(seed) + ")");
  }
  o.note("round trips, HU window, triples, one-hot inversion, fold plan");
  return o;
}

// Overfit probe training; returns the result for the determinism check.
TrainResult overfit_run() {
  PhantomConfig pc;
  pc.depth = 16;
  pc.height = pc.width = 64;
  pc.blob_count_min = 2;
  pc.seed = kProbePhantomSeed;
  const Phantom ph = generate_phantom(pc);
  const auto triples = prepare_volume(ph.ct, 64);
  std::vector<TrainingSample> samples;
  for (std::size_t z : kProbeSlices) {
    const std::uint8_t* l = ph.labels.slice(z);
    samples.push_back({triples[z].image, std::vector<std::uint8_t>(l, l + 64 * 64)});
  }
  ModelConfig mc;
  mc.image_size = 64;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = kProbeSteps;  // one step per epoch
  tc.learning_rate = kLearningRate;
  tc.adam_betas[1] = kBeta2;
  tc.seed = kProbeSeed;
  tc.strict_determinism = true;
  return train_on_samples(samples, mc, tc);
}

// 5. Overfit probe.
Outcome overfit_probe(TrainResult& keep) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  keep = overfit_run();
  const double secs = seconds_since(t0);
  const auto& s = keep.history.step_loss;
  o.check(s.size() == static_cast<std::size_t>(kProbeSteps), "step count");
  o.check(s.back() < 0.05, "final GDL " + fmt("%.4f", s.back()));
  // Trailing 10-step mean, compared from the first window that starts after epoch 5.
  std::vector<double> smooth;
  for (std::size_t i = 0; i + 10 <= s.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = i; j < i + 10; ++j) sum += s[j];
    smooth.push_back(sum / 10.0);
  }
  int increases = 0;
  double worst = 0.0;
  for (std::size_t i = 6; i < smooth.size(); ++i) {
    if (smooth[i] > smooth[i - 1]) {
      ++increases;
      worst = std::max(worst, smooth[i] - smooth[i - 1]);
    }
  }
  o.check(increases == 0, std::to_string(increases) + " increases of the 10-step mean, largest " + fmt("%.4f", worst));
  o.note("final GDL " + fmt("%.4f", s.back()) + ", " + fmt("%.0f s", secs));
  return o;
}

struct CrossvalRun {
  json report;
  fs::path dir;
};

CrossvalRun crossval_run(const fs::path& manifest, const fs::path& dir, bool ablation) {
  std::vector<std::string> args = {"crossval",       "--manifest", manifest.string(),
                                   "--k",            "2",          "--epochs",
                                   "15",             "--image-size", "96",
                                   "--lr",           fmt("%.17g", kLearningRate),
                                   "--beta2",        fmt("%.17g", kBeta2),
                                   "--seed",         std::to_string(kCrossvalSeed),
                                   "--strict",       "--quiet",
                                   "--dir",          (dir / "work").string(),
                                   "--out",          (dir / "crossval.json").string()};
  if (ablation) args.push_back("--ablation");
  if (run_cli(args) != 0) throw std::runtime_error("crossval failed");
  return {load_json(dir / "crossval.json"), dir};
}

// 6. Phantom end-to-end.
Outcome phantom_experiment(const fs::path& dir, CrossvalRun& keep_full) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  if (run_cli({"phantom", "--count", "10", "--size", "32", "96", "96", "--seed", std::to_string(kPhantomSeed), "--dir",
               (dir / "data").string(), "--out", (dir / "phantom.json").string()}) != 0)
    throw std::runtime_error("phantom generation failed");
  const fs::path manifest = dir / "data" / "manifest.json";
  keep_full = crossval_run(manifest, dir / "full", false);
  const CrossvalRun unet = crossval_run(manifest, dir / "unet", true);
  const double secs = seconds_since(t0);
  const double normal = keep_full.report["mean"]["normal"], infection = keep_full.report["mean"]["infection"];
  const double unet_inf = unet.report["mean"]["infection"];
  o.check(normal >= kMinNormalDice, "normal Dice " + fmt("%.4f", normal) + " < 0.85");
  o.check(infection >= kMinInfectionDice, "infection Dice " + fmt("%.4f", infection) + " < 0.60");
  o.check(infection > unet_inf || std::abs(infection - unet_inf) <= kAblationMargin,
          "infection Dice " + fmt("%.4f", infection) + " trails the U-Net " + fmt("%.4f", unet_inf) + " by more than 0.02");
  std::string per_fold;
  for (const auto& f : keep_full.report["folds"])
    per_fold += " fold " + f["fold"].dump() + " " + fmt("%.3f", f["mean"]["normal"].get<double>()) + "/" +
                fmt("%.3f", f["mean"]["infection"].get<double>());
  o.note("full normal " + fmt("%.4f", normal) + " infection " + fmt("%.4f", infection) + ", U-Net normal " +
         fmt("%.4f", unet.report["mean"]["normal"].get<double>()) + " infection " + fmt("%.4f", unet_inf) + ";" +
         per_fold + "; " + fmt("%.0f s", secs));
  return o;
}

// 7. Determinism of strict re-runs.
Outcome determinism(const fs::path& dir, const TrainResult* probe, const CrossvalRun* full) {
  Outcome o;
  fs::create_directories(dir);
  if (probe) {
    const TrainResult again = overfit_run();
    o.check(bitwise_equal(probe->history.step_loss, again.history.step_loss), "probe loss history");
    save_checkpoint(dir / "probe_a.ckpt", probe->model);
    save_checkpoint(dir / "probe_b.ckpt", again.model);
    o.check(file_bytes(dir / "probe_a.ckpt") == file_bytes(dir / "probe_b.ckpt"), "probe checkpoint bytes");
  }
  if (full) {
    const fs::path manifest = full->dir.parent_path() / "data" / "manifest.json";
    const fs::path first = dir / "full_first";
    fs::remove_all(first);
    fs::rename(full->dir, first);
    const CrossvalRun again = crossval_run(manifest, full->dir, false);
    for (int f = 0; f < 2; ++f) {
      const std::string stem = "fold_" + std::to_string(f);
      const fs::path a = first / "work", b = again.dir / "work";
      o.check(file_bytes(a / (stem + ".ckpt")) == file_bytes(b / (stem + ".ckpt")), stem + " checkpoint bytes");
      o.check(file_bytes(a / (stem + "_loss.json")) == file_bytes(b / (stem + "_loss.json")), stem + " loss history");
      o.check(file_bytes(a / (stem + "_report.json")) == file_bytes(b / (stem + "_report.json")), stem + " report");
    }
    o.check(file_bytes(first / "crossval.json") == file_bytes(again.dir / "crossval.json"), "aggregate report");
  }
  o.note(std::string("compared") + (probe ? " probe" : "") + (full ? " crossval" : ""));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "covidseg_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only.insert(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--work-dir DIR] [--only N]...\n";
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  auto selected = [&](int n) { return only.empty() || only.count(n) > 0; };

  TrainResult probe;
  CrossvalRun full;
  bool have_probe = false, have_full = false;
  bool all = true;
  const std::pair<int, std::string> names[] = {{1, "gradient suite"},       {2, "oracle equivalences"},
                                               {3, "analytic loss values"}, {4, "pipeline exactness"},
                                               {5, "overfit probe"},        {6, "phantom end-to-end"},
                                               {7, "determinism"}};
  for (const auto& [n, name] : names) {
    if (!selected(n)) continue;
    Outcome o;
    try {
      switch (n) {
        case 1: o = gradient_suite(); break;
        case 2: o = oracle_equivalences(); break;
        case 3: o = loss_values(); break;
        case 4: o = pipeline_exactness(work / "pipeline"); break;
        case 5:
          o = overfit_probe(probe);
          have_probe = true;
          break;
        case 6:
          o = phantom_experiment(work / "phantom", full);
          have_full = true;
          break;
        case 7:
          if (!have_probe) {
            probe = overfit_run();
            have_probe = true;
          }
          if (!have_full && only.empty()) throw std::runtime_error("phantom experiment did not complete");
          o = determinism(work / "determinism", have_probe ? &probe : nullptr, have_full ? &full : nullptr);
          break;
      }
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    all = all && o.pass;
    std::cout << "CRITERION " << n << " " << name << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ")"
              << std::endl;
  }
  return all ? 0 : 1;
}
