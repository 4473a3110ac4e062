#include "covidseg/cli/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "covidseg/cli/crossval.hpp"
#include "covidseg/cli/gradcheck_suite.hpp"
#include "covidseg/ctio/manifest.hpp"
#include "covidseg/ctio/nifti.hpp"
#include "covidseg/evalkit/dice.hpp"
#include "covidseg/evalkit/overlay.hpp"
#include "covidseg/phantom/phantom.hpp"
#include "covidseg/segnet/checkpoint.hpp"
#include "covidseg/trainer/trainer.hpp"

namespace covidseg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Effective configuration: defaults, then the --config file, then flags.
struct Settings {
  ModelConfig model;
  TrainConfig train;
  PhantomConfig phantom;
  std::uint64_t seed = 0;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Seed for initialisation, shuffling, fold plans and phantoms");
  app->add_option("--config", c.config, "JSON file with optional model, train and phantom sections")
      ->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "Path of the JSON document this command writes")->required();
}

// Flags that override TrainConfig and the model input size.
struct TrainFlags {
  std::optional<int> epochs, batch_size, image_size;
  std::optional<double> lr, beta1, beta2, adam_eps, gdl_eps, grad_clip;
  bool strict = false, ablation = false;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--epochs", f.epochs, "Epochs")->check(CLI::PositiveNumber);
  app->add_option("--batch-size", f.batch_size, "Slice triples per step")->check(CLI::PositiveNumber);
  app->add_option("--lr", f.lr, "Adam learning rate");
  app->add_option("--beta1", f.beta1, "Adam first-moment decay");
  app->add_option("--beta2", f.beta2, "Adam second-moment decay");
  app->add_option("--adam-eps", f.adam_eps, "Adam denominator epsilon");
  app->add_option("--gdl-eps", f.gdl_eps, "Generalized Dice loss epsilon");
  app->add_option("--grad-clip", f.grad_clip, "Global gradient norm limit (0 disables)");
  app->add_option("--image-size", f.image_size, "Network input size S");
  app->add_flag("--strict", f.strict, "Strict determinism");
  app->add_flag("--ablation", f.ablation, "Use the plain U-Net ablation");
}

void apply(const TrainFlags& f, Settings& s) {
  if (f.epochs) s.train.epochs = *f.epochs;
  if (f.batch_size) s.train.batch_size = *f.batch_size;
  if (f.lr) s.train.learning_rate = *f.lr;
  if (f.beta1) s.train.adam_betas[0] = *f.beta1;
  if (f.beta2) s.train.adam_betas[1] = *f.beta2;
  if (f.adam_eps) s.train.adam_eps = *f.adam_eps;
  if (f.gdl_eps) s.train.gdl_eps = *f.gdl_eps;
  if (f.grad_clip) s.train.grad_clip_norm = *f.grad_clip;
  if (f.image_size) s.model.image_size = *f.image_size;
  if (f.strict) s.train.strict_determinism = true;
  if (f.ablation) s.model.ablation_unet = true;
  s.train.validate();
  s.model.validate();
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("invalid JSON in " + path.string() + ": " + e.what());
  }
}

Settings load_settings(const Common& c) {
  Settings s;
  if (!c.config.empty()) {
    const json j = read_json_file(c.config);
    if (!j.is_object()) throw std::runtime_error("config " + c.config + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "model") from_json(*it, s.model);
      else if (it.key() == "train") from_json(*it, s.train);
      else if (it.key() == "phantom") from_json(*it, s.phantom);
      else if (it.key() == "seed") s.seed = it->get<std::uint64_t>();
      else throw std::runtime_error("config " + c.config + ": unknown section '" + it.key() + "'");
    }
    if (!j.contains("seed")) s.seed = s.train.seed;
  }
  if (c.seed) s.seed = *c.seed;
  s.train.seed = s.seed;
  s.phantom.seed = s.seed;
  if (strict_mode_forced_by_env()) s.train.strict_determinism = true;
  return s;
}

json provenance(const std::string& command, const Settings& s, const std::vector<std::string>& args) {
  return {{"tool", "covidseg"},
          {"version", kToolVersion},
          {"command", command},
          {"args", args},
          {"seed", s.seed},
          {"strict_determinism", s.train.strict_determinism},
          {"config", {{"model", s.model}, {"train", s.train}, {"phantom", s.phantom}, {"seed", s.seed}}}};
}

struct Context {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lung CT segmentation toolkit: phantoms, training, cross-validation, inference and scoring", "covidseg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Context ctx{args, out, err};

  // phantom
  Common phantom_common;
  int phantom_count = 10;
  std::string phantom_dir;
  std::vector<std::size_t> phantom_size;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic CT dataset with a manifest");
  add_common(phantom, phantom_common);
  phantom->add_option("--count", phantom_count, "Number of volumes")->check(CLI::PositiveNumber);
  phantom->add_option("--dir", phantom_dir, "Output directory for volumes and manifest.json")->required();
  phantom->add_option("--size", phantom_size, "Volume extents Z H W")->expected(3);

  // train
  Common train_common;
  std::string train_manifest, train_checkpoint;
  int train_k = 10, train_fold = 0;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train on every fold but one");
  add_common(train_cmd, train_common);
  train_cmd->add_option("--manifest", train_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--k", train_k, "Number of folds")->check(CLI::PositiveNumber);
  train_cmd->add_option("--fold", train_fold, "Held-out fold index")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--checkpoint", train_checkpoint, "Checkpoint path")->required();
  add_train_flags(train_cmd, train_flags);

  // crossval
  Common cv_common;
  std::string cv_manifest, cv_dir;
  int cv_k = 10;
  TrainFlags cv_flags;
  bool cv_predictions = false, cv_quiet = false;
  auto* crossval = app.add_subcommand("crossval", "k-fold cross-validation with per-fold Dice reports");
  add_common(crossval, cv_common);
  crossval->add_option("--manifest", cv_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  crossval->add_option("--k", cv_k, "Number of folds")->check(CLI::PositiveNumber);
  crossval->add_option("--dir", cv_dir, "Directory for checkpoints and per-fold reports (default: next to --out)");
  add_train_flags(crossval, cv_flags);
  crossval->add_flag("--save-predictions", cv_predictions, "Write held-out predictions as NIfTI");
  crossval->add_flag("--quiet", cv_quiet, "No progress output");

  // infer
  Common infer_common;
  std::string infer_ckpt, infer_input, infer_output;
  int infer_batch = 10;
  auto* infer = app.add_subcommand("infer", "Segment a CT volume");
  add_common(infer, infer_common);
  infer->add_option("--checkpoint", infer_ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", infer_input, "CT volume (.nii)")->required()->check(CLI::ExistingFile);
  infer->add_option("--output", infer_output, "Label volume to write (.nii)")->required();
  infer->add_option("--batch-size", infer_batch, "Slices per forward pass")->check(CLI::PositiveNumber);

  // eval
  Common eval_common;
  std::vector<std::string> eval_pred, eval_gt, eval_ids;
  std::string eval_fold;
  auto* eval = app.add_subcommand("eval", "Dice scores of predicted against reference label volumes");
  add_common(eval, eval_common);
  eval->add_option("--pred", eval_pred, "Predicted label volumes")->required();
  eval->add_option("--gt", eval_gt, "Reference label volumes, paired by position")->required();
  eval->add_option("--id", eval_ids, "Volume ids (default: predicted file stems)");
  eval->add_option("--fold", eval_fold, "Fold metadata (JSON) echoed into the report");

  // overlay
  Common overlay_common;
  std::string overlay_ct, overlay_labels, overlay_dir, overlay_plane = "axial";
  auto* overlay = app.add_subcommand("overlay", "Render label overlays as PNG slices");
  add_common(overlay, overlay_common);
  overlay->add_option("--ct", overlay_ct, "CT volume")->required()->check(CLI::ExistingFile);
  overlay->add_option("--labels", overlay_labels, "Label volume")->required()->check(CLI::ExistingFile);
  overlay->add_option("--dir", overlay_dir, "Output directory")->required();
  overlay->add_option("--plane", overlay_plane, "axial or coronal")->check(CLI::IsMember({"axial", "coronal"}));

  // gradcheck
  Common gc_common;
  double gc_tolerance = 1e-4;
  std::size_t gc_probes = 6;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable operator");
  add_common(gradcheck, gc_common);
  gradcheck->add_option("--tolerance", gc_tolerance, "Maximum relative error");
  gradcheck->add_option("--probes", gc_probes, "Probed elements per model parameter tensor");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "covidseg: " << e.what() << "\n\n";
    const CLI::App* failed = &app;
    for (const auto* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return 2;
  }

  try {
    if (phantom->parsed()) {
      Settings s = load_settings(phantom_common);
      if (!phantom_size.empty()) {
        s.phantom.depth = phantom_size[0];
        s.phantom.height = phantom_size[1];
        s.phantom.width = phantom_size[2];
      }
      s.phantom.validate();
      const fs::path manifest = generate_dataset(phantom_count, s.seed, phantom_dir, s.phantom);
      const Manifest m = load_manifest(manifest);
      json cases = json::array();
      for (std::size_t i = 0; i < m.cases.size(); ++i) {
        cases.push_back({{"id", m.cases[i].id},
                         {"seed", s.seed + i},
                         {"ct", m.cases[i].ct_path.string()},
                         {"labels", m.cases[i].label_path.string()}});
      }
      write_json(phantom_common.out,
                 {{"provenance", provenance("phantom", s, ctx.args)}, {"manifest", manifest.string()}, {"cases", cases}});
    } else if (train_cmd->parsed()) {
      Settings s = load_settings(train_common);
      apply(train_flags, s);
      const Manifest manifest = load_manifest(train_manifest);
      const FoldPlan plan = make_folds(manifest.ids(), train_k, s.seed);
      if (train_fold >= train_k) throw std::invalid_argument("--fold must be below --k");
      const json prov = provenance("train", s, ctx.args);
      TrainResult r = train(manifest, s.model, s.train, plan, train_fold, [&](int epoch, double loss) {
        ctx.err << "epoch " << epoch << " loss " << loss << '\n';
      });
      save_checkpoint(train_checkpoint, r.model,
                      {{"fold", fold_metadata(plan, train_fold)}, {"train", s.train}, {"provenance", prov}});
      write_json(train_common.out, {{"provenance", prov},
                                    {"plan", plan},
                                    {"fold", fold_metadata(plan, train_fold)},
                                    {"checkpoint", train_checkpoint},
                                    {"loss_history", r.history}});
    } else if (crossval->parsed()) {
      Settings s = load_settings(cv_common);
      apply(cv_flags, s);
      CrossvalOptions o;
      o.manifest = cv_manifest;
      o.model = s.model;
      o.train = s.train;
      o.k = cv_k;
      o.fold_seed = s.seed;
      o.work_dir = cv_dir.empty() ? fs::path(cv_common.out).parent_path() / "crossval" : fs::path(cv_dir);
      o.write_predictions = cv_predictions;
      o.provenance = provenance("crossval", s, ctx.args);
      if (!cv_quiet) o.log = [&](const std::string& line) { ctx.err << line << '\n'; };
      const CrossvalResult r = run_crossval(o);
      write_json(cv_common.out, aggregate_report(r, o.provenance));
    } else if (infer->parsed()) {
      Settings s = load_settings(infer_common);
      const LoadedCheckpoint ckpt = load_checkpoint(infer_ckpt);
      const LabelVolume labels = infer_volume(ckpt.model, read_ct(infer_input), infer_batch);
      if (fs::path(infer_output).has_parent_path()) fs::create_directories(fs::path(infer_output).parent_path());
      write_nifti(labels, infer_output);
      s.model = ckpt.model.config;
      write_json(infer_common.out, {{"provenance", provenance("infer", s, ctx.args)},
                                    {"checkpoint", infer_ckpt},
                                    {"checkpoint_seed", ckpt.model.seed},
                                    {"input", infer_input},
                                    {"output", infer_output},
                                    {"shape", {labels.depth, labels.height, labels.width}}});
    } else if (eval->parsed()) {
      Settings s = load_settings(eval_common);
      if (eval_pred.size() != eval_gt.size()) {
        throw std::invalid_argument("eval: " + std::to_string(eval_pred.size()) + " predictions but " +
                                    std::to_string(eval_gt.size()) + " reference volumes");
      }
      if (!eval_ids.empty() && eval_ids.size() != eval_pred.size()) {
        throw std::invalid_argument("eval: --id count must match --pred count");
      }
      std::vector<EvalPair> pairs;
      for (std::size_t i = 0; i < eval_pred.size(); ++i) {
        const std::string id = eval_ids.empty() ? fs::path(eval_pred[i]).stem().string() : eval_ids[i];
        pairs.push_back({id, eval_pred[i], eval_gt[i]});
      }
      json fold = nullptr;
      if (!eval_fold.empty()) {
        try {
          fold = json::parse(eval_fold);
        } catch (const json::parse_error&) {
          fold = eval_fold;
        }
      }
      json report = evaluate(pairs, default_eval_classes(), fold);
      report["provenance"] = provenance("eval", s, ctx.args);
      write_json(eval_common.out, report);
    } else if (overlay->parsed()) {
      Settings s = load_settings(overlay_common);
      const auto files =
          render_overlay(read_ct(overlay_ct), read_labels(overlay_labels), overlay_dir, parse_plane(overlay_plane));
      json names = json::array();
      for (const auto& f : files) names.push_back(f.string());
      write_json(overlay_common.out, {{"provenance", provenance("overlay", s, ctx.args)},
                                      {"plane", overlay_plane},
                                      {"count", files.size()},
                                      {"files", names}});
    } else if (gradcheck->parsed()) {
      Settings s = load_settings(gc_common);
      GradSuiteOptions o;
      o.seed = s.seed;
      o.tolerance = gc_tolerance;
      o.model = s.model;
      o.model_probes_per_tensor = gc_probes;
      const GradSuiteResult r = run_gradcheck_suite(o);
      json doc = r;
      doc["provenance"] = provenance("gradcheck", s, ctx.args);
      write_json(gc_common.out, doc);
      if (!r.passed()) {
        std::string failing;
        for (const auto& rep : r.reports)
          if (!rep.passed(r.tolerance)) failing += (failing.empty() ? "" : ", ") + rep.op;
        ctx.err << "covidseg: gradient check failed for " << failing << '\n';
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    ctx.err << "covidseg: error: " << msg << '\n';
    return 1;
  }
  return 0;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace covidseg
