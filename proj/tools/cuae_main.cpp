#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cuae/data/generator.hpp"
#include "cuae/expost/expost.hpp"
#include "cuae/gauss/serialize.hpp"
#include "cuae/metrics/metrics.hpp"
#include "cuae/model/checkpoint.hpp"
#include "cuae/model/model.hpp"
#include "cuae/model/train.hpp"
#include "cuae/types.hpp"

namespace fs = std::filesystem;
using namespace cuae;

namespace {

// Flag combinations that cannot be right regardless of data; reported like
// parser errors, with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void load_scenes(const std::string& path, std::vector<SceneContext>& xs,
                 std::vector<Trajectory>& ys) {
  const std::vector<data::SceneRecord> recs = data::read_csv(path);
  if (recs.empty()) throw std::runtime_error("dataset is empty: " + path);
  xs.reserve(recs.size());
  ys.reserve(recs.size());
  for (const data::SceneRecord& r : recs) {
    xs.push_back(data::context_of(r));
    ys.push_back(r.future);
  }
}

struct GenDataArgs {
  int scenes = 7000;
  int branches = 3;
  double noise_std = 0.15;
  uint64_t seed = 0;
  std::string out = "data";
};

int run_gen_data(const GenDataArgs& a) {
  data::GenConfig cfg;
  cfg.n_scenes = a.scenes;
  cfg.n_branches = a.branches;
  cfg.noise_std = a.noise_std;
  cfg.seed = a.seed;
  const data::Splits splits = data::generate(cfg);
  fs::create_directories(a.out);
  data::write_csv(a.out + "/train.csv", splits.train);
  data::write_csv(a.out + "/val.csv", splits.val);
  std::cout << "wrote " << splits.train.size() << " train and "
            << splits.val.size() << " val scenes under " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string variant = "cuae";
  int latent_dim = 8;
  int components = 3;
  int samples = 16;
  double sigma = 1.0;
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
  uint64_t seed = 0;
  std::string data;
  std::string out = "run";
  std::string config;
  std::string resume;
};

int run_train(const CLI::App& cmd, const TrainArgs& a) {
  auto passed = [&](const std::string& flag) { return cmd.count(flag) > 0; };

  std::optional<model::TrainState> st;
  if (!a.resume.empty()) {
    for (const char* flag : {"--variant", "--latent-dim", "--components",
                             "--samples", "--sigma", "--batch-size", "--lr",
                             "--seed", "--config"})
      if (passed(flag))
        throw UsageError(std::string(flag) +
                         " conflicts with --resume: a resumed run takes its "
                         "configuration from the checkpoint");
    st.emplace(model::load_checkpoint(a.resume));
    if (passed("--epochs")) st->tcfg.epochs = a.epochs;
    if (st->tcfg.epochs < st->epochs_done)
      throw UsageError("--epochs is below the checkpoint's completed count (" +
                       std::to_string(st->epochs_done) + ")");
  } else {
    model::RunConfig rc;
    if (!a.config.empty()) model::apply_config_file(a.config, rc);
    if (passed("--variant")) rc.variant = model::variant_from_name(a.variant);
    if (passed("--latent-dim")) rc.model.latent_dim = a.latent_dim;
    if (passed("--components")) rc.model.n_components = a.components;
    if (passed("--sigma")) rc.model.sigma = a.sigma;
    if (passed("--epochs")) rc.train.epochs = a.epochs;
    if (passed("--batch-size")) rc.train.batch_size = a.batch_size;
    if (passed("--lr")) rc.train.base_lr = a.lr;
    if (passed("--seed")) rc.train.seed = a.seed;
    if (passed("--samples"))
      rc.train.n_samples = a.samples;
    else if (model::is_unscented(rc.variant) && rc.train.n_samples % 2 == 0)
      rc.train.n_samples = 2 * rc.model.latent_dim + 1;  // full sigma set

    if (passed("--components") && !model::is_gmm(rc.variant) &&
        a.components != 1)
      throw UsageError("--components applies to the mixture variants");
    if (model::is_unscented(rc.variant)) {
      const int lim = 2 * rc.model.latent_dim + 1;
      if (rc.train.n_samples % 2 == 0 || rc.train.n_samples < 3 ||
          rc.train.n_samples > lim)
        throw UsageError("unscented training needs an odd sample count in [3, " +
                         std::to_string(lim) + "]");
    }
    st.emplace(model::TrainState{model::Model(rc.variant, rc.model),
                                 nn::Adam(), rc.train, 0, {}});
    st->model.init_params(rc.train.seed);
  }

  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  load_scenes(a.data, xs, ys);

  const std::vector<model::EpochRow> rows =
      model::train(*st, xs, ys, [](const model::EpochRow& r) {
        std::fprintf(stderr,
                     "epoch %d  lr %.3g  loss %.6f  (rec %.6f, kl %.6f)\n",
                     r.epoch, r.lr, r.loss_total, r.loss_rec, r.loss_kl);
      });

  fs::create_directories(a.out);
  const std::string log_path = a.out + "/train_log.csv";
  const bool append = !a.resume.empty() && fs::exists(log_path);
  model::write_train_log(log_path, rows, append);
  model::save_checkpoint(a.out + "/checkpoint.json", *st);
  std::cout << "trained " << model::variant_name(st->model.variant()) << " for "
            << st->epochs_done << " epochs; checkpoint under " << a.out
            << "\n";
  return 0;
}

struct FitExpostArgs {
  std::string checkpoint;
  std::string data;
  int components = 8;
  uint64_t seed = 0;
  std::string out = "expost";
};

int run_fit_expost(const FitExpostArgs& a) {
  model::TrainState st = model::load_checkpoint(a.checkpoint);
  if (model::is_gmm(st.model.variant()))
    throw UsageError(
        "ex-post fitting applies to the single-Gaussian variants (cvae, "
        "cuae)");
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  load_scenes(a.data, xs, ys);

  expost::EncodingPairSet pairs = expost::collect_pairs(st.model, xs, ys);
  pairs.provenance = a.data + " @ " + a.checkpoint;
  const gauss::GaussianMixture joint =
      expost::fit_joint(pairs, a.components, a.seed);
  fs::create_directories(a.out);
  gauss::save_mixture(a.out + "/expost.json", joint);
  expost::write_pairs_csv(a.out + "/pairs.csv", pairs);
  std::cout << "fitted a " << a.components << "-component joint over "
            << pairs.size() << " encoding pairs under " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string mode = "sigma";
  int n_samples = 17;
  int n_outputs = 0;
  std::string cluster = "off";
  std::string expost;
  uint64_t seed = 0;
  std::string out = "eval";
  int workers = 0;
};

int run_eval(const EvalArgs& a) {
  model::TrainState st = model::load_checkpoint(a.checkpoint);
  const model::Variant v = st.model.variant();
  const model::PredictMode mode = a.mode == "prior" ? model::PredictMode::kPrior
                                  : a.mode == "sigma"
                                      ? model::PredictMode::kSigma
                                      : model::PredictMode::kCxp;
  const bool cluster = a.cluster == "on";
  const bool cxp = mode == model::PredictMode::kCxp;

  if (cxp && a.expost.empty())
    throw UsageError("--mode cxp requires --expost");
  if (model::is_gmm(v)) {
    if (cluster)
      throw UsageError("--cluster applies to the single-Gaussian variants");
    if (cxp)
      throw UsageError("--mode cxp applies to the single-Gaussian variants");
    const int C = st.model.config().n_components;
    if (a.n_outputs != 0 && a.n_outputs != C)
      throw UsageError("mixture variants emit one candidate per component (" +
                       std::to_string(C) + "); pass --M 0 or --M " +
                       std::to_string(C));
  }
  if (cluster) {
    if (a.n_outputs < 1) throw UsageError("--cluster on needs --M >= 1");
    if (a.n_samples < a.n_outputs)
      throw UsageError("--K must be at least --M when clustering");
  } else if (!model::is_gmm(v)) {
    const bool cxp_unscented = cxp && model::is_unscented(v);
    if (cxp_unscented && a.n_outputs != 0)
      throw UsageError(
          "in unscented ex-post mode the candidate count is set by component "
          "pruning; pass --M 0");
    if (!cxp_unscented && a.n_outputs != 0 && a.n_outputs != a.n_samples)
      throw UsageError(
          "without clustering the candidate count equals --K; pass --M 0");
  }
  if (mode == model::PredictMode::kSigma) {
    const int lim = 2 * st.model.config().latent_dim + 1;
    if (a.n_samples % 2 == 0 || a.n_samples < 3 || a.n_samples > lim)
      throw UsageError("--mode sigma needs an odd --K in [3, " +
                       std::to_string(lim) + "]");
  }

  std::optional<gauss::GaussianMixture> joint;
  if (!a.expost.empty()) joint.emplace(gauss::load_mixture(a.expost));
  const gauss::GaussianMixture* jp = joint ? &*joint : nullptr;

  const std::vector<data::SceneRecord> recs = data::read_csv(a.data);
#ifdef _OPENMP
  if (a.workers > 0) omp_set_num_threads(a.workers);
#endif

  metrics::EvalConfig ec;
  ec.mode = mode;
  ec.n_samples = a.n_samples;
  ec.n_outputs = a.n_outputs;
  ec.cluster = cluster;
  ec.seed = a.seed;

  const metrics::EvalReport rep = metrics::evaluate(st.model, recs, ec, jp);
  fs::create_directories(a.out);
  metrics::write_metrics_csv(a.out + "/metrics.csv", rep);
  metrics::write_summary_csv(a.out + "/summary.csv", rep);
  metrics::write_predictions_csv(a.out + "/predictions.csv", st.model, recs,
                                 ec, jp);

  if (rep.n_sentinel > 0)
    std::fprintf(stderr,
                 "warning: %d mixture-NLL cells hit the underflow sentinel\n",
                 rep.n_sentinel);
  const metrics::SceneMetrics& g = rep.aggregate;
  std::printf(
      "%s  scenes %zu  minADE %.4f  minFDE %.4f  mixNLL %.4f/%.4f/%.4f  "
      "winNLL %.4f/%.4f/%.4f\n",
      rep.variant.c_str(), rep.rows.size(), g.min_ade, g.min_fde, g.mix_nll[0],
      g.mix_nll[1], g.mix_nll[2], g.win_nll[0], g.win_nll[1], g.win_nll[2]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Latent-variable trajectory forecasting: synthetic data, training, "
      "ex-post conditioning, and Table-style evaluation."};
  app.require_subcommand(1);

  GenDataArgs ga;
  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a synthetic branching-intersection dataset");
  gen->add_option("--scenes", ga.scenes, "number of scenes")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--branches", ga.branches, "available branches per scene")
      ->capture_default_str()
      ->check(CLI::Range(1, 3));
  gen->add_option("--noise-std", ga.noise_std, "future position noise, meters")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", ga.seed, "generator seed")->capture_default_str();
  gen->add_option("--out", ga.out, "output directory (train.csv, val.csv)")
      ->capture_default_str();

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "Train a forecasting model");
  tr->add_option("--variant", ta.variant, "model variant")
      ->capture_default_str()
      ->check(CLI::IsMember({"cvae", "cuae", "gmm-cvae", "gmm-cuae"}));
  tr->add_option("--latent-dim", ta.latent_dim, "latent dimension n")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--components", ta.components,
                 "mixture components (gmm variants)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--samples", ta.samples,
                 "latent draws per scene; unscented variants default to the "
                 "full sigma set")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--sigma", ta.sigma, "reconstruction noise scale, meters")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--epochs", ta.epochs, "total epochs to reach")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  tr->add_option("--batch-size", ta.batch_size, "scenes per optimizer step")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--lr", ta.lr, "base learning rate")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  tr->add_option("--seed", ta.seed, "initialization and shuffling seed")
      ->capture_default_str();
  tr->add_option("--data", ta.data, "training split CSV")
      ->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--out", ta.out,
                 "output directory (checkpoint.json, train_log.csv)")
      ->capture_default_str();
  tr->add_option("--config", ta.config,
                 "key=value config file; explicit flags win")
      ->check(CLI::ExistingFile);
  tr->add_option("--resume", ta.resume, "checkpoint to continue from")
      ->check(CLI::ExistingFile);

  FitExpostArgs fa;
  CLI::App* fe = app.add_subcommand(
      "fit-expost", "Fit the joint mixture over posterior/prior encodings");
  fe->add_option("--checkpoint", fa.checkpoint, "trained model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  fe->add_option("--data", fa.data, "training split CSV")
      ->required()
      ->check(CLI::ExistingFile);
  fe->add_option("--components", fa.components, "joint mixture components")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  fe->add_option("--seed", fa.seed, "EM initialization seed")
      ->capture_default_str();
  fe->add_option("--out", fa.out, "output directory (expost.json, pairs.csv)")
      ->capture_default_str();

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand(
      "eval", "Score a checkpoint on a dataset split");
  ev->add_option("--checkpoint", ea.checkpoint, "trained model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--data", ea.data, "evaluation split CSV")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--mode", ea.mode, "latent sampling mode")
      ->capture_default_str()
      ->check(CLI::IsMember({"prior", "sigma", "cxp"}));
  ev->add_option("--K", ea.n_samples, "latent samples per scene")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  ev->add_option("--M", ea.n_outputs,
                 "output candidates (0 derives it from the mode)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  ev->add_option("--cluster", ea.cluster, "cluster samples into M candidates")
      ->capture_default_str()
      ->check(CLI::IsMember({"on", "off"}));
  ev->add_option("--expost", ea.expost,
                 "joint mixture JSON (required for --mode cxp)")
      ->check(CLI::ExistingFile);
  ev->add_option("--seed", ea.seed, "sampling seed")->capture_default_str();
  ev->add_option("--out", ea.out,
                 "output directory (metrics.csv, summary.csv, "
                 "predictions.csv)")
      ->capture_default_str();
  ev->add_option("--workers", ea.workers,
                 "evaluation threads (0 keeps the runtime default)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen_data(ga);
    if (tr->parsed()) return run_train(*tr, ta);
    if (fe->parsed()) return run_fit_expost(fa);
    if (ev->parsed()) return run_eval(ea);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
