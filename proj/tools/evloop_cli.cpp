#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "commands.hpp"
#include "evloop/error.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

}  // namespace

int main(int argc, char** argv) {
  using namespace evloop;
  using namespace evloop::cli;

  CLI::App app{"evloop: attribution maps, iterative evidence augmentation and FROC evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Global seed (overrides the config)");

  // Overrides shared by several subcommands.
  std::optional<std::string> method, preset, channel_reduce, normalize;
  std::optional<double> radius_pct, lr, alpha, val_fraction;
  std::optional<std::size_t> epochs, batch_size, ig_steps, t_max, r_inp, limit, input_size, width;
  std::optional<std::vector<std::size_t>> counts;
  std::string out, data, model, image;
  std::vector<std::string> inputs;
  bool do_augment = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--counts", counts, "Scenes per grade 0..3")->expected(4)->delimiter(',');

  auto* trn = app.add_subcommand("train", "Train a severity regressor");
  trn->add_option("--data", data, "Dataset directory")->required();
  trn->add_option("--out", out, "Model bundle directory")->required();
  trn->add_option("--preset", preset, "vgg_mini or deep_mini");
  trn->add_option("--epochs", epochs);
  trn->add_option("--lr", lr, "Adam learning rate");
  trn->add_option("--batch-size", batch_size);
  trn->add_option("--val-fraction", val_fraction);
  trn->add_option("--input-size", input_size);
  trn->add_option("--width", width, "Channel width multiplier");

  auto* grd = app.add_subcommand("grade", "Predict severities for a dataset and report metrics");
  grd->add_option("--model", model)->required();
  grd->add_option("--data", data)->required();
  grd->add_option("--out", out, "Optional output directory");

  auto add_explain_opts = [&](CLI::App* sc) {
    sc->add_option("--method", method, "Attribution method");
    sc->add_option("--ig-steps", ig_steps);
    sc->add_option("--channel-reduce", channel_reduce, "max_abs, mean_abs or l2");
    sc->add_option("--t-max", t_max);
    sc->add_option("--alpha", alpha);
    sc->add_option("--r-inp", r_inp);
    sc->add_option("--normalize", normalize, "Per-iteration normalisation: off or minmax");
    sc->add_flag("--augment", do_augment, "Run the iterative augmentation loop");
  };
  auto* exp = app.add_subcommand("explain", "Explain one image");
  exp->add_option("--model", model)->required();
  exp->add_option("--image", image)->required();
  exp->add_option("--out", out)->required();
  add_explain_opts(exp);

  auto* ev = app.add_subcommand("eval-froc", "FROC evaluation of attribution maps");
  ev->add_option("--model", model)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--out", out)->required();
  ev->add_option("--radius-pct", radius_pct, "Detection radius, percent of image size");
  ev->add_option("--limit", limit, "Evaluate at most N referable scenes");
  add_explain_opts(ev);

  auto* rep = app.add_subcommand("report", "Tabulate eval-froc summaries");
  rep->add_option("--inputs", inputs, "eval-froc output directories")->required();
  rep->add_option("--out", out, "Optional output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (counts) std::copy(counts->begin(), counts->end(), cfg.counts.begin());
    if (preset) cfg.preset = parse_preset(*preset);
    if (epochs) cfg.train.epochs = *epochs;
    if (lr) cfg.train.learning_rate = *lr;
    if (batch_size) cfg.train.batch_size = *batch_size;
    if (val_fraction) cfg.train.validation_fraction = *val_fraction;
    if (input_size) cfg.input_size = *input_size;
    if (width) cfg.width_multiplier = *width;
    if (method) cfg.method = parse_method(*method);
    if (ig_steps) cfg.ig_steps = *ig_steps;
    if (channel_reduce) cfg.channel_reduce = parse_channel_reduce(*channel_reduce);
    if (t_max) cfg.t_max = *t_max;
    if (alpha) cfg.alpha = *alpha;
    if (r_inp) cfg.r_inp = *r_inp;
    if (normalize) cfg.per_iteration_normalize = parse_normalization(*normalize);
    if (radius_pct) cfg.radius_pct = *radius_pct;
    if (limit) cfg.limit = *limit;

    if (*gen) return cmd_gen_data(cfg, out);
    if (*trn) return cmd_train(cfg, data, out);
    if (*grd) return cmd_grade(model, data, out);
    if (*exp) return cmd_explain(cfg, model, image, do_augment, out);
    if (*ev) return cmd_eval_froc(cfg, model, data, do_augment, out);
    if (*rep) {
      std::vector<fs::path> dirs(inputs.begin(), inputs.end());
      return cmd_report(dirs, out);
    }
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const LookupError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
