// SPDX-License-Identifier: Apache-2.0
#include "pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace rmies;
using namespace rmies::cli;

namespace {

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Key/value configuration file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Master seed (overrides every seed in the config)");
  app->add_option("--grid", c.grid, "Wavenumber grid first:last:step (default 950:1800:2)");
  app->add_option("--out", c.out, "Output directory")->default_str(".");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber)->default_str("1");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resonant Mie scattering correction: oracle, neural surrogate and evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  common.argv.assign(argv, argv + argc);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a labelled synthetic dataset");
  add_common(s, common);
  s->add_option("--classes", synth.classes, "Use the first K class templates");
  s->add_option("--per-class", synth.per_class, "Spectra per class");
  s->add_option("--width", synth.width, "Write a width x height raster cube");
  s->add_option("--height", synth.height, "Raster height");
  s->add_flag("--no-distortion", synth.no_distortion, "Identity distortion (pure spectra plus optional noise)");
  s->add_option("--noise", synth.noise, "Noise sigma in AU");
  s->add_option("--export", synth.exports, "Also write these raw spectra as CSV")->delimiter(',');

  CorrectArgs correct;
  auto* c = app.add_subcommand("correct", "Correct a cube with the oracle or a trained surrogate");
  add_common(c, common);
  c->add_option("--input", correct.input, "Raw cube")->required();
  c->add_option("--method", correct.method, "oracle or surrogate")->check(CLI::IsMember({"oracle", "surrogate"}));
  c->add_option("--iterations", correct.iterations, "Oracle iterations");
  c->add_option("--reference", correct.reference, "Initial reference spectrum CSV");
  c->add_option("--model", correct.model, "Model file for --method surrogate");
  c->add_option("--export", correct.exports, "Also write these corrected spectra as CSV")->delimiter(',');

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Pretrain on raw spectra, then finetune on (raw, oracle) pairs");
  add_common(t, common);
  t->add_option("--raw", train.raw, "Raw training cube")->required();
  t->add_option("--corrected", train.corrected, "Oracle-corrected training cube")->required();
  t->add_option("--pretrain-raw", train.pretrain_raw, "Separate raw-only cube for pretraining");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Surrogate forward pass over a cube");
  add_common(i, common);
  i->add_option("--model", infer.model, "Model file")->required();
  i->add_option("--input", infer.input, "Raw cube")->required();
  i->add_option("--export", infer.exports, "Also write these outputs as CSV")->delimiter(',');

  UncertaintyArgs unc;
  auto* u = app.add_subcommand("uncertainty", "Monte-Carlo dropout mean, variance and confidence band");
  add_common(u, common);
  u->add_option("--model", unc.model, "Model file")->required();
  u->add_option("--input", unc.input, "Raw cube")->required();
  u->add_option("--oracle", unc.oracle, "Oracle-corrected cube for the error alignment");
  u->add_option("--passes", unc.passes, "Stochastic passes T");
  u->add_option("--p", unc.p, "Dropout probability");
  u->add_option("--z", unc.z, "Band half-width in standard deviations");
  u->add_option("--export", unc.exports, "Spectra to export as CSV (default 0)")->delimiter(',');

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "RMSE, downstream agreement and band shift");
  add_common(e, common);
  e->add_option("--oracle", ev.oracle, "Oracle-corrected cube")->required();
  e->add_option("--surrogate", ev.surrogate, "Surrogate output cube")->required();
  e->add_option("--labels", ev.labels, "Labels of the evaluated spectra");
  e->add_option("--train-oracle", ev.train_oracle, "Oracle-corrected cube for fitting the downstream classifier");
  e->add_option("--train-labels", ev.train_labels, "Labels for --train-oracle");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time the oracle against the surrogate");
  add_common(b, common);
  b->add_option("--input", bench.input, "Raw cube")->required();
  b->add_option("--model", bench.model, "Model file")->required();
  b->add_option("--runs", bench.runs, "Timed runs (after one warm-up)");
  b->add_option("--iterations", bench.iterations, "Oracle iterations");
  b->add_option("--reference", bench.reference, "Initial reference spectrum CSV");
  b->add_flag("--parallel", bench.parallel, "Also report both correctors at --threads");

  PlotArgs plot;
  auto* p = app.add_subcommand("plot", "SVG plots with CSV sidecars");
  add_common(p, common);
  p->add_option("--kind", plot.kind, "spectra, shift or ci")->check(CLI::IsMember({"spectra", "shift", "ci"}));
  p->add_option("--input", plot.inputs, "Spectrum CSV (spectra, shift) or uncertainty CSV (ci)")->required();
  p->add_option("--label", plot.labels, "Legend label per input");
  p->add_option("--name", plot.name, "Output file stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 1;
  }

  try {
    if (*s) cmd_synth(common, synth);
    if (*c) cmd_correct(common, correct);
    if (*t) cmd_train(common, train);
    if (*i) cmd_infer(common, infer);
    if (*u) cmd_uncertainty(common, unc);
    if (*e) cmd_eval(common, ev);
    if (*b) cmd_bench(common, bench);
    if (*p) cmd_plot(common, plot);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_code_for(ex);
  }
  return 0;
}
