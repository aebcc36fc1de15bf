// metafl CLI: drives the engine through the public C API only.
#include <cstdio>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "metafl.h"

namespace {

struct CtxDeleter {
  void operator()(metafl_ctx* ctx) const { metafl_destroy(ctx); }
};
using CtxPtr = std::unique_ptr<metafl_ctx, CtxDeleter>;

int finish(metafl_ctx* ctx, int rc) {
  if (rc != METAFL_OK) std::fprintf(stderr, "error (%d): %s\n", rc, metafl_last_error(ctx));
  return rc == METAFL_OK ? 0 : 1;
}

struct CommonOpts {
  std::string config;
  unsigned long long seed = 0;
  bool seed_set = false;
  int workers = 0;
};

int prepare(metafl_ctx* ctx, const CommonOpts& opts, bool needs_config) {
  if (opts.workers > 0) {
    int rc = metafl_set_workers(ctx, opts.workers);
    if (rc != METAFL_OK) return rc;
  }
  if (needs_config) {
    int rc = metafl_load_config(ctx, opts.config.c_str());
    if (rc != METAFL_OK) return rc;
  }
  if (opts.seed_set) {
    int rc = metafl_override_seed(ctx, opts.seed);
    if (rc != METAFL_OK) return rc;
  }
  return METAFL_OK;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config) {
  if (needs_config)
    cmd->add_option("--config", opts.config, "experiment config file")->required();
  cmd->add_option("--seed", opts.seed, "master seed override")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--workers", opts.workers, "worker thread count");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metafl: adversarial federated-learning game engine"};
  app.require_subcommand(1);

  CtxPtr ctx(metafl_create());
  if (!ctx) {
    std::fprintf(stderr, "cannot allocate engine context\n");
    return 1;
  }

  CommonOpts opts;
  std::string out = "out";
  std::string stages;
  std::string init_mode = "checkpoint";
  std::string defenses;
  std::string attacks;
  std::string metrics;
  int instances = 10;

  auto* pretrain = app.add_subcommand("pretrain", "meta-train the defense in simulation");
  add_common(pretrain, opts, true);
  pretrain->add_option("--out", out, "artifact directory");

  auto* adapt = app.add_subcommand("adapt", "online-adapt a checkpoint to the live attack");
  add_common(adapt, opts, true);
  adapt->add_option("--out", out, "artifact directory");
  adapt->add_option("--init", init_mode, "checkpoint|random");

  auto* evaluate = app.add_subcommand("evaluate", "run the live environment and emit metrics");
  add_common(evaluate, opts, true);
  evaluate->add_option("--out", out, "artifact directory");
  evaluate->add_option("--init", init_mode, "checkpoint|random");

  auto* pipeline = app.add_subcommand("pipeline", "run pretrain,adapt,evaluate in one go");
  add_common(pipeline, opts, true);
  pipeline->add_option("--out", out, "artifact directory");
  pipeline->add_option("--stages", stages, "comma list of stages");
  pipeline->add_option("--init", init_mode, "checkpoint|random");

  auto* matrix = app.add_subcommand("matrix", "baseline defense x attack accuracy table");
  add_common(matrix, opts, true);
  matrix->add_option("--out", out, "output CSV path");
  matrix->add_option("--defenses", defenses, "comma list of defense names");
  matrix->add_option("--attacks", attacks, "comma list of attack names from the domain");

  auto* oracle = app.add_subcommand("oracle", "run the enumeration oracle checks");
  add_common(oracle, opts, false);
  oracle->add_option("--out", out, "report CSV path");
  oracle->add_option("--instances", instances, "instances per check");

  auto* plot = app.add_subcommand("plot", "render SVG curves from a metrics CSV");
  add_common(plot, opts, false);
  plot->add_option("--metrics", metrics, "metrics CSV path")->required();
  plot->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  if (pretrain->parsed()) {
    int rc = prepare(ctx.get(), opts, true);
    if (rc == METAFL_OK) rc = metafl_run_pipeline(ctx.get(), "pretrain", "checkpoint", out.c_str());
    return finish(ctx.get(), rc);
  }
  if (adapt->parsed()) {
    int rc = prepare(ctx.get(), opts, true);
    if (rc == METAFL_OK)
      rc = metafl_run_pipeline(ctx.get(), "adapt", init_mode.c_str(), out.c_str());
    return finish(ctx.get(), rc);
  }
  if (evaluate->parsed()) {
    int rc = prepare(ctx.get(), opts, true);
    if (rc == METAFL_OK)
      rc = metafl_run_pipeline(ctx.get(), "evaluate", init_mode.c_str(), out.c_str());
    return finish(ctx.get(), rc);
  }
  if (pipeline->parsed()) {
    int rc = prepare(ctx.get(), opts, true);
    const char* stage_arg = stages.empty() ? nullptr : stages.c_str();
    if (rc == METAFL_OK)
      rc = metafl_run_pipeline(ctx.get(), stage_arg, init_mode.c_str(), out.c_str());
    return finish(ctx.get(), rc);
  }
  if (matrix->parsed()) {
    int rc = prepare(ctx.get(), opts, true);
    if (rc == METAFL_OK)
      rc = metafl_run_matrix(ctx.get(), defenses.empty() ? nullptr : defenses.c_str(),
                             attacks.empty() ? nullptr : attacks.c_str(), out.c_str());
    return finish(ctx.get(), rc);
  }
  if (oracle->parsed()) {
    int rc = prepare(ctx.get(), opts, false);
    int failures = 0;
    if (rc == METAFL_OK)
      rc = metafl_run_oracle_suite(ctx.get(), opts.seed_set ? opts.seed : 1234, instances,
                                   out.c_str(), &failures);
    if (rc != METAFL_OK) return finish(ctx.get(), rc);
    std::printf("oracle checks: %s (%d failing)\n", failures == 0 ? "all pass" : "FAILURES",
                failures);
    return failures == 0 ? 0 : 2;
  }
  if (plot->parsed()) {
    int rc = prepare(ctx.get(), opts, false);
    if (rc == METAFL_OK) rc = metafl_emit_plots(ctx.get(), metrics.c_str(), out.c_str());
    return finish(ctx.get(), rc);
  }
  return 1;
}
