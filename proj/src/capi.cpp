#include "metafl.h"

#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "metafl/config.hpp"
#include "metafl/oracle_suite.hpp"
#include "metafl/pipeline.hpp"
#include "metafl/plots.hpp"

struct metafl_ctx {
  std::optional<metafl::ExperimentConfig> config;
  std::optional<unsigned long long> seed_override;
  std::string last_error = "";
};

namespace {

int errc_to_c(metafl::Errc code) { return static_cast<int>(code); }

template <typename Fn>
int guarded(metafl_ctx* ctx, Fn&& fn) {
  if (ctx == nullptr) return METAFL_ERR_BADHANDLE;
  try {
    ctx->last_error.clear();
    return fn();
  } catch (const metafl::Error& e) {
    ctx->last_error = e.what();
    return errc_to_c(e.code());
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return METAFL_ERR_UNKNOWN;
  } catch (...) {
    ctx->last_error = "unknown failure";
    return METAFL_ERR_UNKNOWN;
  }
}

metafl::ExperimentConfig& need_config(metafl_ctx* ctx) {
  metafl::require(ctx->config.has_value(), metafl::Errc::protocol,
                  "no configuration loaded; call metafl_load_config first");
  if (ctx->seed_override) {
    ctx->config->seed = *ctx->seed_override;
    ctx->config->game.fl.seed = *ctx->seed_override;
    ctx->config->train.seed = *ctx->seed_override;
  }
  return *ctx->config;
}

std::vector<std::string> split_csv(const char* text) {
  std::vector<std::string> out;
  if (text == nullptr) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

extern "C" {

const char* metafl_version(void) { return "metafl-1"; }

metafl_ctx* metafl_create(void) { return new (std::nothrow) metafl_ctx(); }

void metafl_destroy(metafl_ctx* ctx) { delete ctx; }

const char* metafl_last_error(const metafl_ctx* ctx) {
  return ctx == nullptr ? "bad handle" : ctx->last_error.c_str();
}

int metafl_load_config(metafl_ctx* ctx, const char* path) {
  return guarded(ctx, [&] {
    metafl::require(path != nullptr, metafl::Errc::config, "config path is null");
    ctx->config = metafl::load_config(path);
    return METAFL_OK;
  });
}

int metafl_override_seed(metafl_ctx* ctx, unsigned long long seed) {
  return guarded(ctx, [&] {
    ctx->seed_override = seed;
    return METAFL_OK;
  });
}

int metafl_set_workers(metafl_ctx* ctx, int workers) {
  return guarded(ctx, [&] {
    metafl::require(workers >= 1, metafl::Errc::config, "workers must be at least 1");
    metafl::set_worker_count(static_cast<std::size_t>(workers));
    return METAFL_OK;
  });
}

int metafl_run_pipeline(metafl_ctx* ctx, const char* stages, const char* init_mode,
                        const char* out_dir) {
  return guarded(ctx, [&] {
    auto& config = need_config(ctx);
    const auto stage_list =
        metafl::parse_stages(stages == nullptr ? "pretrain,adapt,evaluate" : stages);
    metafl::run_pipeline(config, stage_list,
                         init_mode == nullptr ? "checkpoint" : init_mode,
                         out_dir == nullptr ? "" : out_dir);
    return METAFL_OK;
  });
}

int metafl_run_matrix(metafl_ctx* ctx, const char* defenses, const char* attacks,
                      const char* out_csv) {
  return guarded(ctx, [&] {
    auto& config = need_config(ctx);
    metafl::require(out_csv != nullptr, metafl::Errc::config, "matrix output path is null");

    std::vector<std::string> defense_names = split_csv(defenses);
    if (defense_names.empty()) defense_names = metafl::builtin_matrix_defenses();

    std::vector<metafl::AttackType> attack_list;
    const auto attack_names = split_csv(attacks);
    if (attack_names.empty()) {
      for (const auto& [t, w] : config.game.type_prior) {
        (void)w;
        attack_list.push_back(t);
      }
    } else {
      for (const auto& name : attack_names) {
        bool found = false;
        for (const auto& [t, w] : config.game.type_prior) {
          (void)w;
          if (metafl::attack_method_name(t.method) == name) {
            attack_list.push_back(t);
            found = true;
            break;
          }
        }
        metafl::require(found, metafl::Errc::config,
                        "matrix: attack '" + name + "' is not in the config domain");
      }
    }

    auto cells = metafl::run_baseline_matrix(config, defense_names, attack_list);
    metafl::save_matrix_csv(cells, defense_names, out_csv);
    return METAFL_OK;
  });
}

int metafl_run_oracle_suite(metafl_ctx* ctx, unsigned long long seed, int n_instances,
                            const char* out_csv, int* failures) {
  return guarded(ctx, [&] {
    metafl::require(n_instances >= 0, metafl::Errc::config, "n_instances must be nonnegative");
    auto report = metafl::run_oracle_suite(seed, static_cast<std::size_t>(n_instances));
    if (out_csv != nullptr) metafl::save_oracle_csv(report, out_csv);
    if (failures != nullptr) *failures = static_cast<int>(report.failures);
    return METAFL_OK;
  });
}

int metafl_emit_plots(metafl_ctx* ctx, const char* metrics_csv, const char* out_dir) {
  return guarded(ctx, [&] {
    metafl::require(metrics_csv != nullptr && out_dir != nullptr, metafl::Errc::config,
                    "plot paths are null");
    metafl::emit_plots(metrics_csv, out_dir);
    return METAFL_OK;
  });
}

}  // extern "C"
