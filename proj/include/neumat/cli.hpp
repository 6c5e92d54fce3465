#pragma once

#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "neumat/augment.hpp"
#include "neumat/dataset.hpp"
#include "neumat/hyperdiffusion.hpp"
#include "neumat/render.hpp"

namespace neumat {

/// Everything a pipeline run needs, with explicit seeds throughout so any
/// command re-run from the same config is byte-identical.
struct PipelineConfig {
    std::filesystem::path dataset_dir;         // input materials (MERL binaries)
    std::filesystem::path output_dir = "out";
    std::filesystem::path weights;             // NMRL set; default output_dir/neumerl.nmrl
    std::filesystem::path checkpoint;          // NMDF denoiser; default output_dir/model.nmdf
    uint64_t seed = 0;                         // sampling base seed
    int schedule_steps = 100;
    AugmentOptions augment;
    NeuMerlConfig neumerl;
    DenoiserConfig denoiser;
    HyperTrainConfig train;
    RenderConfig render;
};

/// Reads a JSON config. Unknown or ill-typed fields raise ConfigError with
/// the offending field path ("train.lr_start", ...).
PipelineConfig load_config(const std::filesystem::path& path);

/// Config snapshot as canonical JSON text; load_config of the saved text
/// reproduces the struct. Embedded in every manifest.
std::string config_to_json(const PipelineConfig& cfg);

/// Existing file -> load_merl_file, otherwise a synthetic name
/// ("lambert-0.2", "lobe-0.3", "random-7"); anything else is ConfigError.
MeasuredBrdf load_material(const std::string& spec);

struct SampleRequest {
    int count = 1;
    std::string condition;  // "", "null", "type:<name|id>", "text:<f>", "image:<f>"
    double guidance = 0.0;
    std::string category;   // when set, rejection-sample until the rules agree
    int max_attempts = 64;  // per sample, category mode only
};

void cmd_augment(const PipelineConfig& cfg);
void cmd_fit(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);

/// Draws weight vectors from the checkpoint, renders each, writes the set
/// plus per-sample metadata. Returns the written paths.
std::vector<std::filesystem::path> cmd_sample(const PipelineConfig& cfg,
                                              const SampleRequest& req);

/// Per-input statistics and satisfied categories, one line each.
std::string cmd_classify(const PipelineConfig& cfg,
                         const std::vector<std::string>& inputs);

/// Distributional report: rows brdf-l1 / rmse / neg-psnr / neg-ssim,
/// columns MMD / COV% / 1-NNA%. Sets are MERL directories or .nmrl files.
std::string cmd_evaluate(const PipelineConfig& cfg, const std::string& ref_set,
                         const std::string& synth_set);

std::vector<std::filesystem::path> cmd_render(const PipelineConfig& cfg,
                                              const std::vector<std::string>& inputs);

/// Sparse-observation study over the given factors for each input material.
std::string cmd_superres(const PipelineConfig& cfg, const std::vector<int>& factors,
                         const std::vector<std::string>& inputs);

/// 2 config trouble, 3 broken data, 4 numeric failure, 1 anything else.
int exit_code_for(const std::exception& e);

/// Full argv entry point (subcommand dispatch, flag overrides).
int run_cli(int argc, const char* const* argv);

} // namespace neumat
