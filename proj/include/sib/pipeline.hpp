#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sib/detect.hpp"
#include "sib/explain.hpp"
#include "sib/synthgen.hpp"
#include "sib/trainer.hpp"

namespace sib::pipeline {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

// The single flat JSON config driving every subcommand.
json default_config();

// file config (optional) over the defaults, then dotted --set overrides, then
// the global seed override.
json load_config(const std::optional<std::string>& config_path,
                 const std::vector<std::string>& set_overrides,
                 const std::optional<uint64_t>& seed_override);

std::string config_hash_hex(const json& config);

GenConfig gen_config_from(const json& config);
DetectorConfig detector_config_from(const json& config);
ModelConfig model_config_from(const json& config);
TrainConfig train_config_from(const json& config);

// Creates <out_root>/<UTC timestamp>-<config hash>-<name>/ and drops a
// run.json with the schema version, hash and resolved config.
std::string make_run_dir(const std::string& out_root, const json& config,
                         const std::string& name);

// Explicit config.paths entry if set, else the newest run dir under out_root
// containing `filename`. Throws ValidationError naming the artifact when it
// cannot be found.
std::string resolve_artifact(const json& config, const std::string& out_root,
                             const std::string& path_key, const std::string& filename);

// Subcommands; each returns the run directory it wrote.
std::string run_synth(const json& config, const std::string& out_root);
std::string run_ingest(const json& config, const std::string& out_root);
std::string run_detect_train(const json& config, const std::string& out_root);
std::string run_label(const json& config, const std::string& out_root);
std::string run_build_users(const json& config, const std::string& out_root);
std::string run_train(const json& config, const std::string& out_root);
std::string run_evaluate(const json& config, const std::string& out_root);
std::string run_sweep(const json& config, const std::string& out_root);
std::string run_ablate(const json& config, const std::string& out_root);
std::string run_explain(const json& config, const std::string& out_root);
std::string run_report(const json& config, const std::string& out_root);

}  // namespace sib::pipeline
