#pragma once

#include <cstdint>
#include <string>

#include "idan/data.hpp"
#include "idan/model.hpp"
#include "idan/training.hpp"

namespace idan::config {

// Flat key=value file with [section] headers; unknown keys are rejected.
// CLI flags override file values.
struct RunConfig {
    model::UNetConfig model;
    bool with_modules = true;
    training::TrainConfig train;
    training::PipelineConfig pipeline;
    data::TileSpec tile;
    data::AugmentConfig augment;
    std::uint64_t seed = 42;
};

bool operator==(const RunConfig& a, const RunConfig& b);

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// "random:<seed>:<c_p>" or "file:<path>"
void apply_extractor_spec(training::PipelineConfig& pc, const std::string& spec);
std::string extractor_spec(const training::PipelineConfig& pc);

diffmap::EdgeOp parse_edge_op(const std::string& name);
std::string edge_op_name(diffmap::EdgeOp op);

}  // namespace idan::config
