#pragma once

#include <optional>
#include <string>

#include "sisvae/nets.hpp"
#include "sisvae/training.hpp"

namespace sisvae {

// Trainer state persisted alongside the weights so a checkpoint can resume
// optimization and so scoring can default to the training window.
struct TrainerState {
    AdamState adam;
    std::size_t window_w = 0;
};

struct Checkpoint {
    ModelParams params;
    std::optional<TrainerState> trainer;
};

// Versioned JSON document: {format_version, model_config, params: {name:
// [values...]}, trainer_state?}. Doubles serialize as shortest round-trip
// decimals, so save/load is value-exact.
std::string checkpoint_to_json(const ModelParams& params, const TrainerState* trainer = nullptr);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainerState* trainer = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sisvae
