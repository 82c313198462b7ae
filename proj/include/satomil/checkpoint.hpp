#pragma once

// Parameter checkpoints: one JSON document holding the format tag
// "SATOMIL-CKPT-1", the model kind, the architecture config and every
// tensor (name, shape, row-major 64-bit values).

#include <filesystem>
#include <memory>

#include "json.hpp"
#include "satomil/model.hpp"

namespace satomil {

inline constexpr const char* kCheckpointFormat = "SATOMIL-CKPT-1";

nlohmann::json checkpoint_json(const BagModel& model, const nlohmann::json& extra = nullptr);
std::unique_ptr<BagModel> model_from_checkpoint(const nlohmann::json& ckpt);

/// `extra` (e.g. the training flags) is stored verbatim under "run".
void save_checkpoint(const std::filesystem::path& path, const BagModel& model,
                     const nlohmann::json& extra = nullptr);
std::unique_ptr<BagModel> load_checkpoint(const std::filesystem::path& path);

/// Copies parameter values between two models of identical structure.
void copy_parameters(const BagModel& from, BagModel& to);

}  // namespace satomil
