#pragma once

#include "svrecon/trainer.hpp"

#include <optional>
#include <string>

namespace svr {

/// Resolves a training config from a JSON document mirroring TrainConfig.
/// The profile is `profile` when given, else the document's "profile", else
/// synthetic; the document's other keys then override that profile's
/// defaults. Unknown keys and wrong types raise InputError.
TrainConfig train_config_from_json(const std::string& text, std::optional<Profile> profile = std::nullopt,
                                   const std::string& origin = "config");
TrainConfig load_train_config(const std::string& path, std::optional<Profile> profile = std::nullopt);

/// Full config as a JSON document accepted by train_config_from_json.
std::string train_config_to_json(const TrainConfig& config);

}  // namespace svr
