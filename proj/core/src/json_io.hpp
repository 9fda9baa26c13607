#pragma once

// Internal JSON conversion helpers shared between qnn and pipeline sources;
// vendor types stay out of the public headers.

#include "qmlsec/qnn.hpp"

#include <json.hpp>

namespace qmlsec {

nlohmann::json config_to_json(const QnnConfig& cfg);
QnnConfig config_from_json(const nlohmann::json& j);

} // namespace qmlsec
