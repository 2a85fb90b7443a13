#pragma once

#include <string>

#include <json.hpp>

#include "surf/data.hpp"
#include "surf/matrix.hpp"
#include "surf/train.hpp"
#include "surf/unroll.hpp"

// JSON forms of configs, parameters and trainer state. Readers reject unknown
// keys. Doubles are written in shortest round-trip form, so parsing restores
// every value bit for bit.
namespace surf::io {

using json = nlohmann::json;

json to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);

json to_json(const UnrolledParams& p);
UnrolledParams params_from_json(const json& j);

json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults.
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});

json to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(const json& j, SyntheticConfig base = {});

json to_json(const HistoryRecord& r);
HistoryRecord history_record_from_json(const json& j);

const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

// Throws ConfigError naming the first key of j that is not in allowed.
void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

}  // namespace surf::io
