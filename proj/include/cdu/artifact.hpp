#pragma once

// Versioned JSON container for fitted models. Doubles are written in shortest
// round-trip form, so save/load reproduces every parameter bit-exactly.

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "cdu/autoencoder.hpp"
#include "cdu/downstream.hpp"
#include "cdu/unlearner.hpp"

namespace cdu {

inline constexpr int kArtifactVersion = 1;
inline constexpr const char* kArtifactFile = "artifact.json";

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json to_json(const DenseNetwork& net);
DenseNetwork network_from_json(const Json& j);
Json to_json(const FeatureScaler& s);
FeatureScaler scaler_from_json(const Json& j);
Json to_json(const AutoencoderModel& ae);
/// Rejects models that are not undercomplete.
AutoencoderModel autoencoder_from_json(const Json& j);
Json to_json(const UnlearnMap& f);
UnlearnMap unlearn_map_from_json(const Json& j);
Json to_json(const LogisticModel& m);
LogisticModel logistic_from_json(const Json& j);
Json to_json(const VirtualSensorModel& m);
VirtualSensorModel virtual_sensor_from_json(const Json& j);

struct Artifact {
    std::optional<AutoencoderModel> autoencoder;
    std::optional<UnlearnMap> unlearner;
    std::optional<LogisticModel> classifier;
    std::vector<VirtualSensorModel> sensors;
};

Json to_json(const Artifact& a);
Artifact artifact_from_json(const Json& j);

/// Writes `<dir>/artifact.json`, creating `dir` if needed.
void save_artifact(const std::filesystem::path& dir, const Artifact& a);
Artifact load_artifact(const std::filesystem::path& dir);

}  // namespace cdu
