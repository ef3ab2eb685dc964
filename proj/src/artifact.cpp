#include "cdu/artifact.hpp"

#include <fstream>

namespace cdu {

namespace {

template <class Fn>
auto guarded(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed ") + what + ": " + e.what());
    }
}

}  // namespace

Json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const Json& j) {
    return guarded("matrix", [&] {
        const auto rows = j.at("rows").get<Eigen::Index>();
        const auto cols = j.at("cols").get<Eigen::Index>();
        const auto data = j.at("data").get<std::vector<double>>();
        if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
            throw DataError("matrix payload size does not match its shape");
        }
        Matrix m(rows, cols);
        std::copy(data.begin(), data.end(), m.data());
        return m;
    });
}

Json vector_to_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const Json& j) {
    return guarded("vector", [&] {
        const auto data = j.get<std::vector<double>>();
        return Vector(Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size())));
    });
}

Json to_json(const DenseNetwork& net) {
    Json layers = Json::array();
    for (const auto& l : net.layers()) {
        layers.push_back(
            {{"weights", matrix_to_json(l.weights)}, {"bias", vector_to_json(l.bias)}, {"activation", to_string(l.activation)}});
    }
    return {{"layers", layers}};
}

DenseNetwork network_from_json(const Json& j) {
    return guarded("network", [&] {
        std::vector<DenseLayer> layers;
        for (const auto& l : j.at("layers")) {
            layers.push_back(DenseLayer{matrix_from_json(l.at("weights")), vector_from_json(l.at("bias")),
                                        activation_from_string(l.at("activation").get<std::string>())});
        }
        return DenseNetwork(std::move(layers));
    });
}

Json to_json(const FeatureScaler& s) {
    return {{"mean", vector_to_json(s.mean)}, {"scale", vector_to_json(s.scale)}};
}

FeatureScaler scaler_from_json(const Json& j) {
    return guarded("feature scaler", [&] {
        FeatureScaler s{vector_from_json(j.at("mean")), vector_from_json(j.at("scale"))};
        if (s.mean.size() != s.scale.size()) throw DataError("scaler mean/scale lengths differ");
        return s;
    });
}

Json to_json(const AutoencoderModel& ae) {
    return {{"input_dim", ae.input_dim()},
            {"latent_dim", ae.latent_dim()},
            {"frozen", ae.frozen()},
            {"encoder", to_json(ae.encoder())},
            {"decoder", to_json(ae.decoder())},
            {"scaler", to_json(ae.scaler())}};
}

AutoencoderModel autoencoder_from_json(const Json& j) {
    return guarded("autoencoder", [&] {
        const auto input = j.at("input_dim").get<Eigen::Index>();
        const auto latent = j.at("latent_dim").get<Eigen::Index>();
        if (latent >= input) throw DataError("autoencoder artifact is not undercomplete");
        AutoencoderModel ae(network_from_json(j.at("encoder")), network_from_json(j.at("decoder")),
                            scaler_from_json(j.at("scaler")), j.at("frozen").get<bool>());
        if (ae.input_dim() != input || ae.latent_dim() != latent) {
            throw DataError("autoencoder artifact dimensions disagree with its networks");
        }
        return ae;
    });
}

Json to_json(const UnlearnMap& f) {
    return {{"kind", to_string(f.kind())},
            {"regularization", f.regularization()},
            {"fitted_on", f.fitted_on()},
            {"body", to_json(f.body())},
            {"scaler", to_json(f.scaler())}};
}

UnlearnMap unlearn_map_from_json(const Json& j) {
    return guarded("unlearn map", [&] {
        return UnlearnMap(map_kind_from_string(j.at("kind").get<std::string>()), network_from_json(j.at("body")),
                          scaler_from_json(j.at("scaler")), j.at("regularization").get<double>(),
                          j.at("fitted_on").get<std::size_t>());
    });
}

Json to_json(const LogisticModel& m) {
    return {{"weights", matrix_to_json(m.weights)}, {"bias", vector_to_json(m.bias)}, {"labels", m.labels}};
}

LogisticModel logistic_from_json(const Json& j) {
    return guarded("logistic model", [&] {
        LogisticModel m{matrix_from_json(j.at("weights")), vector_from_json(j.at("bias")),
                        j.at("labels").get<std::vector<int>>()};
        if (m.weights.rows() != m.bias.size() || static_cast<std::size_t>(m.bias.size()) != m.labels.size() ||
            m.labels.size() < 2) {
            throw DataError("logistic model shapes are inconsistent");
        }
        return m;
    });
}

Json to_json(const VirtualSensorModel& m) {
    return {{"target", m.target}, {"inputs", m.inputs}, {"weights", vector_to_json(m.weights)}, {"bias", m.bias}};
}

VirtualSensorModel virtual_sensor_from_json(const Json& j) {
    return guarded("virtual sensor", [&] {
        VirtualSensorModel m;
        m.target = j.at("target").get<Eigen::Index>();
        m.inputs = j.at("inputs").get<std::vector<Eigen::Index>>();
        m.weights = vector_from_json(j.at("weights"));
        m.bias = j.at("bias").get<double>();
        if (static_cast<std::size_t>(m.weights.size()) != m.inputs.size()) {
            throw DataError("virtual sensor weights/inputs lengths differ");
        }
        for (auto i : m.inputs)
            if (i == m.target) throw DataError("virtual sensor uses its own target as input");
        return m;
    });
}

Json to_json(const Artifact& a) {
    Json j{{"format", "cdu-artifact"}, {"version", kArtifactVersion}};
    if (a.autoencoder) j["autoencoder"] = to_json(*a.autoencoder);
    if (a.unlearner) j["unlearner"] = to_json(*a.unlearner);
    if (a.classifier) j["classifier"] = to_json(*a.classifier);
    if (!a.sensors.empty()) {
        j["sensors"] = Json::array();
        for (const auto& s : a.sensors) j["sensors"].push_back(to_json(s));
    }
    return j;
}

Artifact artifact_from_json(const Json& j) {
    return guarded("artifact", [&] {
        if (j.value("format", std::string{}) != "cdu-artifact") throw DataError("not a cdu artifact");
        const int version = j.at("version").get<int>();
        if (version != kArtifactVersion) {
            throw DataError("unsupported artifact version " + std::to_string(version));
        }
        Artifact a;
        if (j.contains("autoencoder")) a.autoencoder = autoencoder_from_json(j["autoencoder"]);
        if (j.contains("unlearner")) a.unlearner = unlearn_map_from_json(j["unlearner"]);
        if (j.contains("classifier")) a.classifier = logistic_from_json(j["classifier"]);
        if (j.contains("sensors"))
            for (const auto& s : j["sensors"]) a.sensors.push_back(virtual_sensor_from_json(s));
        return a;
    });
}

void save_artifact(const std::filesystem::path& dir, const Artifact& a) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    const auto path = dir / kArtifactFile;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(a).dump(1) << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

Artifact load_artifact(const std::filesystem::path& dir) {
    const auto path = std::filesystem::is_directory(dir) ? dir / kArtifactFile : dir;
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return artifact_from_json(j);
}

}  // namespace cdu
