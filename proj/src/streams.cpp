#include "cdu/streams.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

namespace cdu {

void Dataset::validate() const {
    if (labels && static_cast<Eigen::Index>(labels->size()) != features.rows()) {
        throw DataError("label count does not match sample count");
    }
    if (!names.empty() && static_cast<Eigen::Index>(names.size()) != features.cols()) {
        throw DataError("feature name count does not match feature count");
    }
    if (!features.allFinite()) throw DataError("dataset contains non-finite features");
}

Dataset Dataset::rows(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.names = names;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    if (labels) out.labels.emplace();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= features.rows()) throw ShapeError("row index out of range");
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
        if (labels) out.labels->push_back((*labels)[static_cast<std::size_t>(idx[i])]);
    }
    return out;
}

std::filesystem::path data_dir() {
    if (const char* env = std::getenv("CDU_DATA_DIR"); env && *env) return env;
#ifdef CDU_DEFAULT_DATA_DIR
    return CDU_DEFAULT_DATA_DIR;
#else
    return "data";
#endif
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw DataError("sha256 initialisation failed");
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

Dataset load_digits() {
    const auto dir = data_dir();
    const auto csv = dir / "digits_0_4.csv";
    const auto manifest = dir / "digits_0_4.csv.sha256";
    std::ifstream m(manifest);
    std::string expected;
    if (!(m >> expected)) throw DataError("missing or empty checksum manifest " + manifest.string());
    if (!std::filesystem::exists(csv)) throw DataError("missing digits asset " + csv.string());
    const auto actual = sha256_file(csv);
    if (actual != expected) throw DataError("digits asset checksum mismatch: " + csv.string());
    Dataset ds = load_csv(csv, true);
    if (ds.dim() != 64) throw DataError("digits asset must have 64 pixel columns");
    return ds;
}

Vector digits_drift(const Vector& x) {
    if (x.size() != 64) throw ShapeError("digits_drift expects 64 features");
    Vector out = x;
    out.head(32).setZero();
    return out;
}

Matrix digits_drift(const Matrix& x) {
    if (x.cols() != 64) throw ShapeError("digits_drift expects 64 features");
    Matrix out = x;
    out.leftCols(32).setZero();
    return out;
}

std::string to_string(FaultKind kind) {
    switch (kind) {
        case FaultKind::ConstantOffset:
            return "constant_offset";
        case FaultKind::GaussianNoise:
            return "gaussian_noise";
        case FaultKind::PowerFailure:
            return "power_failure";
        case FaultKind::ProportionalOffset:
            return "proportional_offset";
    }
    return "constant_offset";
}

FaultKind fault_kind_from_string(const std::string& name) {
    if (name == "constant_offset") return FaultKind::ConstantOffset;
    if (name == "gaussian_noise") return FaultKind::GaussianNoise;
    if (name == "power_failure") return FaultKind::PowerFailure;
    if (name == "proportional_offset") return FaultKind::ProportionalOffset;
    throw ConfigError("unknown fault kind '" + name + "'");
}

void FaultSpec::validate(Eigen::Index rows, Eigen::Index cols) const {
    if (target < 0 || target >= cols) throw ShapeError("fault target " + std::to_string(target) + " out of range");
    if (onset < 0 || onset >= rows) throw ShapeError("fault onset " + std::to_string(onset) + " outside stream");
    if (kind == FaultKind::GaussianNoise && !(parameter > 0.0)) throw ConfigError("noise sigma must be positive");
    if (kind == FaultKind::ProportionalOffset && parameter == 1.0) throw ConfigError("gain must differ from 1");
    if (!std::isfinite(parameter)) throw ConfigError("fault parameter must be finite");
}

Matrix inject_fault(const Matrix& x, const FaultSpec& spec) {
    spec.validate(x.rows(), x.cols());
    Matrix out = x;
    const Eigen::Index count = x.rows() - spec.onset;
    auto col = out.col(spec.target).segment(spec.onset, count);
    switch (spec.kind) {
        case FaultKind::ConstantOffset:
            col.array() += spec.parameter;
            break;
        case FaultKind::GaussianNoise: {
            std::mt19937_64 rng(spec.seed);
            std::normal_distribution<double> noise(0.0, spec.parameter);
            for (Eigen::Index i = 0; i < count; ++i) col(i) += noise(rng);
            break;
        }
        case FaultKind::PowerFailure:
            col.setZero();
            break;
        case FaultKind::ProportionalOffset:
            col *= spec.parameter;
            break;
    }
    return out;
}

FaultSpec sample_fault_spec(std::mt19937_64& rng, const Vector& feature_sd, Eigen::Index onset) {
    if (feature_sd.size() == 0) throw ShapeError("sample_fault_spec needs at least one feature");
    FaultSpec spec;
    spec.kind = static_cast<FaultKind>(std::uniform_int_distribution<int>(0, 3)(rng));
    spec.target = std::uniform_int_distribution<Eigen::Index>(0, feature_sd.size() - 1)(rng);
    const double sd = feature_sd(spec.target) > 0.0 ? feature_sd(spec.target) : 1.0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    switch (spec.kind) {
        case FaultKind::ConstantOffset:
            spec.parameter = (0.5 + 2.5 * unit(rng)) * sd;
            break;
        case FaultKind::GaussianNoise:
            spec.parameter = (0.25 + 0.75 * unit(rng)) * sd;
            break;
        case FaultKind::PowerFailure:
            spec.parameter = 0.0;
            break;
        case FaultKind::ProportionalOffset: {
            const bool low = unit(rng) < 0.5;
            const double u = unit(rng);
            spec.parameter = low ? 0.5 + 0.4 * u : 1.1 + 0.4 * u;
            break;
        }
    }
    spec.onset = onset;
    spec.seed = rng();
    return spec;
}

void SynthNetConfig::validate() const {
    if (sensors < 2) throw ConfigError("synthetic network needs at least two sensors");
    if (factors < 1 || factors >= sensors) throw ConfigError("latent factor count must satisfy 1 <= r < d");
    if (samples < 1) throw ConfigError("synthetic network needs samples > 0");
    if (!(noise >= 0.0)) throw ConfigError("noise must be >= 0");
    if (samples_per_day < 1) throw ConfigError("samples_per_day must be positive");
    if (!(smoothing > 0.0 && smoothing <= 1.0)) throw ConfigError("smoothing must lie in (0, 1]");
    if (!(persistence >= 0.0 && persistence < 1.0)) throw ConfigError("persistence must lie in [0, 1)");
}

Dataset synth_network_stream(const SynthNetConfig& config, Seed seed) {
    config.validate();
    const Eigen::Index n = config.samples;
    const Eigen::Index d = config.sensors;
    const Eigen::Index r = config.factors;

    std::mt19937_64 mix_rng(config.mixing_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix mixing(d, r);
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index j = 0; j < r; ++j) mixing(k, j) = 0.2 + 0.8 * unit(mix_rng);
    Vector cycle_weight(d);
    Vector base(d);
    for (Eigen::Index k = 0; k < d; ++k) cycle_weight(k) = 0.5 + 0.5 * unit(mix_rng);
    for (Eigen::Index k = 0; k < d; ++k) base(k) = config.base_level * (0.8 + 0.4 * unit(mix_rng));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Mean-reverting walks, low-pass filtered, then standardized per factor.
    Matrix latent(n, r);
    for (Eigen::Index j = 0; j < r; ++j) {
        double walk = 0.0;
        double smooth = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            walk = config.persistence * walk + gauss(rng);
            smooth = t == 0 ? walk : (1.0 - config.smoothing) * smooth + config.smoothing * walk;
            latent(t, j) = smooth;
        }
        auto c = latent.col(j);
        const double mean = c.mean();
        const double sd = std::sqrt((c.array() - mean).square().mean());
        c = (c.array() - mean) / (sd > 0.0 ? sd : 1.0);
    }

    Matrix signal = latent * mixing.transpose();
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    for (Eigen::Index t = 0; t < n; ++t) {
        const double cyc = config.daily_amplitude *
                           std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                        static_cast<double>(config.samples_per_day) +
                                    phase);
        signal.row(t) += cyc * cycle_weight.transpose();
    }

    Dataset ds;
    ds.features = signal;
    for (Eigen::Index k = 0; k < d; ++k) {
        auto c = ds.features.col(k);
        const double mean = c.mean();
        const double sd = std::sqrt((c.array() - mean).square().mean());
        const double sigma = config.noise * sd;
        for (Eigen::Index t = 0; t < n; ++t) c(t) += base(k) + (sigma > 0.0 ? sigma * gauss(rng) : 0.0);
        ds.names.push_back("sensor_" + std::to_string(k));
    }
    return ds;
}

std::vector<Fold> kfold_split(Eigen::Index n, Eigen::Index k, Seed seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    if (k > n) throw ConfigError("k-fold needs k <= n");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<Fold> folds(static_cast<std::size_t>(k));
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    Eigen::Index pos = 0;
    for (Eigen::Index f = 0; f < k; ++f) {
        const Eigen::Index size = n / k + (f < n % k ? 1 : 0);
        for (Eigen::Index i = 0; i < size; ++i) {
            const auto idx = perm[static_cast<std::size_t>(pos++)];
            folds[static_cast<std::size_t>(f)].test.push_back(idx);
            fold_of[static_cast<std::size_t>(idx)] = static_cast<int>(f);
        }
    }
    for (auto& fold : folds) std::sort(fold.test.begin(), fold.test.end());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index f = 0; f < k; ++f) {
            if (fold_of[static_cast<std::size_t>(i)] != f) folds[static_cast<std::size_t>(f)].train.push_back(i);
        }
    }
    return folds;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return s.substr(i);
}

std::string where(const std::filesystem::path& path, std::size_t row, std::size_t col) {
    return path.string() + ": row " + std::to_string(row) + ", column " + std::to_string(col);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, bool has_labels) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw DataError(path.string() + ": empty file");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
    std::vector<std::string> header = split_line(trim(line));
    for (auto& h : header) h = trim(h);
    const std::size_t width = header.size();
    if (has_labels) {
        if (width < 2 || header.back() != "label") {
            throw DataError(path.string() + ": labelled CSV must end with a 'label' column");
        }
    }
    const std::size_t num_features = has_labels ? width - 1 : width;

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != width) {
            throw DataError(path.string() + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " + std::to_string(width));
        }
        for (std::size_t c = 0; c < width; ++c) {
            const std::string cell = trim(cells[c]);
            const char* first = cell.data();
            const char* last = cell.data() + cell.size();
            if (has_labels && c + 1 == width) {
                int label = 0;
                auto [p, ec] = std::from_chars(first, last, label);
                if (ec != std::errc() || p != last || cell.empty()) {
                    throw DataError(where(path, line_no, c + 1) + ": label '" + cell + "' is not an integer");
                }
                labels.push_back(label);
            } else {
                double v = 0.0;
                auto [p, ec] = std::from_chars(first, last, v);
                if (ec != std::errc() || p != last || cell.empty() || !std::isfinite(v)) {
                    throw DataError(where(path, line_no, c + 1) + ": '" + cell + "' is not a number");
                }
                values.push_back(v);
            }
        }
        ++rows;
    }
    if (rows == 0) throw DataError(path.string() + ": no data rows");

    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(num_features));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < num_features; ++j)
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * num_features + j];
    ds.names.assign(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(num_features));
    if (has_labels) ds.labels = std::move(labels);
    return ds;
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
    data.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
        if (j) out << ',';
        out << (data.names.empty() ? "x" + std::to_string(j) : data.names[static_cast<std::size_t>(j)]);
    }
    if (data.labels) out << ",label";
    out << '\n';
    std::array<char, 64> buf{};
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        for (Eigen::Index j = 0; j < data.dim(); ++j) {
            if (j) out << ',';
            auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), data.features(i, j));
            out.write(buf.data(), p - buf.data());
        }
        if (data.labels) out << ',' << (*data.labels)[static_cast<std::size_t>(i)];
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace cdu
