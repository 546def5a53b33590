#pragma once

#include "curvestream/blup.hpp"
#include "curvestream/contrast.hpp"
#include "curvestream/simbench.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <variant>

namespace curvestream {

// ---------------------------------------------------------------------------
// CSV. Two-level: group,x,y[,category]. Three-level: group,subgroup,x,y.
// Columns are matched by header name; groups keep first-appearance order.
// ---------------------------------------------------------------------------

TwoLevelDataset read_two_level_csv(std::istream& in);
TwoLevelDataset read_two_level_csv(const std::string& path);
void write_two_level_csv(std::ostream& out, const TwoLevelDataset& data);
void write_two_level_csv(const std::string& path, const TwoLevelDataset& data);

ThreeLevelDataset read_three_level_csv(std::istream& in);
ThreeLevelDataset read_three_level_csv(const std::string& path);
void write_three_level_csv(std::ostream& out, const ThreeLevelDataset& data);
void write_three_level_csv(const std::string& path, const ThreeLevelDataset& data);

void write_band_csv(std::ostream& out, const CurveBand& band);
void write_band_csv(const std::string& path, const CurveBand& band);

void write_timing_csv(std::ostream& out, const std::vector<TimingRecord>& records);
nlohmann::json to_json(const BenchmarkResult& res);

// Grid file: one value per line, or a CSV whose first column is x (header optional).
VectorXd read_grid(const std::string& path);

// ---------------------------------------------------------------------------
// Fit artifacts
// ---------------------------------------------------------------------------

inline constexpr int kArtifactMajorVersion = 1;
inline constexpr const char* kArtifactFormatVersion = "1.0";

struct FitArtifact {
    std::variant<MfvbFitTwoLevel, BlupFitTwoLevel, MfvbFitThreeLevel, BlupFitThreeLevel> fit;

    int level() const;
    bool is_mfvb() const;
    bool is_contrast() const;
};

nlohmann::json to_json(const FitArtifact& art);
FitArtifact artifact_from_json(const nlohmann::json& j);
void save_artifact(const std::string& path, const FitArtifact& art);
FitArtifact load_artifact(const std::string& path);

// Global-curve basis of the fit (defines the default prediction grid).
const SplineBasis& global_basis(const FitArtifact& art);

CurveBand predict_band(const FitArtifact& art, const VectorXd& grid, const CurveTarget& target, double level);

// Partial overrides of the default hyperparameters / fixed variances from JSON objects.
HyperparametersTwoLevel hyper_two_level_from_json(const nlohmann::json& j, int d);
HyperparametersThreeLevel hyper_three_level_from_json(const nlohmann::json& j);
VarianceParamsTwoLevel variances_two_level_from_json(const nlohmann::json& j);
VarianceParamsThreeLevel variances_three_level_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);

} // namespace curvestream
