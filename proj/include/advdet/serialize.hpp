#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "advdet/artifacts.hpp"
#include "advdet/attacks.hpp"
#include "advdet/detector.hpp"
#include "advdet/nn.hpp"
#include "advdet/tensor.hpp"

namespace advdet {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Little-endian IEEE-754 doubles, standard base64 alphabet with padding.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(const std::string& text);

/// {"shape": [...], "data": "<base64>"}
json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const json& j);

/// {"kind": ..., kind-specific parameters}
LayerSpec layer_spec_from_json(const json& j);

json model_to_json(const NetworkModel& model);
NetworkModel model_from_json(const json& j);

json bank_to_json(const ClassFeatureBank& bank);
ClassFeatureBank bank_from_json(const json& j);

json detector_to_json(const DetectorModel& detector);
DetectorModel detector_from_json(const json& j);

json attack_params_to_json(const AttackParams& params);
AttackParams attack_params_from_json(AttackKind kind, const json& j);

json attack_result_to_json(const AttackResult& r);
AttackResult attack_result_from_json(const json& j);

/// One AttackResult per line.
void write_attack_results(const std::filesystem::path& path, std::span<const AttackResult> results);
std::vector<AttackResult> read_attack_results(const std::filesystem::path& path);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

/// sample_id,set,attack_kind,predicted_class,uncertainty,neg_log_density
void write_feature_csv(const std::filesystem::path& path, std::span<const LabeledFeatures> rows);
std::vector<LabeledFeatures> read_feature_csv(const std::filesystem::path& path);

/// iteration,logK_source,logK_adv (walk_id prefix when several walks are written)
void write_density_walk_csv(const std::filesystem::path& path,
                            std::span<const std::vector<DensityWalkRecord>> walks);

/// threshold,fpr,tpr
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

}  // namespace advdet
