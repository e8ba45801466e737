#pragma once

#include <string>
#include <utility>

#include <json.hpp>

#include "nbv/body_model.hpp"
#include "nbv/camera.hpp"
#include "nbv/fitter.hpp"
#include "nbv/likelihood.hpp"

namespace nbv {

inline constexpr uint16_t kFmapVersion = 1;

// FMAP: "NBVF", u16 version, u32 H', W', D, then H'*W'*D little-endian f32,
// row-major, channel-innermost. Opacity maps are stored with D = 1.
void write_fmap(const std::string& path, const FeatureMap& map);
FeatureMap read_fmap(const std::string& path);

// JSON conversions (nlohmann ADL hooks). Vectors/matrices are flat arrays,
// matrices row-major.
void to_json(nlohmann::json& j, const Vec3d& v);
void from_json(const nlohmann::json& j, Vec3d& v);
void to_json(nlohmann::json& j, const Mat3d& m);
void from_json(const nlohmann::json& j, Mat3d& m);
void to_json(nlohmann::json& j, const PoseParams& p);
void from_json(const nlohmann::json& j, PoseParams& p);
void to_json(nlohmann::json& j, const ShapeParams& s);
void from_json(const nlohmann::json& j, ShapeParams& s);
void to_json(nlohmann::json& j, const Camera& c);
void from_json(const nlohmann::json& j, Camera& c);
void to_json(nlohmann::json& j, const FitResult& r);
void from_json(const nlohmann::json& j, FitResult& r);

nlohmann::json load_json(const std::string& path);
void save_json(const std::string& path, const nlohmann::json& j);

// Whole-template JSON document, schema-versioned; load() validates.
void save_template(const std::string& path, const BodyTemplate& tmpl);
BodyTemplate load_template(const std::string& path);

// Bank + background: one JSON header (K, O, D, kappa of the bins is stored
// with the bins elsewhere; sigma, momentum here) plus an FMAP blob with the
// K*O x D feature matrix next to it.
void save_bank(const std::string& json_path, const KernelFeatureBank& bank,
               const BackgroundModel& background);
std::pair<KernelFeatureBank, BackgroundModel> load_bank(const std::string& json_path);

void save_fit_result(const std::string& path, const FitResult& result);
FitResult load_fit_result(const std::string& path);

// Initialization pose file: {"theta": ..., "beta": ...}.
void save_pose_file(const std::string& path, const PoseParams& theta, const ShapeParams& beta);
std::pair<PoseParams, ShapeParams> load_pose_file(const std::string& path);

}  // namespace nbv
