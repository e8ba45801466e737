#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbv/body_model.hpp"
#include "nbv/fitter.hpp"
#include "nbv/likelihood.hpp"
#include "nbv/renderer.hpp"

namespace nbv {

// Square occluder in feature-grid coordinates, filled with seeded smooth
// noise in feature space.
struct OccluderSpec {
    bool active = false;
    int row0 = 0, col0 = 0, size = 0;
    uint64_t fill_seed = 0;
};

struct SceneConfig {
    double joint_angle_range = 0.5;    // per-component axis-angle bound, radians
    double root_jitter = 0.1;          // meters
    double shape_range = 0.3;
    double fg_noise_std = 0.1;
    double occlude_fraction = 0.0;     // target fraction of FG pixels covered
    double mask_tau = 0.5;
    int retry_budget = 20;
    Camera camera;
};

struct SyntheticScene {
    PoseParams theta;
    ShapeParams beta;
    Camera camera;
    FeatureMap observation;            // H'*W'*D
    std::vector<uint8_t> fg_mask;      // unoccluded render mask
    OccluderSpec occluder;
    std::vector<Vec3d> gt_joints;      // N posed, world
    std::vector<Vec3d> gt_joints_2d;   // N, (x_px, y_px, depth)
    uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const OccluderSpec& o);
void from_json(const nlohmann::json& j, OccluderSpec& o);

// Deterministic synthetic scene: pose sampled within bounds, observation =
// rendered expectation features + FG noise, background samples elsewhere,
// optional occluder sized to cover occlude_fraction of the FG.
SyntheticScene synth_scene(const SceneConfig& config, const BodyTemplate& tmpl,
                           const KernelFeatureBank& bank, const OrientationBins& bins,
                           const BackgroundModel& background, const RenderParams& render_params,
                           uint64_t seed);

// Seeded smooth feature-space noise field (the procedural occluder texture).
std::vector<double> procedural_texture(int height, int width, int channels, uint64_t seed);

// Applies the occluder fill to a copy of the observation.
FeatureMap apply_occluder(const FeatureMap& observation, const OccluderSpec& occ);

// --- Metrics (millimeters / fractions) --------------------------------------

double mpjpe(const std::vector<Vec3d>& pred, const std::vector<Vec3d>& gt,
             const std::vector<uint8_t>& include);

// MPJPE after optimal similarity alignment (Umeyama, det +1 enforced).
double pa_mpjpe(const std::vector<Vec3d>& pred, const std::vector<Vec3d>& gt,
                const std::vector<uint8_t>& include);

// Fraction of included joints with 2D error < factor * head_length.
double pckh(const std::vector<Vec3d>& pred_2d, const std::vector<Vec3d>& gt_2d,
            double head_length, const std::vector<uint8_t>& include, double factor = 1.0);

// --- Adversarial occlusion sweep ---------------------------------------------

struct PlacementResult {
    int row0_px = 0, col0_px = 0;  // image-coordinate top-left
    double mpjpe_mm = 0.0, pa_mpjpe_mm = 0.0, pckh_frac = 0.0;
    int included_joints = 0, excluded_joints = 0;
};

struct OccSweepReport {
    int patch_px = 0, stride_px = 0, image_px = 0;  // unscaled protocol constants
    int grid_rows = 0, grid_cols = 0;               // placement grid dims
    std::vector<PlacementResult> placements;        // row-major
    int worst_index = -1;
    double worst_mpjpe_mm = 0.0;
    double unoccluded_mpjpe_mm = 0.0, unoccluded_pa_mpjpe_mm = 0.0, unoccluded_pckh = 0.0;
};

struct SweepConfig {
    int patch_px = 40;     // relative to a 224 x 224 image
    int stride_px = 10;
    int image_px = 224;
    double pckh_factor = 1.0;
    bool parallel = true;
};

// Slides the patch over the image (protocol constants scaled to the feature
// grid, placement count preserved), refits from the same initialization per
// placement, and evaluates on included joints only.
OccSweepReport adv_occ_sweep(const SyntheticScene& scene, const BodyTemplate& tmpl,
                             const KernelFeatureBank& bank, const OrientationBins& bins,
                             const BackgroundModel& background, const RenderParams& render_params,
                             const FitConfig& fit_config, const PosePrior& prior,
                             const PoseParams& init_theta, const ShapeParams& init_beta,
                             const SweepConfig& sweep);

// Posed 3D joints and their 2D projections for a parameter set.
std::vector<Vec3d> posed_joints(const BodyTemplate& tmpl, const PoseParams& theta,
                                const ShapeParams& beta);
std::vector<Vec3d> project_joints(const std::vector<Vec3d>& joints, const Camera& camera);

// Head length (neck to head-top distance in GT 2D) for the stick skeleton.
double stick_head_length(const std::vector<Vec3d>& gt_joints_2d);

// --- Scene and report files ---------------------------------------------------

// (FMAP, JSON GT) pair; `stem` gets .fmap / .json appended.
void save_scene(const std::string& stem, const SyntheticScene& scene);
SyntheticScene load_scene(const std::string& stem);

// Per-scene metric row for aggregation.
struct SceneMetrics {
    std::string scene_id;
    double mpjpe_mm = 0.0, pa_mpjpe_mm = 0.0, pckh_frac = 0.0;
};

// Writes report.json, report.csv and per-sweep SVG heatmaps into `dir`.
void write_report(const std::string& dir, const std::vector<SceneMetrics>& scenes,
                  const std::vector<std::pair<std::string, OccSweepReport>>& sweeps);

// CSV + SVG primitives used by write_report (exposed for testing).
std::string metrics_csv(const std::vector<SceneMetrics>& scenes);
std::vector<SceneMetrics> parse_metrics_csv(const std::string& csv);
std::string svg_heatmap(const std::vector<double>& values, int rows, int cols,
                        const std::string& title);

}  // namespace nbv
