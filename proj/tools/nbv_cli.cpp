#include <cstdio>
#include <filesystem>
#include <random>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <omp.h>

#include "nbv/benchmark.hpp"
#include "nbv/io.hpp"
#include "nbv/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    if (!j.is_object()) throw nbv::ConfigError("config: " + where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw nbv::ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

// Everything a run needs, resolved from the config file plus flag overrides.
struct Run {
    json config;  // effective config snapshot
    uint64_t seed = 0;
    int threads = 0;
    std::string out_dir = "run";
    int feature_dim = 8;
    int orientations = 4;
    double kappa = 5.0;

    std::string template_path, bank_path;
    nbv::StickTemplateConfig stick;
    nbv::RenderParams render;
    nbv::Camera camera;
    nbv::FitConfig fit_cfg;
    nbv::SceneConfig scene_cfg;
    nbv::TrainConfig train_cfg;
    nbv::SweepConfig sweep_cfg;

    nbv::BodyTemplate tmpl;
    nbv::KernelFeatureBank bank;
    nbv::BackgroundModel background;
    nbv::OrientationBins bins;
};

void parse_config(Run& run, const json& j) {
    check_keys(j,
               {"template", "bank", "seed", "threads", "output_dir", "feature_dim",
                "orientations", "kappa", "stick", "render", "camera", "fit", "scene", "train",
                "sweep"},
               "top level");
    maybe(j, "template", run.template_path);
    maybe(j, "bank", run.bank_path);
    maybe(j, "seed", run.seed);
    maybe(j, "threads", run.threads);
    maybe(j, "output_dir", run.out_dir);
    maybe(j, "feature_dim", run.feature_dim);
    maybe(j, "orientations", run.orientations);
    maybe(j, "kappa", run.kappa);
    if (j.contains("stick")) {
        const json& s = j["stick"];
        check_keys(s,
                   {"kernels_per_limb", "head_kernels", "limb_radius", "torso_radius",
                    "kernel_overlap", "blend_zone", "scale"},
                   "stick");
        maybe(s, "kernels_per_limb", run.stick.kernels_per_limb);
        maybe(s, "head_kernels", run.stick.head_kernels);
        maybe(s, "limb_radius", run.stick.limb_radius);
        maybe(s, "torso_radius", run.stick.torso_radius);
        maybe(s, "kernel_overlap", run.stick.kernel_overlap);
        maybe(s, "blend_zone", run.stick.blend_zone);
        maybe(s, "scale", run.stick.scale);
    }
    if (j.contains("render")) {
        const json& r = j["render"];
        check_keys(r, {"density_scale", "t_near", "t_far", "amplitude_cutoff",
                       "contribution_cutoff", "parallel"},
                   "render");
        maybe(r, "density_scale", run.render.density_scale);
        maybe(r, "t_near", run.render.t_near);
        maybe(r, "t_far", run.render.t_far);
        maybe(r, "amplitude_cutoff", run.render.amplitude_cutoff);
        maybe(r, "contribution_cutoff", run.render.contribution_cutoff);
        maybe(r, "parallel", run.render.parallel);
    }
    if (j.contains("camera")) {
        const json& c = j["camera"];
        check_keys(c,
                   {"focal", "principal_x", "principal_y", "rotation", "translation",
                    "image_height", "image_width", "feature_stride"},
                   "camera");
        maybe(c, "focal", run.camera.focal);
        maybe(c, "principal_x", run.camera.principal_x);
        maybe(c, "principal_y", run.camera.principal_y);
        maybe(c, "rotation", run.camera.rotation);
        maybe(c, "translation", run.camera.translation);
        maybe(c, "image_height", run.camera.image_height);
        maybe(c, "image_width", run.camera.image_width);
        maybe(c, "feature_stride", run.camera.feature_stride);
    }
    if (j.contains("fit")) {
        const json& f = j["fit"];
        check_keys(f,
                   {"learning_rate", "max_steps", "prior_weight", "convergence_tol", "flip_check",
                    "optimize_shape", "optimize_camera", "robust_mode", "mask_tau"},
                   "fit");
        maybe(f, "learning_rate", run.fit_cfg.learning_rate);
        maybe(f, "max_steps", run.fit_cfg.max_steps);
        maybe(f, "prior_weight", run.fit_cfg.prior_weight);
        maybe(f, "convergence_tol", run.fit_cfg.convergence_tol);
        maybe(f, "flip_check", run.fit_cfg.flip_check);
        maybe(f, "optimize_shape", run.fit_cfg.optimize_shape);
        maybe(f, "optimize_camera", run.fit_cfg.optimize_camera);
        maybe(f, "mask_tau", run.fit_cfg.mask_tau);
        if (f.contains("robust_mode")) {
            std::string mode = f["robust_mode"].get<std::string>();
            if (mode == "marginal")
                run.fit_cfg.robust_mode = nbv::RobustMode::kMarginal;
            else if (mode == "map")
                run.fit_cfg.robust_mode = nbv::RobustMode::kMap;
            else if (mode == "off")
                run.fit_cfg.robust_mode = nbv::RobustMode::kOff;
            else
                throw nbv::ConfigError("config: robust_mode must be marginal|map|off");
        }
    }
    if (j.contains("scene")) {
        const json& s = j["scene"];
        check_keys(s,
                   {"joint_angle_range", "root_jitter", "shape_range", "fg_noise_std",
                    "occlude_fraction", "mask_tau", "retry_budget"},
                   "scene");
        maybe(s, "joint_angle_range", run.scene_cfg.joint_angle_range);
        maybe(s, "root_jitter", run.scene_cfg.root_jitter);
        maybe(s, "shape_range", run.scene_cfg.shape_range);
        maybe(s, "fg_noise_std", run.scene_cfg.fg_noise_std);
        maybe(s, "occlude_fraction", run.scene_cfg.occlude_fraction);
        maybe(s, "mask_tau", run.scene_cfg.mask_tau);
        maybe(s, "retry_budget", run.scene_cfg.retry_budget);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        check_keys(t, {"epochs", "learning_rate", "contrast_weight", "max_pairs", "mask_tau"},
                   "train");
        maybe(t, "epochs", run.train_cfg.epochs);
        maybe(t, "learning_rate", run.train_cfg.learning_rate);
        maybe(t, "contrast_weight", run.train_cfg.contrast_weight);
        maybe(t, "max_pairs", run.train_cfg.max_pairs);
        maybe(t, "mask_tau", run.train_cfg.mask_tau);
    }
    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        check_keys(s, {"patch_px", "stride_px", "image_px", "pckh_factor"}, "sweep");
        maybe(s, "patch_px", run.sweep_cfg.patch_px);
        maybe(s, "stride_px", run.sweep_cfg.stride_px);
        maybe(s, "image_px", run.sweep_cfg.image_px);
        maybe(s, "pckh_factor", run.sweep_cfg.pckh_factor);
    }
}

void resolve_assets(Run& run) {
    run.tmpl = run.template_path.empty() ? nbv::make_stick_template(run.stick)
                                         : nbv::load_template(run.template_path);
    if (run.bank_path.empty()) {
        run.bank = nbv::make_random_bank(run.tmpl.num_kernels, run.orientations, run.feature_dim,
                                         run.seed + 17);
        run.background.mean.assign(static_cast<std::size_t>(run.feature_dim), 0.0);
        run.background.sigma = 1.0;
    } else {
        auto [bank, bg] = nbv::load_bank(run.bank_path);
        run.bank = std::move(bank);
        run.background = std::move(bg);
        run.feature_dim = run.bank.feature_dim;
        run.orientations = run.bank.num_orientations;
    }
    if (run.bank.num_kernels != run.tmpl.num_kernels)
        throw nbv::ConfigError("config: bank kernel count does not match the template");
    run.bins = nbv::make_orientation_bins(run.orientations, run.kappa);
    run.scene_cfg.camera = run.camera;
    run.camera.validate();
    if (run.threads > 0) omp_set_num_threads(run.threads);
}

void init_run_dir(Run& run, const std::string& command) {
    fs::create_directories(run.out_dir);
    run.config["seed"] = run.seed;
    run.config["threads"] = run.threads;
    run.config["output_dir"] = run.out_dir;
    nbv::save_json(run.out_dir + "/config_snapshot.json", run.config);
    std::ofstream log(run.out_dir + "/log.txt", std::ios::app);
    log << "command: " << command << " seed: " << run.seed << "\n";
}

void write_manifest(const Run& run, const json& entries) {
    nbv::save_json(run.out_dir + "/manifest.json", json{{"entries", entries}});
}

nbv::PosePrior make_prior(const Run& run) { return nbv::PosePrior::rest(run.tmpl.num_joints); }

nbv::FitProblem make_problem(const Run& run, const nbv::FeatureMap& observed,
                             const nbv::PosePrior& prior) {
    nbv::FitProblem p;
    p.tmpl = &run.tmpl;
    p.bank = &run.bank;
    p.bins = &run.bins;
    p.background = &run.background;
    p.observed = &observed;
    p.render = run.render;
    p.prior = prior;
    p.config = run.fit_cfg;
    return p;
}

int cmd_synth(Run& run, int count, double occlude) {
    init_run_dir(run, "synth");
    if (occlude >= 0.0) run.scene_cfg.occlude_fraction = occlude;
    fs::create_directories(run.out_dir + "/scenes");
    json entries = json::array();
    for (int i = 0; i < count; ++i) {
        nbv::SyntheticScene scene =
            nbv::synth_scene(run.scene_cfg, run.tmpl, run.bank, run.bins, run.background,
                             run.render, run.seed + static_cast<uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04d", i);
        nbv::save_scene(run.out_dir + "/scenes/" + name, scene);
        json e = {{"stem", std::string("scenes/") + name}, {"seed", scene.seed}};
        if (scene.occluder.active) e["occluder"] = scene.occluder;
        entries.push_back(e);
    }
    write_manifest(run, entries);
    std::cout << "wrote " << count << " scenes to " << run.out_dir << "/scenes\n";
    return 0;
}

// --init gt | perturbed:<sigma> | file:<path>
void initial_guess(const Run& run, const nbv::SyntheticScene& scene, const std::string& init,
                   nbv::PoseParams& theta, nbv::ShapeParams& beta) {
    theta = scene.theta;
    beta = scene.beta;
    if (init == "gt") return;
    if (init.starts_with("perturbed:")) {
        double sigma = std::stod(init.substr(10));
        std::mt19937_64 rng(run.seed + 99);
        std::normal_distribution<double> gauss(0.0, sigma);
        for (auto& v : theta.joint_rotations) {
            v.x += gauss(rng);
            v.y += gauss(rng);
            v.z += gauss(rng);
        }
        beta = nbv::ShapeParams::zero(run.tmpl.num_shape_dims);
        return;
    }
    if (init.starts_with("file:")) {
        auto [t, b] = nbv::load_pose_file(init.substr(5));
        theta = std::move(t);
        beta = std::move(b);
        return;
    }
    throw nbv::ConfigError("--init must be gt, perturbed:<sigma> or file:<path>");
}

int cmd_fit(Run& run, const std::string& scene_stem, const std::string& init) {
    init_run_dir(run, "fit");
    nbv::SyntheticScene scene = nbv::load_scene(scene_stem);
    nbv::PoseParams theta;
    nbv::ShapeParams beta;
    initial_guess(run, scene, init, theta, beta);
    nbv::PosePrior prior = make_prior(run);
    nbv::FitProblem problem = make_problem(run, scene.observation, prior);
    nbv::FitResult result = nbv::fit(problem, theta, beta, scene.camera);
    fs::create_directories(run.out_dir + "/fits");
    std::string stem_name = fs::path(scene_stem).filename().string();
    nbv::save_fit_result(run.out_dir + "/fits/" + stem_name + "_fit.json", result);

    std::vector<uint8_t> all(scene.gt_joints.size(), 1);
    std::vector<nbv::Vec3d> pred = nbv::posed_joints(run.tmpl, result.theta, result.beta);
    double err = nbv::mpjpe(pred, scene.gt_joints, all);
    std::cout << "final loss " << result.final_loss << " steps " << result.steps_run << " mpjpe "
              << err << " mm\n";
    write_manifest(run, json::array({std::string("fits/") + stem_name + "_fit.json"}));
    return 0;
}

int cmd_advocc(Run& run, const std::string& scenes_dir, std::vector<int> patches, int stride) {
    init_run_dir(run, "advocc");
    if (patches.empty()) patches = {40, 80};
    if (stride > 0) run.sweep_cfg.stride_px = stride;
    nbv::PosePrior prior = make_prior(run);

    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(scenes_dir))
        if (entry.path().extension() == ".json") {
            std::string stem = entry.path().string();
            stems.push_back(stem.substr(0, stem.size() - 5));
        }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw nbv::IoError("advocc: no scenes found in " + scenes_dir);

    std::vector<std::pair<std::string, nbv::OccSweepReport>> sweeps;
    std::vector<nbv::SceneMetrics> metrics;
    for (const std::string& stem : stems) {
        nbv::SyntheticScene scene = nbv::load_scene(stem);
        nbv::PoseParams theta;
        nbv::ShapeParams beta;
        initial_guess(run, scene, "perturbed:0.2", theta, beta);
        for (int patch : patches) {
            nbv::SweepConfig cfg = run.sweep_cfg;
            cfg.patch_px = patch;
            nbv::OccSweepReport rep =
                nbv::adv_occ_sweep(scene, run.tmpl, run.bank, run.bins, run.background,
                                   run.render, run.fit_cfg, prior, theta, beta, cfg);
            std::string id = fs::path(stem).filename().string() + "_p" + std::to_string(patch);
            nbv::SceneMetrics m;
            m.scene_id = id;
            m.mpjpe_mm = rep.worst_mpjpe_mm;
            if (rep.worst_index >= 0) {
                const nbv::PlacementResult& w =
                    rep.placements[static_cast<std::size_t>(rep.worst_index)];
                m.pa_mpjpe_mm = w.pa_mpjpe_mm;
                m.pckh_frac = w.pckh_frac;
            }
            metrics.push_back(m);
            sweeps.emplace_back(id, std::move(rep));
        }
    }
    nbv::write_report(run.out_dir, metrics, sweeps);
    std::cout << "wrote sweep reports for " << stems.size() << " scenes to " << run.out_dir
              << "\n";
    return 0;
}

int cmd_train(Run& run, const std::string& scenes_dir, int epochs) {
    init_run_dir(run, "train");
    if (epochs > 0) run.train_cfg.epochs = epochs;
    run.train_cfg.seed = run.seed;

    std::vector<nbv::TrainScene> scenes;
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(scenes_dir))
        if (entry.path().extension() == ".json") {
            std::string stem = entry.path().string();
            stems.push_back(stem.substr(0, stem.size() - 5));
        }
    std::sort(stems.begin(), stems.end());
    for (const std::string& stem : stems) {
        nbv::SyntheticScene s = nbv::load_scene(stem);
        scenes.push_back({std::move(s.observation), s.theta, s.beta, s.camera});
    }
    if (scenes.empty()) throw nbv::IoError("train: no scenes found in " + scenes_dir);

    nbv::AffineExtractor extractor = nbv::AffineExtractor::identity(run.feature_dim);
    nbv::TrainHistory history =
        nbv::train_loop(extractor, scenes, run.tmpl, run.bank, run.background, run.bins,
                        run.render, run.train_cfg);

    nbv::save_bank(run.out_dir + "/bank.json", run.bank, run.background);
    nbv::FeatureMap params;
    params.height = 1;
    params.width = 1;
    params.data = extractor.params();
    params.channels = static_cast<int>(params.data.size());
    nbv::write_fmap(run.out_dir + "/extractor.fmap", params);

    std::ofstream csv(run.out_dir + "/loss_curve.csv");
    csv << "epoch,nll,l_fg,l_3d,l_bg,total\n";
    for (std::size_t e = 0; e < history.nll.size(); ++e)
        csv << e << "," << history.nll[e] << "," << history.l_fg[e] << "," << history.l_3d[e]
            << "," << history.l_bg[e] << "," << history.total[e] << "\n";
    write_manifest(run, json::array({"bank.json", "bank.fmap", "extractor.fmap",
                                     "loss_curve.csv"}));
    std::cout << "nll " << history.nll.front() << " -> " << history.nll.back() << " over "
              << run.train_cfg.epochs << " epochs\n";
    return 0;
}

int cmd_gradcheck(Run& run, int seeds, double tolerance) {
    init_run_dir(run, "gradcheck");
    nbv::GradientCheckReport report = nbv::check_gradients(seeds, tolerance, 1e-5, run.seed);
    json j = {{"max_rel_error", report.max_rel_error}, {"passed", report.passed}};
    json groups = json::array();
    for (const auto& g : report.groups) {
        groups.push_back({{"name", g.name}, {"max_rel_error", g.max_rel_error}});
        std::cout << g.name << " max rel err " << g.max_rel_error << "\n";
    }
    j["groups"] = groups;
    nbv::save_json(run.out_dir + "/gradcheck.json", j);
    std::cout << (report.passed ? "PASS" : "FAIL") << " max rel err " << report.max_rel_error
              << " (tolerance " << tolerance << ")\n";
    return report.passed ? 0 : kExitDivergence;
}

int cmd_render(Run& run, const std::string& pose_path) {
    init_run_dir(run, "render");
    nbv::PoseParams theta = nbv::PoseParams::rest(run.tmpl.num_joints);
    nbv::ShapeParams beta = nbv::ShapeParams::zero(run.tmpl.num_shape_dims);
    if (!pose_path.empty()) {
        auto [t, b] = nbv::load_pose_file(pose_path);
        theta = std::move(t);
        beta = std::move(b);
    }
    nbv::PosedBody posed = nbv::pose_kernels(run.tmpl, theta, beta);
    std::vector<nbv::Vec3d> dirs(posed.limb_orientations.size());
    for (std::size_t l = 0; l < dirs.size(); ++l)
        dirs[l] = run.camera.rotation * posed.limb_orientations[l];
    std::vector<double> feats =
        nbv::expected_kernel_features<double>(run.bank, dirs, run.tmpl.kernel_limb, run.bins);
    nbv::RenderOutput render =
        nbv::render_feature_map(posed, feats, run.feature_dim, run.camera, run.render);

    nbv::FeatureMap fm;
    fm.height = render.height;
    fm.width = render.width;
    fm.channels = render.channels;
    fm.data = render.features;
    nbv::write_fmap(run.out_dir + "/render.fmap", fm);
    nbv::FeatureMap op;
    op.height = render.height;
    op.width = render.width;
    op.channels = 1;
    op.data = render.opacity;
    nbv::write_fmap(run.out_dir + "/opacity.fmap", op);
    double max_op = *std::max_element(render.opacity.begin(), render.opacity.end());
    write_manifest(run, json::array({"render.fmap", "opacity.fmap"}));
    std::cout << "opacity max " << max_op << "\n";
    return 0;
}

int cmd_report(Run& run, const std::string& csv_path) {
    init_run_dir(run, "report");
    std::vector<nbv::SceneMetrics> metrics;
    if (!csv_path.empty()) {
        std::ifstream in(csv_path);
        if (!in) throw nbv::IoError("report: cannot open " + csv_path);
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        metrics = nbv::parse_metrics_csv(content);
    }
    nbv::write_report(run.out_dir, metrics, {});
    std::cout << "aggregated " << metrics.size() << " scene rows into " << run.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural body volumes: synthesis, fitting, training and benchmarks"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed_flag;
    std::optional<int> threads_flag;
    std::optional<std::string> out_flag;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed_flag, "random seed (overrides config)");
    app.add_option("--threads", threads_flag, "OpenMP thread count (overrides config)");
    app.add_option("--out", out_flag, "output run directory (overrides config)");

    auto* synth = app.add_subcommand("synth", "generate synthetic scenes");
    int synth_count = 1;
    double synth_occlude = -1.0;
    synth->add_option("--count", synth_count, "number of scenes");
    synth->add_option("--occlude", synth_occlude, "target FG occlusion fraction");

    auto* fit_cmd = app.add_subcommand("fit", "fit one scene");
    std::string fit_scene, fit_init = "perturbed:0.2";
    fit_cmd->add_option("scene", fit_scene, "scene stem (without .json/.fmap)")->required();
    fit_cmd->add_option("--init", fit_init, "gt | perturbed:<sigma> | file:<path>");

    auto* advocc = app.add_subcommand("advocc", "adversarial occlusion sweeps");
    std::string advocc_dir;
    std::vector<int> advocc_patches;
    int advocc_stride = 0;
    advocc->add_option("scenes", advocc_dir, "directory of scene pairs")->required();
    advocc->add_option("--patch", advocc_patches, "patch sizes (protocol pixels)");
    advocc->add_option("--stride", advocc_stride, "stride (protocol pixels)");

    auto* train = app.add_subcommand("train", "train bank + extractor");
    std::string train_dir;
    int train_epochs = 0;
    train->add_option("scenes", train_dir, "directory of scene pairs")->required();
    train->add_option("--epochs", train_epochs, "training epochs");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    int gc_seeds = 20;
    double gc_tolerance = 1e-4;
    gradcheck->add_option("--seeds", gc_seeds, "number of random scenes");
    gradcheck->add_option("--tolerance", gc_tolerance, "max relative error");

    auto* render = app.add_subcommand("render", "render a pose to FMAP files");
    std::string render_pose;
    render->add_option("--pose", render_pose, "JSON pose file (default: rest)");

    auto* report = app.add_subcommand("report", "aggregate a metrics CSV");
    std::string report_csv;
    report->add_option("--csv", report_csv, "metrics CSV to aggregate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : kExitConfig;
    }

    try {
        Run run;
        run.camera.feature_stride = 8;
        run.camera.focal = 240.0;
        run.camera.translation = {0.0, 0.0, 3.0};
        run.render.density_scale = 0.01;  // stick-template kernels; see README
        if (!config_path.empty()) run.config = nbv::load_json(config_path);
        parse_config(run, run.config.is_null() ? json::object() : run.config);
        if (seed_flag) run.seed = *seed_flag;
        if (threads_flag) run.threads = *threads_flag;
        if (out_flag) run.out_dir = *out_flag;
        resolve_assets(run);

        if (synth->parsed()) return cmd_synth(run, synth_count, synth_occlude);
        if (fit_cmd->parsed()) return cmd_fit(run, fit_scene, fit_init);
        if (advocc->parsed()) return cmd_advocc(run, advocc_dir, advocc_patches, advocc_stride);
        if (train->parsed()) return cmd_train(run, train_dir, train_epochs);
        if (gradcheck->parsed()) return cmd_gradcheck(run, gc_seeds, gc_tolerance);
        if (render->parsed()) return cmd_render(run, render_pose);
        if (report->parsed()) return cmd_report(run, report_csv);
        return kExitConfig;
    } catch (const nbv::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nbv::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const nbv::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const nbv::MathError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
