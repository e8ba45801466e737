#include "nbv/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace nbv {

static_assert(std::endian::native == std::endian::little,
              "FMAP IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'N', 'B', 'V', 'F'};

std::string fmap_sibling(const std::string& json_path) {
    if (json_path.size() > 5 && json_path.ends_with(".json"))
        return json_path.substr(0, json_path.size() - 5) + ".fmap";
    return json_path + ".fmap";
}

}  // namespace

void write_fmap(const std::string& path, const FeatureMap& map) {
    if (map.height <= 0 || map.width <= 0 || map.channels <= 0 ||
        map.data.size() !=
            static_cast<std::size_t>(map.height) * map.width * map.channels)
        throw ShapeError("write_fmap: inconsistent feature map shape");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_fmap: cannot open " + path);
    out.write(kMagic, 4);
    uint16_t version = kFmapVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint32_t dims[3] = {static_cast<uint32_t>(map.height), static_cast<uint32_t>(map.width),
                        static_cast<uint32_t>(map.channels)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> buf(map.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(map.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw IoError("write_fmap: write failed for " + path);
}

FeatureMap read_fmap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_fmap: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("read_fmap: bad magic in " + path);
    uint16_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kFmapVersion)
        throw IoError("read_fmap: unsupported version in " + path);
    uint32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) throw IoError("read_fmap: truncated header in " + path);
    FeatureMap map;
    map.height = static_cast<int>(dims[0]);
    map.width = static_cast<int>(dims[1]);
    map.channels = static_cast<int>(dims[2]);
    std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    if (count > (1u << 28)) throw IoError("read_fmap: implausible size in " + path);
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw IoError("read_fmap: truncated payload in " + path);
    map.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) map.data[i] = buf[i];
    return map;
}

void to_json(nlohmann::json& j, const Vec3d& v) { j = nlohmann::json::array({v.x, v.y, v.z}); }

void from_json(const nlohmann::json& j, Vec3d& v) {
    if (!j.is_array() || j.size() != 3) throw IoError("JSON: expected a 3-vector");
    v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(nlohmann::json& j, const Mat3d& m) {
    j = nlohmann::json::array();
    for (double x : m.m) j.push_back(x);
}

void from_json(const nlohmann::json& j, Mat3d& m) {
    if (!j.is_array() || j.size() != 9) throw IoError("JSON: expected a 9-element matrix");
    for (int i = 0; i < 9; ++i) m.m[static_cast<std::size_t>(i)] = j[i].get<double>();
}

void to_json(nlohmann::json& j, const PoseParams& p) {
    j = {{"joint_rotations", p.joint_rotations}, {"root_translation", p.root_translation}};
}

void from_json(const nlohmann::json& j, PoseParams& p) {
    j.at("joint_rotations").get_to(p.joint_rotations);
    j.at("root_translation").get_to(p.root_translation);
}

void to_json(nlohmann::json& j, const ShapeParams& s) { j = {{"coefficients", s.coefficients}}; }

void from_json(const nlohmann::json& j, ShapeParams& s) {
    j.at("coefficients").get_to(s.coefficients);
}

void to_json(nlohmann::json& j, const Camera& c) {
    j = {{"focal", c.focal},
         {"principal_x", c.principal_x},
         {"principal_y", c.principal_y},
         {"rotation", c.rotation},
         {"translation", c.translation},
         {"image_height", c.image_height},
         {"image_width", c.image_width},
         {"feature_stride", c.feature_stride}};
}

void from_json(const nlohmann::json& j, Camera& c) {
    j.at("focal").get_to(c.focal);
    j.at("principal_x").get_to(c.principal_x);
    j.at("principal_y").get_to(c.principal_y);
    j.at("rotation").get_to(c.rotation);
    j.at("translation").get_to(c.translation);
    j.at("image_height").get_to(c.image_height);
    j.at("image_width").get_to(c.image_width);
    j.at("feature_stride").get_to(c.feature_stride);
}

void to_json(nlohmann::json& j, const FitResult& r) {
    j = {{"theta", r.theta},
         {"beta", r.beta},
         {"camera", r.camera},
         {"loss_trace", r.loss_trace},
         {"final_loss", r.final_loss},
         {"steps_run", r.steps_run},
         {"flip_used", r.flip_used},
         {"converged", r.converged}};
}

void from_json(const nlohmann::json& j, FitResult& r) {
    j.at("theta").get_to(r.theta);
    j.at("beta").get_to(r.beta);
    j.at("camera").get_to(r.camera);
    j.at("loss_trace").get_to(r.loss_trace);
    j.at("final_loss").get_to(r.final_loss);
    j.at("steps_run").get_to(r.steps_run);
    j.at("flip_used").get_to(r.flip_used);
    j.at("converged").get_to(r.converged);
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_json: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_json: parse error in " + path + ": " + e.what());
    }
    return j;
}

void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("save_json: cannot open " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("save_json: write failed for " + path);
}

void save_template(const std::string& path, const BodyTemplate& tmpl) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["num_kernels"] = tmpl.num_kernels;
    j["num_joints"] = tmpl.num_joints;
    j["num_shape_dims"] = tmpl.num_shape_dims;
    j["rest_means"] = tmpl.rest_means;
    j["rest_covariances"] = tmpl.rest_covariances;
    j["blend_weights"] = tmpl.blend_weights;
    j["template_joints"] = tmpl.template_joints;
    j["parents"] = tmpl.parents;
    j["shape_basis"] = tmpl.shape_basis;
    j["joint_regressor"] = tmpl.joint_regressor;
    j["limb_defs"] = tmpl.limb_defs;
    j["kernel_limb"] = tmpl.kernel_limb;
    j["torso_limb"] = tmpl.torso_limb;
    j["left_hip_joint"] = tmpl.left_hip_joint;
    j["right_hip_joint"] = tmpl.right_hip_joint;
    j["joint_names"] = tmpl.joint_names;
    save_json(path, j);
}

BodyTemplate load_template(const std::string& path) {
    nlohmann::json j = load_json(path);
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        throw IoError("load_template: unsupported schema in " + path);
    BodyTemplate t;
    try {
        j.at("num_kernels").get_to(t.num_kernels);
        j.at("num_joints").get_to(t.num_joints);
        j.at("num_shape_dims").get_to(t.num_shape_dims);
        j.at("rest_means").get_to(t.rest_means);
        j.at("rest_covariances").get_to(t.rest_covariances);
        j.at("blend_weights").get_to(t.blend_weights);
        j.at("template_joints").get_to(t.template_joints);
        j.at("parents").get_to(t.parents);
        j.at("shape_basis").get_to(t.shape_basis);
        j.at("joint_regressor").get_to(t.joint_regressor);
        j.at("limb_defs").get_to(t.limb_defs);
        j.at("kernel_limb").get_to(t.kernel_limb);
        j.at("torso_limb").get_to(t.torso_limb);
        j.at("left_hip_joint").get_to(t.left_hip_joint);
        j.at("right_hip_joint").get_to(t.right_hip_joint);
        j.at("joint_names").get_to(t.joint_names);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_template: malformed document " + path + ": " + e.what());
    }
    t.rest_precisions.resize(t.rest_covariances.size());
    for (std::size_t k = 0; k < t.rest_covariances.size(); ++k)
        t.rest_precisions[k] = inverse(t.rest_covariances[k]);
    t.validate();
    return t;
}

void save_bank(const std::string& json_path, const KernelFeatureBank& bank,
               const BackgroundModel& background) {
    bank.validate();
    background.validate();
    std::string fmap_path = fmap_sibling(json_path);
    FeatureMap blob;
    blob.height = bank.num_kernels;
    blob.width = bank.num_orientations;
    blob.channels = bank.feature_dim;
    blob.data = bank.features;
    write_fmap(fmap_path, blob);
    nlohmann::json j;
    j["schema_version"] = 1;
    j["num_kernels"] = bank.num_kernels;
    j["num_orientations"] = bank.num_orientations;
    j["feature_dim"] = bank.feature_dim;
    j["fg_sigma"] = bank.fg_sigma;
    j["momentum"] = bank.momentum;
    j["background_mean"] = background.mean;
    j["background_sigma"] = background.sigma;
    j["features_fmap"] = fmap_path.substr(fmap_path.find_last_of('/') + 1);
    save_json(json_path, j);
}

std::pair<KernelFeatureBank, BackgroundModel> load_bank(const std::string& json_path) {
    nlohmann::json j = load_json(json_path);
    KernelFeatureBank bank;
    BackgroundModel background;
    try {
        j.at("num_kernels").get_to(bank.num_kernels);
        j.at("num_orientations").get_to(bank.num_orientations);
        j.at("feature_dim").get_to(bank.feature_dim);
        j.at("fg_sigma").get_to(bank.fg_sigma);
        j.at("momentum").get_to(bank.momentum);
        j.at("background_mean").get_to(background.mean);
        j.at("background_sigma").get_to(background.sigma);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_bank: malformed header " + json_path + ": " + e.what());
    }
    std::string fmap_name = j.value("features_fmap", std::string{});
    std::string dir;
    if (auto pos = json_path.find_last_of('/'); pos != std::string::npos)
        dir = json_path.substr(0, pos + 1);
    FeatureMap blob = read_fmap(fmap_name.empty() ? fmap_sibling(json_path) : dir + fmap_name);
    if (blob.height != bank.num_kernels || blob.width != bank.num_orientations ||
        blob.channels != bank.feature_dim)
        throw IoError("load_bank: blob shape disagrees with header " + json_path);
    bank.features = std::move(blob.data);
    // float round-trip perturbs norms; restore exact unit rows
    for (int k = 0; k < bank.num_kernels; ++k)
        for (int o = 0; o < bank.num_orientations; ++o) {
            double* phi = bank.feature(k, o);
            double n2 = 0.0;
            for (int d = 0; d < bank.feature_dim; ++d) n2 += phi[d] * phi[d];
            if (n2 <= 0.0) throw IoError("load_bank: zero feature row in " + json_path);
            double inv = 1.0 / std::sqrt(n2);
            for (int d = 0; d < bank.feature_dim; ++d) phi[d] *= inv;
        }
    bank.validate();
    background.validate();
    return {std::move(bank), std::move(background)};
}

void save_fit_result(const std::string& path, const FitResult& result) {
    save_json(path, nlohmann::json(result));
}

FitResult load_fit_result(const std::string& path) {
    try {
        return load_json(path).get<FitResult>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_fit_result: malformed document " + path + ": " + e.what());
    }
}

void save_pose_file(const std::string& path, const PoseParams& theta, const ShapeParams& beta) {
    save_json(path, nlohmann::json{{"theta", theta}, {"beta", beta}});
}

std::pair<PoseParams, ShapeParams> load_pose_file(const std::string& path) {
    nlohmann::json j = load_json(path);
    try {
        return {j.at("theta").get<PoseParams>(), j.at("beta").get<ShapeParams>()};
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_pose_file: malformed document " + path + ": " + e.what());
    }
}

}  // namespace nbv
