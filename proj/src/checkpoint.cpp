#include "sisvae/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace sisvae {

namespace {

using json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

json config_to_json(const ModelConfig& c) {
    return json{{"x_dim", c.x_dim},
                {"h_dim", c.h_dim},
                {"z_dim", c.z_dim},
                {"feat_dim", c.feat_dim},
                {"sigma_floor", c.sigma_floor}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.x_dim = j.at("x_dim").get<std::size_t>();
    c.h_dim = j.at("h_dim").get<std::size_t>();
    c.z_dim = j.at("z_dim").get<std::size_t>();
    c.feat_dim = j.at("feat_dim").get<std::size_t>();
    c.sigma_floor = j.at("sigma_floor").get<double>();
    c.validate();
    return c;
}

}  // namespace

std::string checkpoint_to_json(const ModelParams& params, const TrainerState* trainer) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["model_config"] = config_to_json(params.config);
    json jp;
    for (const auto& [name, tensor] : params.named()) jp[name] = tensor->values;
    doc["params"] = std::move(jp);
    if (trainer != nullptr) {
        json js;
        js["step"] = trainer->adam.step;
        js["window_w"] = trainer->window_w;
        js["adam_m"] = trainer->adam.m;
        js["adam_v"] = trainer->adam.v;
        doc["trainer_state"] = std::move(js);
    }
    return doc.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json doc = json::parse(text);
    const int version = doc.at("format_version").get<int>();
    if (version != kFormatVersion) {
        throw std::runtime_error("checkpoint: unsupported format_version " +
                                 std::to_string(version));
    }
    Checkpoint out;
    out.params = ModelParams::shaped(config_from_json(doc.at("model_config")));
    const json& jp = doc.at("params");
    for (auto& [name, tensor] : out.params.named()) {
        if (!jp.contains(name)) {
            throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
        }
        auto values = jp.at(name).get<std::vector<double>>();
        if (values.size() != tensor->numel()) {
            throw std::runtime_error("checkpoint: parameter '" + name + "' has " +
                                     std::to_string(values.size()) + " values, expected " +
                                     std::to_string(tensor->numel()));
        }
        tensor->values = std::move(values);
    }
    if (doc.contains("trainer_state")) {
        const json& js = doc.at("trainer_state");
        TrainerState ts;
        ts.adam.step = js.at("step").get<std::size_t>();
        ts.window_w = js.at("window_w").get<std::size_t>();
        ts.adam.m = js.at("adam_m").get<std::vector<std::vector<double>>>();
        ts.adam.v = js.at("adam_v").get<std::vector<std::vector<double>>>();
        out.trainer = std::move(ts);
    }
    return out;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainerState* trainer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << checkpoint_to_json(params, trainer);
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_json(text);
}

}  // namespace sisvae
