// Run configuration: one JSON file covering module toggles, module
// hyper-parameters, and the toy training recipe. Unknown keys are rejected
// with their path; the resolved configuration can be echoed back as JSON.
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxagg/densefpn.hpp"
#include "ctxagg/hroie.hpp"
#include "ctxagg/scp.hpp"
#include "ctxagg/soft_nms.hpp"

namespace ctxagg {

struct ModuleToggles {
    bool densefpn = true;
    bool scp = true;
    bool hroie = true;
};

struct ToyConfig {
    int image_size = 128;
    int num_classes = 2;
    int64_t channels = 64;
    std::vector<int64_t> stage_widths = {16, 32, 48, 64, 64};  // stem, then C2..C5
    int batch = 2;
    int iterations = 200;
    double lr = 0.002;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double jitter = 0.1;
    int eval_scenes = 10;
    double score_threshold = 0.5;
    double nms_iou = 0.5;
    std::string nms_mode = "linear";  // or "gaussian"
    double nms_score_floor = 0.001;
    double nms_sigma = 0.5;

    SoftNmsMode nms_mode_enum() const {
        if (nms_mode == "linear") return SoftNmsMode::linear;
        if (nms_mode == "gaussian") return SoftNmsMode::gaussian;
        throw std::invalid_argument("config: toy.nms_mode must be \"linear\" or \"gaussian\", got " + nms_mode);
    }
};

struct RunConfig {
    uint64_t seed = 0;
    ModuleToggles modules;
    DenseFPNConfig densefpn;
    SCPConfig scp;
    HRoIEConfig hroie;
    ToyConfig toy;

    // toy-scale defaults; the module structs default to full scale
    RunConfig() {
        densefpn.depth = 2;
        densefpn.channels = 64;
        densefpn.mid_channels = 32;
        densefpn.l_min = 2;
        densefpn.l_max = 6;
        scp.channels = 64;
        scp.levels = {2, 3, 4, 5, 6};
        hroie.channels = 64;
        hroie.l_min = 2;
        hroie.l_max = 5;
    }

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key \"" + (path.empty() ? it.key() : path + "." + it.key()) +
                                        "\"");
}

template <typename T>
inline void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void RunConfig::validate() const {
    if (toy.image_size < 64 || toy.image_size % 64 != 0)
        throw std::invalid_argument("config: toy.image_size must be a positive multiple of 64");
    if (toy.stage_widths.size() != 5) throw std::invalid_argument("config: toy.stage_widths needs 5 entries");
    if (toy.num_classes < 1) throw std::invalid_argument("config: toy.num_classes must be >= 1");
    if (toy.batch < 1 || toy.iterations < 0) throw std::invalid_argument("config: bad toy.batch/iterations");
    if (!(toy.jitter >= 0.0 && toy.jitter < 0.5)) throw std::invalid_argument("config: toy.jitter must be in [0, 0.5)");
    toy.nms_mode_enum();
    if (modules.densefpn) {
        if (densefpn.channels != toy.channels)
            throw std::invalid_argument("config: densefpn.channels must equal toy.channels");
        if (densefpn.l_min != 2 || densefpn.l_max != 6)
            throw std::invalid_argument("config: densefpn.levels must be [2, 6] when used in the toy pipeline");
        if (densefpn.depth < 1) throw std::invalid_argument("config: densefpn.depth must be >= 1");
        if (densefpn.mid_channels < 1) throw std::invalid_argument("config: densefpn.mid_channels must be >= 1");
    }
    if (modules.scp) {
        if (scp.channels != toy.channels) throw std::invalid_argument("config: scp.channels must equal toy.channels");
        for (int l : scp.levels)
            if (l < 2 || l > 6) throw std::invalid_argument("config: scp.levels entries must lie in [2, 6]");
        if (scp.reduction < 1) throw std::invalid_argument("config: scp.reduction must be >= 1");
    }
    if (modules.hroie) {
        if (hroie.channels != toy.channels)
            throw std::invalid_argument("config: hroie.channels must equal toy.channels");
    }
    if (hroie.l_min < 2 || hroie.l_max > 6 || hroie.l_min > hroie.l_max)
        throw std::invalid_argument("config: hroie.levels must be a sub-range of [2, 6]");
    if (hroie.det_size < 1 || hroie.mask_size < 1 || hroie.sampling_ratio < 1)
        throw std::invalid_argument("config: bad hroie sizes/sampling_ratio");
}

inline nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["modules"] = {{"densefpn", modules.densefpn}, {"scp", modules.scp}, {"hroie", modules.hroie}};
    j["densefpn"] = {{"depth", densefpn.depth},
                     {"channels", densefpn.channels},
                     {"mid_channels", densefpn.mid_channels},
                     {"levels", {densefpn.l_min, densefpn.l_max}},
                     {"norm_affine", densefpn.norm_affine}};
    j["scp"] = {{"levels", scp.levels}, {"channels", scp.channels}, {"reduction", scp.reduction}};
    j["hroie"] = {{"levels", {hroie.l_min, hroie.l_max}},
                  {"channels", hroie.channels},
                  {"det_size", hroie.det_size},
                  {"mask_size", hroie.mask_size},
                  {"sampling_ratio", hroie.sampling_ratio}};
    j["toy"] = {{"image_size", toy.image_size},
                {"num_classes", toy.num_classes},
                {"channels", toy.channels},
                {"stage_widths", toy.stage_widths},
                {"batch", toy.batch},
                {"iterations", toy.iterations},
                {"lr", toy.lr},
                {"momentum", toy.momentum},
                {"weight_decay", toy.weight_decay},
                {"jitter", toy.jitter},
                {"eval_scenes", toy.eval_scenes},
                {"score_threshold", toy.score_threshold},
                {"nms_iou", toy.nms_iou},
                {"nms_mode", toy.nms_mode},
                {"nms_score_floor", toy.nms_score_floor},
                {"nms_sigma", toy.nms_sigma}};
    return j;
}

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    detail::reject_unknown(j, {"seed", "modules", "densefpn", "scp", "hroie", "toy"}, "");
    detail::read_if(j, "seed", c.seed);
    if (j.contains("modules")) {
        const auto& m = j.at("modules");
        detail::reject_unknown(m, {"densefpn", "scp", "hroie"}, "modules");
        detail::read_if(m, "densefpn", c.modules.densefpn);
        detail::read_if(m, "scp", c.modules.scp);
        detail::read_if(m, "hroie", c.modules.hroie);
    }
    if (j.contains("densefpn")) {
        const auto& d = j.at("densefpn");
        detail::reject_unknown(d, {"depth", "channels", "mid_channels", "levels", "norm_affine"}, "densefpn");
        detail::read_if(d, "depth", c.densefpn.depth);
        detail::read_if(d, "channels", c.densefpn.channels);
        detail::read_if(d, "mid_channels", c.densefpn.mid_channels);
        detail::read_if(d, "norm_affine", c.densefpn.norm_affine);
        if (d.contains("levels")) {
            auto lv = d.at("levels").get<std::vector<int>>();
            if (lv.size() != 2) throw std::invalid_argument("config: densefpn.levels must be [l_min, l_max]");
            c.densefpn.l_min = lv[0];
            c.densefpn.l_max = lv[1];
        }
    }
    if (j.contains("scp")) {
        const auto& s = j.at("scp");
        detail::reject_unknown(s, {"levels", "channels", "reduction"}, "scp");
        detail::read_if(s, "levels", c.scp.levels);
        detail::read_if(s, "channels", c.scp.channels);
        detail::read_if(s, "reduction", c.scp.reduction);
    }
    if (j.contains("hroie")) {
        const auto& h = j.at("hroie");
        detail::reject_unknown(h, {"levels", "channels", "det_size", "mask_size", "sampling_ratio"}, "hroie");
        detail::read_if(h, "channels", c.hroie.channels);
        detail::read_if(h, "det_size", c.hroie.det_size);
        detail::read_if(h, "mask_size", c.hroie.mask_size);
        detail::read_if(h, "sampling_ratio", c.hroie.sampling_ratio);
        if (h.contains("levels")) {
            auto lv = h.at("levels").get<std::vector<int>>();
            if (lv.size() != 2) throw std::invalid_argument("config: hroie.levels must be [l_min, l_max]");
            c.hroie.l_min = lv[0];
            c.hroie.l_max = lv[1];
        }
    }
    if (j.contains("toy")) {
        const auto& t = j.at("toy");
        detail::reject_unknown(t,
                               {"image_size", "num_classes", "channels", "stage_widths", "batch", "iterations", "lr",
                                "momentum", "weight_decay", "jitter", "eval_scenes", "score_threshold", "nms_iou",
                                "nms_mode", "nms_score_floor", "nms_sigma"},
                               "toy");
        detail::read_if(t, "image_size", c.toy.image_size);
        detail::read_if(t, "num_classes", c.toy.num_classes);
        detail::read_if(t, "channels", c.toy.channels);
        detail::read_if(t, "stage_widths", c.toy.stage_widths);
        detail::read_if(t, "batch", c.toy.batch);
        detail::read_if(t, "iterations", c.toy.iterations);
        detail::read_if(t, "lr", c.toy.lr);
        detail::read_if(t, "momentum", c.toy.momentum);
        detail::read_if(t, "weight_decay", c.toy.weight_decay);
        detail::read_if(t, "jitter", c.toy.jitter);
        detail::read_if(t, "eval_scenes", c.toy.eval_scenes);
        detail::read_if(t, "score_threshold", c.toy.score_threshold);
        detail::read_if(t, "nms_iou", c.toy.nms_iou);
        detail::read_if(t, "nms_mode", c.toy.nms_mode);
        detail::read_if(t, "nms_score_floor", c.toy.nms_score_floor);
        detail::read_if(t, "nms_sigma", c.toy.nms_sigma);
    }
    c.validate();
    return c;
}

inline RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    is >> j;
    return from_json(j);
}

}  // namespace ctxagg
