#include "sama/prompt_json.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sama/image.hpp"

namespace sama {

using nlohmann::json;

namespace {

double coordinate(const json& v, const char* what) {
    if (!v.is_number()) throw PromptFormatError(std::string(what) + " coordinates must be numbers");
    return v.get<double>();
}

}  // namespace

PromptSet parse_prompts(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw PromptFormatError(std::string("prompts are not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw PromptFormatError("prompts must be a JSON object");
    PromptSet p;
    for (const auto& [key, value] : j.items()) {
        if (key == "points") {
            if (!value.is_array()) throw PromptFormatError("'points' must be an array");
            for (const auto& pt : value) {
                if (!pt.is_array() || pt.size() != 3 || !pt[2].is_string())
                    throw PromptFormatError("each point must be [x, y, \"fg\"|\"bg\"]");
                const auto label = pt[2].get<std::string>();
                if (label != "fg" && label != "bg") throw PromptFormatError("point label must be \"fg\" or \"bg\"");
                p.points.push_back({coordinate(pt[0], "point"), coordinate(pt[1], "point"),
                                    label == "fg" ? PointLabel::foreground : PointLabel::background});
            }
        } else if (key == "box") {
            if (!value.is_array() || value.size() != 4) throw PromptFormatError("'box' must be [x0, y0, x1, y1]");
            p.box = Box{coordinate(value[0], "box"), coordinate(value[1], "box"), coordinate(value[2], "box"),
                        coordinate(value[3], "box")};
        } else if (key == "coarse_mask") {
            if (!value.is_string()) throw PromptFormatError("'coarse_mask' must be a PNG path");
            std::filesystem::path mp = value.get<std::string>();
            if (mp.is_relative()) mp = base_dir / mp;
            try {
                p.coarse_mask = to_tensor(read_gray_png(mp));
            } catch (const ImageIoError& e) {
                throw PromptFormatError(std::string("coarse mask: ") + e.what());
            }
        } else {
            throw PromptFormatError("unknown prompt key '" + key + "'");
        }
    }
    if (p.empty()) throw PromptFormatError("no prompts given");
    return p;
}

PromptSet load_prompts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PromptFormatError("cannot read prompts file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_prompts(ss.str(), path.parent_path());
}

std::string prompts_to_json(const PromptSet& prompts, const std::string& coarse_mask_file) {
    nlohmann::ordered_json j;
    if (!prompts.points.empty()) {
        auto& pts = j["points"] = json::array();
        for (const auto& pt : prompts.points)
            pts.push_back({pt.x, pt.y, pt.label == PointLabel::foreground ? "fg" : "bg"});
    }
    if (prompts.box) j["box"] = {prompts.box->x0, prompts.box->y0, prompts.box->x1, prompts.box->y1};
    if (prompts.coarse_mask && !coarse_mask_file.empty()) j["coarse_mask"] = coarse_mask_file;
    return j.dump() + "\n";
}

}  // namespace sama
