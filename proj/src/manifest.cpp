#include "latfuse/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace latfuse {

namespace fs = std::filesystem;
using nlohmann::json;

std::pair<std::string, std::string> manifest_sibling_names(const std::string& manifest_path) {
    const std::string stem = fs::path(manifest_path).stem().string();
    return {stem + ".weights.npy", stem + ".bias.npy"};
}

std::string sibling_path(const std::string& manifest_path, const std::string& name) {
    fs::path p(name);
    if (p.is_absolute()) return name;
    return (fs::path(manifest_path).parent_path() / p).string();
}

ManifestInfo read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open manifest " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ManifestError(path + ": invalid JSON (" + e.what() + ")");
    }
    if (!doc.is_object()) throw ManifestError(path + ": top level must be an object");

    auto need = [&](const char* key) -> const json& {
        auto it = doc.find(key);
        if (it == doc.end()) throw ManifestError(path + ": missing field '" + key + "'");
        return *it;
    };

    ManifestInfo info;
    const json& method = need("method");
    if (!method.is_string())
        throw ManifestError(path + ": 'method' must be a string");
    const std::string mname = method.get<std::string>();
    if (mname == "agf") {
        info.method = FusionMethod::agf;
    } else if (mname == "dsf") {
        info.method = FusionMethod::dsf;
    } else {
        throw ManifestError(path + ": unknown method '" + mname + "'");
    }

    const json& channels = need("channels");
    const json& kernel = need("kernel_size");
    if (!channels.is_number_integer() || !kernel.is_number_integer())
        throw ManifestError(path + ": 'channels' and 'kernel_size' must be integers");
    info.channels = channels.get<int64_t>();
    info.kernel_size = kernel.get<int64_t>();
    if (info.channels < 0)
        throw ManifestError(path + ": 'channels' must be >= 0");
    if (info.kernel_size < 1)
        throw ManifestError(path + ": 'kernel_size' must be >= 1");

    const json& files = need("files");
    if (!files.is_object() || !files.contains("weights") || !files.contains("bias") ||
        !files["weights"].is_string() || !files["bias"].is_string())
        throw ManifestError(path + ": 'files' must hold string fields 'weights' and 'bias'");
    info.weights_path = sibling_path(path, files["weights"].get<std::string>());
    info.bias_path = sibling_path(path, files["bias"].get<std::string>());
    return info;
}

void write_manifest(const std::string& path, FusionMethod method, int64_t channels,
                    int64_t kernel_size, const std::string& weights_file,
                    const std::string& bias_file) {
    json doc;
    doc["method"] = fusion_method_name(method);
    doc["channels"] = channels;
    doc["kernel_size"] = kernel_size;
    doc["files"] = {{"weights", weights_file}, {"bias", bias_file}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace latfuse
