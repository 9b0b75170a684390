#include "classbench/error.hpp"
#include "classbench/modelgate.hpp"

#include <toml.hpp>

#include <fstream>
#include <sstream>

namespace classbench {

std::vector<BackendConfig> parse_backend_configs(std::string_view toml_text, const std::filesystem::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        throw Error(ErrorCode::ParseError, std::string(e.description()));
    }
    std::vector<BackendConfig> out;
    const auto* arr = root["backend"].as_array();
    if (!arr) return out;
    for (const auto& node : *arr) {
        const auto* t = node.as_table();
        if (!t) throw Error(ErrorCode::InvalidConfig, "[[backend]] entries must be tables");
        const auto& tbl = *t;
        BackendConfig c;
        c.id = tbl["id"].value_or(std::string());
        if (c.id.empty()) throw Error(ErrorCode::InvalidConfig, "backend entry without id");
        const std::string kind = tbl["kind"].value_or(std::string("chat"));
        if (kind == "chat") {
            c.kind = BackendKind::Chat;
        } else if (kind == "embed") {
            c.kind = BackendKind::Embed;
        } else {
            throw Error(ErrorCode::InvalidConfig, c.id + ": kind must be chat or embed");
        }
        c.provider = tbl["provider"].value_or(std::string("http"));
        c.base_url = tbl["base_url"].value_or(std::string());
        c.model = tbl["model"].value_or(std::string());
        c.api_key_env = tbl["api_key_env"].value_or(std::string());
        if (auto f = tbl["file"].value<std::string>()) {
            std::filesystem::path p(*f);
            c.file = p.is_absolute() ? p : base_dir / p;
        }
        c.dimension = static_cast<std::size_t>(tbl["dimension"].value_or(std::int64_t{256}));
        c.limits.max_in_flight = static_cast<std::size_t>(tbl["max_in_flight"].value_or(std::int64_t{4}));
        c.limits.requests_per_second = tbl["requests_per_second"].value_or(0.0);
        c.timeout = std::chrono::seconds(tbl["timeout_s"].value_or(std::int64_t{60}));
        if (c.provider == "http" && c.base_url.empty()) throw Error(ErrorCode::InvalidConfig, c.id + ": http backends need base_url");
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<BackendConfig> load_backend_configs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_backend_configs(ss.str(), path.parent_path());
}

}  // namespace classbench
