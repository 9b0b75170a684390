#include "classbench/annotator.hpp"
#include "classbench/digest.hpp"
#include "classbench/error.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace classbench {

using nlohmann::json;

namespace {

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownSession:
        case ErrorCode::UnknownImage: return 404;
        case ErrorCode::SessionComplete:
        case ErrorCode::OutOfOrderSubmission: return 409;
        case ErrorCode::UnknownLabel:
        case ErrorCode::EmptySelection: return 422;
        case ErrorCode::AuthError: return 401;
        case ErrorCode::IoError: return 500;
        default: return 400;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
    send_json(res, status_for(code), json{{"error", std::string(to_string(code))}, {"message", message}});
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string media_type(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "application/octet-stream";
}

}  // namespace

struct AnnotatorServer::Impl {
    AnnotationService& service;
    ServerOptions options;
    httplib::Server server;

    Impl(AnnotationService& s, ServerOptions o) : service(s), options(std::move(o)) { routes(); }

    bool authorized(const httplib::Request& req) const {
        if (options.token.empty()) return true;
        return req.get_header_value("Authorization") == "Bearer " + options.token;
    }

    // Wraps a handler with auth and error mapping.
    template <typename F>
    httplib::Server::Handler guarded(F f) {
        return [this, f](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req)) {
                send_error(res, ErrorCode::AuthError, "missing or wrong bearer token");
                return;
            }
            try {
                f(req, res);
            } catch (const Error& e) {
                send_error(res, e.code(), e.what());
            } catch (const json::exception& e) {
                send_error(res, ErrorCode::ParseError, e.what());
            }
        };
    }

    void routes() {
        server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = req.body.empty() ? json::object() : json::parse(req.body);
            SessionRequest r;
            for (const auto& c : body.value("categories", json::array())) {
                const auto cat = parse_category(c.get<std::string>());
                if (!cat) throw Error(ErrorCode::ParseError, "unknown category " + c.get<std::string>());
                r.categories.insert(*cat);
            }
            r.disagreement_only = body.value("disagreement", false);
            r.seed = body.value("seed", std::uint64_t{0});
            r.annotator_id = body.value("annotator_id", std::string());
            r.assist = body.value("assist", false);
            r.max_candidates = body.value("max_candidates", std::size_t{4});
            const auto id = service.create_session(r);
            const auto s = service.summary(id);
            send_json(res, 201, json{{"session_id", id}, {"queue_length", s.total}});
        }));

        server.Get("/sessions/:id/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto item = service.next_item(req.path_params.at("id"));
            std::optional<std::string> b64;
            std::string mt;
            if (req.get_param_value("embed") == "base64") {
                const auto path = service.image_path(item.image_id);
                if (!path) throw Error(ErrorCode::UnknownImage, item.image_id);
                b64 = base64_encode(read_file(*path));
                mt = media_type(*path);
            }
            send_json(res, 200, review_item_json(item, service.inputs().catalog, b64, mt));
        }));

        server.Post("/sessions/:id/decisions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            LabelSet chosen;
            for (const auto& v : body.at("chosen")) {
                const auto raw = v.get<std::int64_t>();
                if (raw < 0) throw Error(ErrorCode::UnknownLabel, std::to_string(raw));
                chosen.insert(ClassId(static_cast<std::uint32_t>(raw)));
            }
            const auto r = service.submit_decision(req.path_params.at("id"), body.at("image_id").get<std::string>(),
                                                   chosen, body.value("no_valid_label", false),
                                                   body.value("note", std::string()));
            send_json(res, 200, decision_json(r, service.inputs().catalog));
        }));

        server.Get("/sessions/:id/summary", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, summary_json(service.summary(req.path_params.at("id"))));
        }));

        server.Get("/images/:image_id", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto& id = req.path_params.at("image_id");
            const auto path = service.image_path(id);
            if (!path) throw Error(ErrorCode::UnknownImage, id);
            res.set_content(read_file(*path), media_type(*path));
        }));

        server.Get("/catalog", guarded([this](const httplib::Request&, httplib::Response& res) {
            json classes = json::array();
            for (const auto& e : service.inputs().catalog.entries()) {
                classes.push_back({{"id", e.id.value}, {"name", e.canonical_name}, {"alt_names", e.alt_names}});
            }
            send_json(res, 200, json{{"classes", classes}});
        }));

        if (options.static_dir) server.set_mount_point("/", options.static_dir->string());
    }
};

AnnotatorServer::AnnotatorServer(AnnotationService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

AnnotatorServer::~AnnotatorServer() { stop(); }

bool AnnotatorServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int AnnotatorServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool AnnotatorServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void AnnotatorServer::stop() {
    if (impl_) impl_->server.stop();
}

void AnnotatorServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace classbench
