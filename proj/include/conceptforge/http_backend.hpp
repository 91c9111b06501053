#pragma once

// JSON-over-HTTP adapter family for real pretrained models.
//
// A model server (for example a small Python process hosting CLIP, the diffusion prior, the decoder and
// BLIP-2) answers POST requests under /v1. Every request names the model identifier it targets, so
// one server can host several checkpoints. Gradients for the learnable token come back from the
// *_vjp endpoints: the client sends the upstream cotangent and receives d loss / d input.
//
//   GET  /v1/info                  -> {embedding_dim, token_dim, name}
//   POST /v1/encode_text           {model, prompt}                          -> {embedding}
//   POST /v1/token_embedding       {model, word}                            -> {embedding}
//   POST /v1/encode_with_token     {model, template, token}                 -> {embedding}
//   POST /v1/encode_with_token_vjp {model, template, token, cotangent}      -> {gradient}
//   POST /v1/prior                 {model, embedding, seed[, steps, guidance_scale]}  -> {embedding}
//   POST /v1/prior_vjp             {model, embedding, seed, cotangent[, ...]}         -> {gradient}
//   POST /v1/decode                {model, embedding, seed, width, height}  -> {width, height, pixels}
//   POST /v1/encode_image          {model, width, height, pixels}           -> {embedding}
//   POST /v1/vqa                   {model, question, width, height, pixels} -> {answer}
//
// pixels is a flat array of 0..255 integers, row-major interleaved RGB. Errors are non-200 replies
// with {"error": "..."}.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "conceptforge/backend.hpp"
#include "conceptforge/error.hpp"
#include "conceptforge/real_config.hpp"

namespace conceptforge {

namespace http_detail {

using nlohmann::json;

inline json image_to_json(const GeneratedImage& img) {
    img.validate();
    return json{{"width", img.width}, {"height", img.height}, {"pixels", img.pixels}};
}

inline GeneratedImage image_from_json(const json& j) {
    GeneratedImage img;
    img.width = j.at("width").get<int>();
    img.height = j.at("height").get<int>();
    img.pixels = j.at("pixels").get<std::vector<std::uint8_t>>();
    img.validate();
    return img;
}

class Client {
public:
    explicit Client(const RealConfig& cfg) : endpoint_(cfg.endpoint), timeout_(cfg.timeout_seconds) {}

    json post(const std::string& path, const json& body) const {
        httplib::Client cli(endpoint_);
        cli.set_read_timeout(timeout_, 0);
        cli.set_write_timeout(timeout_, 0);
        auto res = cli.Post(path, body.dump(), "application/json");
        return unwrap(path, res);
    }

    json get(const std::string& path) const {
        httplib::Client cli(endpoint_);
        cli.set_read_timeout(timeout_, 0);
        return unwrap(path, cli.Get(path));
    }

private:
    json unwrap(const std::string& path, const httplib::Result& res) const {
        if (!res)
            throw BackendError("model server " + endpoint_ + path + " unreachable: " + httplib::to_string(res.error()));
        json j;
        try {
            j = json::parse(res->body);
        } catch (const json::exception& e) {
            throw BackendError("model server " + path + " returned invalid JSON (status " +
                               std::to_string(res->status) + ")");
        }
        if (res->status != 200) {
            const std::string msg = j.contains("error") ? j["error"].get<std::string>() : res->body;
            throw BackendError("model server " + path + " failed (" + std::to_string(res->status) + "): " + msg);
        }
        return j;
    }

    std::string endpoint_;
    int timeout_;
};

} // namespace http_detail

class HttpBackend final : public TextEncoder,
                          public DiffusionPrior,
                          public ImageDecoder,
                          public ImageEncoder,
                          public VqaModel {
public:
    explicit HttpBackend(RealConfig config) : config_(std::move(config)), client_(config_) {
        const auto info = client_.get("/v1/info");
        embedding_dim_ = info.at("embedding_dim").get<std::size_t>();
        token_dim_ = info.value("token_dim", embedding_dim_);
        name_ = info.value("name", std::string("real"));
        if (embedding_dim_ == 0) throw BackendError("model server reports zero embedding dimension");
    }

    BackendDescriptor descriptor() const {
        return BackendDescriptor{name_, BackendKind::real, embedding_dim_, token_dim_, std::nullopt};
    }

    std::size_t embedding_dim() const override { return embedding_dim_; }
    std::size_t token_dim() const override { return token_dim_; }

    TextEmbedding encode_text(const std::string& prompt) const override {
        auto j = client_.post("/v1/encode_text", {{"model", config_.text_encoder}, {"prompt", prompt}});
        return TextEmbedding(checked(j.at("embedding"), embedding_dim_), prompt);
    }

    Vec token_embedding(const std::string& word) const override {
        auto j = client_.post("/v1/token_embedding", {{"model", config_.text_encoder}, {"word", word}});
        return checked(j.at("embedding"), token_dim_);
    }

    TextEmbedding encode_with_token(const std::string& tmpl, std::span<const double> token) const override {
        auto j = client_.post("/v1/encode_with_token", {{"model", config_.text_encoder},
                                                        {"template", tmpl},
                                                        {"token", Vec(token.begin(), token.end())}});
        return TextEmbedding(checked(j.at("embedding"), embedding_dim_), render_prompt(tmpl, "S_*"));
    }

    Vec encode_with_token_vjp(const std::string& tmpl, std::span<const double> token,
                              std::span<const double> cotangent) const override {
        auto j = client_.post("/v1/encode_with_token_vjp", {{"model", config_.text_encoder},
                                                            {"template", tmpl},
                                                            {"token", Vec(token.begin(), token.end())},
                                                            {"cotangent", Vec(cotangent.begin(), cotangent.end())}});
        return checked(j.at("gradient"), token_dim_);
    }

    ImageEmbedding sample(const TextEmbedding& text, std::uint64_t seed) const override {
        auto j = client_.post("/v1/prior", prior_request(text, seed));
        return ImageEmbedding(checked(j.at("embedding"), embedding_dim_), Provenance::prior_sample);
    }

    Vec sample_vjp(const TextEmbedding& text, std::uint64_t seed, std::span<const double> cotangent) const override {
        auto req = prior_request(text, seed);
        req["cotangent"] = Vec(cotangent.begin(), cotangent.end());
        auto j = client_.post("/v1/prior_vjp", req);
        return checked(j.at("gradient"), embedding_dim_);
    }

    GeneratedImage decode(const ImageEmbedding& embedding, std::uint64_t seed) const override {
        auto j = client_.post("/v1/decode", {{"model", config_.decoder},
                                             {"embedding", embedding.values},
                                             {"seed", seed},
                                             {"width", config_.image_width},
                                             {"height", config_.image_height}});
        auto img = http_detail::image_from_json(j);
        img.seed = seed;
        return img;
    }

    ImageEmbedding encode(const GeneratedImage& image) const override {
        auto req = http_detail::image_to_json(image);
        req["model"] = config_.image_encoder;
        auto j = client_.post("/v1/encode_image", req);
        return ImageEmbedding(checked(j.at("embedding"), embedding_dim_), Provenance::encoded_image);
    }

    std::string answer(const GeneratedImage& image, const std::string& question) const override {
        auto req = http_detail::image_to_json(image);
        req["model"] = config_.vqa;
        req["question"] = question;
        auto j = client_.post("/v1/vqa", req);
        return j.at("answer").get<std::string>();
    }

private:
    nlohmann::json prior_request(const TextEmbedding& text, std::uint64_t seed) const {
        nlohmann::json req{{"model", config_.prior}, {"embedding", text.values}, {"seed", seed}};
        if (config_.prior_steps) req["steps"] = *config_.prior_steps;
        if (config_.prior_guidance_scale) req["guidance_scale"] = *config_.prior_guidance_scale;
        return req;
    }

    static Vec checked(const nlohmann::json& j, std::size_t dim) {
        auto v = j.get<Vec>();
        if (v.size() != dim)
            throw DimensionError("model server returned " + std::to_string(v.size()) + "-dim vector, expected " +
                                 std::to_string(dim));
        return v;
    }

    RealConfig config_;
    http_detail::Client client_;
    std::size_t embedding_dim_ = 0;
    std::size_t token_dim_ = 0;
    std::string name_;
};

inline Backends make_http_backends(RealConfig config) {
    auto http = std::make_shared<const HttpBackend>(std::move(config));
    Backends b;
    b.descriptor = http->descriptor();
    b.text = http;
    b.prior = http;
    b.decoder = http;
    b.image_encoder = http;
    b.vqa = http;
    return b;
}

/// Serves `backends` over the protocol above. Used to host the stub remotely and to test the adapter.
class BackendServer {
public:
    explicit BackendServer(Backends backends) : backends_(std::move(backends)) { install_routes(); }

    ~BackendServer() { stop(); }

    BackendServer(const BackendServer&) = delete;
    BackendServer& operator=(const BackendServer&) = delete;

    /// Binds to host:port (port 0 picks a free one) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (port_ < 0) throw BackendError("cannot bind model server to " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    /// Binds and serves on the calling thread until stop() is called from elsewhere.
    void run(const std::string& host, int port) {
        if (!server_.listen(host, port)) throw BackendError("cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const noexcept { return port_; }

private:
    using json = nlohmann::json;

    template <typename Fn>
    void route(const std::string& path, Fn fn) {
        server_.Post(path, [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                const json body = json::parse(req.body);
                res.set_content(fn(body).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            }
        });
    }

    void install_routes() {
        server_.Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
            const auto& d = backends_.descriptor;
            res.set_content(json{{"name", d.name}, {"embedding_dim", d.embedding_dim}, {"token_dim", d.token_dim}}.dump(),
                            "application/json");
        });
        route("/v1/encode_text", [this](const json& j) {
            return json{{"embedding", backends_.text->encode_text(j.at("prompt").get<std::string>()).values}};
        });
        route("/v1/token_embedding", [this](const json& j) {
            return json{{"embedding", backends_.text->token_embedding(j.at("word").get<std::string>())}};
        });
        route("/v1/encode_with_token", [this](const json& j) {
            const auto token = j.at("token").get<Vec>();
            return json{{"embedding", backends_.text->encode_with_token(j.at("template").get<std::string>(), token).values}};
        });
        route("/v1/encode_with_token_vjp", [this](const json& j) {
            const auto token = j.at("token").get<Vec>();
            const auto cot = j.at("cotangent").get<Vec>();
            return json{{"gradient", backends_.text->encode_with_token_vjp(j.at("template").get<std::string>(), token, cot)}};
        });
        route("/v1/prior", [this](const json& j) {
            TextEmbedding e(j.at("embedding").get<Vec>(), "");
            return json{{"embedding", backends_.prior->sample(e, j.at("seed").get<std::uint64_t>()).values}};
        });
        route("/v1/prior_vjp", [this](const json& j) {
            TextEmbedding e(j.at("embedding").get<Vec>(), "");
            const auto cot = j.at("cotangent").get<Vec>();
            return json{{"gradient", backends_.prior->sample_vjp(e, j.at("seed").get<std::uint64_t>(), cot)}};
        });
        route("/v1/decode", [this](const json& j) {
            ImageEmbedding e(j.at("embedding").get<Vec>(), Provenance::prior_sample);
            return http_detail::image_to_json(backends_.decoder->decode(e, j.at("seed").get<std::uint64_t>()));
        });
        route("/v1/encode_image", [this](const json& j) {
            return json{{"embedding", backends_.image_encoder->encode(http_detail::image_from_json(j)).values}};
        });
        route("/v1/vqa", [this](const json& j) {
            return json{{"answer", backends_.vqa->answer(http_detail::image_from_json(j), j.at("question").get<std::string>())}};
        });
    }

    Backends backends_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
};

} // namespace conceptforge
