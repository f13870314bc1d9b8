#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "duet/backend.hpp"
#include "duet/chat.hpp"

namespace duet {

struct HttpError : BackendError {
    HttpError(int status_code, const std::string& body_excerpt)
        : BackendError("http error " + std::to_string(status_code) +
                       (body_excerpt.empty() ? "" : ": " + body_excerpt)),
          status(status_code),
          excerpt(body_excerpt) {}
    int status;
    std::string excerpt;
};

struct Timeout : BackendError {
    explicit Timeout(const std::string& detail) : BackendError("request timed out: " + detail) {}
};

struct MissingApiKey : BackendError {
    explicit MissingApiKey(std::string env_var)
        : BackendError("environment variable '" + env_var + "' is not set"),
          env_var_name(std::move(env_var)) {}
    std::string env_var_name;
};

/// Connection parameters for a chat-completion endpoint. `extract_path` is
/// a dot/index path into the response JSON (e.g. "choices.0.message.content"
/// or "candidates.0.content.parts.0.text"), so one client serves both
/// vendor wire shapes. An empty `api_key_env` means no auth header is sent.
struct HttpChatSpec {
    std::string endpoint;
    std::string model;
    std::string extract_path = "choices.0.message.content";
    std::string api_key_env;
    std::string auth_header = "Authorization"; // value "Bearer <key>" unless overridden
    RetryPolicy retry;

    std::optional<std::string> violation() const {
        if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0)
            return std::string("endpoint must be an absolute http(s) URL: " + endpoint);
        if (model.empty()) return std::string("model name is empty");
        if (extract_path.empty()) return std::string("extract_path is empty");
        return retry.violation();
    }
};

namespace detail {

struct SplitUrl {
    std::string base; // scheme://host[:port]
    std::string path; // leading '/'
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw BackendError("endpoint is not an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Walks a dot-separated path through a JSON document; numeric segments
/// index arrays.
inline const nlohmann::json* walk_json_path(const nlohmann::json& root, const std::string& path) {
    const nlohmann::json* node = &root;
    std::size_t start = 0;
    while (start <= path.size()) {
        const auto dot = path.find('.', start);
        const std::string segment =
            path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (segment.empty()) return nullptr;
        const bool numeric = segment.find_first_not_of("0123456789") == std::string::npos;
        if (numeric && node->is_array()) {
            const auto idx = static_cast<std::size_t>(std::stoull(segment));
            if (idx >= node->size()) return nullptr;
            node = &(*node)[idx];
        } else if (node->is_object() && node->contains(segment)) {
            node = &(*node)[segment];
        } else {
            return nullptr;
        }
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return node;
}

inline std::string body_excerpt(const std::string& body, std::size_t limit = 200) {
    return body.size() <= limit ? body : body.substr(0, limit) + "...";
}

} // namespace detail

/// Chat completion over a real HTTP endpoint. One instance per logical
/// caller; retries transport failures and HTTP 5xx/429 with doubling
/// backoff, and never retries configuration errors.
class HttpChatBackend : public Backend {
public:
    explicit HttpChatBackend(HttpChatSpec spec) : spec_(std::move(spec)) {
        if (auto why = spec_.violation()) throw BackendError("invalid http backend spec: " + *why);
    }

    Message complete(const std::vector<Message>& messages) override {
        if (messages.empty()) throw BackendError("complete() requires at least one message");
        ++calls_;

        std::string api_key;
        if (!spec_.api_key_env.empty()) {
            const char* value = std::getenv(spec_.api_key_env.c_str());
            if (!value || !*value) throw MissingApiKey(spec_.api_key_env);
            api_key = value;
        }

        nlohmann::json body;
        body["model"] = spec_.model;
        auto& list = body["messages"] = nlohmann::json::array();
        for (const auto& m : messages) {
            // Tool payloads ride as user-role content on the wire; the
            // request schema knows only system/user/assistant.
            const char* role = m.role == Role::Tool ? "user" : to_string(m.role);
            list.push_back({{"role", role}, {"content", m.content}});
        }
        const std::string payload = body.dump();

        const auto url = detail::split_url(spec_.endpoint);
        httplib::Client client(url.base);
        client.set_connection_timeout(spec_.retry.timeout);
        client.set_read_timeout(spec_.retry.timeout);
        client.set_write_timeout(spec_.retry.timeout);

        httplib::Headers headers;
        if (!api_key.empty()) {
            const std::string value =
                spec_.auth_header == "Authorization" ? "Bearer " + api_key : api_key;
            headers.emplace(spec_.auth_header, value);
        }

        auto backoff = spec_.retry.base_backoff;
        for (std::size_t attempt = 1;; ++attempt) {
            auto result = client.Post(url.path, headers, payload, "application/json");
            if (result) {
                if (result->status >= 200 && result->status < 300)
                    return extract_message(result->body);
                const bool retryable = result->status >= 500 || result->status == 429;
                if (!retryable || attempt >= spec_.retry.max_attempts)
                    throw HttpError(result->status, detail::body_excerpt(result->body));
            } else {
                if (attempt >= spec_.retry.max_attempts) {
                    const auto err = result.error();
                    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                        err == httplib::Error::Write)
                        throw Timeout(httplib::to_string(err));
                    throw HttpError(0, "transport failure: " + httplib::to_string(err));
                }
            }
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }

    std::size_t call_count() const override { return calls_; }
    const HttpChatSpec& spec() const { return spec_; }

private:
    Message extract_message(const std::string& body) const {
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw HttpError(200, std::string("response is not JSON: ") + e.what());
        }
        const nlohmann::json* node = detail::walk_json_path(parsed, spec_.extract_path);
        if (!node || !node->is_string())
            throw HttpError(200, "no string at response path '" + spec_.extract_path +
                                     "': " + detail::body_excerpt(body));
        const std::string text = node->get<std::string>();
        if (text.empty())
            throw HttpError(200, "response path '" + spec_.extract_path + "' is empty");
        return assistant_message(text);
    }

    HttpChatSpec spec_;
    std::size_t calls_ = 0;
};

} // namespace duet
