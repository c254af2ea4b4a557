// Small shared wrapper around the vendored HTTP client: one JSON POST with
// timeouts, returning either the response body or an error description the
// caller turns into its own domain error.
#ifndef SCOREGEN_HTTP_IMPL_HPP
#define SCOREGEN_HTTP_IMPL_HPP

#include <string>
#include <utility>

#include <httplib.h>

// glibc's resolv.h (dragged in above) defines `_res` as a macro, which
// mangles Eigen headers included later in the same translation unit.
#ifdef _res
#undef _res
#endif

namespace scoregen::detail {

struct HttpResult {
    bool ok = false;
    std::string body;   // response body when ok
    std::string error;  // human-readable description when !ok
};

/// Splits "http://host:port/some/path" into the client base and the path.
/// Returns ok=false through the result when the url has no scheme.
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) return {"", ""};
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

inline HttpResult http_post_json(const std::string& url, const std::string& body,
                                 int timeout_seconds, const std::string& bearer_key = "") {
    const auto [base, path] = split_url(url);
    if (base.empty()) return {false, "", "service url must include a scheme: " + url};
    httplib::Client cli(base);
    cli.set_connection_timeout(timeout_seconds, 0);
    cli.set_read_timeout(timeout_seconds, 0);
    cli.set_write_timeout(timeout_seconds, 0);
    httplib::Headers headers;
    if (!bearer_key.empty()) headers.emplace("Authorization", "Bearer " + bearer_key);
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) return {false, "", "cannot reach " + url + ": " + httplib::to_string(res.error())};
    if (res->status != 200)
        return {false, "", url + " returned status " + std::to_string(res->status)};
    return {true, res->body, ""};
}

}  // namespace scoregen::detail

#endif  // SCOREGEN_HTTP_IMPL_HPP
