#include <httplib.h>

#include <fmt/format.h>

#include "trendproxy/trends.hpp"

namespace trendproxy::trends {

namespace {

class HttpTransport final : public TrendTransport {
public:
    explicit HttpTransport(std::string base_url) : client_(base_url), base_url_(std::move(base_url)) {
        client_.set_connection_timeout(10, 0);
        client_.set_read_timeout(30, 0);
    }

    std::string get(const std::string& topic_id, const std::string& geo, DateRange range) override {
        httplib::Params params{{"topic", topic_id},
                               {"geo", geo},
                               {"start", format_date(range.begin)},
                               {"end", format_date(range.end - std::chrono::days{1})}};
        auto res = client_.Get("/trends", params, httplib::Headers{});
        if (!res) {
            throw NetworkError(fmt::format("request to {} failed: {}", base_url_, httplib::to_string(res.error())));
        }
        if (res->status == 429) {
            throw ThrottledError(fmt::format("trends gateway {} throttled the request", base_url_));
        }
        if (res->status != 200) {
            throw NetworkError(fmt::format("trends gateway {} returned HTTP {}", base_url_, res->status));
        }
        return res->body;
    }

private:
    httplib::Client client_;
    std::string base_url_;
};

}  // namespace

std::unique_ptr<TrendTransport> make_http_transport(std::string base_url) {
    return std::make_unique<HttpTransport>(std::move(base_url));
}

}  // namespace trendproxy::trends
