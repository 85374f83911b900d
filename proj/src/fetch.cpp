#include <httplib.h>

#include "covidnet/error.hpp"
#include "covidnet/ingest.hpp"

#include <fstream>
#include <sstream>

namespace covidnet {

std::string fetch_payload(const std::string& endpoint, const std::filesystem::path& base_dir,
                          std::chrono::seconds timeout)
{
    const bool http = endpoint.rfind("http://", 0) == 0;
    const bool https = endpoint.rfind("https://", 0) == 0;
    if (http || https) {
        auto scheme_end = endpoint.find("://") + 3;
        auto path_start = endpoint.find('/', scheme_end);
        auto host = endpoint.substr(0, path_start);
        auto path = path_start == std::string::npos ? std::string("/") : endpoint.substr(path_start);
        httplib::Client client(host);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_follow_location(true);
        auto res = client.Get(path);
        if (!res) {
            throw Error(ErrorCode::FetchFailed, endpoint + ": " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw Error(ErrorCode::FetchFailed, endpoint + ": HTTP " + std::to_string(res->status));
        }
        return res->body;
    }
    std::filesystem::path path(endpoint);
    if (path.is_relative()) {
        path = base_dir / path;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::FetchFailed, "cannot read " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace covidnet
