#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace covidnet {

/// Append-only audit log, one JSON object per line. When backed by a file,
/// every append is written through immediately.
class Journal {
public:
    Journal() = default;
    explicit Journal(std::filesystem::path file);

    void append(std::string line);
    std::vector<std::string> lines() const;
    std::string text() const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::optional<std::filesystem::path> file_;
    std::vector<std::string> lines_;
};

} // namespace covidnet
