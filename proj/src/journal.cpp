#include "covidnet/journal.hpp"

#include "covidnet/error.hpp"

#include <fstream>

namespace covidnet {

Journal::Journal(std::filesystem::path file) : file_(std::move(file))
{
    std::ifstream in(*file_);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) {
            lines_.push_back(line);
        }
    }
}

void Journal::append(std::string line)
{
    std::lock_guard lock(mu_);
    if (file_) {
        std::ofstream out(*file_, std::ios::app);
        if (!(out << line << '\n')) {
            throw Error(ErrorCode::Io, "cannot append to journal " + file_->string());
        }
    }
    lines_.push_back(std::move(line));
}

std::vector<std::string> Journal::lines() const
{
    std::lock_guard lock(mu_);
    return lines_;
}

std::string Journal::text() const
{
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& l : lines_) {
        out += l;
        out += '\n';
    }
    return out;
}

std::size_t Journal::size() const
{
    std::lock_guard lock(mu_);
    return lines_.size();
}

} // namespace covidnet
