#include "csv.hpp"

#include "covidnet/error.hpp"

namespace covidnet::csv {

std::vector<std::vector<std::string>> parse(std::string_view text)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;

    auto end_row = [&] {
        if (field_started || !row.empty()) {
            row.push_back(std::move(field));
            rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        field_started = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                }
                else {
                    quoted = false;
                }
            }
            else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            quoted = true;
            field_started = true;
            break;
        case ',':
            row.push_back(std::move(field));
            field.clear();
            field_started = true;
            break;
        case '\r':
            break;
        case '\n':
            end_row();
            break;
        default:
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) {
        throw Error(ErrorCode::MalformedPayload, "unterminated quoted CSV field");
    }
    end_row();
    return rows;
}

std::string escape(std::string_view field)
{
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace covidnet::csv
