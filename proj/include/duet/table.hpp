#pragma once

#include <optional>
#include <string>
#include <vector>

namespace duet {

/// Rectangular report table; renderers (markdown, CSV) live with the
/// reporting code.
struct ReportTable {
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::string> violation() const {
        for (const auto& row : rows)
            if (row.size() != headers.size())
                return std::string("row width does not match header count");
        return std::nullopt;
    }

    friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

} // namespace duet
