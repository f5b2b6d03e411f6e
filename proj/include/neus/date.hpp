#pragma once

#include <charconv>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace neus {

/// Calendar date parsed from and printed as ISO `YYYY-MM-DD`.
class Date {
public:
    Date() = default;
    explicit Date(std::chrono::year_month_day ymd) : ymd_(ymd) {}

    static std::optional<Date> parse(std::string_view s) {
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
        int y = 0;
        unsigned m = 0;
        unsigned d = 0;
        auto digits = [](std::string_view part, auto& out) {
            const auto* end = part.data() + part.size();
            auto [ptr, ec] = std::from_chars(part.data(), end, out);
            return ec == std::errc{} && ptr == end;
        };
        if (!digits(s.substr(0, 4), y) || !digits(s.substr(5, 2), m) ||
            !digits(s.substr(8, 2), d))
            return std::nullopt;
        const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                              std::chrono::day{d}};
        if (!ymd.ok()) return std::nullopt;
        return Date(ymd);
    }

    std::string str() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd_.year()),
                      static_cast<unsigned>(ymd_.month()), static_cast<unsigned>(ymd_.day()));
        return buf;
    }

    std::chrono::year_month_day ymd() const { return ymd_; }

    Date plus_days(int days) const {
        return Date(std::chrono::year_month_day{std::chrono::sys_days{ymd_} +
                                                std::chrono::days{days}});
    }

    friend auto operator<=>(const Date&, const Date&) = default;

private:
    std::chrono::year_month_day ymd_{std::chrono::year{1970}, std::chrono::month{1},
                                     std::chrono::day{1}};
};

} // namespace neus
