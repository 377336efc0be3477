#include "charts.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>

namespace dc::cli {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 150.0;
constexpr double kTop = 48.0;
constexpr double kBottom = 64.0;

struct Series {
    const char* label;
    const char* color;
    double GroupMeans::*field;
};

constexpr std::array<Series, 4> kSeries{{
    {"Value", "#1f77b4", &GroupMeans::value},
    {"Novelty", "#ff7f0e", &GroupMeans::novelty},
    {"Surprise", "#2ca02c", &GroupMeans::surprise},
    {"DeepCreativity", "#d62728", &GroupMeans::dc},
}};

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

// Upper end of the y-axis: 1, or the largest mean rounded up to a tenth.
double y_max(std::span<const GroupMeans> groups)
{
    double top = 1.0;
    for (const auto& g : groups) {
        for (const auto& s : kSeries) {
            if (std::isfinite(g.*s.field)) {
                top = std::max(top, g.*s.field);
            }
        }
    }
    return std::ceil(top * 10.0 - 1e-9) / 10.0;
}

class Frame {
public:
    Frame(std::span<const GroupMeans> groups, const std::string& title) : groups_(groups), top_(y_max(groups))
    {
        out_ += fmt::format(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" "
            "viewBox=\"0 0 {0:.0f} {1:.0f}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            kWidth, kHeight);
        out_ += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", kWidth, kHeight);
        out_ += fmt::format("<text x=\"{:.1f}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                            kLeft + plot_w() / 2.0, escape(title));
        for (int k = 0; k <= 5; ++k) {
            const double v = top_ * k / 5.0;
            const double y = y_of(v);
            out_ += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#dddddd\"/>\n",
                                kLeft, y, kLeft + plot_w(), y);
            out_ += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", kLeft - 6.0,
                                y + 4.0, v);
        }
        out_ += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n",
                            kLeft, kTop, kTop + plot_h());
        out_ += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"black\"/>\n",
                            kLeft, kTop + plot_h(), kLeft + plot_w());
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            out_ += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", x_of(i),
                                kTop + plot_h() + 20.0, escape(groups_[i].group));
            out_ += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" fill=\"#666666\">n={}</text>\n",
                                x_of(i), kTop + plot_h() + 36.0, groups_[i].count);
        }
        for (std::size_t s = 0; s < kSeries.size(); ++s) {
            const double y = kTop + 12.0 + 20.0 * static_cast<double>(s);
            const double x = kLeft + plot_w() + 16.0;
            out_ += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"14\" height=\"10\" fill=\"{}\"/>\n", x,
                                y - 9.0, kSeries[s].color);
            out_ += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", x + 20.0, y, kSeries[s].label);
        }
    }

    static double plot_w() { return kWidth - kLeft - kRight; }
    static double plot_h() { return kHeight - kTop - kBottom; }
    [[nodiscard]] double slot() const { return plot_w() / static_cast<double>(groups_.size()); }
    [[nodiscard]] double x_of(std::size_t i) const { return kLeft + slot() * (static_cast<double>(i) + 0.5); }
    [[nodiscard]] double y_of(double v) const { return kTop + plot_h() * (1.0 - std::clamp(v, 0.0, top_) / top_); }

    std::string& body() { return out_; }
    std::string finish() { return out_ + "</svg>\n"; }

private:
    std::span<const GroupMeans> groups_;
    double top_;
    std::string out_;
};

} // namespace

std::string trajectory_svg(std::span<const GroupMeans> groups, const std::string& title)
{
    Frame f(groups, title);
    for (const auto& s : kSeries) {
        std::string points;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            points += fmt::format("{}{:.2f},{:.2f}", i == 0 ? "" : " ", f.x_of(i), f.y_of(groups[i].*s.field));
        }
        f.body() += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", points,
                                s.color);
        for (std::size_t i = 0; i < groups.size(); ++i) {
            f.body() += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3.5\" fill=\"{}\"><title>{} {}: {:.6f}</title></circle>\n",
                                    f.x_of(i), f.y_of(groups[i].*s.field), s.color, escape(groups[i].group), s.label,
                                    groups[i].*s.field);
        }
    }
    return f.finish();
}

std::string group_means_svg(std::span<const GroupMeans> groups, const std::string& title)
{
    Frame f(groups, title);
    const double bar = f.slot() * 0.8 / static_cast<double>(kSeries.size());
    const double base = f.y_of(0.0);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const double left = f.x_of(i) - bar * static_cast<double>(kSeries.size()) / 2.0;
        for (std::size_t s = 0; s < kSeries.size(); ++s) {
            const double v = groups[i].*kSeries[s].field;
            const double y = f.y_of(v);
            f.body() += fmt::format(
                "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"><title>{} {}: {:.6f}</title></rect>\n",
                left + bar * static_cast<double>(s), y, bar, base - y, kSeries[s].color, escape(groups[i].group),
                kSeries[s].label, v);
        }
    }
    return f.finish();
}

} // namespace dc::cli
