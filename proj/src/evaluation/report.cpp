#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ntp/evaluation.hpp"

namespace ntp::eval {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    return out;
}

json command_rows(const std::vector<CommandResult>& rows) {
    json a = json::array();
    for (const auto& r : rows)
        a.push_back({{"vx", r.command.vx},
                     {"vy", r.command.vy},
                     {"omega", r.command.omega},
                     {"tracking_error", r.tracking_error},
                     {"fell", r.fell},
                     {"final_x", r.final_x},
                     {"final_y", r.final_y}});
    return a;
}

} // namespace

void write_report_json(const std::filesystem::path& path, const EvalReport& r) {
    json j;
    j["tracking_error"] = r.tracking_error;
    j["fall_count"] = r.fall_count;
    j["per_command"] = command_rows(r.per_command);
    if (r.prediction_error) j["prediction_error"] = *r.prediction_error;
    if (r.prediction_error_obs) j["prediction_error_obs"] = *r.prediction_error_obs;
    if (r.prediction_error_act) j["prediction_error_act"] = *r.prediction_error_act;
    if (!r.phase_series.empty()) j["phase_series"] = r.phase_series;
    open_out(path) << j.dump(2) << '\n';
}

void write_per_command_csv(const std::filesystem::path& path, const std::vector<CommandResult>& rows) {
    auto out = open_out(path);
    out << "vx,vy,omega,tracking_error,fell,final_x,final_y\n";
    for (const auto& r : rows)
        out << r.command.vx << ',' << r.command.vy << ',' << r.command.omega << ',' << r.tracking_error << ','
            << (r.fell ? 1 : 0) << ',' << r.final_x << ',' << r.final_y << '\n';
}

void write_series_csv(const std::filesystem::path& path, const std::string& header,
                      const std::vector<std::pair<double, double>>& series) {
    auto out = open_out(path);
    out << header << '\n';
    for (const auto& [a, b] : series) out << a << ',' << b << '\n';
}

void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<PlotSeries>& series) {
    constexpr double W = 640, H = 420, L = 70, R = 20, Tm = 40, B = 50;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - Tm - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    auto out = open_out(path);
    out.precision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    out << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2 << ")\" text-anchor=\"middle\">"
        << ylabel << "</text>\n";
    out << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" font-size=\"11\">" << x0 << "</text>\n";
    out << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" font-size=\"11\" text-anchor=\"end\">" << x1
        << "</text>\n";
    out << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" font-size=\"11\" text-anchor=\"end\">" << y0
        << "</text>\n";
    out << "<text x=\"" << L - 4 << "\" y=\"" << Tm + 10 << "\" font-size=\"11\" text-anchor=\"end\">" << y1
        << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* col = colors[k % 6];
        out << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : series[k].points) out << px(x) << ',' << py(y) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << W - R - 4 << "\" y=\"" << Tm + 14 * (k + 1) << "\" text-anchor=\"end\" fill=\"" << col
            << "\" font-size=\"12\">" << series[k].label << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace ntp::eval
