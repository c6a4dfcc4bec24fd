#include "gridpulse/report.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gridpulse/sensitivity.hpp"
#include "text_util.hpp"

namespace gridpulse {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kBusBf = "fig02_bus_bf.geojson";
constexpr const char* kLfHistCsv = "fig03_lf_hist.csv";
constexpr const char* kLfHistSvg = "fig03_lf_hist.svg";
constexpr const char* kBfByScenario = "fig04_bf_by_scenario.csv";
constexpr const char* kLfByCounty = "fig05_lf_by_county.geojson";
constexpr const char* kPopDensity = "fig06_popdensity.geojson";
constexpr const char* kCorr = "fig07_corr.csv";
constexpr const char* kSiTotal = "fig08_si_total.geojson";
constexpr const char* kSiNorm = "fig09_si_norm.geojson";
constexpr const char* kGsVsSi = "fig10_gs_vs_si.csv";
constexpr const char* kGsVsBf = "fig11_gs_vs_bf.csv";
constexpr const char* kSlackHistCsv = "fig12_slack_dp_hist.csv";
constexpr const char* kSlackHistSvg = "fig12_slack_dp_hist.svg";
constexpr const char* kLoadingHistCsv = "fig13_genloading_hist.csv";
constexpr const char* kLoadingHistSvg = "fig13_genloading_hist.svg";
constexpr const char* kCorrelations = "correlations.json";

const std::vector<std::string> kRequiredFields = {
    "scenario_id", "county_id",   "k",           "replicate",    "seed",
    "lf_total",    "bf_total",    "failed_buses", "gs_total_mw", "si_totals",
    "slack_dp_mw", "mean_gen_loading_pct",
};

std::string num(double v) { return detail::format_double(v); }

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string label(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

json point(const GeoPoint& p) {
    return json{{"type", "Point"}, {"coordinates", json::array({p.lon_deg, p.lat_deg})}};
}

json feature(json geometry, json properties) {
    return json{{"type", "Feature"}, {"geometry", std::move(geometry)}, {"properties", std::move(properties)}};
}

json collection(json features) { return json{{"type", "FeatureCollection"}, {"features", std::move(features)}}; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

std::string county_si_key(const SeverityRecord& r, double threshold) {
    const auto key = threshold_key(threshold);
    if (r.si_totals.contains(key)) return key;
    return r.si_totals.empty() ? key : r.si_totals.begin()->first;
}

CorrelationEntry correlate(std::string x, std::string y, const std::vector<double>& xs, const std::vector<double>& ys,
                           std::string scatter) {
    CorrelationEntry e{std::move(x), std::move(y), std::nullopt, xs.size(), std::move(scatter), {}};
    try {
        e.r = pearson(xs, ys);
    } catch (const DegenerateInput& ex) {
        e.note = ex.what();
    }
    return e;
}

}  // namespace

long Histogram::total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
}

std::size_t Histogram::occupied_bins() const {
    return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; }));
}

Histogram histogram(std::span<const double> values, int bins) {
    if (values.empty()) throw EmptyInput("histogram of no values");
    if (bins < 1) throw ValidationError("histogram needs at least one bin");
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    double lo = *mn, hi = *mx;
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw ValidationError("histogram values must be finite");
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
    h.edges.back() = hi;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : values) {
        auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
        b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

std::string histogram_csv(const Histogram& h) {
    std::string out = "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        out += num(h.edges[i]) + "," + num(h.edges[i + 1]) + "," + std::to_string(h.counts[i]) + "\n";
    }
    return out;
}

std::string histogram_svg(const Histogram& h, std::string_view title, std::string_view x_label) {
    constexpr double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 60;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    const long peak = std::max(1L, h.counts.empty() ? 1L : *std::max_element(h.counts.begin(), h.counts.end()));
    const double bar_w = plot_w / static_cast<double>(std::max<std::size_t>(1, h.counts.size()));

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
      << "</text>\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        const double bh = plot_h * static_cast<double>(h.counts[i]) / static_cast<double>(peak);
        s << "<rect x=\"" << fixed(left + bar_w * static_cast<double>(i), 2) << "\" y=\""
          << fixed(top + plot_h - bh, 2) << "\" width=\"" << fixed(bar_w, 2) << "\" height=\"" << fixed(bh, 2)
          << "\" fill=\"steelblue\" stroke=\"white\"><title>" << label(h.edges[i]) << " to "
          << label(h.edges[i + 1]) << ": " << h.counts[i] << "</title></rect>\n";
    }
    s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
    if (!h.edges.empty()) {
        s << "<text x=\"" << left << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"start\" font-size=\"11\">"
          << label(h.edges.front()) << "</text>\n";
        s << "<text x=\"" << left + plot_w << "\" y=\"" << top + plot_h + 16
          << "\" text-anchor=\"end\" font-size=\"11\">" << label(h.edges.back()) << "</text>\n";
    }
    s << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << peak
      << "</text>\n";
    s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 16 << "\" text-anchor=\"middle\" font-size=\"13\">"
      << xml_escape(x_label) << "</text>\n";
    s << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
      << top + plot_h / 2 << ")\">scenarios</text>\n";
    s << "</svg>\n";
    return s.str();
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    using Vec = Eigen::Map<const Eigen::VectorXd>;
    return pearson(Vec(xs.data(), static_cast<Eigen::Index>(xs.size())),
                   Vec(ys.data(), static_cast<Eigen::Index>(ys.size())));
}

std::vector<CountyAggregate> county_aggregates(std::span<const SeverityRecord> records, const GridCase& grid,
                                               double si_threshold) {
    std::vector<CountyAggregate> out;
    std::map<int, std::size_t> index;
    for (const auto& c : grid.counties()) {
        index[c.id] = out.size();
        CountyAggregate a;
        a.county_id = c.id;
        a.name = c.name;
        a.centroid = c.centroid;
        a.pop_density = c.pop_density;
        out.push_back(std::move(a));
    }
    for (const auto& r : records) {
        if (!r.complete()) continue;
        const auto it = index.find(r.county_id);
        if (it == index.end()) throw ValidationError("record " + r.scenario_id + " names unknown county " + std::to_string(r.county_id));
        auto& a = out[it->second];
        ++a.scenarios;
        a.lf_sum += static_cast<long>(r.lf_total);
        a.bf_sum += static_cast<long>(r.bf_total);
    }
    if (!out.empty()) {
        const auto table = si_count(lodf(grid), si_threshold, grid);
        for (const auto& cs : table.counties) {
            const auto it = index.find(cs.county_id);
            if (it == index.end()) continue;
            auto& a = out[it->second];
            a.si_total = cs.total;
            a.branch_count = cs.branch_count;
            a.si_normalized = cs.normalized;
            a.no_branches = cs.no_branches;
        }
    }
    for (auto& a : out) a.lf_mean = a.scenarios > 0 ? static_cast<double>(a.lf_sum) / static_cast<double>(a.scenarios) : 0.0;
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.county_id < b.county_id; });
    return out;
}

std::vector<std::string> figure_file_names() {
    return {kBusBf,      kLfHistCsv, kLfHistSvg, kBfByScenario, kLfByCounty,     kPopDensity,     kCorr,        kSiTotal,
            kSiNorm,     kGsVsSi,    kGsVsBf,    kSlackHistCsv, kSlackHistSvg,   kLoadingHistCsv, kLoadingHistSvg,
            kCorrelations};
}

FigureSet emit_figures(std::span<const SeverityRecord> records_in, const GridCase& grid, const fs::path& out_dir,
                       const ReportOptions& options) {
    std::vector<SeverityRecord> records;
    for (const auto& r : records_in) {
        if (r.complete()) records.push_back(r);
    }
    if (records.empty()) throw EmptyInput("no complete scenario records to report");
    std::sort(records.begin(), records.end(), [](const SeverityRecord& a, const SeverityRecord& b) {
        if (a.county_id != b.county_id) return a.county_id < b.county_id;
        if (a.k_index != b.k_index) return a.k_index < b.k_index;
        return a.replicate < b.replicate;
    });

    FigureSet fs_out;
    fs_out.scenario_count = records.size();
    std::map<fs::path, std::string> files;

    // Per-bus cumulative bus failures.
    {
        const auto counts = per_bus_failures(grid, records);
        json features = json::array();
        for (const auto& b : grid.buses()) {
            json props{{"bus_id", b.id}, {"bf_count", counts.contains(b.id) ? counts.at(b.id) : 0L}};
            props["county_id"] = b.county_id ? json(*b.county_id) : json(nullptr);
            features.push_back(feature(b.coordinates ? point(*b.coordinates) : json(nullptr), std::move(props)));
        }
        files[kBusBf] = collection(std::move(features)).dump(1) + "\n";
    }

    std::vector<double> lf, slack_dp, loading;
    for (const auto& r : records) {
        lf.push_back(static_cast<double>(r.lf_total));
        slack_dp.push_back(r.slack_dp_mw);
        loading.push_back(r.mean_gen_loading_pct);
    }
    fs_out.lf_histogram = histogram(lf, options.bins);
    fs_out.slack_dp_histogram = histogram(slack_dp, options.bins);
    fs_out.gen_loading_histogram = histogram(loading, options.bins);
    files[kLfHistCsv] = histogram_csv(fs_out.lf_histogram);
    files[kLfHistSvg] = histogram_svg(fs_out.lf_histogram, "Line failures until non-convergence", "lines opened");
    files[kSlackHistCsv] = histogram_csv(fs_out.slack_dp_histogram);
    files[kSlackHistSvg] = histogram_svg(fs_out.slack_dp_histogram, "Change in slack active power", "slack dP (MW)");
    files[kLoadingHistCsv] = histogram_csv(fs_out.gen_loading_histogram);
    files[kLoadingHistSvg] =
        histogram_svg(fs_out.gen_loading_histogram, "Mean generator loading before non-convergence", "loading (%)");

    {
        std::string csv = "scenario_id,county_id,k,replicate,bf_total\n";
        for (const auto& r : records) {
            csv += detail::csv_quote(r.scenario_id) + "," + std::to_string(r.county_id) + "," + num(r.k) + "," +
                   std::to_string(r.replicate) + "," + std::to_string(r.bf_total) + "\n";
        }
        files[kBfByScenario] = csv;
    }

    fs_out.counties = county_aggregates(records, grid, options.si_threshold);
    {
        json lf_f = json::array(), pop_f = json::array(), si_f = json::array(), norm_f = json::array();
        std::string csv = "county_id,lf_mean,pop_density,scenarios\n";
        std::vector<double> xs, ys;
        for (const auto& a : fs_out.counties) {
            const json base{{"county_id", a.county_id}, {"name", a.name}};
            json p = base;
            p["lf_sum"] = a.lf_sum;
            p["bf_sum"] = a.bf_sum;
            p["scenarios"] = a.scenarios;
            p["lf_mean"] = a.lf_mean;
            lf_f.push_back(feature(point(a.centroid), std::move(p)));
            p = base;
            p["pop_density"] = a.pop_density;
            pop_f.push_back(feature(point(a.centroid), std::move(p)));
            p = base;
            p["si_total"] = a.si_total;
            p["branch_count"] = a.branch_count;
            si_f.push_back(feature(point(a.centroid), std::move(p)));
            p = base;
            p["si_normalized"] = a.si_normalized;
            p["branch_count"] = a.branch_count;
            p["no_branches"] = a.no_branches;
            norm_f.push_back(feature(point(a.centroid), std::move(p)));
            if (a.scenarios > 0) {
                csv += std::to_string(a.county_id) + "," + num(a.lf_mean) + "," + num(a.pop_density) + "," +
                       std::to_string(a.scenarios) + "\n";
                xs.push_back(a.lf_mean);
                ys.push_back(a.pop_density);
            }
        }
        files[kLfByCounty] = collection(std::move(lf_f)).dump(1) + "\n";
        files[kPopDensity] = collection(std::move(pop_f)).dump(1) + "\n";
        files[kSiTotal] = collection(std::move(si_f)).dump(1) + "\n";
        files[kSiNorm] = collection(std::move(norm_f)).dump(1) + "\n";
        files[kCorr] = csv;
        fs_out.correlations.push_back(correlate("lf_mean", "pop_density", xs, ys, kCorr));
    }

    {
        std::string si_csv = "scenario_id,county_id,gs_total_mw,si_total\n";
        std::string bf_csv = "scenario_id,county_id,gs_total_mw,bf_total\n";
        std::vector<double> gs, si, bf;
        for (const auto& r : records) {
            const auto key = county_si_key(r, options.si_threshold);
            const long s = r.si_totals.contains(key) ? r.si_totals.at(key) : 0L;
            si_csv += detail::csv_quote(r.scenario_id) + "," + std::to_string(r.county_id) + "," + num(r.gs_total_mw) +
                      "," + std::to_string(s) + "\n";
            bf_csv += detail::csv_quote(r.scenario_id) + "," + std::to_string(r.county_id) + "," + num(r.gs_total_mw) +
                      "," + std::to_string(r.bf_total) + "\n";
            gs.push_back(r.gs_total_mw);
            si.push_back(static_cast<double>(s));
            bf.push_back(static_cast<double>(r.bf_total));
        }
        files[kGsVsSi] = si_csv;
        files[kGsVsBf] = bf_csv;
        fs_out.correlations.push_back(correlate("gs_total_mw", "si_total", gs, si, kGsVsSi));
        fs_out.correlations.push_back(correlate("gs_total_mw", "bf_total", gs, bf, kGsVsBf));
    }

    {
        json arr = json::array();
        for (const auto& c : fs_out.correlations) {
            json e{{"x", c.x}, {"y", c.y}, {"n", c.n}, {"scatter", c.scatter}};
            e["r"] = c.r ? json(*c.r) : json(nullptr);
            if (!c.note.empty()) e["note"] = c.note;
            arr.push_back(std::move(e));
        }
        json doc{{"scenarios", records.size()}, {"si_threshold", options.si_threshold}, {"correlations", std::move(arr)}};
        files[kCorrelations] = doc.dump(1) + "\n";
    }

    fs::create_directories(out_dir);
    for (const auto& name : figure_file_names()) {
        write_text(out_dir / name, files.at(name));
        fs_out.files.push_back(out_dir / name);
    }
    return fs_out;
}

std::vector<SeverityRecord> read_report_records(const fs::path& results_dir) {
    const fs::path path = results_dir / kRecordsFile;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::vector<json> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const json::parse_error&) {
            if (in.peek() == std::char_traits<char>::eof()) break;  // torn final line
            throw SyntaxError(static_cast<int>(rows.size() + 1), "malformed record in " + path.string());
        }
    }
    if (rows.empty()) throw EmptyInput("no records in " + path.string());
    for (const auto& field : kRequiredFields) {
        std::vector<std::string> missing;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& row = rows[i];
            if (row.contains("error") && field != "scenario_id" && field != "county_id") continue;
            if (!row.contains(field)) missing.push_back(row.value("scenario_id", "#" + std::to_string(i + 1)));
        }
        if (!missing.empty()) throw MissingField(field, std::move(missing));
    }
    std::vector<SeverityRecord> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(record_from_json(row));
    return out;
}

}  // namespace gridpulse
