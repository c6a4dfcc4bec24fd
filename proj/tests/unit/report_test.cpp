#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "gridpulse/campaign.hpp"
#include "gridpulse/errors.hpp"
#include "gridpulse/report.hpp"
#include "gridpulse/sensitivity.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gridpulse;
using nlohmann::json;
namespace fs = std::filesystem;
using oracle::direct_pearson;

namespace {

const std::vector<SeverityRecord>& campaign_records() {
    static const std::vector<SeverityRecord> records = [] {
        CampaignSpec s;
        s.case_path = testutil::data("texas150.m");
        s.geo_path = testutil::data("texas150_geo.csv");
        s.county_path = testutil::data("texas150_counties.csv");
        s.centers = std::vector<int>{};
        for (int id = 1; id <= 100; id += 4) s.centers->push_back(id);
        s.master_seed = 77;
        const auto dir = testutil::scratch("report_campaign");
        return run_campaign(s, dir).records;
    }();
    return records;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST(Histogram, AllEqualValues) {
    const std::vector<double> v(7, 3.0);
    const auto h = histogram(v, 5);
    EXPECT_DOUBLE_EQ(h.edges.front(), 2.5);
    EXPECT_DOUBLE_EQ(h.edges.back(), 3.5);
    EXPECT_EQ(h.total(), 7);
    EXPECT_EQ(h.counts[2], 7);
    EXPECT_EQ(h.occupied_bins(), 1u);
}

TEST(Histogram, OneValuePerBin) {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) v.push_back(i);
    const auto h = histogram(v, 10);
    ASSERT_EQ(h.counts.size(), 10u);
    for (long c : h.counts) EXPECT_EQ(c, 1);
    EXPECT_DOUBLE_EQ(h.edges[0], 0.0);
    EXPECT_DOUBLE_EQ(h.edges[10], 9.0);
}

TEST(Histogram, CsvHeaderAndRows) {
    const std::vector<double> v{1, 2, 2, 4};
    const auto csv = histogram_csv(histogram(v, 3));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "bin_lo,bin_hi,count");
    const auto rows = csv_rows(csv);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0][2], "1");
    EXPECT_EQ(rows[1][2], "2");
    EXPECT_EQ(rows[2][2], "1");
}

TEST(Histogram, EmptyAndBadInput) {
    EXPECT_THROW(histogram(std::vector<double>{}, 4), EmptyInput);
    EXPECT_THROW(histogram(std::vector<double>{1.0}, 0), ValidationError);
    EXPECT_THROW(histogram(std::vector<double>{1.0, NAN}, 3), ValidationError);
}

TEST(Histogram, SvgIsWellFormed) {
    const auto svg = histogram_svg(histogram(std::vector<double>{1, 2, 3}, 3), "a <b> & c", "x");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("a &lt;b&gt; &amp; c"), std::string::npos);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Pearson, PerfectCorrelation) {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> up{2, 4, 6, 8, 10};
    const std::vector<double> down{5, 4, 3, 2, 1};
    EXPECT_DOUBLE_EQ(pearson(x, up), 1.0);
    EXPECT_DOUBLE_EQ(pearson(x, down), -1.0);
}

TEST(Pearson, AffineInvariance) {
    const std::vector<double> x{0.3, 1.7, 2.2, 5.1, 3.3, 0.9};
    const std::vector<double> y{1.0, 0.4, 2.8, 3.1, 2.0, 1.2};
    std::vector<double> xt, yt;
    for (double v : x) xt.push_back(3.5 * v - 40.0);
    for (double v : y) yt.push_back(0.01 * v + 1e3);
    EXPECT_NEAR(pearson(x, y), pearson(xt, yt), 1e-12);
    std::vector<double> neg;
    for (double v : y) neg.push_back(-v);
    EXPECT_NEAR(pearson(x, neg), -pearson(x, y), 1e-12);
}

TEST(Pearson, MatchesDirectFormulaOnFixtureVectors) {
    const auto ref = testutil::read_json(testutil::data("texas150_ref.json"))["solutions"][1];
    const auto vm = ref["vm"].get<std::vector<double>>();
    const auto va = ref["va_rad"].get<std::vector<double>>();
    const auto pf = ref["branch_p_from_mw"].get<std::vector<double>>();
    const auto qf = ref["branch_q_from_mvar"].get<std::vector<double>>();
    const auto g = testutil::texas150();
    std::vector<double> dens, lat;
    for (const auto& c : g.counties()) {
        dens.push_back(c.pop_density);
        lat.push_back(c.centroid.lat_deg);
    }
    EXPECT_NEAR(pearson(vm, va), direct_pearson(vm, va), 1e-12);
    EXPECT_NEAR(pearson(pf, qf), direct_pearson(pf, qf), 1e-12);
    EXPECT_NEAR(pearson(dens, lat), direct_pearson(dens, lat), 1e-12);
    const std::vector<double> x{1, 2, 3, 4, 5}, y{7, 9, 11, 13, 15};
    EXPECT_NEAR(pearson(x, y), direct_pearson(x, y), 1e-12);
    std::vector<double> ny;
    for (double v : y) ny.push_back(-v);
    EXPECT_NEAR(pearson(x, ny), direct_pearson(x, ny), 1e-12);
}

TEST(Pearson, EigenExpressions) {
    Eigen::VectorXd a(4), b(4);
    a << 1, 2, 3, 5;
    b << 2, 1, 4, 3;
    EXPECT_NEAR(pearson(a, b), direct_pearson({1, 2, 3, 5}, {2, 1, 4, 3}), 1e-12);
    EXPECT_NEAR(pearson(a * 2.0, b.array() + 1.0), pearson(a, b), 1e-12);
}

TEST(Pearson, DegenerateInputs) {
    EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{3, 4}), DegenerateInput);
    EXPECT_THROW(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 4}), DegenerateInput);
    EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{3, 4, 5}), DegenerateInput);
}

TEST(Report, EmptyRecordsWriteNothing) {
    const auto dir = testutil::scratch("report_empty") / "out";
    EXPECT_THROW(emit_figures({}, testutil::texas150(), dir), EmptyInput);
    EXPECT_FALSE(fs::exists(dir));
    SeverityRecord failed;
    failed.scenario_id = "c1-k0-r0";
    failed.error = "base case does not converge";
    EXPECT_THROW(emit_figures(std::vector{failed}, testutil::texas150(), dir), EmptyInput);
    EXPECT_FALSE(fs::exists(dir));
}

TEST(Report, EmptyRecordFileRejected) {
    const auto dir = testutil::scratch("report_empty_file");
    testutil::spit(dir / kRecordsFile, "");
    EXPECT_THROW(read_report_records(dir), EmptyInput);
}

TEST(Report, MissingFieldNamesScenarios) {
    const auto dir = testutil::scratch("report_missing");
    std::string text;
    for (std::size_t i = 0; i < 4; ++i) {
        auto j = to_json(campaign_records()[i]);
        if (i % 2 == 1) j.erase("slack_dp_mw");
        text += j.dump() + "\n";
    }
    testutil::spit(dir / kRecordsFile, text);
    try {
        read_report_records(dir);
        FAIL() << "expected MissingField";
    } catch (const MissingField& e) {
        EXPECT_EQ(e.field(), "slack_dp_mw");
        EXPECT_EQ(e.scenarios(), (std::vector<std::string>{campaign_records()[1].scenario_id,
                                                           campaign_records()[3].scenario_id}));
    }
}

TEST(Report, TornFinalLineIgnored) {
    const auto dir = testutil::scratch("report_torn");
    const auto text = to_json(campaign_records()[0]).dump() + "\n" + R"({"scenario_id":"x","cou)";
    testutil::spit(dir / kRecordsFile, text);
    EXPECT_EQ(read_report_records(dir).size(), 1u);
}

TEST(Report, SingleScenarioLeavesCorrelationsUndefined) {
    const auto dir = testutil::scratch("report_single");
    const auto set = emit_figures(std::span(campaign_records()).first(1), testutil::texas150(), dir);
    EXPECT_EQ(set.files.size(), figure_file_names().size());
    const auto j = testutil::read_json(dir / "correlations.json");
    for (const auto& c : j["correlations"]) {
        EXPECT_TRUE(c["r"].is_null());
        EXPECT_FALSE(c["note"].get<std::string>().empty());
    }
}

TEST(Report, AggregatesAreConsistent) {
    const auto dir = testutil::scratch("report_full");
    const auto& records = campaign_records();
    const auto g = testutil::texas150();
    const auto set = emit_figures(records, g, dir);
    EXPECT_EQ(set.scenario_count, records.size());
    EXPECT_EQ(set.lf_histogram.total(), static_cast<long>(records.size()));
    EXPECT_EQ(set.slack_dp_histogram.total(), static_cast<long>(records.size()));
    EXPECT_EQ(set.gen_loading_histogram.total(), static_cast<long>(records.size()));

    long lf = 0, bf = 0, county_lf = 0, county_bf = 0;
    for (const auto& r : records) {
        lf += static_cast<long>(r.lf_total);
        bf += static_cast<long>(r.bf_total);
    }
    for (const auto& c : set.counties) {
        county_lf += c.lf_sum;
        county_bf += c.bf_sum;
    }
    EXPECT_EQ(county_lf, lf);
    EXPECT_EQ(county_bf, bf);

    const auto geo = testutil::read_json(dir / "fig05_lf_by_county.geojson");
    EXPECT_EQ(geo["type"], "FeatureCollection");
    EXPECT_EQ(geo["features"].size(), g.counties().size());
    long geo_lf = 0;
    for (const auto& f : geo["features"]) geo_lf += f["properties"]["lf_sum"].get<long>();
    EXPECT_EQ(geo_lf, lf);

    const auto bus = testutil::read_json(dir / "fig02_bus_bf.geojson");
    long bus_bf = 0;
    for (const auto& f : bus["features"]) bus_bf += f["properties"]["bf_count"].get<long>();
    EXPECT_EQ(bus_bf, bf);

    long hist = 0;
    for (const auto& row : csv_rows(testutil::slurp(dir / "fig03_lf_hist.csv"))) hist += std::stol(row[2]);
    EXPECT_EQ(hist, static_cast<long>(records.size()));

    // Correlation values agree with the scatter files they name.
    const auto corr = testutil::read_json(dir / "correlations.json");
    for (const auto& c : corr["correlations"]) {
        const auto rows = csv_rows(testutil::slurp(dir / c["scatter"].get<std::string>()));
        std::vector<double> xs, ys;
        const bool county = c["scatter"] == "fig07_corr.csv";
        for (const auto& row : rows) {
            xs.push_back(std::stod(county ? row[1] : row[2]));
            ys.push_back(std::stod(county ? row[2] : row[3]));
        }
        ASSERT_FALSE(c["r"].is_null()) << c.dump();
        EXPECT_NEAR(c["r"].get<double>(), direct_pearson(xs, ys), 1e-9) << c["scatter"];
    }
}

TEST(Report, RegenerationIsByteIdentical) {
    const auto a = testutil::scratch("report_a");
    const auto b = testutil::scratch("report_b");
    const auto g = testutil::texas150();
    auto shuffled = campaign_records();
    std::reverse(shuffled.begin(), shuffled.end());
    emit_figures(campaign_records(), g, a);
    emit_figures(shuffled, g, b);
    for (const auto& name : figure_file_names()) EXPECT_EQ(testutil::slurp(a / name), testutil::slurp(b / name)) << name;
}

TEST(Report, CountySeverityFromIntactCase) {
    const auto g = testutil::texas150();
    const auto aggs = county_aggregates(campaign_records(), g, 0.03);
    const auto table = si_count(lodf(g), 0.03, g);
    ASSERT_EQ(aggs.size(), table.counties.size());
    for (std::size_t i = 0; i < aggs.size(); ++i) {
        EXPECT_EQ(aggs[i].si_total, table.counties[i].total);
        EXPECT_EQ(aggs[i].no_branches, aggs[i].branch_count == 0);
    }
}
