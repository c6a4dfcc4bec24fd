#include <gtest/gtest.h>

#include <chrono>
#include <set>
#include <thread>

#include "gridpulse/campaign.hpp"
#include "gridpulse/errors.hpp"
#include "test_util.hpp"

using namespace gridpulse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

CampaignSpec fixture_spec(std::size_t counties, int workers = 1) {
    CampaignSpec s;
    s.case_path = testutil::data("texas150.m");
    s.geo_path = testutil::data("texas150_geo.csv");
    s.county_path = testutil::data("texas150_counties.csv");
    std::vector<int> ids;
    for (std::size_t i = 0; i < counties; ++i) ids.push_back(static_cast<int>(1 + 9 * i));
    s.centers = ids;
    s.master_seed = 20240611;
    s.workers = workers;
    return s;
}

// Record log lines without wall_time_s, sorted.
std::vector<std::string> canonical_lines(const fs::path& dir) {
    std::vector<std::string> out;
    std::istringstream in(testutil::slurp(dir / kRecordsFile));
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        auto j = json::parse(line);
        j.erase("wall_time_s");
        out.push_back(j.dump());
    }
    std::sort(out.begin(), out.end());
    return out;
}

GridCase with_county_count(int n) {
    std::string table = "county_id,name,lat,lon,pop_density\n";
    for (int i = 0; i < n; ++i) {
        table += std::to_string(i + 1) + ",C" + std::to_string(i) + "," + std::to_string(26.0 + (i % 16) * 0.6) + "," +
                 std::to_string(-106.0 + (i / 16) * 0.7) + ",10\n";
    }
    return parse_case(read_text_file(testutil::data("texas150.m")), read_text_file(testutil::data("texas150_geo.csv")),
                      table);
}

}  // namespace

TEST(Enumerate, CountiesTimesProbabilities) {
    const auto g = with_county_count(254);
    CampaignSpec s;
    const auto list = enumerate_scenarios(s, g);
    EXPECT_EQ(list.size(), 762u);
    std::set<std::uint64_t> seeds;
    for (const auto& sc : list) seeds.insert(sc.damage.seed);
    EXPECT_EQ(seeds.size(), list.size());
}

TEST(Enumerate, SingleScenario) {
    const auto g = testutil::texas150();
    CampaignSpec s;
    s.centers = std::vector<int>{17};
    s.k_values = {0.7};
    const auto list = enumerate_scenarios(s, g);
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0].county_id, 17);
    EXPECT_EQ(list[0].damage.center, g.find_county(17)->centroid);
    EXPECT_EQ(list[0].damage.seed, scenario_seed(s.master_seed, 17, 0, 0));
}

TEST(Enumerate, DeterministicOrderAndSeeds) {
    const auto g = testutil::texas150();
    CampaignSpec s;
    s.replicates = 2;
    s.centers = std::vector<int>{40, 3, 12};
    const auto a = enumerate_scenarios(s, g);
    const auto b = enumerate_scenarios(s, g);
    ASSERT_EQ(a.size(), 18u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_EQ(a[i].damage.seed, b[i].damage.seed);
        EXPECT_EQ(a[i].order, i);
    }
    EXPECT_EQ(a.front().county_id, 3);
    EXPECT_EQ(a.back().county_id, 40);
    EXPECT_EQ(a[1].replicate, 1);
    EXPECT_EQ(a[2].k_index, 1u);
}

TEST(Enumerate, UnknownCenterRejected) {
    CampaignSpec s;
    s.centers = std::vector<int>{4242};
    EXPECT_THROW(enumerate_scenarios(s, testutil::texas150()), ValidationError);
}

TEST(Enumerate, Presets) {
    const auto g = testutil::texas150();
    CampaignSpec s;
    s.preset = "popdensity";
    const auto pop = enumerate_scenarios(s, g);
    EXPECT_EQ(pop.size(), g.counties().size());
    EXPECT_EQ(pop[0].damage.radius_km, kPopDensityRadiusKm);
    s.preset = "gs30";
    const auto gs = enumerate_scenarios(s, g);
    ASSERT_EQ(gs.size(), kGsPresetCounties);
    std::set<int> ids;
    for (const auto& sc : gs) {
        ids.insert(sc.county_id);
        EXPECT_EQ(sc.damage.slope, kPresetK);
    }
    EXPECT_EQ(ids.size(), kGsPresetCounties);
    EXPECT_EQ(enumerate_scenarios(s, g)[7].county_id, gs[7].county_id);
}

TEST(Spec, JsonRoundTripAndFingerprint) {
    auto s = fixture_spec(5);
    s.thresholds = {0.03, 0.1};
    const auto back = campaign_spec_from_json(to_json(s));
    EXPECT_EQ(back.fingerprint(), s.fingerprint());
    auto other = s;
    other.master_seed += 1;
    EXPECT_NE(other.fingerprint(), s.fingerprint());
    auto workers = s;
    workers.workers = 8;
    EXPECT_EQ(workers.fingerprint(), s.fingerprint());
}

TEST(Spec, Validation) {
    auto s = fixture_spec(1);
    s.k_values = {};
    EXPECT_THROW(s.validate(), ValidationError);
    s = fixture_spec(1);
    s.workers = 0;
    EXPECT_THROW(s.validate(), ValidationError);
    EXPECT_THROW(campaign_spec_from_json(json{{"radius_km", 10}}), ValidationError);
}

TEST(Campaign, WorkerCountDoesNotChangeRecords) {
    std::vector<std::vector<std::string>> runs;
    for (int w : {1, 4, 8}) {
        const auto dir = testutil::scratch("workers" + std::to_string(w));
        const auto res = run_campaign(fixture_spec(10, w), dir);
        EXPECT_EQ(res.records.size(), 30u);
        runs.push_back(canonical_lines(dir));
    }
    EXPECT_EQ(runs[0], runs[1]);
    EXPECT_EQ(runs[0], runs[2]);
}

TEST(Campaign, ResumeEqualsUninterrupted) {
    const auto full = testutil::scratch("resume_full");
    run_campaign(fixture_spec(10, 2), full);

    const auto part = testutil::scratch("resume_part");
    RunControl stop;
    stop.max_new_scenarios = 11;
    const auto first = run_campaign(fixture_spec(10, 2), part, stop);
    EXPECT_EQ(first.records.size(), 11u);
    // A record torn mid-write by a kill.
    {
        std::ofstream out(part / kRecordsFile, std::ios::app);
        out << R"({"scenario_id":"c1-k0-r0","county_id":1,"k_in)";
    }
    const auto manifest = testutil::read_json(part / kManifestFile);
    EXPECT_EQ(manifest["completed"].size(), 11u);
    const auto second = run_campaign(fixture_spec(10, 2), part);
    EXPECT_EQ(second.records.size(), 30u);
    EXPECT_EQ(canonical_lines(part), canonical_lines(full));
    EXPECT_EQ(testutil::read_json(part / kManifestFile)["completed"].size(), 30u);
}

TEST(Campaign, KilledProcessResumes) {
    const auto dir = testutil::scratch("kill");
    auto spec = to_json(fixture_spec(100));
    spec["k_values"] = {0.5, 0.7};
    spec.erase("centers");
    testutil::spit(dir / "campaign.json", spec.dump());
    const auto out = dir / "results";
    const std::string cmd = "campaign --spec \"" + (dir / "campaign.json").string() + "\" --out \"" + out.string() + "\" --quiet";
    const std::string killed = "timeout -s KILL 0.3 \"" + std::string(GRIDPULSE_CLI) + "\" " + cmd + " >/dev/null 2>&1";
    [[maybe_unused]] const int status = std::system(killed.c_str());
    const auto partial = load_records(out);
    EXPECT_LE(partial.size(), 200u);
    const auto resumed = testutil::run_cli(cmd);
    EXPECT_EQ(resumed.exit_code, 0) << resumed.output;

    const auto clean = dir / "clean";
    EXPECT_EQ(testutil::run_cli("campaign --spec \"" + (dir / "campaign.json").string() + "\" --out \"" + clean.string() +
                                "\" --quiet")
                  .exit_code,
              0);
    EXPECT_EQ(canonical_lines(out), canonical_lines(clean));
}

TEST(Campaign, MatchesIndividualCascadeRuns) {
    const auto dir = testutil::scratch("oracle");
    const auto spec = fixture_spec(10);
    const auto res = run_campaign(spec, dir);
    ASSERT_EQ(res.records.size(), 30u);
    const auto g = testutil::texas150();
    for (const auto& r : res.records) {
        ASSERT_TRUE(r.complete()) << *r.error;
        const auto trace_dir = dir / ("cli_" + r.scenario_id);
        char k[32];
        std::snprintf(k, sizeof k, "%.17g", r.k);
        const auto run = testutil::run_cli(
            "cascade --case \"" + spec.case_path.string() + "\" --geo \"" + spec.geo_path.string() + "\" --counties \"" +
            spec.county_path.string() + "\" --county " + std::to_string(r.county_id) + " --radius-km 100 --k " + k +
            " --seed " + std::to_string(r.seed) + " --out \"" + trace_dir.string() + "\"");
        ASSERT_EQ(run.exit_code, 0) << run.output;
        auto cli = testutil::read_json(trace_dir / "summary.json");
        auto mine = to_json(r, false);
        for (const char* key : {"scenario_id", "k_index", "replicate"}) {
            cli.erase(key);
            mine.erase(key);
        }
        EXPECT_EQ(cli, mine) << r.scenario_id;
    }
}

TEST(Campaign, PerBusCountsMatchRecords) {
    const auto dir = testutil::scratch("perbus");
    const auto res = run_campaign(fixture_spec(10), dir);
    std::map<int, long> tally;
    for (const auto& r : res.records) {
        EXPECT_EQ(r.failed_buses.size(), r.bf_total);
        for (int b : r.failed_buses) ++tally[b];
    }
    long sum = 0;
    for (const auto& [bus, n] : res.per_bus_bf) {
        EXPECT_EQ(n, tally.contains(bus) ? tally[bus] : 0) << "bus " << bus;
        sum += n;
    }
    long bf = 0;
    for (const auto& r : res.records) bf += static_cast<long>(r.bf_total);
    EXPECT_EQ(sum, bf);
    const auto csv = testutil::slurp(dir / kPerBusFile);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "bus_id,bf_count");
}

TEST(Campaign, ScenarioErrorsAreRecorded) {
    // A base case that cannot solve makes every scenario fail without aborting.
    const auto dir = testutil::scratch("errors");
    const auto base = testutil::texas150();
    std::vector<Load> loads(base.loads().begin(), base.loads().end());
    for (auto& l : loads) l.p_mw *= 8;
    const GridCase g(base.base_mva(), {base.buses().begin(), base.buses().end()},
                     {base.branches().begin(), base.branches().end()},
                     {base.generators().begin(), base.generators().end()}, loads,
                     {base.counties().begin(), base.counties().end()});
    auto spec = fixture_spec(2);
    const auto res = run_campaign(g, spec, dir);
    ASSERT_EQ(res.records.size(), 6u);
    for (const auto& r : res.records) {
        EXPECT_FALSE(r.complete());
        EXPECT_NE(r.error->find("base case"), std::string::npos);
    }
}

TEST(Campaign, RejectsForeignResultsDirectory) {
    const auto dir = testutil::scratch("foreign");
    run_campaign(fixture_spec(1), dir);
    auto other = fixture_spec(1);
    other.master_seed = 5;
    EXPECT_THROW(run_campaign(other, dir), Error);
}

TEST(Campaign, RecordLogIsValidJsonl) {
    const auto dir = testutil::scratch("jsonl");
    run_campaign(fixture_spec(4, 4), dir);
    const auto text = testutil::slurp(dir / kRecordsFile);
    ASSERT_FALSE(text.empty());
    EXPECT_EQ(text.back(), '\n');
    std::istringstream in(text);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line); ++n) EXPECT_TRUE(json::accept(line)) << line;
    EXPECT_EQ(n, 12u);
}

TEST(Campaign, RecordRoundTrip) {
    const auto dir = testutil::scratch("roundtrip");
    const auto res = run_campaign(fixture_spec(3), dir);
    for (const auto& r : res.records) EXPECT_EQ(to_json(record_from_json(to_json(r))), to_json(r));
    EXPECT_EQ(load_records(dir).size(), res.records.size());
}

TEST(Campaign, ThroughputScales) {
    const unsigned cores = std::thread::hardware_concurrency();
    if (cores < 2) GTEST_SKIP() << "single-core host";
    const int w = static_cast<int>(std::min(4u, cores));
    auto timed = [](const CampaignSpec& s, const std::string& name) {
        const auto dir = testutil::scratch(name);
        const auto t0 = std::chrono::steady_clock::now();
        run_campaign(s, dir);
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto spec = fixture_spec(static_cast<std::size_t>(2 * w));  // 6w scenarios
    const double serial = timed(spec, "tp_serial");
    spec.workers = w;
    const double parallel = timed(spec, "tp_parallel");
    EXPECT_LE(parallel, 0.7 * serial) << "serial " << serial << " s, " << w << " workers " << parallel << " s";
}
