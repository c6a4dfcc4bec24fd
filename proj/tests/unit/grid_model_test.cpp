#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "gridpulse/errors.hpp"
#include "gridpulse/grid_model.hpp"
#include "test_util.hpp"

using namespace gridpulse;
using testutil::matpower;

namespace {

const std::string kBus1 = "1 3 0 0 0 0 1 1 0 230 1 1.1 0.9";
const std::string kBus2 = "2 1 50 10 0 0 1 1 0 230 1 1.1 0.9";
const std::string kGen1 = "1 0 0 100 -100 1 100 1 200 0";
const std::string kLine12 = "1 2 0.01 0.1 0 100 100 100 0 0 1 -360 360";

// Rows of a named matrix, counted straight from the file text.
std::size_t count_rows(const std::string& text, const std::string& name) {
    const auto start = text.find("mpc." + name + " = [");
    const auto end = text.find("];", start);
    const auto body = text.substr(start, end - start);
    return static_cast<std::size_t>(std::count(body.begin(), body.end(), ';'));
}

}  // namespace

TEST(ParseCase, MinimalTwoBus) {
    const auto g = parse_case(matpower({kBus1, kBus2}, {kGen1}, {kLine12}));
    EXPECT_EQ(g.buses().size(), 2u);
    EXPECT_EQ(g.branches().size(), 1u);
    EXPECT_EQ(g.generators().size(), 1u);
    EXPECT_EQ(g.slack_bus_id(), 1);
    EXPECT_EQ(g.bus(2).kind, BusKind::PQ);
    ASSERT_EQ(g.loads().size(), 1u);
    EXPECT_DOUBLE_EQ(g.loads()[0].p_mw, 50.0);
    EXPECT_EQ(g.branch(1).from_bus, 1);
}

TEST(ParseCase, DanglingBusReference) {
    EXPECT_THROW(parse_case(matpower({kBus1, kBus2}, {kGen1}, {"1 99 0.01 0.1 0 0 0 0 0 0 1 -360 360"})),
                 ValidationError);
}

TEST(ParseCase, FixtureCountsMatchFile) {
    const auto text = read_text_file(testutil::data("case14.m"));
    const auto g = testutil::case14();
    EXPECT_EQ(g.buses().size(), count_rows(text, "bus"));
    EXPECT_EQ(g.branches().size(), count_rows(text, "branch"));
    EXPECT_EQ(g.generators().size(), count_rows(text, "gen"));
    EXPECT_EQ(g.buses().size(), 14u);
    EXPECT_EQ(g.branches().size(), 20u);
    EXPECT_EQ(g.generators().size(), 5u);
}

TEST(ParseCase, DuplicateSlack) {
    EXPECT_THROW(parse_case(matpower({kBus1, "2 3 0 0 0 0 1 1 0 230 1 1.1 0.9"}, {kGen1}, {kLine12})),
                 ValidationError);
}

TEST(ParseCase, NoSlack) {
    EXPECT_THROW(parse_case(matpower({"1 2 0 0 0 0 1 1 0 230 1 1.1 0.9", kBus2}, {kGen1}, {kLine12})),
                 ValidationError);
}

TEST(ParseCase, ZeroReactance) {
    EXPECT_THROW(parse_case(matpower({kBus1, kBus2}, {kGen1}, {"1 2 0.01 0 0 0 0 0 0 0 1 -360 360"})),
                 ValidationError);
}

TEST(ParseCase, SelfLoop) {
    EXPECT_THROW(parse_case(matpower({kBus1, kBus2}, {kGen1}, {"2 2 0.01 0.1 0 0 0 0 0 0 1 -360 360"})),
                 ValidationError);
}

TEST(ParseCase, MissingCoordinates) {
    EXPECT_THROW(parse_case(matpower({kBus1, kBus2}, {kGen1}, {kLine12}), "bus_id,lat,lon\n1,30,-100\n"),
                 ValidationError);
}

TEST(ParseCase, LatitudeOutOfRange) {
    EXPECT_THROW(
        parse_case(matpower({kBus1, kBus2}, {kGen1}, {kLine12}), "bus_id,lat,lon\n1,91,-100\n2,30,-100\n"),
        ValidationError);
}

TEST(ParseCase, MalformedMatrixReportsLine) {
    const std::string text = "mpc.baseMVA = 100;\nmpc.bus = [\n" + kBus1 + ";\n2 1 x 0 0 0 1 1 0 230 1 1.1 0.9;\n];\n";
    try {
        parse_case(text);
        FAIL() << "expected SyntaxError";
    } catch (const SyntaxError& e) {
        EXPECT_EQ(e.line(), 4);
    }
}

TEST(ParseCase, RaggedRows) {
    const std::string text = "mpc.baseMVA = 100;\nmpc.bus = [\n" + kBus1 + ";\n2 1 0 0 0 0 1 1 0 230 1 1.1;\n];\n";
    EXPECT_THROW(parse_case(text), SyntaxError);
}

TEST(ParseCase, UnterminatedMatrix) {
    EXPECT_THROW(parse_case("mpc.baseMVA = 100;\nmpc.bus = [\n" + kBus1 + ";\n"), SyntaxError);
}

TEST(ParseCase, DisconnectedNetworkWarns) {
    const auto g = parse_case(matpower({kBus1, kBus2, "3 1 5 0 0 0 1 1 0 230 1 1.1 0.9"}, {kGen1}, {kLine12}));
    EXPECT_FALSE(g.warnings().empty());
    EXPECT_TRUE(testutil::case14().warnings().empty());
}

TEST(ParseCase, DuplicateCountyIds) {
    EXPECT_THROW(parse_case(matpower({kBus1, kBus2}, {kGen1}, {kLine12}), "1,30,-100\n2,30.1,-100\n",
                            "1,A,30,-100,5\n1,B,31,-100,5\n"),
                 ValidationError);
}

TEST(AssignCounties, BusAtCentroid) {
    const auto g = parse_case(matpower({kBus1, kBus2}, {kGen1}, {kLine12}), "1,30,-100\n2,31,-99\n",
                              "county_id,name,lat,lon,pop_density\n7,A,30,-100,5\n8,B,31,-99,5\n");
    EXPECT_EQ(g.bus(1).county_id, 7);
    EXPECT_EQ(g.bus(2).county_id, 8);
}

TEST(AssignCounties, TieGoesToLowerId) {
    // Bus on the equator midway between two centroids on the equator.
    const auto g = parse_case(matpower({kBus1, kBus2}, {kGen1}, {kLine12}), "1,0,0\n2,0,2\n",
                              "9,A,0,-1,1\n4,B,0,1,1\n3,C,0,3,1\n");
    EXPECT_EQ(g.bus(1).county_id, 4);
    EXPECT_EQ(g.bus(2).county_id, 3);
}

TEST(AssignCounties, MatchesBruteForceScan) {
    const auto g = testutil::texas150();
    ASSERT_EQ(g.counties().size(), 100u);
    const auto reassigned = assign_counties(g);
    for (const auto& b : reassigned.buses()) {
        ASSERT_TRUE(b.coordinates);
        int best = -1;
        double best_d = 1e300;
        for (const auto& c : g.counties()) {
            const double d = geo::haversine_km(*b.coordinates, c.centroid);
            if (d < best_d || (d == best_d && c.id < best)) {
                best_d = d;
                best = c.id;
            }
        }
        EXPECT_EQ(b.county_id, best) << "bus " << b.id;
    }
}

TEST(AssignCounties, ThreeCountyTable) {
    auto text = read_text_file(testutil::data("texas150.m"));
    const auto geo = read_text_file(testutil::data("texas150_geo.csv"));
    const std::string table = "1,West,31,-104,3\n2,Central,31,-100,30\n3,East,31,-96,90\n";
    const auto g = parse_case(text, geo, table);
    for (const auto& b : g.buses()) {
        const double lon = b.coordinates->lon_deg;
        int best = 1;
        double best_d = geo::haversine_km(*b.coordinates, g.counties()[0].centroid);
        for (const auto& c : g.counties()) {
            const double d = geo::haversine_km(*b.coordinates, c.centroid);
            if (d < best_d) {
                best_d = d;
                best = c.id;
            }
        }
        EXPECT_EQ(b.county_id, best) << "bus " << b.id << " lon " << lon;
    }
}

TEST(AssignCounties, EveryBranchHasOneCounty) {
    const auto g = testutil::texas150();
    for (const auto& br : g.branches()) {
        const auto c = g.branch_county(br.id);
        ASSERT_TRUE(c.has_value());
        const auto& e = *br.endpoints_geo;
        EXPECT_EQ(*c, *nearest_county(g.counties(), geo::midpoint(e[0], e[1])));
    }
}

TEST(Serialize, RoundTripFixtures) {
    for (const auto& g : {testutil::case5(), testutil::case14(), testutil::texas150()}) {
        const auto t = serialize_case(g);
        EXPECT_EQ(parse_case(t.matpower, t.geo_csv, t.county_csv), g);
    }
}

TEST(Serialize, RoundTripAfterSwitching) {
    auto g = testutil::case14();
    g.set_branch_in_service(3, false);
    g.de_energize_bus(8);
    const auto t = serialize_case(g);
    EXPECT_EQ(parse_case(t.matpower, t.geo_csv, t.county_csv), g);
}

TEST(Serialize, VoltageStateSurvivesWithinRounding) {
    auto g = testutil::case14();
    g.set_bus_voltage(4, 1.013, -0.125);
    const auto t = serialize_case(g);
    const auto back = parse_case(t.matpower, t.geo_csv, t.county_csv);
    EXPECT_DOUBLE_EQ(back.buses()[4].vm, 1.013);
    EXPECT_NEAR(back.buses()[4].va, -0.125, 1e-15);
}

TEST(Mutation, InServiceBranchesKeepInServiceEndpoints) {
    std::mt19937 rng(42);
    auto g = testutil::texas150();
    for (int round = 0; round < 60; ++round) {
        if (rng() % 2) {
            g.set_branch_in_service(static_cast<int>(rng() % g.branches().size()) + 1, false);
        } else {
            const auto& b = g.buses()[rng() % g.buses().size()];
            if (b.kind != BusKind::Slack) g.de_energize_bus(b.id);
        }
        for (const auto& br : g.branches()) {
            if (!br.in_service) continue;
            EXPECT_TRUE(g.bus(br.from_bus).in_service);
            EXPECT_TRUE(g.bus(br.to_bus).in_service);
        }
    }
}

TEST(Mutation, CannotReenergizeBranchAtDeadBus) {
    auto g = testutil::case5();
    g.de_energize_bus(5);
    EXPECT_THROW(g.set_branch_in_service(7, true), ValidationError);
    EXPECT_FALSE(g.branch(7).in_service);
}
