#include <gtest/gtest.h>

#include <cmath>

#include "gridpulse/damage_model.hpp"
#include "gridpulse/errors.hpp"
#include "gridpulse/rng.hpp"
#include "test_util.hpp"

using namespace gridpulse;

namespace {

Branch segment(GeoPoint a, GeoPoint b) {
    Branch br;
    br.id = 1;
    br.endpoints_geo = std::array<GeoPoint, 2>{a, b};
    return br;
}

DamageParams params_at(GeoPoint c, double radius, double k, std::uint64_t seed) {
    DamageParams p;
    p.center = c;
    p.radius_km = radius;
    p.slope = k;
    p.seed = seed;
    return p;
}

GeoPoint grid_middle(const GridCase& g) {
    double lat = 0, lon = 0;
    for (const auto& b : g.buses()) {
        lat += b.coordinates->lat_deg;
        lon += b.coordinates->lon_deg;
    }
    const double n = static_cast<double>(g.buses().size());
    return {lat / n, lon / n};
}

}  // namespace

TEST(Distance, EndpointIsZero) {
    const auto br = segment({30, -100}, {31, -99});
    EXPECT_NEAR(line_distance_km(br, {30, -100}), 0.0, 1e-9);
    EXPECT_NEAR(line_distance_km(br, {31, -99}), 0.0, 1e-9);
}

TEST(Distance, MidpointIsZero) {
    const auto br = segment({30, -100}, {30, -98});
    EXPECT_NEAR(line_distance_km(br, {30, -99}), 0.0, 1e-6);
}

TEST(Distance, OneDegreeOfLatitude) {
    const auto br = segment({31, -99}, {31, -99});
    EXPECT_NEAR(line_distance_km(br, {30, -99}), 111.19, 0.01);
}

TEST(Distance, PerpendicularToLongLine) {
    // The segment runs along the meridian directly past the center.
    const auto br = segment({29, -99}, {31, -99});
    EXPECT_NEAR(line_distance_km(br, {30, -99}), 0.0, 1e-6);
    EXPECT_NEAR(line_distance_km(br, {30, -98}), geo::haversine_km(GeoPoint{30, -98}, GeoPoint{30, -99}), 0.5);
}

TEST(Distance, MissingCoordinatesRejected) {
    Branch br;
    EXPECT_THROW(line_distance_km(br, {30, -99}), ValidationError);
}

TEST(Probability, Examples) {
    const auto p = params_at({0, 0}, 100, 0.7, 0);
    EXPECT_DOUBLE_EQ(failure_probability(0, p), 0.7);
    EXPECT_DOUBLE_EQ(failure_probability(50, p), 0.35);
    EXPECT_DOUBLE_EQ(failure_probability(100, p), 0.0);
    EXPECT_DOUBLE_EQ(failure_probability(150, p), 0.0);
    EXPECT_DOUBLE_EQ(failure_probability(25, params_at({0, 0}, 100, 1.0, 0)), 0.75);
}

TEST(Params, Validation) {
    EXPECT_THROW(params_at({0, 0}, 0, 0.7, 0).validate(), ValidationError);
    EXPECT_THROW(params_at({0, 0}, 100, 0, 0).validate(), ValidationError);
    EXPECT_THROW(params_at({0, 0}, 100, 1.2, 0).validate(), ValidationError);
    EXPECT_THROW(params_at({95, 0}, 100, 0.7, 0).validate(), ValidationError);
    auto p = params_at({0, 0}, 100, 0.7, 0);
    p.gamma_shape = 0;
    EXPECT_THROW(p.validate(), ValidationError);
    EXPECT_NO_THROW(params_at({0, 0}, 100, 1.0, 0).validate());
}

TEST(Sample, FarAwayIsEmpty) {
    const auto g = testutil::texas150();
    EXPECT_TRUE(sample_failures(g, params_at({60, 10}, 100, 1.0, 3)).empty());
}

TEST(Sample, HugeRadiusFailsEverything) {
    const auto g = testutil::texas150();
    // With R = 1e9 km every line has 1 - p below 1e-5.
    const auto set = sample_failures(g, params_at(grid_middle(g), 1e9, 1.0, 11));
    EXPECT_EQ(set.size(), g.branches().size());
}

TEST(Sample, OrderedByTimeThenId) {
    const auto g = testutil::texas150();
    const auto set = sample_failures(g, params_at(grid_middle(g), 400, 0.9, 5));
    ASSERT_GT(set.size(), 10u);
    for (std::size_t i = 1; i < set.size(); ++i) {
        const auto& a = set.failures[i - 1];
        const auto& b = set.failures[i];
        EXPECT_TRUE(a.fail_time_s < b.fail_time_s || (a.fail_time_s == b.fail_time_s && a.branch_id < b.branch_id));
        EXPECT_GT(b.fail_time_s, 0.0);
    }
}

TEST(Sample, OnlyInServiceBranchesInsideRadius) {
    auto g = testutil::texas150();
    g.set_branch_in_service(5, false);
    const auto p = params_at(grid_middle(g), 300, 1.0, 17);
    for (const auto& f : sample_failures(g, p).failures) {
        EXPECT_NE(f.branch_id, 5);
        EXPECT_LT(f.distance_km, 300.0);
        EXPECT_DOUBLE_EQ(f.distance_km, line_distance_km(g.branch(f.branch_id), p.center));
    }
}

TEST(Sample, BinomialFailureRate) {
    const double r = 40.0;
    const auto p = params_at({0, 0}, 100, 0.7, 0);
    const double prob = failure_probability(r, p);
    const int n = 100000;
    int failed = 0;
    for (int i = 0; i < n; ++i) failed += draw_branch(static_cast<std::uint64_t>(i), 42, prob, 2.0, 1.0).failed;
    const double sd = std::sqrt(n * prob * (1 - prob));
    EXPECT_NEAR(failed, n * prob, 3 * sd);
}

TEST(Sample, GammaMoments) {
    rng::CounterStream s(123, 4);
    const int n = 100000;
    const double shape = 2.0, scale = 1.5;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = s.gamma(shape, scale);
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    EXPECT_NEAR(mean, shape * scale, 0.01 * shape * scale);
    EXPECT_NEAR(var, shape * scale * scale, 0.05 * shape * scale * scale);
}

TEST(Sample, GammaMomentsSmallShape) {
    rng::CounterStream s(9, 1);
    const int n = 100000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = s.gamma(0.5, 2.0);
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 1.0, 0.02);
    EXPECT_NEAR(sum2 / n - mean * mean, 2.0, 0.1);
}

TEST(Sample, UniformIsInHalfOpenUnit) {
    rng::CounterStream s(0, 0);
    for (int i = 0; i < 10000; ++i) {
        const double u = s.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LE(u, 1.0);
    }
}

TEST(Sample, Deterministic) {
    const auto g = testutil::texas150();
    const auto p = params_at(grid_middle(g), 250, 0.7, 99);
    EXPECT_EQ(sample_failures(g, p), sample_failures(g, p));
    auto q = p;
    q.seed = 100;
    EXPECT_NE(sample_failures(g, p), sample_failures(g, q));
}

TEST(Sample, SubstreamIndependence) {
    const auto g = testutil::texas150();
    const auto p = params_at(grid_middle(g), 300, 0.8, 21);
    const auto full = sample_failures(g, p);
    auto reduced_case = g;
    for (int id = 1; id <= static_cast<int>(g.branches().size()); id += 3) reduced_case.set_branch_in_service(id, false);
    const auto reduced = sample_failures(reduced_case, p);
    FailureSet expected;
    for (const auto& f : full.failures) {
        if (reduced_case.branch(f.branch_id).in_service) expected.failures.push_back(f);
    }
    EXPECT_EQ(reduced, expected);
}

TEST(Sample, MonotoneInSlope) {
    const auto g = testutil::texas150();
    std::vector<int> previous;
    for (double k : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
        std::vector<int> ids;
        for (const auto& f : sample_failures(g, params_at(grid_middle(g), 300, k, 8)).failures) ids.push_back(f.branch_id);
        std::sort(ids.begin(), ids.end());
        EXPECT_TRUE(std::includes(ids.begin(), ids.end(), previous.begin(), previous.end())) << "k=" << k;
        previous = ids;
    }
    EXPECT_FALSE(previous.empty());
}

TEST(FailuresCsv, RoundTrip) {
    const auto g = testutil::texas150();
    const auto set = sample_failures(g, params_at(grid_middle(g), 300, 0.9, 2));
    const auto csv = failures_to_csv(set);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "branch_id,distance_km,fail_time_s");
    EXPECT_EQ(parse_failures_csv(csv), set);
}

TEST(FailuresCsv, MalformedRow) {
    EXPECT_THROW(parse_failures_csv("branch_id,distance_km,fail_time_s\n1,2\n"), SyntaxError);
    EXPECT_THROW(parse_failures_csv("branch_id,distance_km,fail_time_s\n1,x,3\n"), SyntaxError);
}
