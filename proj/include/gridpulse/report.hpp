#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gridpulse/campaign.hpp"
#include "gridpulse/errors.hpp"
#include "gridpulse/grid_model.hpp"

namespace gridpulse {

struct Histogram {
    std::vector<double> edges;  // bins + 1, ascending
    std::vector<long> counts;

    long total() const;
    std::size_t occupied_bins() const;
};

/// Equal-width bins over [min, max]; the maximum lands in the last bin.
/// All-equal input gets a unit-wide range centred on the value.
Histogram histogram(std::span<const double> values, int bins);
std::string histogram_csv(const Histogram& h);
std::string histogram_svg(const Histogram& h, std::string_view title, std::string_view x_label);

/// Pearson product-moment correlation.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar pearson(const Eigen::DenseBase<DerivedX>& xs, const Eigen::DenseBase<DerivedY>& ys) {
    using Scalar = typename DerivedX::Scalar;
    using std::sqrt;
    if (xs.size() != ys.size()) throw DegenerateInput("pearson inputs differ in length");
    if (xs.size() < 3) throw DegenerateInput("pearson needs at least 3 samples");
    const auto dx = (xs.derived().array() - xs.derived().mean()).eval();
    const auto dy = (ys.derived().array().template cast<Scalar>() - Scalar(ys.derived().mean())).eval();
    const Scalar sxx = dx.square().sum();
    const Scalar syy = dy.square().sum();
    if (!(sxx > Scalar(0)) || !(syy > Scalar(0))) throw DegenerateInput("pearson input has zero variance");
    const Scalar r = (dx * dy).sum() / sqrt(sxx * syy);
    return std::clamp(r, Scalar(-1), Scalar(1));
}

double pearson(std::span<const double> xs, std::span<const double> ys);

struct CountyAggregate {
    int county_id{0};
    std::string name;
    GeoPoint centroid;
    double pop_density{0};
    long scenarios{0};
    long lf_sum{0};
    long bf_sum{0};
    double lf_mean{0};
    long si_total{0};
    std::size_t branch_count{0};
    double si_normalized{0};
    bool no_branches{false};
};

/// LF/BF sums over the scenarios centred in each county plus the
/// pre-contingency SI totals of the intact case.
std::vector<CountyAggregate> county_aggregates(std::span<const SeverityRecord> records, const GridCase& grid,
                                               double si_threshold);

struct CorrelationEntry {
    std::string x;
    std::string y;
    std::optional<double> r;  // empty when the input is degenerate
    std::size_t n{0};
    std::string scatter;
    std::string note;
};

struct ReportOptions {
    int bins{20};
    double si_threshold{0.03};
};

struct FigureSet {
    std::vector<std::filesystem::path> files;
    std::vector<CountyAggregate> counties;
    std::vector<CorrelationEntry> correlations;
    Histogram lf_histogram;
    Histogram slack_dp_histogram;
    Histogram gen_loading_histogram;
    std::size_t scenario_count{0};
};

/// Names of every file emit_figures writes.
std::vector<std::string> figure_file_names();

/// Writes the figure-equivalent CSV/GeoJSON/SVG set. Only complete records
/// are used; throws EmptyInput when there are none, before writing anything.
FigureSet emit_figures(std::span<const SeverityRecord> records, const GridCase& grid,
                       const std::filesystem::path& out_dir, const ReportOptions& options = {});

/// Reads a campaign's records.jsonl, checking every column the report needs;
/// throws MissingField naming the column and affected scenarios.
std::vector<SeverityRecord> read_report_records(const std::filesystem::path& results_dir);

}  // namespace gridpulse
