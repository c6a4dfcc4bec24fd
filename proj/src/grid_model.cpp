#include "gridpulse/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gridpulse/errors.hpp"
#include "gridpulse/union_find.hpp"
#include "text_util.hpp"

namespace gridpulse {

namespace {

using detail::trim;

constexpr std::size_t kBusCols = 13;
constexpr std::size_t kGenCols = 10;
constexpr std::size_t kBranchCols = 11;

struct Matrix {
    std::size_t first_line{0};
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> row_lines;
};

struct MatpowerDoc {
    std::optional<double> base_mva;
    std::size_t last_line{0};
    std::map<std::string, Matrix> matrices;
};

std::string strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\'') quoted = !quoted;
        if (line[i] == '%' && !quoted) return std::string(line.substr(0, i));
    }
    return std::string(line);
}

MatpowerDoc tokenize_matpower(std::string_view text) {
    MatpowerDoc doc;
    const auto lines = detail::split_lines(text);
    doc.last_line = lines.size();

    Matrix* current = nullptr;
    std::string current_name;
    bool in_cell = false;
    std::vector<double> row;
    std::size_t row_line = 0;

    auto finish_row = [&](std::size_t line_no) {
        if (row.empty()) return;
        if (!current->rows.empty() && current->rows.front().size() != row.size()) {
            throw SyntaxError(row_line, "row of mpc." + current_name + " has " +
                                            std::to_string(row.size()) + " columns, expected " +
                                            std::to_string(current->rows.front().size()));
        }
        current->rows.push_back(std::move(row));
        current->row_lines.push_back(row_line ? row_line : line_no);
        row.clear();
        row_line = 0;
    };

    auto consume_matrix_text = [&](std::string_view s, std::size_t line_no) {
        std::string token;
        auto flush_token = [&]() {
            if (token.empty()) return;
            const auto v = detail::parse_double(token);
            if (!v) throw SyntaxError(line_no, "non-numeric entry '" + token + "' in mpc." + current_name);
            if (row.empty()) row_line = line_no;
            row.push_back(*v);
            token.clear();
        };
        for (std::size_t i = 0; i < s.size(); ++i) {
            const char c = s[i];
            if (c == ' ' || c == '\t' || c == ',' || c == '\r') {
                flush_token();
            } else if (c == ';') {
                flush_token();
                finish_row(line_no);
            } else if (c == ']') {
                flush_token();
                finish_row(line_no);
                current = nullptr;
                if (auto rest = trim(s.substr(i + 1)); !rest.empty() && rest != ";") {
                    throw SyntaxError(line_no, "unexpected text after matrix: '" + std::string(rest) + "'");
                }
                return;
            } else {
                token.push_back(c);
            }
        }
        flush_token();
        finish_row(line_no);
    };

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const std::string line = strip_comment(lines[i]);
        const auto body = trim(line);
        if (current) {
            consume_matrix_text(body, line_no);
            continue;
        }
        if (in_cell) {
            if (body.find('}') != std::string_view::npos) in_cell = false;
            continue;
        }
        if (body.empty() || body.starts_with("function")) continue;
        if (!body.starts_with("mpc.")) throw SyntaxError(line_no, "unrecognized statement '" + std::string(body) + "'");

        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw SyntaxError(line_no, "expected assignment");
        const std::string name(trim(body.substr(4, eq - 4)));
        auto rhs = trim(body.substr(eq + 1));
        if (rhs.starts_with("[")) {
            if (doc.matrices.contains(name)) throw SyntaxError(line_no, "duplicate matrix mpc." + name);
            current_name = name;
            current = &doc.matrices[name];
            current->first_line = line_no;
            consume_matrix_text(rhs.substr(1), line_no);
        } else if (rhs.starts_with("{")) {
            in_cell = rhs.find('}') == std::string_view::npos;
        } else {
            if (rhs.ends_with(";")) rhs.remove_suffix(1);
            rhs = trim(rhs);
            if (name == "baseMVA") {
                const auto v = detail::parse_double(rhs);
                if (!v || !(*v > 0)) throw SyntaxError(line_no, "invalid baseMVA '" + std::string(rhs) + "'");
                doc.base_mva = *v;
            }
            // other scalars (version, etc.) are not used
        }
    }
    if (current) throw SyntaxError(doc.last_line, "unterminated matrix mpc." + current_name);
    if (in_cell) throw SyntaxError(doc.last_line, "unterminated cell array");
    return doc;
}

const Matrix& require_matrix(const MatpowerDoc& doc, const std::string& name, std::size_t min_cols) {
    const auto it = doc.matrices.find(name);
    if (it == doc.matrices.end()) throw SyntaxError(doc.last_line, "missing matrix mpc." + name);
    const auto& m = it->second;
    if (!m.rows.empty() && m.rows.front().size() < min_cols) {
        throw SyntaxError(m.first_line, "mpc." + name + " needs at least " + std::to_string(min_cols) +
                                            " columns, found " + std::to_string(m.rows.front().size()));
    }
    return m;
}

int as_int(double v, std::size_t line, const char* what) {
    if (std::floor(v) != v || !std::isfinite(v)) {
        throw SyntaxError(line, std::string(what) + " must be an integer");
    }
    return static_cast<int>(v);
}

bool is_comment_or_blank(std::string_view line) {
    line = trim(line);
    return line.empty() || line.front() == '#';
}

struct GeoRow {
    GeoPoint point;
    std::optional<int> county;
    std::size_t line;
};

std::map<int, GeoRow> parse_geo_csv(std::string_view text) {
    std::map<int, GeoRow> out;
    const auto lines = detail::split_lines(text);
    bool first = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_comment_or_blank(lines[i])) continue;
        const auto fields = detail::split_csv_line(lines[i]);
        const bool header = first && !detail::parse_double(fields.front());
        first = false;
        if (header) continue;
        if (fields.size() < 3 || fields.size() > 4) throw SyntaxError(i + 1, "geo row needs bus_id,lat,lon[,county_id]");
        const auto id = detail::parse_integer(fields[0]);
        const auto lat = detail::parse_double(fields[1]);
        const auto lon = detail::parse_double(fields[2]);
        if (!id || !lat || !lon) throw SyntaxError(i + 1, "malformed geo row");
        GeoRow row{{*lat, *lon}, std::nullopt, i + 1};
        if (fields.size() == 4 && !fields[3].empty()) {
            const auto c = detail::parse_integer(fields[3]);
            if (!c) throw SyntaxError(i + 1, "malformed county_id");
            row.county = static_cast<int>(*c);
        }
        if (!out.emplace(static_cast<int>(*id), row).second) {
            throw ValidationError("geo sidecar lists bus " + std::to_string(*id) + " twice");
        }
    }
    return out;
}

std::vector<County> parse_county_csv(std::string_view text) {
    std::vector<County> out;
    const auto lines = detail::split_lines(text);
    bool first = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (is_comment_or_blank(lines[i])) continue;
        const auto fields = detail::split_csv_line(lines[i]);
        const bool header = first && !detail::parse_double(fields.front());
        first = false;
        if (header) continue;
        if (fields.size() != 5) throw SyntaxError(i + 1, "county row needs county_id,name,lat,lon,pop_density");
        const auto id = detail::parse_integer(fields[0]);
        const auto lat = detail::parse_double(fields[2]);
        const auto lon = detail::parse_double(fields[3]);
        const auto density = detail::parse_double(fields[4]);
        if (!id || !lat || !lon || !density) throw SyntaxError(i + 1, "malformed county row");
        out.push_back({static_cast<int>(*id), fields[1], {*lat, *lon}, *density});
    }
    return out;
}

void check_point(const GeoPoint& p, const std::string& what) {
    if (!(p.lat_deg >= -90 && p.lat_deg <= 90) || !(p.lon_deg >= -180 && p.lon_deg <= 180)) {
        throw ValidationError(what + " has coordinates out of range");
    }
}

}  // namespace

GridCase::GridCase(double base_mva, std::vector<Bus> buses, std::vector<Branch> branches,
                   std::vector<Generator> generators, std::vector<Load> loads,
                   std::vector<County> counties)
    : base_mva_(base_mva),
      buses_(std::move(buses)),
      branches_(std::move(branches)),
      generators_(std::move(generators)),
      loads_(std::move(loads)),
      counties_(std::move(counties)) {
    validate_and_index();
}

void GridCase::validate_and_index() {
    if (!(base_mva_ > 0)) throw ValidationError("base MVA must be positive");
    bus_index_.clear();
    std::optional<std::size_t> slack;
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        const auto& b = buses_[i];
        if (!bus_index_.emplace(b.id, i).second) throw ValidationError("duplicate bus id " + std::to_string(b.id));
        if (!(b.voltage_setpoint > 0)) throw ValidationError("bus " + std::to_string(b.id) + " has non-positive voltage setpoint");
        if (b.coordinates) check_point(*b.coordinates, "bus " + std::to_string(b.id));
        if (b.kind == BusKind::Slack) {
            if (slack) throw ValidationError("duplicate slack bus: " + std::to_string(buses_[*slack].id) + " and " + std::to_string(b.id));
            slack = i;
        }
    }
    if (!slack) throw ValidationError("case has no slack bus");
    slack_index_ = *slack;

    for (std::size_t i = 0; i < branches_.size(); ++i) {
        auto& br = branches_[i];
        const std::string tag = "branch " + std::to_string(br.id);
        if (br.id != static_cast<int>(i) + 1) throw ValidationError(tag + " is out of order; ids are 1-based row positions");
        if (!has_bus(br.from_bus)) throw ValidationError(tag + " references nonexistent bus " + std::to_string(br.from_bus));
        if (!has_bus(br.to_bus)) throw ValidationError(tag + " references nonexistent bus " + std::to_string(br.to_bus));
        if (br.from_bus == br.to_bus) throw ValidationError(tag + " connects bus " + std::to_string(br.from_bus) + " to itself");
        if (br.x == 0.0) throw ValidationError(tag + " has zero reactance");
        if (!(br.tap > 0)) throw ValidationError(tag + " has non-positive tap ratio");
        if (!bus(br.from_bus).in_service || !bus(br.to_bus).in_service) br.in_service = false;
    }
    for (auto& g : generators_) {
        const std::string tag = "generator at bus " + std::to_string(g.bus_id);
        if (!has_bus(g.bus_id)) throw ValidationError(tag + " references nonexistent bus");
        if (g.p_min_mw > g.p_max_mw) throw ValidationError(tag + " has p_min > p_max");
        if (g.q_min_mvar > g.q_max_mvar) throw ValidationError(tag + " has q_min > q_max");
        if (g.p_max_mw < 0) throw ValidationError(tag + " has negative p_max");
        if (!bus(g.bus_id).in_service) g.in_service = false;
    }
    for (auto& l : loads_) {
        if (!has_bus(l.bus_id)) throw ValidationError("load references nonexistent bus " + std::to_string(l.bus_id));
        if (!bus(l.bus_id).in_service) l.in_service = false;
    }
    std::set<int> county_ids;
    for (const auto& c : counties_) {
        if (!county_ids.insert(c.id).second) throw ValidationError("duplicate county id " + std::to_string(c.id));
        check_point(c.centroid, "county " + std::to_string(c.id));
    }
    refresh_branch_geometry();
    check_connectivity();
}

void GridCase::refresh_branch_geometry() {
    branch_county_.assign(branches_.size(), std::nullopt);
    for (std::size_t i = 0; i < branches_.size(); ++i) {
        auto& br = branches_[i];
        const auto& a = bus(br.from_bus).coordinates;
        const auto& b = bus(br.to_bus).coordinates;
        if (a && b) {
            br.endpoints_geo = std::array<GeoPoint, 2>{*a, *b};
            branch_county_[i] = nearest_county(counties_, geo::midpoint(*a, *b));
        } else {
            br.endpoints_geo.reset();
        }
    }
}

void GridCase::check_connectivity() {
    warnings_.clear();
    UnionFind uf(buses_.size());
    for (const auto& br : branches_) uf.unite(bus_index(br.from_bus), bus_index(br.to_bus));
    std::set<std::size_t> roots;
    for (std::size_t i = 0; i < buses_.size(); ++i) roots.insert(uf.find(i));
    if (roots.size() > 1) {
        warnings_.push_back("network has " + std::to_string(roots.size()) +
                            " connected components with all branches in service");
    }
}

std::size_t GridCase::bus_index(int id) const {
    const auto it = bus_index_.find(id);
    if (it == bus_index_.end()) throw ValidationError("unknown bus " + std::to_string(id));
    return it->second;
}

const Branch& GridCase::branch(int id) const {
    if (id < 1 || static_cast<std::size_t>(id) > branches_.size()) {
        throw ValidationError("unknown branch " + std::to_string(id));
    }
    return branches_[static_cast<std::size_t>(id) - 1];
}

bool GridCase::has_geography() const noexcept {
    return !buses_.empty() &&
           std::all_of(buses_.begin(), buses_.end(), [](const Bus& b) { return b.coordinates.has_value(); });
}

std::optional<int> GridCase::branch_county(int branch_id) const {
    branch(branch_id);
    return branch_county_[static_cast<std::size_t>(branch_id) - 1];
}

const County* GridCase::find_county(int county_id) const {
    for (const auto& c : counties_) {
        if (c.id == county_id) return &c;
    }
    return nullptr;
}

std::size_t GridCase::in_service_branch_count() const {
    return static_cast<std::size_t>(
        std::count_if(branches_.begin(), branches_.end(), [](const Branch& b) { return b.in_service; }));
}

double GridCase::total_load_mw() const {
    double total = 0;
    for (const auto& l : loads_) {
        if (l.in_service) total += l.p_mw;
    }
    return total;
}

void GridCase::set_branch_in_service(int branch_id, bool in_service) {
    branch(branch_id);
    auto& br = branches_[static_cast<std::size_t>(branch_id) - 1];
    if (in_service && (!bus(br.from_bus).in_service || !bus(br.to_bus).in_service)) {
        throw ValidationError("cannot energize branch " + std::to_string(branch_id) + " with an out-of-service terminal");
    }
    br.in_service = in_service;
}

void GridCase::de_energize_bus(int bus_id) {
    auto& b = buses_[bus_index(bus_id)];
    if (b.kind == BusKind::Slack) throw ValidationError("cannot de-energize the slack bus " + std::to_string(bus_id));
    b.in_service = false;
    b.kind = BusKind::PQ;
    b.vm = 0.0;
    b.va = 0.0;
    const auto g = std::find_if(generators_.begin(), generators_.end(), [&](const Generator& x) { return x.bus_id == bus_id; });
    b.voltage_setpoint = g != generators_.end() ? g->voltage_setpoint : 1.0;
    for (auto& br : branches_) {
        if (br.from_bus == bus_id || br.to_bus == bus_id) br.in_service = false;
    }
    for (auto& g : generators_) {
        if (g.bus_id == bus_id) g.in_service = false;
    }
    for (auto& l : loads_) {
        if (l.bus_id == bus_id) l.in_service = false;
    }
}

void GridCase::set_bus_voltage(std::size_t bus_index, double vm, double va) {
    buses_.at(bus_index).vm = vm;
    buses_.at(bus_index).va = va;
}

void GridCase::set_bus_county(std::size_t bus_index, std::optional<int> county_id) {
    buses_.at(bus_index).county_id = county_id;
}

std::optional<int> nearest_county(std::span<const County> counties, const GeoPoint& p) {
    std::optional<int> best;
    double best_d = 0;
    for (const auto& c : counties) {
        const double d = geo::haversine_km(p, c.centroid);
        if (!best || d < best_d || (d == best_d && c.id < *best)) {
            best = c.id;
            best_d = d;
        }
    }
    return best;
}

GridCase assign_counties(const GridCase& grid) {
    GridCase out = grid;
    for (std::size_t i = 0; i < grid.buses().size(); ++i) {
        const auto& b = grid.buses()[i];
        if (b.coordinates) out.set_bus_county(i, nearest_county(grid.counties(), *b.coordinates));
    }
    return out;
}

GridCase parse_case(std::string_view case_text, std::string_view geo_csv, std::string_view county_csv) {
    const auto doc = tokenize_matpower(case_text);
    if (!doc.base_mva) throw SyntaxError(doc.last_line, "missing mpc.baseMVA");
    const auto& bus_m = require_matrix(doc, "bus", kBusCols);
    const auto& gen_m = require_matrix(doc, "gen", kGenCols);
    const auto& branch_m = require_matrix(doc, "branch", kBranchCols);

    std::vector<Bus> buses;
    std::vector<Load> loads;
    for (std::size_t i = 0; i < bus_m.rows.size(); ++i) {
        const auto& r = bus_m.rows[i];
        const auto line = bus_m.row_lines[i];
        Bus b;
        b.id = as_int(r[0], line, "bus number");
        const int type = as_int(r[1], line, "bus type");
        switch (type) {
            case 1: b.kind = BusKind::PQ; break;
            case 2: b.kind = BusKind::PV; break;
            case 3: b.kind = BusKind::Slack; break;
            case 4: b.kind = BusKind::PQ; b.in_service = false; break;
            default: throw SyntaxError(line, "bus type must be 1-4");
        }
        b.gs_mw = r[4];
        b.bs_mvar = r[5];
        b.area = as_int(r[6], line, "area");
        b.vm = r[7];
        b.va = geo::to_radians(r[8]);
        b.base_kv = r[9];
        b.zone = as_int(r[10], line, "zone");
        b.vmax = r[11];
        b.vmin = r[12];
        b.voltage_setpoint = b.vm;
        if (r[2] != 0.0 || r[3] != 0.0) loads.push_back({b.id, r[2], r[3], b.in_service});
        buses.push_back(b);
    }

    std::map<int, std::size_t> first_bus_row;
    for (std::size_t i = 0; i < buses.size(); ++i) first_bus_row.emplace(buses[i].id, i);

    std::vector<Generator> gens;
    std::set<int> setpoint_taken;
    for (std::size_t i = 0; i < gen_m.rows.size(); ++i) {
        const auto& r = gen_m.rows[i];
        const auto line = gen_m.row_lines[i];
        Generator g;
        g.bus_id = as_int(r[0], line, "generator bus");
        g.p_mw = r[1];
        g.q_mvar = r[2];
        g.q_max_mvar = r[3];
        g.q_min_mvar = r[4];
        g.voltage_setpoint = r[5];
        g.mbase = r[6];
        g.in_service = r[7] > 0;
        g.p_max_mw = r[8];
        g.p_min_mw = r[9];
        gens.push_back(g);
        const auto it = first_bus_row.find(g.bus_id);
        if (it != first_bus_row.end() && g.in_service && !setpoint_taken.contains(g.bus_id)) {
            auto& b = buses[it->second];
            if (b.kind != BusKind::PQ) b.voltage_setpoint = g.voltage_setpoint;
            setpoint_taken.insert(g.bus_id);
        }
    }
    for (auto& b : buses) {
        if (b.in_service) continue;
        // Out-of-service buses carry no state; the setpoint is kept only so it survives a round trip.
        const auto g = std::find_if(gens.begin(), gens.end(), [&](const Generator& x) { return x.bus_id == b.id; });
        b.voltage_setpoint = g != gens.end() ? g->voltage_setpoint : 1.0;
    }

    std::vector<Branch> branches;
    for (std::size_t i = 0; i < branch_m.rows.size(); ++i) {
        const auto& r = branch_m.rows[i];
        const auto line = branch_m.row_lines[i];
        Branch br;
        br.id = static_cast<int>(i) + 1;
        br.from_bus = as_int(r[0], line, "from bus");
        br.to_bus = as_int(r[1], line, "to bus");
        br.r = r[2];
        br.x = r[3];
        br.b = r[4];
        br.rate_mva = r[5];
        br.tap = r[8] == 0.0 ? 1.0 : r[8];
        br.shift_deg = r[9];
        br.in_service = r[10] > 0;
        branches.push_back(br);
    }

    std::vector<County> counties = parse_county_csv(county_csv);
    std::set<int> county_ids;
    for (const auto& c : counties) county_ids.insert(c.id);

    if (!trim(geo_csv).empty()) {
        auto geo_rows = parse_geo_csv(geo_csv);
        for (const auto& [id, row] : geo_rows) {
            if (!first_bus_row.contains(id)) throw ValidationError("geo sidecar references nonexistent bus " + std::to_string(id));
            if (row.county && !county_ids.contains(*row.county)) {
                throw ValidationError("geo sidecar assigns bus " + std::to_string(id) + " to unknown county " + std::to_string(*row.county));
            }
        }
        std::vector<int> missing;
        for (auto& b : buses) {
            const auto it = geo_rows.find(b.id);
            if (it == geo_rows.end()) {
                missing.push_back(b.id);
                continue;
            }
            b.coordinates = it->second.point;
            b.county_id = it->second.county;
            if (!b.county_id) b.county_id = nearest_county(counties, *b.coordinates);
        }
        if (!missing.empty()) {
            std::string msg = "missing coordinates for bus";
            for (int id : missing) msg += " " + std::to_string(id);
            throw ValidationError(msg);
        }
    } else if (!counties.empty()) {
        throw ValidationError("county table given without bus coordinates");
    }

    return GridCase(*doc.base_mva, std::move(buses), std::move(branches), std::move(gens), std::move(loads),
                    std::move(counties));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

GridCase load_case(const std::filesystem::path& case_path, const std::optional<std::filesystem::path>& geo_path,
                   const std::optional<std::filesystem::path>& county_path) {
    const auto text = read_text_file(case_path);
    const auto geo = geo_path ? read_text_file(*geo_path) : std::string{};
    const auto counties = county_path ? read_text_file(*county_path) : std::string{};
    return parse_case(text, geo, counties);
}

CaseText serialize_case(const GridCase& grid) {
    using detail::format_double;
    CaseText out;
    std::ostringstream m;
    m << "function mpc = gridpulse_case\n";
    m << "mpc.version = '2';\n";
    m << "mpc.baseMVA = " << format_double(grid.base_mva()) << ";\n\n";

    std::map<int, std::pair<double, double>> bus_load;
    for (const auto& l : grid.loads()) {
        auto& [p, q] = bus_load[l.bus_id];
        p += l.p_mw;
        q += l.q_mvar;
    }

    m << "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\nmpc.bus = [\n";
    for (const auto& b : grid.buses()) {
        int type = 1;
        if (!b.in_service) type = 4;
        else if (b.kind == BusKind::PV) type = 2;
        else if (b.kind == BusKind::Slack) type = 3;
        const auto [pd, qd] = bus_load[b.id];
        m << '\t' << b.id << '\t' << type << '\t' << format_double(pd) << '\t' << format_double(qd) << '\t'
          << format_double(b.gs_mw) << '\t' << format_double(b.bs_mvar) << '\t' << b.area << '\t'
          << format_double(b.vm) << '\t' << format_double(geo::to_degrees(b.va)) << '\t'
          << format_double(b.base_kv) << '\t' << b.zone << '\t' << format_double(b.vmax) << '\t'
          << format_double(b.vmin) << ";\n";
    }
    m << "];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\nmpc.gen = [\n";
    for (const auto& g : grid.generators()) {
        m << '\t' << g.bus_id << '\t' << format_double(g.p_mw) << '\t' << format_double(g.q_mvar) << '\t'
          << format_double(g.q_max_mvar) << '\t' << format_double(g.q_min_mvar) << '\t'
          << format_double(g.voltage_setpoint) << '\t' << format_double(g.mbase) << '\t'
          << (g.in_service ? 1 : 0) << '\t' << format_double(g.p_max_mw) << '\t'
          << format_double(g.p_min_mw) << ";\n";
    }
    m << "];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\nmpc.branch = [\n";
    for (const auto& br : grid.branches()) {
        m << '\t' << br.from_bus << '\t' << br.to_bus << '\t' << format_double(br.r) << '\t'
          << format_double(br.x) << '\t' << format_double(br.b) << '\t' << format_double(br.rate_mva)
          << "\t0\t0\t" << format_double(br.tap) << '\t' << format_double(br.shift_deg) << '\t'
          << (br.in_service ? 1 : 0) << "\t-360\t360;\n";
    }
    m << "];\n";
    out.matpower = m.str();

    if (grid.has_geography()) {
        std::ostringstream g;
        g << "bus_id,lat,lon,county_id\n";
        for (const auto& b : grid.buses()) {
            g << b.id << ',' << format_double(b.coordinates->lat_deg) << ','
              << format_double(b.coordinates->lon_deg) << ',';
            if (b.county_id) g << *b.county_id;
            g << '\n';
        }
        out.geo_csv = g.str();
    }
    if (!grid.counties().empty()) {
        std::ostringstream c;
        c << "county_id,name,lat,lon,pop_density\n";
        for (const auto& county : grid.counties()) {
            c << county.id << ',' << detail::csv_quote(county.name) << ','
              << format_double(county.centroid.lat_deg) << ',' << format_double(county.centroid.lon_deg)
              << ',' << format_double(county.pop_density) << '\n';
        }
        out.county_csv = c.str();
    }
    return out;
}

}  // namespace gridpulse
