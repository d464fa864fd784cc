#include "flowgen/synthetic.hpp"
#include "flowgen/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace flowgen {

std::string_view to_string(SyntheticGenerator g)
{
    return g == SyntheticGenerator::gravity_truth ? "gravity_truth" : "nonlinear_truth";
}

SyntheticGenerator parse_generator(std::string_view text)
{
    if (text == "gravity_truth" || text == "gravity") {
        return SyntheticGenerator::gravity_truth;
    }
    if (text == "nonlinear_truth" || text == "nonlinear") {
        return SyntheticGenerator::nonlinear_truth;
    }
    throw Error(ErrorCode::MalformedInput, "unknown generator '" + std::string(text) + "'");
}

SyntheticSpec nonlinear_truth_spec(int n_regions, int locations_per_region, std::uint64_t seed)
{
    SyntheticSpec s;
    s.n_regions            = n_regions;
    s.locations_per_region = locations_per_region;
    s.seed                 = seed;
    s.generator            = SyntheticGenerator::nonlinear_truth;
    s.deterrence           = Deterrence::exponential;
    s.beta1                = 1.0;
    s.beta2                = -0.3;
    s.delta                = 0.17;
    s.lambda               = 0.8;
    s.gamma                = 0.8;
    return s;
}

namespace {

constexpr int commercial_index = 1;  // landuse_commercial_km2
constexpr int food_index       = 10; // food_pois
constexpr int retail_index     = 16; // retail_pois

/// Standardizes ln x for x log-uniform on [lo, hi].
double z_log_uniform(double x, double lo, double hi)
{
    const double a = std::log(lo);
    const double b = std::log(hi);
    return (std::log(x) - 0.5 * (a + b)) / ((b - a) / std::sqrt(12.0));
}

double log_uniform(std::mt19937_64& rng, double lo, double hi)
{
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

std::string region_id(int i, int j)
{
    return "R" + std::to_string(i) + "_" + std::to_string(j);
}

std::string location_id(int tile, int k)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "L%04d_%03d", tile, k);
    return buf;
}

/// Integer counts of a multinomial(n, p) draw by sequential binomials.
std::vector<long long> multinomial(std::mt19937_64& rng, long long n, const std::vector<double>& p)
{
    std::vector<long long> counts(p.size(), 0);
    double rest = std::accumulate(p.begin(), p.end(), 0.0);
    for (std::size_t k = 0; k < p.size() && n > 0; ++k) {
        if (k + 1 == p.size()) {
            counts[k] = n;
            break;
        }
        const double q = rest > 0.0 ? std::clamp(p[k] / rest, 0.0, 1.0) : 0.0;
        std::binomial_distribution<long long> draw(n, q);
        counts[k] = draw(rng);
        n -= counts[k];
        rest -= p[k];
    }
    return counts;
}

} // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec)
{
    if (spec.n_regions < 1 || spec.locations_per_region < 2) {
        throw Error(ErrorCode::MalformedInput, "synthetic data needs at least one region of two locations");
    }
    if (!(spec.margin_km > 0.0) || !(2.0 * spec.margin_km < spec.cell_size_km)) {
        throw Error(ErrorCode::MalformedInput, "tile margin must be in (0, cell_size/2)");
    }

    SyntheticDataset out;
    out.spec = spec;
    std::mt19937_64 rng(spec.seed);

    const int cols    = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_regions))));
    const int side    = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.locations_per_region))));
    const double span = spec.cell_size_km - 2.0 * spec.margin_km;
    const double step = span / side;
    std::uniform_real_distribution<double> jitter(-0.35 * step, 0.35 * step);

    // Planar positions in km; tile (0, 0) location 0 sits on the tile's inner corner so
    // that a grid anchored at the bounding-box minimum reproduces the tiles.
    struct Site {
        double x, y;
        int tile;
    };
    std::vector<Site> sites;
    std::vector<int> slots(static_cast<std::size_t>(side * side));
    for (int t = 0; t < spec.n_regions; ++t) {
        const int ti = t % cols;
        const int tj = t / cols;
        std::iota(slots.begin(), slots.end(), 0);
        std::shuffle(slots.begin(), slots.end(), rng);
        for (int k = 0; k < spec.locations_per_region; ++k) {
            const int s  = slots[static_cast<std::size_t>(k)];
            double x     = spec.margin_km + (s % side + 0.5) * step + jitter(rng);
            double y     = spec.margin_km + (s / side + 0.5) * step + jitter(rng);
            if (t == 0 && k == 0) {
                x = spec.margin_km;
                y = spec.margin_km;
            }
            sites.push_back({ti * spec.cell_size_km + x, tj * spec.cell_size_km + y, t});
        }
    }

    double lat_sum = 0.0;
    for (const auto& s : sites) {
        lat_sum += spec.anchor.lat + s.y / km_per_degree;
    }
    const double mean_lat   = lat_sum / static_cast<double>(sites.size());
    const double km_per_lon = km_per_degree * std::cos(mean_lat * std::numbers::pi / 180.0);

    for (std::size_t n = 0; n < sites.size(); ++n) {
        const auto& s = sites[n];
        Location loc;
        loc.id         = location_id(s.tile, static_cast<int>(n) % spec.locations_per_region);
        loc.centroid   = {spec.anchor.lat + s.y / km_per_degree, spec.anchor.lon + s.x / km_per_lon};
        loc.area_km2   = 1.0;
        loc.population = log_uniform(rng, spec.population_min, spec.population_max);
        GeoVector raw;
        for (int f = 0; f < n_geo_features; ++f) {
            raw[f] = log_uniform(rng, spec.feature_min, spec.feature_max);
        }
        out.raw_features[loc.id] = raw;
        out.region_of[loc.id]    = region_id(s.tile % cols, s.tile / cols);
        out.locations.push_back(std::move(loc));
    }

    for (int t = 0; t < spec.n_regions; ++t) {
        const int g = std::min(spec.n_groups - 1, t * std::max(spec.n_groups, 1) / spec.n_regions);
        out.groups["group" + std::to_string(g + 1)].push_back(region_id(t % cols, t / cols));
    }

    const bool nonlinear = spec.generator == SyntheticGenerator::nonlinear_truth;
    auto zf = [&](const std::string& id, int f) {
        return z_log_uniform(out.raw_features.at(id)[f], spec.feature_min, spec.feature_max);
    };
    std::vector<FlowRecord> records;
    std::bernoulli_distribution silent(spec.zero_outflow_fraction);
    const auto L = static_cast<std::size_t>(spec.locations_per_region);
    for (int t = 0; t < spec.n_regions; ++t) {
        const auto first = static_cast<std::size_t>(t) * L;
        for (std::size_t a = first; a < first + L; ++a) {
            const auto& o = out.locations[a];
            const bool zero = silent(rng);
            const double zi = z_log_uniform(o.population, spec.population_min, spec.population_max);
            std::vector<double> score;
            std::vector<std::size_t> dest;
            for (std::size_t b = first; b < first + L; ++b) {
                if (b == a) {
                    continue;
                }
                const auto& d  = out.locations[b];
                const double r = distance(o, d);
                const double g = spec.deterrence == Deterrence::power ? std::log(r) : r;
                double s       = spec.beta1 * std::log(d.population) + spec.beta2 * g;
                if (nonlinear) {
                    s += spec.delta * zi * g + spec.lambda * zf(d.id, commercial_index) +
                         spec.gamma * zf(d.id, food_index) * zf(d.id, retail_index);
                }
                score.push_back(s);
                dest.push_back(b);
            }
            if (zero) {
                continue;
            }
            const double top = *std::max_element(score.begin(), score.end());
            for (auto& s : score) {
                s = std::exp(s - top);
            }
            const auto counts = multinomial(rng, std::llround(spec.outflow_scale), score);
            for (std::size_t k = 0; k < dest.size(); ++k) {
                if (counts[k] > 0) {
                    records.push_back({o.id, out.locations[dest[k]].id, static_cast<double>(counts[k])});
                }
            }
        }
    }
    out.flows = FlowTable::from_records(std::move(records));
    return out;
}

nlohmann::json SyntheticDataset::truth() const
{
    nlohmann::json j;
    j["generator"]            = std::string(to_string(spec.generator));
    j["seed"]                 = spec.seed;
    j["n_regions"]            = spec.n_regions;
    j["locations_per_region"] = spec.locations_per_region;
    j["outflow_scale"]        = spec.outflow_scale;
    j["beta1"]                = spec.beta1;
    j["beta2"]                = spec.beta2;
    j["deterrence"]           = std::string(to_string(spec.deterrence));
    j["cell_size_km"]         = spec.cell_size_km;
    if (spec.generator == SyntheticGenerator::nonlinear_truth) {
        j["delta"]  = spec.delta;
        j["lambda"] = spec.lambda;
        j["gamma"]  = spec.gamma;
        j["terms"]  = {{"delta", "z(ln population_i) * g(r)"},
                       {"lambda", std::string("z(ln ") + std::string(feature_names[commercial_index]) + "_j)"},
                       {"gamma", std::string("z(ln ") + std::string(feature_names[food_index]) + "_j) * z(ln " +
                                     std::string(feature_names[retail_index]) + "_j)"}};
    }
    j["groups"] = groups;
    return j;
}

Dataset to_dataset(const SyntheticDataset& synthetic)
{
    auto tess = build_tessellation(synthetic.locations, synthetic.spec.cell_size_km);
    for (const auto& [id, cell] : tess.assignment) {
        if (region_id(cell.i, cell.j) != synthetic.region_of.at(id)) {
            throw Error(ErrorCode::DegenerateGeometry, "tessellation does not reproduce the tile of " + id);
        }
    }
    return Dataset(synthetic.locations, synthetic.raw_features, synthetic.flows, std::move(tess));
}

void write_synthetic(const SyntheticDataset& synthetic, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_locations_csv(dir / "locations.csv", synthetic.locations);
    write_features_csv(dir / "features.csv", synthetic.raw_features);
    write_flows(dir / "flows.csv", synthetic.flows);
    {
        std::ofstream out(dir / "groups.csv", std::ios::binary);
        out << "group,region_id\n";
        for (const auto& [group, ids] : synthetic.groups) {
            for (const auto& id : ids) {
                out << group << ',' << id << '\n';
            }
        }
    }
    std::ofstream(dir / "truth.json", std::ios::binary) << synthetic.truth().dump(2) << '\n';
}

} // namespace flowgen
