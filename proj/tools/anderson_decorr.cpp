// Command-line front end: each subcommand is a thin binding to one analytics
// or harness operation. Exit codes: 0 success, 2 rejected input, 1 runtime
// failure. Flags mirror the config keys one-to-one and override config-file
// values; ANDERSON_DECORR_CAP overrides the default matrix dimension cap.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anderson/harness.hpp"
#include "anderson/trace.hpp"
#include "anderson/version.hpp"

using namespace anderson;

namespace {

struct Flags {
    std::optional<int> d;
    std::vector<int> L;
    std::optional<int> ell;
    std::optional<double> alpha;
    std::optional<std::string> scheme;
    std::optional<int> b;
    std::optional<int> m;
    std::optional<double> K;
    std::optional<std::string> law;
    std::optional<double> beta_a;

    std::optional<double> E;
    std::optional<double> Eprime;
    std::optional<std::string> I;
    std::optional<std::string> J;
    std::optional<double> gap_tolerance;
    bool separation_override = false;

    std::optional<std::uint64_t> n_realizations;
    std::optional<std::uint64_t> base_seed;
    std::optional<int> workers;
    std::optional<std::string> out;
    std::optional<long> dimension_cap;

    std::string config_path;
    bool json = false;

    // spectrum / trace extras
    std::uint64_t realization = 0;

    // minorcheck
    std::optional<long> n_len;
    std::string u_csv;
    std::string v_csv;

    // hessian probe
    long probes = 32;
    double step_scale = 1e-4;
    long max_attempts = 100000;
};

std::pair<double, double> parse_pair(const std::string& text, const std::string& key) {
    std::vector<double> values;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ','))
        if (!item.empty()) values.push_back(std::stod(item));
    if (values.size() != 2) throw validation_error("--" + key + " expects 'lo,hi'");
    return {values[0], values[1]};
}

Vector parse_vector(const std::string& text, const std::string& key) {
    std::vector<double> values;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ','))
        if (!item.empty()) values.push_back(std::stod(item));
    if (values.empty()) throw validation_error("--" + key + " expects a comma-separated list of numbers");
    Vector v(static_cast<long>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<long>(i)] = values[i];
    return v;
}

SchemeKind parse_scheme(const std::string& name) {
    if (name == "rank_one") return SchemeKind::rank_one;
    if (name == "polymer") return SchemeKind::polymer;
    if (name == "fiber") return SchemeKind::fiber;
    throw validation_error("scheme must be rank_one, polymer, or fiber; got '" + name + "'");
}

DisorderLaw parse_law(const std::string& name) {
    if (name == "uniform") return DisorderLaw::uniform;
    if (name == "symmetric_beta") return DisorderLaw::symmetric_beta;
    throw validation_error("law must be uniform or symmetric_beta; got '" + name + "'");
}

void add_model_flags(CLI::App* cmd, Flags& f, bool multi_L) {
    cmd->add_option("--d", f.d, "lattice dimension d (1, 2, ...)");
    if (multi_L)
        cmd->add_option("--L", f.L, "box scales L (lattice half-sides, sites); repeat or comma-separate")
            ->delimiter(',');
    else
        cmd->add_option("--L", f.L, "box scale L (lattice half-side, sites)")->expected(1);
    cmd->add_option("--ell", f.ell, "cube half-side ell (sites); exclusive with --alpha");
    cmd->add_option("--alpha", f.alpha, "cube exponent: ell = floor(L^alpha), dimensionless in (0,1)");
    cmd->add_option("--scheme", f.scheme, "perturbation scheme: rank_one | polymer | fiber");
    cmd->add_option("--b", f.b, "polymer block side (sites per edge)");
    cmd->add_option("--m", f.m, "fiber rank (channels per site)");
    cmd->add_option("--K", f.K, "disorder bound: couplings are iid in [-K, K] (hopping-energy units)");
    cmd->add_option("--law", f.law, "coupling law: uniform | symmetric_beta");
    cmd->add_option("--beta_a", f.beta_a, "symmetric beta shape a >= 1 (dimensionless)");
}

void add_window_flags(CLI::App* cmd, Flags& f, bool two_energy) {
    cmd->add_option("--E", f.E, "window center E (hopping-energy units)");
    cmd->add_option("--I", f.I, "base interval 'lo,hi'; realized window is E + L^-d [lo,hi]");
    if (two_energy) {
        cmd->add_option("--Eprime", f.Eprime, "second window center E' (hopping-energy units)");
        cmd->add_option("--J", f.J, "second base interval 'lo,hi' scaled like I");
        cmd->add_flag("--separation_override", f.separation_override,
                      "allow |E - E'| <= 4d (exploratory runs only)");
    }
}

void add_run_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--n_realizations,--n", f.n_realizations, "disorder realizations per L (count)");
    cmd->add_option("--base_seed,--seed", f.base_seed, "base seed (64-bit integer)");
    cmd->add_option("--workers", f.workers, "worker threads (count; never affects results)");
    cmd->add_option("--out", f.out, "output directory for manifest.json, records.ndjson, tables/");
    cmd->add_option("--dimension_cap", f.dimension_cap, "densest matrix dimension allowed (rows)");
    cmd->add_option("--config", f.config_path, "config file; flags override its values");
    cmd->add_flag("--json", f.json, "emit machine-readable JSON on stdout");
}

long env_dimension_cap() {
    if (const char* env = std::getenv("ANDERSON_DECORR_CAP")) return std::stol(env);
    return kDefaultDimensionCap;
}

ExperimentConfig assemble_config(const Flags& f, const std::string& estimator) {
    ExperimentConfig config;
    if (!f.config_path.empty()) config = load_config(f.config_path);
    config.run.dimension_cap = f.config_path.empty() ? env_dimension_cap() : config.run.dimension_cap;
    if (!estimator.empty()) config.statistic.estimator = estimator;

    if (f.d) config.model.d = *f.d;
    if (!f.L.empty()) config.model.L = f.L;
    if (f.ell) config.model.ell = *f.ell;
    if (f.alpha) config.model.alpha = *f.alpha;
    if (f.ell && !f.alpha) config.model.alpha.reset();
    if (f.alpha && !f.ell) config.model.ell.reset();
    if (f.scheme) config.model.scheme = parse_scheme(*f.scheme);
    if (f.b) config.model.b = *f.b;
    if (f.m) config.model.m = *f.m;
    if (f.K) config.model.K = *f.K;
    if (f.law) config.model.law = parse_law(*f.law);
    if (f.beta_a) config.model.beta_a = *f.beta_a;

    if (f.E) config.statistic.E = *f.E;
    if (f.Eprime) config.statistic.Eprime = *f.Eprime;
    if (f.I) config.statistic.I = parse_pair(*f.I, "I");
    if (f.J) config.statistic.J = parse_pair(*f.J, "J");
    if (f.gap_tolerance) config.statistic.gap_tolerance = *f.gap_tolerance;
    if (f.separation_override) config.statistic.separation_override = true;

    if (f.n_realizations) config.run.n_realizations = *f.n_realizations;
    if (f.base_seed) config.run.base_seed = *f.base_seed;
    if (f.workers) config.run.workers = *f.workers;
    if (f.out) config.run.out = *f.out;
    if (f.dimension_cap) config.run.dimension_cap = *f.dimension_cap;
    return config;
}

// model pieces shared by spectrum / trace / hessian-probe
struct DirectModel {
    PerturbationScheme scheme;
    DisorderSpec disorder;
    int d = 1;
};

DirectModel direct_model(const Flags& f) {
    DirectModel model;
    model.d = f.d.value_or(1);
    const SchemeKind kind = f.scheme ? parse_scheme(*f.scheme) : SchemeKind::rank_one;
    switch (kind) {
        case SchemeKind::rank_one: model.scheme = PerturbationScheme::rank_one(); break;
        case SchemeKind::polymer: model.scheme = PerturbationScheme::polymer(f.b.value_or(2)); break;
        case SchemeKind::fiber: model.scheme = PerturbationScheme::fiber(f.m.value_or(2)); break;
    }
    model.disorder.law = f.law ? parse_law(*f.law) : DisorderLaw::uniform;
    model.disorder.K = f.K.value_or(1.0);
    model.disorder.beta_a = f.beta_a.value_or(2.0);
    model.disorder.base_seed = f.base_seed.value_or(0);
    return model;
}

int run_statistic(const Flags& f, const std::string& estimator) {
    const ExperimentConfig config = assemble_config(f, estimator);
    const RunManifest manifest = run_experiment(config);
    std::ifstream records(std::filesystem::path(config.run.out) / "records.ndjson");
    std::string line;
    while (std::getline(records, line)) {
        if (line.empty()) continue;
        if (f.json) {
            std::cout << line << "\n";
        } else {
            const auto j = ordered_json::parse(line);
            std::cout << j.at("name").get<std::string>() << " L=" << j.at("params").at("L").dump()
                      << "  value=" << format_double(j.at("value").get<double>())
                      << "  ci=" << format_double(j.at("ci").get<double>()) << "  n=" << j.at("n").dump() << "\n";
        }
    }
    if (!f.json)
        std::cout << (manifest.complete ? "complete" : "incomplete") << ": " << manifest.records_total
                  << " records in " << config.run.out << "\n";
    return 0;
}

int run_spectrum(const Flags& f) {
    const DirectModel model = direct_model(f);
    const int L = f.L.empty() ? 1 : f.L.front();
    const BoxGeometry g = make_box(model.d, L, model.scheme);
    const long cap = f.dimension_cap.value_or(env_dimension_cap());
    const Vector omega = sample_disorder(model.disorder, f.realization, index_count(model.scheme, g));
    const SpectralData spec = eigendecompose(assemble_hamiltonian(g, model.scheme, omega, cap), false);
    if (f.json) {
        ordered_json j;
        j["eigenvalues"] = std::vector<double>(spec.eigenvalues.begin(), spec.eigenvalues.end());
        std::cout << j.dump() << "\n";
    } else {
        for (long i = 0; i < spec.eigenvalues.size(); ++i) std::cout << format_double(spec.eigenvalues[i]) << "\n";
    }
    return 0;
}

int run_trace(const Flags& f) {
    const DirectModel model = direct_model(f);
    const int ell = f.ell.value_or(10);
    const int L = f.L.empty() ? 20 : f.L.front();
    const BoxGeometry g = make_box(model.d, ell, model.scheme);
    const long cap = f.dimension_cap.value_or(env_dimension_cap());
    const auto iv_pair = f.I ? parse_pair(*f.I, "I") : std::pair<double, double>{-1.0, 1.0};
    const ScaledInterval iv = make_scaled_interval(f.E.value_or(0.0), iv_pair.first, iv_pair.second, L, model.d);
    const Vector omega = sample_disorder(model.disorder, f.realization, index_count(model.scheme, g));
    const SpectralData spec = eigendecompose(assemble_hamiltonian(g, model.scheme, omega, cap), true);
    const WeightedTraceReport report = weighted_trace(spec, iv);
    if (f.json) {
        ordered_json j;
        j["value"] = report.value;
        j["count"] = report.count;
        j["window"] = {iv.lo(), iv.hi()};
        j["gradient"] = std::vector<double>(report.gradient.begin(), report.gradient.end());
        j["gradient_l1"] = report.gradient.lpNorm<1>();
        std::cout << j.dump() << "\n";
    } else {
        std::cout << "T = " << format_double(report.value) << "  (k = " << report.count << " eigenvalues in ["
                  << format_double(iv.lo()) << ", " << format_double(iv.hi()) << "])\n";
        std::cout << "gradient l1 = " << format_double(report.gradient.lpNorm<1>())
                  << ", min = " << format_double(report.gradient.minCoeff()) << "\n";
    }
    return 0;
}

int run_minorcheck(const Flags& f) {
    const Vector u = parse_vector(f.u_csv, "u");
    const Vector v = parse_vector(f.v_csv, "v");
    if (f.n_len && (*f.n_len != u.size() || *f.n_len != v.size()))
        throw validation_error("--n disagrees with the length of --u/--v");
    const MinorInequalityResult result = minor_inequality_check(u, v);
    if (f.json) {
        ordered_json j;
        j["lhs"] = result.lhs;
        j["rhs"] = result.rhs;
        j["holds"] = result.holds;
        std::cout << j.dump() << "\n";
    } else {
        std::cout << "lhs = " << format_double(result.lhs) << "\nrhs = " << format_double(result.rhs)
                  << "\nholds = " << (result.holds ? "true" : "false") << "\n";
    }
    return 0;
}

int run_hessian_probe(const Flags& f) {
    const DirectModel model = direct_model(f);
    HessianProbeParams params;
    params.d = model.d;
    params.alpha = f.alpha.value_or(0.5);
    params.L_values = f.L.empty() ? std::vector<int>{16, 32, 64, 128} : f.L;
    params.scheme = model.scheme;
    params.disorder = model.disorder;
    params.center = f.E.value_or(0.0);
    if (f.I) {
        const auto pair = parse_pair(*f.I, "I");
        params.base_lo = pair.first;
        params.base_hi = pair.second;
    }
    params.probes = f.probes;
    params.step_scale = f.step_scale;
    params.max_attempts = f.max_attempts;

    const HessianProbeResult result = hessian_scaling_probe(params);
    if (f.json) {
        ordered_json j;
        j["rows"] = ordered_json::array();
        for (const auto& row : result.rows) {
            ordered_json rj;
            rj["L"] = row.L;
            rj["ell"] = row.ell;
            rj["probes"] = row.probes;
            rj["attempts"] = row.attempts;
            rj["mean_max_entry"] = row.mean_max_entry;
            rj["median_max_entry"] = row.median_max_entry;
            j["rows"].push_back(rj);
        }
        j["fitted_slope"] = result.fitted_slope;
        std::cout << j.dump() << "\n";
    } else {
        std::cout << "L  ell  probes  attempts  mean|Hess|max  median|Hess|max\n";
        for (const auto& row : result.rows)
            std::cout << row.L << "  " << row.ell << "  " << row.probes << "  " << row.attempts << "  "
                      << format_double(row.mean_max_entry) << "  " << format_double(row.median_max_entry) << "\n";
        std::cout << "fitted slope (log median vs log L) = " << format_double(result.fitted_slope)
                  << "  (mean: " << format_double(result.fitted_slope_mean) << ")\n";
    }
    if (f.out) {
        std::filesystem::create_directories(*f.out);
        std::ofstream csv(std::filesystem::path(*f.out) / "hessian_probe.csv", std::ios::trunc);
        csv << "L,ell,probes,attempts,mean_max_entry,median_max_entry\n";
        for (const auto& row : result.rows)
            csv << row.L << "," << row.ell << "," << row.probes << "," << row.attempts << ","
                << format_double(row.mean_max_entry) << "," << format_double(row.median_max_entry) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo spectral statistics for generalized Anderson models"};
    app.name("anderson_decorr");
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Flags flags;
    std::function<int()> action;

    auto* spectrum = app.add_subcommand("spectrum", "eigenvalues of one disorder realization");
    add_model_flags(spectrum, flags, false);
    spectrum->add_option("--realization", flags.realization, "realization index (count)");
    spectrum->add_option("--base_seed,--seed", flags.base_seed, "base seed (64-bit integer)");
    spectrum->add_option("--dimension_cap", flags.dimension_cap, "densest matrix dimension allowed (rows)");
    spectrum->add_flag("--json", flags.json, "emit machine-readable JSON on stdout");
    spectrum->callback([&] { action = [&] { return run_spectrum(flags); }; });

    auto* trace = app.add_subcommand("trace", "weighted eigenvalue trace and gradient in a scaled window");
    add_model_flags(trace, flags, false);
    add_window_flags(trace, flags, false);
    trace->add_option("--realization", flags.realization, "realization index (count)");
    trace->add_option("--base_seed,--seed", flags.base_seed, "base seed (64-bit integer)");
    trace->add_option("--dimension_cap", flags.dimension_cap, "densest matrix dimension allowed (rows)");
    trace->add_flag("--json", flags.json, "emit machine-readable JSON on stdout");
    trace->callback([&] { action = [&] { return run_trace(flags); }; });

    const struct {
        const char* name;
        const char* help;
        bool two_energy;
    } estimators[] = {
        {"wegner", "P{at least one eigenvalue in the scaled window} vs L", false},
        {"minami", "tail P{X > m_k} and the extended Minami statistic vs L", false},
        {"decorrelate", "joint occupancy of two distant scaled windows vs L", true},
        {"independence", "covering-array independence defect vs L", true},
        {"counts", "distribution of the covering count and per-cube jump sizes", false},
        {"multiplicity", "eigenvalue multiplicity census over realizations", false},
    };
    for (const auto& e : estimators) {
        auto* cmd = app.add_subcommand(e.name, e.help);
        add_model_flags(cmd, flags, true);
        add_window_flags(cmd, flags, e.two_energy);
        if (std::string(e.name) == "multiplicity")
            cmd->add_option("--gap_tolerance", flags.gap_tolerance,
                            "census gap tolerance (hopping-energy units); default 1e-8 (2d+K)");
        add_run_flags(cmd, flags);
        const std::string name = e.name;
        cmd->callback([&flags, &action, name] { action = [&flags, name] { return run_statistic(flags, name); }; });
    }

    auto* minorcheck = app.add_subcommand("minorcheck", "2x2 minor inequality for normalized nonnegative vectors");
    minorcheck->add_option("--n", flags.n_len, "expected vector length (count)");
    minorcheck->add_option("--u", flags.u_csv, "first vector, comma-separated, l1-normalized")->required();
    minorcheck->add_option("--v", flags.v_csv, "second vector, comma-separated, l1-normalized")->required();
    minorcheck->add_flag("--json", flags.json, "emit machine-readable JSON on stdout");
    minorcheck->callback([&] { action = [&] { return run_minorcheck(flags); }; });

    auto* hessian =
        app.add_subcommand("hessian-probe", "Hessian max-entry scaling across L with ell = ceil(L^alpha)");
    add_model_flags(hessian, flags, true);
    add_window_flags(hessian, flags, false);
    hessian->add_option("--base_seed,--seed", flags.base_seed, "base seed (64-bit integer)");
    hessian->add_option("--probes", flags.probes, "stable windows per L (count)");
    hessian->add_option("--step_scale", flags.step_scale, "finite-difference step as a fraction of K");
    hessian->add_option("--max_attempts", flags.max_attempts, "realizations to scan per L (count)");
    hessian->add_option("--out", flags.out, "directory for hessian_probe.csv");
    hessian->add_flag("--json", flags.json, "emit machine-readable JSON on stdout");
    hessian->callback([&] { action = [&] { return run_hessian_probe(flags); }; });

    auto* run = app.add_subcommand("run", "run the estimator named in a config file");
    add_model_flags(run, flags, true);
    add_window_flags(run, flags, true);
    run->add_option("--gap_tolerance", flags.gap_tolerance,
                    "census gap tolerance (hopping-energy units); default 1e-8 (2d+K)");
    add_run_flags(run, flags);
    run->get_option("--config")->required();
    run->callback([&] { action = [&] { return run_statistic(flags, ""); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action ? action() : 2;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
