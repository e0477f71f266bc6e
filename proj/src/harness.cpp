#include "anderson/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "anderson/version.hpp"

namespace fs = std::filesystem;

namespace anderson {

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_items(const std::string& s) {
    std::vector<std::string> items;
    std::string cur;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == ',') {
            if (!cur.empty()) items.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) items.push_back(cur);
    return items;
}

[[noreturn]] void parse_fail(int line, const std::string& what) {
    throw validation_error("config parse error at line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        parse_fail(line, "key '" + key + "' expects a number, got '" + v + "'");
    }
}

long parse_long(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t used = 0;
        const long x = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        parse_fail(line, "key '" + key + "' expects an integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t used = 0;
        const std::uint64_t x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        parse_fail(line, "key '" + key + "' expects a nonnegative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    parse_fail(line, "key '" + key + "' expects true/false, got '" + v + "'");
}

std::pair<double, double> parse_interval(const std::string& v, int line, const std::string& key) {
    const auto items = split_items(v);
    if (items.size() != 2) parse_fail(line, "key '" + key + "' expects two numbers 'lo hi'");
    return {parse_double(items[0], line, key), parse_double(items[1], line, key)};
}

std::string scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::rank_one: return "rank_one";
        case SchemeKind::polymer: return "polymer";
        case SchemeKind::fiber: return "fiber";
    }
    return "rank_one";
}

std::string law_name(DisorderLaw law) {
    return law == DisorderLaw::uniform ? "uniform" : "symmetric_beta";
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
    return std::string(buf);
}

std::string timestamp_utc() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig config;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::vector<std::string> unknown;
    int line = 0;

    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string s = trim(raw);
        if (s.empty()) continue;

        if (s.front() == '[') {
            if (s.back() != ']') parse_fail(line, "unterminated section header '" + s + "'");
            section = s.substr(1, s.size() - 2);
            if (section != "model" && section != "statistic" && section != "run")
                unknown.push_back("unknown section '[" + section + "]' (line " + std::to_string(line) + ")");
            continue;
        }

        const auto eq = s.find('=');
        if (eq == std::string::npos) parse_fail(line, "expected 'key = value', got '" + s + "'");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) parse_fail(line, "empty key");
        if (value.empty()) parse_fail(line, "key '" + key + "' has no value");

        if (section == "model") {
            if (key == "d") config.model.d = static_cast<int>(parse_long(value, line, key));
            else if (key == "L") {
                config.model.L.clear();
                for (const auto& item : split_items(value))
                    config.model.L.push_back(static_cast<int>(parse_long(item, line, key)));
            } else if (key == "ell") config.model.ell = static_cast<int>(parse_long(value, line, key));
            else if (key == "alpha") config.model.alpha = parse_double(value, line, key);
            else if (key == "scheme") {
                if (value == "rank_one") config.model.scheme = SchemeKind::rank_one;
                else if (value == "polymer") config.model.scheme = SchemeKind::polymer;
                else if (value == "fiber") config.model.scheme = SchemeKind::fiber;
                else parse_fail(line, "scheme must be rank_one, polymer, or fiber; got '" + value + "'");
            } else if (key == "b") config.model.b = static_cast<int>(parse_long(value, line, key));
            else if (key == "m") config.model.m = static_cast<int>(parse_long(value, line, key));
            else if (key == "K") config.model.K = parse_double(value, line, key);
            else if (key == "law") {
                if (value == "uniform") config.model.law = DisorderLaw::uniform;
                else if (value == "symmetric_beta") config.model.law = DisorderLaw::symmetric_beta;
                else parse_fail(line, "law must be uniform or symmetric_beta; got '" + value + "'");
            } else if (key == "beta_a") config.model.beta_a = parse_double(value, line, key);
            else unknown.push_back("unknown key 'model." + key + "' (line " + std::to_string(line) + ")");
        } else if (section == "statistic") {
            if (key == "estimator") config.statistic.estimator = value;
            else if (key == "E") config.statistic.E = parse_double(value, line, key);
            else if (key == "Eprime") config.statistic.Eprime = parse_double(value, line, key);
            else if (key == "I") config.statistic.I = parse_interval(value, line, key);
            else if (key == "J") config.statistic.J = parse_interval(value, line, key);
            else if (key == "gap_tolerance") config.statistic.gap_tolerance = parse_double(value, line, key);
            else if (key == "separation_override") config.statistic.separation_override = parse_bool(value, line, key);
            else unknown.push_back("unknown key 'statistic." + key + "' (line " + std::to_string(line) + ")");
        } else if (section == "run") {
            if (key == "n_realizations") config.run.n_realizations = parse_u64(value, line, key);
            else if (key == "base_seed") config.run.base_seed = parse_u64(value, line, key);
            else if (key == "workers") config.run.workers = static_cast<int>(parse_long(value, line, key));
            else if (key == "out") config.run.out = value;
            else if (key == "dimension_cap") config.run.dimension_cap = parse_long(value, line, key);
            else unknown.push_back("unknown key 'run." + key + "' (line " + std::to_string(line) + ")");
        } else {
            parse_fail(line, "key '" + key + "' appears before any [model]/[statistic]/[run] section");
        }
    }

    if (!unknown.empty()) {
        std::string msg = "config rejected:";
        for (const auto& u : unknown) msg += "\n  - " + u;
        throw validation_error(msg);
    }
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("config file not found: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    ExperimentConfig config = parse_config_text(buffer.str());
    const auto violations = validate_config(config);
    if (!violations.empty()) {
        std::string msg = "config validation failed:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw validation_error(msg);
    }
    return config;
}

PerturbationScheme config_scheme(const ModelConfig& model) {
    switch (model.scheme) {
        case SchemeKind::rank_one: return PerturbationScheme::rank_one();
        case SchemeKind::polymer: return PerturbationScheme::polymer(model.b);
        case SchemeKind::fiber: return PerturbationScheme::fiber(model.m);
    }
    return PerturbationScheme::rank_one();
}

int config_ell(const ModelConfig& model, int L) {
    if (model.ell) return *model.ell;
    if (model.alpha) return static_cast<int>(std::floor(std::pow(static_cast<double>(L), *model.alpha)));
    throw validation_error("either ell or alpha must be set");
}

double default_gap_tolerance(const ExperimentConfig& config) {
    if (config.statistic.gap_tolerance) return *config.statistic.gap_tolerance;
    return 1e-8 * (2.0 * config.model.d + config.model.K);
}

std::uint64_t level_seed(std::uint64_t base_seed, int L) {
    return chain(base_seed, static_cast<std::uint64_t>(L));
}

std::vector<std::string> validate_config(const ExperimentConfig& config) {
    std::vector<std::string> v;
    const ModelConfig& m = config.model;
    const StatisticConfig& s = config.statistic;
    const RunConfig& r = config.run;

    if (m.d < 1) v.push_back("model.d must be >= 1");
    if (m.L.empty()) v.push_back("model.L must list at least one box scale");
    for (int L : m.L)
        if (L < 1) v.push_back("model.L entries must be >= 1");

    if (m.ell && m.alpha) v.push_back("set exactly one of model.ell / model.alpha (both given)");
    if (!m.ell && !m.alpha) v.push_back("set exactly one of model.ell / model.alpha (neither given)");
    if (m.alpha && !(*m.alpha > 0.0 && *m.alpha < 1.0)) v.push_back("model.alpha must lie in (0, 1)");
    if (m.ell && *m.ell < 0) v.push_back("model.ell must be >= 0");

    if (m.K < 0.0) v.push_back("model.K must be >= 0");
    if (m.law == DisorderLaw::symmetric_beta && m.beta_a < 1.0)
        v.push_back("model.beta_a must be >= 1 (bounded density)");

    if (m.scheme == SchemeKind::polymer && m.b < 1) v.push_back("model.b must be >= 1");
    if (m.scheme == SchemeKind::fiber && m.m < 1) v.push_back("model.m must be >= 1");

    const PerturbationScheme scheme = config_scheme(m);
    if (m.d >= 1 && !m.L.empty()) {
        for (int L : m.L) {
            if (L < 1) continue;
            if (m.scheme == SchemeKind::polymer && m.b >= 1) {
                const int side = box_side_for(L, scheme);
                if (side % m.b != 0)
                    v.push_back("block must divide box side: b=" + std::to_string(m.b) + ", L=" + std::to_string(L) +
                                " (side " + std::to_string(side) + ")");
            }
            int ell = -1;
            if (m.ell) ell = *m.ell;
            else if (m.alpha && *m.alpha > 0.0 && *m.alpha < 1.0)
                ell = static_cast<int>(std::floor(std::pow(static_cast<double>(L), *m.alpha)));
            if (ell == 0 && m.alpha)
                v.push_back("L^alpha < 1 at L=" + std::to_string(L) + "; covering cube would be empty");
            if (ell >= 0) {
                if (ell > L) v.push_back("model.ell must not exceed L=" + std::to_string(L));
                const int cube_side = box_side_for(ell, scheme);
                if (m.scheme == SchemeKind::polymer && m.b >= 1 && cube_side % m.b != 0)
                    v.push_back("block must divide cube side: b=" + std::to_string(m.b) + ", ell=" +
                                std::to_string(ell) + " (side " + std::to_string(cube_side) + ")");
                const long dim = ipow(cube_side, m.d) * (m.scheme == SchemeKind::fiber ? m.m : 1);
                if (dim > r.dimension_cap)
                    v.push_back("matrix dimension " + std::to_string(dim) + " at L=" + std::to_string(L) +
                                " exceeds dimension_cap " + std::to_string(r.dimension_cap));
            }
        }
    }

    const bool known_estimator =
        std::find(kEstimators.begin(), kEstimators.end(), s.estimator) != kEstimators.end();
    if (!known_estimator)
        v.push_back("statistic.estimator must be one of wegner|minami|decorrelate|independence|counts|multiplicity"
                    ", got '" + s.estimator + "'");

    if (!(s.I.second > s.I.first)) v.push_back("statistic.I must have positive width");
    const bool two_energy = s.estimator == "decorrelate" || s.estimator == "independence";
    if (two_energy) {
        if (!s.Eprime) {
            v.push_back("statistic.Eprime is required for estimator '" + s.estimator + "'");
        } else {
            const double sep = std::abs(s.E - *s.Eprime);
            if (sep <= 4.0 * m.d && !s.separation_override)
                v.push_back("energy separation |E - Eprime| = " + format_double(sep) + " <= 4d = " +
                            format_double(4.0 * m.d) + "; set separation_override = true for exploratory runs");
        }
        if (!(s.J.second > s.J.first)) v.push_back("statistic.J must have positive width");
    }
    if (s.gap_tolerance && !(*s.gap_tolerance > 0.0)) v.push_back("statistic.gap_tolerance must be > 0");

    if (r.n_realizations < 1) v.push_back("run.n_realizations must be >= 1");
    if (r.workers < 1) v.push_back("run.workers must be >= 1");
    if (r.dimension_cap < 1) v.push_back("run.dimension_cap must be >= 1");

    return v;
}

ordered_json config_to_json(const ExperimentConfig& config) {
    ordered_json j;
    j["model"]["d"] = config.model.d;
    j["model"]["L"] = config.model.L;
    if (config.model.ell) j["model"]["ell"] = *config.model.ell;
    if (config.model.alpha) j["model"]["alpha"] = *config.model.alpha;
    j["model"]["scheme"] = scheme_name(config.model.scheme);
    if (config.model.scheme == SchemeKind::polymer) j["model"]["b"] = config.model.b;
    if (config.model.scheme == SchemeKind::fiber) j["model"]["m"] = config.model.m;
    j["model"]["K"] = config.model.K;
    j["model"]["law"] = law_name(config.model.law);
    if (config.model.law == DisorderLaw::symmetric_beta) j["model"]["beta_a"] = config.model.beta_a;
    j["statistic"]["estimator"] = config.statistic.estimator;
    j["statistic"]["E"] = config.statistic.E;
    if (config.statistic.Eprime) j["statistic"]["Eprime"] = *config.statistic.Eprime;
    j["statistic"]["I"] = {config.statistic.I.first, config.statistic.I.second};
    j["statistic"]["J"] = {config.statistic.J.first, config.statistic.J.second};
    if (config.statistic.gap_tolerance) j["statistic"]["gap_tolerance"] = *config.statistic.gap_tolerance;
    j["statistic"]["separation_override"] = config.statistic.separation_override;
    j["run"]["n_realizations"] = config.run.n_realizations;
    j["run"]["base_seed"] = config.run.base_seed;
    j["run"]["dimension_cap"] = config.run.dimension_cap;
    // out path and worker count are not part of the experiment identity
    return j;
}

std::string config_hash(const ExperimentConfig& config) { return hex64(fnv1a64(config_to_json(config).dump())); }

Kernel make_level_kernel(const ExperimentConfig& config, int L) {
    const ModelConfig& m = config.model;
    const StatisticConfig& s = config.statistic;
    const PerturbationScheme scheme = config_scheme(m);
    const int ell = config_ell(m, L);
    const DisorderSpec disorder{m.law, m.K, m.beta_a, level_seed(config.run.base_seed, L)};

    ordered_json params;
    params["estimator"] = s.estimator;
    params["d"] = m.d;
    params["L"] = L;
    params["ell"] = ell;
    params["scheme"] = scheme_name(m.scheme);
    if (m.scheme == SchemeKind::polymer) params["b"] = m.b;
    if (m.scheme == SchemeKind::fiber) params["m"] = m.m;
    params["K"] = m.K;
    params["law"] = law_name(m.law);
    if (m.law == DisorderLaw::symmetric_beta) params["beta_a"] = m.beta_a;
    params["E"] = s.E;
    params["I"] = {s.I.first, s.I.second};

    const std::uint64_t record_seed = config.run.base_seed;

    if (s.estimator == "wegner" || s.estimator == "minami" || s.estimator == "decorrelate") {
        const CubeProtocol protocol{make_box(m.d, ell, scheme), scheme, disorder};
        const ScaledInterval iv_i = make_scaled_interval(s.E, s.I.first, s.I.second, L, m.d);
        if (s.estimator == "wegner") return make_wegner_kernel(protocol, iv_i, record_seed, params);
        if (s.estimator == "minami") {
            const int rank = scheme_rank(scheme, m.d);
            params["rank"] = rank;
            return make_minami_kernel(protocol, iv_i, rank, record_seed, params);
        }
        params["Eprime"] = *s.Eprime;
        params["J"] = {s.J.first, s.J.second};
        const ScaledInterval iv_j = make_scaled_interval(*s.Eprime, s.J.first, s.J.second, L, m.d);
        return make_decorrelation_kernel(protocol, iv_i, iv_j, record_seed, params);
    }

    if (s.estimator == "independence" || s.estimator == "counts") {
        const CoveringConfig cov = make_covering(m.d, L, ell, scheme);
        params["n_cubes"] = cov.n_cubes;
        const ScaledInterval iv_i = make_scaled_interval(s.E, s.I.first, s.I.second, L, m.d);
        if (s.estimator == "counts") return make_counts_kernel(cov, disorder, iv_i, record_seed, params);
        params["Eprime"] = *s.Eprime;
        params["J"] = {s.J.first, s.J.second};
        const ScaledInterval iv_j = make_scaled_interval(*s.Eprime, s.J.first, s.J.second, L, m.d);
        return make_independence_kernel(cov, disorder, iv_i, iv_j, record_seed, params);
    }

    if (s.estimator == "multiplicity") {
        const CubeProtocol protocol{make_box(m.d, ell, scheme), scheme, disorder};
        const double gap = default_gap_tolerance(config);
        const int rank = scheme_rank(scheme, m.d);
        params["rank"] = rank;
        params["gap_tolerance"] = gap;
        params["window"] = {s.E + s.I.first, s.E + s.I.second};
        return make_multiplicity_kernel(protocol, s.E + s.I.first, s.E + s.I.second, gap, rank, record_seed,
                                        params);
    }

    throw validation_error("unknown estimator '" + s.estimator + "'");
}

ordered_json record_to_json(const EstimateRecord& record) {
    ordered_json j;
    j["name"] = record.name;
    j["value"] = record.value;
    j["ci"] = record.ci_halfwidth;
    j["n"] = record.n_realizations;
    j["params"] = record.params;
    j["seed"] = record.seed;
    j["version"] = kVersion;
    return j;
}

namespace {

ordered_json tally_to_json(const Tally& t) {
    ordered_json j;
    j["sums"] = t.sums;
    ordered_json hist = ordered_json::object();
    for (const auto& [k, v] : t.hist) hist[std::to_string(k)] = v;
    j["hist"] = hist;
    ordered_json jump = ordered_json::object();
    for (const auto& [k, v] : t.jump_hist) jump[std::to_string(k)] = v;
    j["jump_hist"] = jump;
    j["max_value"] = t.max_value;
    std::uint64_t sum_bits = 0, comp_bits = 0;
    std::memcpy(&sum_bits, &t.fsum.sum, sizeof(double));
    std::memcpy(&comp_bits, &t.fsum.compensation, sizeof(double));
    j["fsum"] = {hex64(sum_bits), hex64(comp_bits)};
    j["count"] = t.count;
    return j;
}

Tally tally_from_json(const ordered_json& j) {
    Tally t;
    t.sums = j.at("sums").get<std::vector<std::int64_t>>();
    for (const auto& [k, v] : j.at("hist").items()) t.hist[std::stoi(k)] = v.get<std::int64_t>();
    for (const auto& [k, v] : j.at("jump_hist").items()) t.jump_hist[std::stoi(k)] = v.get<std::int64_t>();
    t.max_value = j.at("max_value").get<std::int64_t>();
    const auto fs = j.at("fsum");
    const std::uint64_t sum_bits = std::stoull(fs.at(0).get<std::string>(), nullptr, 16);
    const std::uint64_t comp_bits = std::stoull(fs.at(1).get<std::string>(), nullptr, 16);
    std::memcpy(&t.fsum.sum, &sum_bits, sizeof(double));
    std::memcpy(&t.fsum.compensation, &comp_bits, sizeof(double));
    t.count = j.at("count").get<std::uint64_t>();
    return t;
}

ordered_json manifest_to_json(const RunManifest& m) {
    ordered_json j;
    j["version"] = m.version;
    j["config_hash"] = m.config_hash;
    j["statistic"] = m.statistic;
    j["batch_size"] = m.batch_size;
    j["complete"] = m.complete;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    j["records_total"] = m.records_total;
    j["records_bytes"] = m.records_bytes;
    j["levels"] = ordered_json::array();
    for (const auto& level : m.levels) {
        ordered_json lj;
        lj["L"] = level.L;
        lj["n_batches"] = level.n_batches;
        lj["batches_done"] = level.batches_done;
        lj["emitted"] = level.emitted;
        lj["records"] = level.records;
        lj["state"] = tally_to_json(level.state);
        j["levels"].push_back(lj);
    }
    return j;
}

RunManifest manifest_from_json(const ordered_json& j) {
    RunManifest m;
    m.version = j.at("version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.statistic = j.at("statistic").get<std::string>();
    m.batch_size = j.at("batch_size").get<std::uint64_t>();
    m.complete = j.at("complete").get<bool>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    m.records_total = j.at("records_total").get<long>();
    m.records_bytes = j.at("records_bytes").get<std::uint64_t>();
    for (const auto& lj : j.at("levels")) {
        LevelState level;
        level.L = lj.at("L").get<int>();
        level.n_batches = lj.at("n_batches").get<std::uint64_t>();
        level.batches_done = lj.at("batches_done").get<std::uint64_t>();
        level.emitted = lj.at("emitted").get<bool>();
        level.records = lj.at("records").get<long>();
        level.state = tally_from_json(lj.at("state"));
        m.levels.push_back(std::move(level));
    }
    return m;
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
    const fs::path tmp = dir / "manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << manifest_to_json(m).dump(2) << "\n";
    }
    fs::rename(tmp, dir / "manifest.json");
}

void write_csv(const fs::path& path, const std::vector<EstimateRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    out << "name,value,ci,n\n";
    for (const auto& rec : records) {
        std::string name = rec.name;
        if (rec.params.contains("bin")) name += "[" + rec.params["bin"].dump() + "]";
        if (rec.params.contains("size")) name += "[" + rec.params["size"].dump() + "]";
        out << name << "," << format_double(rec.value) << "," << format_double(rec.ci_halfwidth) << ","
            << rec.n_realizations << "\n";
    }
}

} // namespace

RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    {
        const auto violations = validate_config(config);
        if (!violations.empty()) {
            std::string msg = "config validation failed:";
            for (const auto& v : violations) msg += "\n  - " + v;
            throw validation_error(msg);
        }
    }

    const fs::path dir(config.run.out);
    fs::create_directories(dir / "tables");
    const fs::path records_path = dir / "records.ndjson";
    const std::string hash = config_hash(config);
    const std::uint64_t n = config.run.n_realizations;
    const std::uint64_t n_batches = (n + kBatchSize - 1) / kBatchSize;

    RunManifest manifest;
    const fs::path manifest_path = dir / "manifest.json";
    bool fresh = true;
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        const auto j = ordered_json::parse(in);
        RunManifest previous = manifest_from_json(j);
        if (previous.config_hash != hash)
            throw validation_error("output directory " + config.run.out +
                                   " holds a run with a different config (hash " + previous.config_hash +
                                   " != " + hash + ")");
        if (!previous.complete) {
            manifest = std::move(previous);
            fresh = false;
        }
    }
    if (fresh) {
        manifest = RunManifest{};
        manifest.version = kVersion;
        manifest.config_hash = hash;
        manifest.statistic = config.statistic.estimator;
        manifest.started_at = timestamp_utc();
        for (int L : config.model.L) {
            LevelState level;
            level.L = L;
            level.n_batches = n_batches;
            manifest.levels.push_back(std::move(level));
        }
        std::ofstream(records_path, std::ios::trunc); // start a fresh record stream
        write_manifest(dir, manifest);
    }

    std::uint64_t budget = options.max_batches.value_or(UINT64_MAX);
    for (auto& level : manifest.levels) {
        if (level.emitted) continue;
        const Kernel kernel = make_level_kernel(config, level.L);

        if (level.batches_done < level.n_batches) {
            if (budget == 0) return manifest;
            SweepOptions sweep;
            sweep.workers = config.run.workers;
            sweep.start_batch = level.batches_done;
            sweep.max_batches = budget;
            sweep.on_checkpoint = [&](std::uint64_t batches_done, const Tally& tally) {
                level.batches_done = batches_done;
                level.state = tally;
                write_manifest(dir, manifest);
            };
            SweepResult result;
            try {
                result = sweep_realizations(kernel, n, level.state, sweep);
            } catch (...) {
                write_manifest(dir, manifest); // partial state, marked incomplete
                throw;
            }
            budget -= result.batches_done - sweep.start_batch;
            level.batches_done = result.batches_done;
            level.state = result.tally;
            if (!result.complete) {
                write_manifest(dir, manifest);
                return manifest;
            }
        }

        const std::vector<EstimateRecord> records = kernel.finalize(level.state, n);
        fs::resize_file(records_path, manifest.records_bytes);
        {
            std::ofstream out(records_path, std::ios::app);
            for (const auto& rec : records) out << record_to_json(rec).dump() << "\n";
        }
        write_csv(dir / "tables" / (config.statistic.estimator + "_" + std::to_string(level.L) + ".csv"), records);
        level.emitted = true;
        level.records = static_cast<long>(records.size());
        manifest.records_total += level.records;
        manifest.records_bytes = fs::file_size(records_path);
        write_manifest(dir, manifest);
    }

    manifest.complete = true;
    manifest.finished_at = timestamp_utc();
    write_manifest(dir, manifest);
    return manifest;
}

} // namespace anderson
