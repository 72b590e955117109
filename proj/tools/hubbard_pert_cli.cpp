#include "hubbard_pert/bounds.hpp"
#include "hubbard_pert/exp_integral.hpp"
#include "hubbard_pert/fock.hpp"
#include "hubbard_pert/grassmann.hpp"
#include "hubbard_pert/model.hpp"
#include "hubbard_pert/parallel.hpp"
#include "hubbard_pert/perturb.hpp"
#include "hubbard_pert/propagator.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace hubbard_pert;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kSchema = "hubbard-pert/1";

enum Exit { kOk = 0, kVerifyFailed = 1, kConfig = 2, kCostGuard = 3 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CostGuard : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    ModelParams params;
    std::string sites;
    std::vector<double> U;
    std::string U_list;
    double h = 4.0;
    int n_max = 2;
    int threads = 0;
    std::uint64_t seed = 20240101;
    std::string format = "json";
    std::string out;
    double budget = 5e8;
    bool prop51 = false;
    double D = 0.0;
    std::string checkpoint;
    int inject_sign_flip = -1;
};

// ---------------------------------------------------------------------------
// output

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// nlohmann prints the shortest round-trip form; floats here always carry 17 significant digits
void write_json(std::ostream& os, const Json& j, int indent = 0) {
    const std::string pad(indent, ' '), inner(indent + 2, ' ');
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            bool first = true;
            for (const auto& [k, v] : j.items()) {
                if (!first) os << ",\n";
                first = false;
                os << inner << Json(k).dump() << ": ";
                write_json(os, v, indent + 2);
            }
            os << "\n" << pad << "}";
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            os << "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) os << ",\n";
                os << inner;
                write_json(os, j[i], indent + 2);
            }
            os << "\n" << pad << "]";
            return;
        }
        case Json::value_t::number_float: {
            double v = j.get<double>();
            os << (std::isfinite(v) ? fmt17(v) : "null");
            return;
        }
        default:
            os << j.dump();
    }
}

std::string csv_cell(const Json& v) {
    if (v.is_null()) return "";
    if (v.is_number_float()) return std::isfinite(v.get<double>()) ? fmt17(v.get<double>()) : "nan";
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

std::string table_cell(const Json& v) {
    if (v.is_null()) return "-";
    if (v.is_number_float()) {
        double x = v.get<double>();
        if (!std::isfinite(x)) return "nan";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6e", x);
        return buf;
    }
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

// A report is a JSON document plus one flat table used for the csv and table formats.
struct Report {
    Json doc;
    std::vector<std::string> columns;
    std::vector<std::vector<Json>> rows;
};

void emit(const Report& r, const RunConfig& cfg) {
    std::ofstream file;
    if (!cfg.out.empty()) {
        file.open(cfg.out);
        if (!file) throw ConfigError("cannot open output file " + cfg.out);
    }
    std::ostream& os = cfg.out.empty() ? std::cout : file;
    if (cfg.format == "json") {
        write_json(os, r.doc);
        os << "\n";
    } else if (cfg.format == "csv") {
        for (std::size_t c = 0; c < r.columns.size(); ++c) os << (c ? "," : "") << r.columns[c];
        os << "\n";
        for (const auto& row : r.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << csv_cell(row[c]);
            os << "\n";
        }
    } else {
        std::vector<std::size_t> width(r.columns.size());
        for (std::size_t c = 0; c < r.columns.size(); ++c) width[c] = r.columns[c].size();
        for (const auto& row : r.rows)
            for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], table_cell(row[c]).size());
        auto line = [&](auto cell) {
            for (std::size_t c = 0; c < r.columns.size(); ++c) {
                std::string s = cell(c);
                os << (c ? "  " : "") << s << std::string(width[c] - s.size(), ' ');
            }
            os << "\n";
        };
        line([&](std::size_t c) { return r.columns[c]; });
        line([&](std::size_t c) { return std::string(width[c], '-'); });
        for (const auto& row : r.rows) line([&](std::size_t c) { return table_cell(row[c]); });
    }
}

Json params_json(const ModelParams& p) {
    return Json{{"d", p.d}, {"L", p.L}, {"t", p.t}, {"tprime", p.tprime}, {"mu", p.mu}, {"beta", p.beta}};
}

Json sites_json(const SiteQuad& q) {
    return Json{{"x1", q.x1.coords}, {"x2", q.x2.coords}, {"y1", q.y1.coords}, {"y2", q.y2.coords}};
}

std::string sites_label(const SiteQuad& q) {
    std::string s;
    for (const auto* site : {&q.x1, &q.x2, &q.y1, &q.y2}) {
        if (!s.empty()) s += ";";
        for (std::size_t i = 0; i < site->coords.size(); ++i) s += (i ? "," : "") + std::to_string(site->coords[i]);
    }
    return s;
}

// ---------------------------------------------------------------------------
// parsing

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> out;
    std::string cleaned = text;
    for (char& c : cleaned)
        if (c == ',' || c == ';') c = ' ';
    std::istringstream in(cleaned);
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + tok + "'");
        }
        if (used != tok.size() || !std::isfinite(v)) throw ConfigError("not a number: '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

SiteQuad parse_sites(const ModelParams& p, const std::string& text) {
    if (text.empty()) {
        std::vector<int> o(p.d, 0);
        return {make_site(p, o), make_site(p, o), make_site(p, o), make_site(p, o)};
    }
    auto values = parse_number_list(text);
    if (static_cast<int>(values.size()) != 4 * p.d)
        throw ConfigError("--sites needs 4*d = " + std::to_string(4 * p.d) + " integers (x1;x2;y1;y2)");
    std::vector<Site> s;
    for (int i = 0; i < 4; ++i) {
        std::vector<int> c(p.d);
        for (int k = 0; k < p.d; ++k) {
            double v = values[i * p.d + k];
            if (v != std::floor(v)) throw ConfigError("--sites coordinates must be integers");
            c[k] = static_cast<int>(v);
        }
        s.push_back(make_site(p, c));
    }
    return {s[0], s[1], s[2], s[3]};
}

std::vector<double> all_U(const RunConfig& cfg) {
    std::vector<double> U = cfg.U;
    auto more = parse_number_list(cfg.U_list);
    U.insert(U.end(), more.begin(), more.end());
    return U;
}

void require_small(const ModelParams& p, const char* what) {
    if (std::pow(static_cast<double>(p.L), p.d) > 6)
        throw ConfigError(std::string(what) + " needs L^d <= 6 (exact diagonalization)");
}

// ---------------------------------------------------------------------------
// checkpoint file

class JsonChunkStore : public ChunkStore {
public:
    JsonChunkStore(std::string path, Json fingerprint) : path_(std::move(path)), fingerprint_(std::move(fingerprint)) {
        if (std::filesystem::exists(path_)) {
            std::ifstream in(path_);
            Json j;
            try {
                in >> j;
            } catch (const std::exception&) {
                throw ConfigError("checkpoint file " + path_ + " is not valid JSON");
            }
            if (j.value("schema", "") != kSchema || j["fingerprint"] != fingerprint_)
                throw ConfigError("checkpoint file " + path_ + " belongs to a different run");
            for (const auto& [key, chunks] : j["chunks"].items())
                for (const auto& [c, vals] : chunks.items()) data_[key][c] = vals.get<std::vector<double>>();
        }
    }

    std::optional<std::vector<double>> load(const std::string& key, std::size_t chunk) override {
        std::lock_guard lock(mutex_);
        auto k = data_.find(key);
        if (k == data_.end()) return std::nullopt;
        auto c = k->second.find(std::to_string(chunk));
        if (c == k->second.end()) return std::nullopt;
        ++resumed_;
        return c->second;
    }

    void save(const std::string& key, std::size_t chunk, const std::vector<double>& values) override {
        std::lock_guard lock(mutex_);
        data_[key][std::to_string(chunk)] = values;
        Json j{{"schema", kSchema}, {"fingerprint", fingerprint_}, {"chunks", Json::object()}};
        for (const auto& [k, chunks] : data_)
            for (const auto& [c, vals] : chunks) j["chunks"][k][c] = vals;
        const std::string tmp = path_ + ".tmp";
        {
            std::ofstream out(tmp);
            write_json(out, j);
            out << "\n";
        }
        std::filesystem::rename(tmp, path_);
    }

    int resumed() const { return resumed_; }

private:
    std::string path_;
    Json fingerprint_;
    std::map<std::string, std::map<std::string, std::vector<double>>> data_;
    std::mutex mutex_;
    int resumed_ = 0;
};

// ---------------------------------------------------------------------------
// commands

std::uint64_t tuple_estimate(const ModelParams& p, int vertices) {
    return static_cast<std::uint64_t>(std::llround(std::pow(static_cast<double>(p.L), p.d * (vertices + 1))));
}

Report cmd_coeffs(const RunConfig& cfg) {
    const ModelParams& p = cfg.params;
    if (cfg.n_max < 0 || cfg.n_max > 2) throw ConfigError("--n-max for coeffs is 0, 1 or 2");
    const double cost = static_cast<double>(tuple_estimate(p, cfg.n_max + 1));
    if (cost > cfg.budget) {
        std::ostringstream msg;
        msg << "a" << cfg.n_max << " needs L^(d(n+1)) = " << cost << " momentum tuples, above --budget " << cfg.budget;
        throw CostGuard(msg.str());
    }
    auto sites = parse_sites(p, cfg.sites);
    auto U = all_U(cfg);
    Propagator prop(p);

    EvalOptions opts;
    opts.threads = resolve_threads(cfg.threads);
    std::size_t last_decile = 0;
    std::string last_key;
    opts.progress = [&](const std::string& key, std::size_t done, std::size_t total) {
        std::size_t decile = done * 10 / total;
        if (key != last_key) last_decile = 0, last_key = key;
        if (decile > last_decile || done == total) {
            std::fprintf(stderr, "progress %s %zu/%zu\n", key.c_str(), done, total);
            last_decile = decile;
        }
    };
    std::unique_ptr<JsonChunkStore> store;
    if (!cfg.checkpoint.empty()) {
        Json fp{{"params", params_json(p)}, {"sites", sites_label(sites)}};
        store = std::make_unique<JsonChunkStore>(cfg.checkpoint, fp);
        opts.store = store.get();
    }
    auto c = coefficients(prop, {sites}, cfg.n_max, opts)[0];

    std::optional<TailBound> tb;
    if (cfg.prop51) tb = make_tail_bound(D_upper_2d(p), 2, DSource::prop51_bound);

    Report r;
    r.doc = Json{{"schema", kSchema}, {"command", "coeffs"}, {"params", params_json(p)}, {"sites", sites_json(sites)},
                 {"max_order", cfg.n_max}};
    Json coeffs{{"a0", c.a0}};
    if (cfg.n_max >= 1) coeffs["a1"] = c.a1;
    if (cfg.n_max >= 2) coeffs["a2"] = c.a2;
    r.doc["coefficients"] = coeffs;
    if (tb) r.doc["tail_bound"] = Json{{"D", tb->D}, {"radius", tb->radius}, {"source", "prop51"}};
    Json series = Json::array();
    r.columns = {"sites", "U", "a0", "a1", "a2", "series"};
    if (tb) r.columns.push_back("remainder_bound");
    auto opt = [&](int order, double v) { return cfg.n_max >= order ? Json(v) : Json(); };
    for (double u : U) {
        Json row{{"U", u}, {"value", series_eval(c, u)}};
        std::vector<Json> cells{sites_label(sites), u, c.a0, opt(1, c.a1), opt(2, c.a2), series_eval(c, u)};
        if (tb) {
            Json bound = std::abs(u) <= tb->radius ? Json(remainder_bound(cfg.n_max, std::abs(u), tb->D)) : Json();
            row["remainder_bound"] = bound;
            cells.push_back(bound);
        }
        series.push_back(row);
        r.rows.push_back(cells);
    }
    if (U.empty()) {
        std::vector<Json> cells{sites_label(sites), Json(), c.a0, opt(1, c.a1), opt(2, c.a2), Json()};
        if (tb) cells.push_back(Json());
        r.rows.push_back(cells);
    }
    r.doc["series"] = series;
    if (store) r.doc["resumed_chunks"] = store->resumed();
    return r;
}

double resolve_D(const RunConfig& cfg, std::string& source) {
    if (cfg.D > 0.0) {
        source = "given";
        return cfg.D;
    }
    if (cfg.prop51) {
        source = "prop51";
        return D_upper_2d(cfg.params);
    }
    source = "computed";
    return decay_D(Propagator(cfg.params), 1e-10);
}

Report cmd_error_table(const RunConfig& cfg) {
    auto U = all_U(cfg);
    std::string source;
    const double D = resolve_D(cfg, source);
    auto tb = make_tail_bound(D, cfg.n_max, source == "prop51" ? DSource::prop51_bound : DSource::computed);
    auto rows = error_table(U, D, cfg.n_max);

    Report r;
    r.doc = Json{{"schema", kSchema}, {"command", "error-table"}, {"params", params_json(cfg.params)},
                 {"D", D}, {"D_source", source}, {"radius", tb.radius}, {"m", cfg.n_max}};
    Json list = Json::array();
    r.columns = {"U", "error", "beyond_radius"};
    for (const auto& row : rows) {
        Json err = row.beyond_radius ? Json() : Json(row.error);
        list.push_back(Json{{"U", row.U_abs}, {"error", err}, {"beyond_radius", row.beyond_radius}});
        r.rows.push_back({row.U_abs, err, row.beyond_radius});
    }
    r.doc["rows"] = list;
    return r;
}

Report cmd_bounds(const RunConfig& cfg) {
    const ModelParams& p = cfg.params;
    Propagator prop(p);
    const double D = decay_D(prop, 1e-10);
    Report r;
    r.doc = Json{{"schema", kSchema}, {"command", "bounds"}, {"params", params_json(p)}};
    r.columns = {"quantity", "n", "value"};
    r.doc["D_computed"] = D;
    r.doc["radius_computed"] = 1.0 / (27.0 * D);
    r.rows.push_back({"D_computed", Json(), D});
    r.rows.push_back({"radius_computed", Json(), 1.0 / (27.0 * D)});
    double Dref = D;
    if (p.d == 2) {
        const double Du = D_upper_2d(p);
        r.doc["D_prop51"] = Du;
        r.doc["radius_prop51"] = 1.0 / (27.0 * Du);
        r.rows.push_back({"D_prop51", Json(), Du});
        r.rows.push_back({"radius_prop51", Json(), 1.0 / (27.0 * Du)});
        if (cfg.prop51) Dref = Du;
    }
    Json orders = Json::array();
    for (int n = 0; n <= std::max(cfg.n_max, 1); ++n) {
        Json o{{"n", n}, {"coeff_bound", coeff_bound(n, Dref)}, {"f_coefficient", f_coefficient(n)}};
        r.rows.push_back({"coeff_bound", n, coeff_bound(n, Dref)});
        if (n >= 1) {
            o["tree_count"] = tree_count(n).str();
            r.rows.push_back({"tree_count", n, tree_count(n).str()});
        }
        orders.push_back(o);
    }
    r.doc["orders"] = orders;
    r.doc["f_at_radius"] = f_closed(kFRadius);
    return r;
}

Report cmd_covariance(const RunConfig& cfg) {
    const ModelParams& p = cfg.params;
    Propagator prop(p);
    auto sites = parse_sites(p, cfg.sites);
    const int steps = grid_steps(p.beta, cfg.h);
    const int r_idx = prop.lattice().sub(prop.lattice().index(sites.y1.coords), prop.lattice().index(sites.x1.coords));

    Report r;
    r.doc = Json{{"schema", kSchema}, {"command", "covariance"}, {"params", params_json(p)}, {"h", cfg.h},
                 {"x", sites.x1.coords}, {"y", sites.y1.coords}};
    r.columns = {"quantity", "tau", "value"};
    Json kernel = Json::array();
    // C(x↑0, y↑τ) on the grid and its anti-periodic continuation to negative τ
    for (int l = -steps; l < steps; ++l) {
        const double tau = l / cfg.h;
        const double v = prop.kernel(r_idx, -tau);
        kernel.push_back(Json{{"tau", tau}, {"value", v}});
        r.rows.push_back({"C", tau, v});
    }
    r.doc["kernel"] = kernel;
    const double Dh = decay_Dh(prop, cfg.h), D = decay_D(prop, 1e-10);
    r.doc["D_h"] = Dh;
    r.doc["D"] = D;
    r.rows.push_back({"D_h", Json(), Dh});
    r.rows.push_back({"D", Json(), D});
    const double closed = det_covariance_closed(prop);
    r.doc["det_closed"] = closed;
    r.rows.push_back({"det_closed", Json(), closed});
    if (2 * prop.volume() * steps <= 1024) {
        auto dc = build_discrete_covariance(prop, cfg.h);
        const double det = det_covariance(dc);
        auto md = matsubara_diagonalize(dc);
        r.doc["det_lu"] = det;
        r.doc["matsubara"] = Json{{"unitarity_residual", md.unitarity_residual},
                                  {"offdiag_residual", md.offdiag_residual},
                                  {"eigenvalue_residual", md.eigenvalue_residual}};
        r.rows.push_back({"det_lu", Json(), det});
    }
    return r;
}

struct Check {
    std::string name;
    bool passed = true;
    Json detail = Json::object();
};

SiteQuad default_oracle_sites(const ModelParams& p) {
    std::vector<int> o(p.d, 0), a(p.d, 0), b(p.d, 0), c(p.d, 1);
    a[0] = 1;
    b[p.d - 1] = 1;
    return {make_site(p, o), make_site(p, c), make_site(p, a), make_site(p, p.d > 1 ? b : o)};
}

std::vector<SiteQuad> default_oracle_quads(const ModelParams& p) {
    std::vector<int> o(p.d, 0), a(p.d, 0);
    a[0] = 1;
    return {default_oracle_sites(p), SiteQuad{make_site(p, o), make_site(p, a), make_site(p, a), make_site(p, a)}};
}

Report cmd_verify(const RunConfig& cfg) {
    const ModelParams& p = cfg.params;
    require_small(p, "verify");
    std::vector<Check> checks;
    Propagator prop(p);
    FockBasis basis(p);

    {
        Check c{"det_identity"};
        const double closed = det_covariance_closed(prop);
        double worst = 0.0;
        for (double bh : {4.0, 8.0, 16.0}) {
            auto dc = build_discrete_covariance(prop, bh / p.beta);
            worst = std::max(worst, std::abs(det_covariance(dc) - closed) / closed);
        }
        c.passed = worst <= 1e-10;
        c.detail = Json{{"closed", closed}, {"max_rel_error", worst}};
        checks.push_back(c);
    }
    {
        Check c{"matsubara"};
        auto md = matsubara_diagonalize(build_discrete_covariance(prop, 4.0 / p.beta));
        double worst = std::max({md.unitarity_residual, md.offdiag_residual, md.eigenvalue_residual});
        c.passed = worst < 1e-8;
        c.detail = Json{{"max_residual", worst}};
        checks.push_back(c);
    }
    {
        Check c{"car"};
        double worst = 0.0;
        auto I = identity_operator(basis);
        for (int a = 0; a < basis.modes(); ++a)
            for (int b = 0; b < basis.modes(); ++b) {
                auto ca = annihilation(basis, a), cb = annihilation(basis, b), db = creation(basis, b);
                FockOperator x = ca * db + db * ca;
                if (a == b) x -= I;
                FockOperator y = ca * cb + cb * ca;
                for (const auto* m : {&x, &y})
                    for (int k = 0; k < m->outerSize(); ++k)
                        for (FockOperator::InnerIterator it(*m, k); it; ++it)
                            worst = std::max(worst, std::abs(it.value()));
            }
        c.passed = worst <= 1e-12;
        c.detail = Json{{"max_residual", worst}};
        checks.push_back(c);
    }
    {
        Check c{"determinant_bound"};
        std::mt19937_64 rng(cfg.seed);
        double worst = 0.0;
        for (int draw = 0; draw < 200; ++draw) {
            int n = 1 + static_cast<int>(rng() % 6);
            worst = std::max(worst, determinant_bound_sample(prop, n, rng()) / std::pow(4.0, n));
        }
        c.passed = worst <= 1.0;
        c.detail = Json{{"draws", 200}, {"max_ratio_to_4n", worst}};
        checks.push_back(c);
    }
    {
        Check c{"tree_count"};
        for (int n = 1; n <= 5; ++n)
            if (tree_count(n) != tree_count_bruteforce(n)) c.passed = false;
        c.detail = Json{{"n_max", 5}};
        checks.push_back(c);
    }
    {
        Check c{"f_identities"};
        double e0 = std::abs(f_closed(kFRadius) - 81.0 / 16.0), e1 = 0.0;
        for (int i = 1; i <= 50; ++i) {
            double x = 0.12 * i / 50.0;
            e1 = std::max(e1, std::abs(f_series(x, 400) - f_closed(x)));
        }
        c.passed = e0 <= 1e-12 && e1 <= 1e-10;
        c.detail = Json{{"radius_error", e0}, {"series_error", e1}};
        checks.push_back(c);
    }
    {
        Check c{"ordered_sum"};
        std::mt19937_64 rng(cfg.seed + 1);
        std::uniform_real_distribution<double> U(-2.0, 2.0);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> a(1 + trial % 6);
            for (double& x : a) x = U(rng);
            auto [lhs, rhs] = ordered_sum_identity_check(a, p.beta);
            worst = std::max(worst, std::abs(lhs - rhs) / std::abs(rhs));
        }
        c.passed = worst <= 1e-10;
        c.detail = Json{{"max_rel_error", worst}};
        checks.push_back(c);
    }
    {
        Check c{"ph_convergence"};
        Json rows = Json::array();
        std::vector<ModelParams> cases{ModelParams{1, 1, 0.0, 0.0, 0.0, p.beta}};
        if ((p.d == 1 || p.d == 2) && p.L <= 2) cases.push_back(p);
        for (const auto& q : cases) {
            Propagator pq(q);
            FockBasis bq(q);
            std::vector<double> hs{4.0 / q.beta, 8.0 / q.beta, 16.0 / q.beta};
            auto st = convergence_study(pq, bq, q, 0.1, hs, 4);
            if (!st.first_order || !st.decreasing) c.passed = false;
            rows.push_back(Json{{"params", params_json(q)}, {"ratios", st.ratios}});
        }
        c.detail = Json{{"cases", rows}};
        checks.push_back(c);
    }
    {
        Check c{"coeff_fit"};
        // the second quad is needed to see the (s23, s12) term at all
        std::vector<SiteQuad> quads = cfg.sites.empty() ? default_oracle_quads(p)
                                                        : std::vector<SiteQuad>{parse_sites(p, cfg.sites)};
        auto terms = a2_terms();
        if (cfg.inject_sign_flip >= 0) {
            if (cfg.inject_sign_flip >= static_cast<int>(terms.size())) throw ConfigError("--inject-sign-flip: 0..6");
            terms[cfg.inject_sign_flip].weight = -terms[cfg.inject_sign_flip].weight;
        }
        EvalOptions opts;
        opts.threads = resolve_threads(cfg.threads);
        auto pcs = coefficients(prop, quads, 2, opts, terms);
        const double D = decay_D(prop, 1e-10);
        const double radius = 1.0 / (27.0 * D);
        auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
        Json per_quad = Json::array();
        for (std::size_t q = 0; q < quads.size(); ++q) {
            const auto& pc = pcs[q];
            auto fit = coeff_fit(basis, p, quads[q], default_fit_grid(radius));
            double r0 = rel(fit.a0, pc.a0), r1 = rel(fit.a1, pc.a1), r2 = rel(fit.a2, pc.a2);
            double worst_margin = 0.0;
            for (int i = 1; i <= 20; ++i) {
                double U = radius * i / 20.0 * (i % 2 ? 1.0 : -1.0);
                double err = std::abs(correlation_exact(basis, p, U, quads[q]) - series_eval(pc, U));
                worst_margin = std::max(worst_margin, err / remainder_bound(2, std::abs(U), D));
            }
            bool ok = r0 <= 1e-6 && r1 <= 1e-4 && r2 <= 1e-3 && worst_margin <= 1.0;
            c.passed = c.passed && ok;
            per_quad.push_back(Json{{"sites", sites_label(quads[q])},
                                    {"passed", ok},
                                    {"perturbation", {pc.a0, pc.a1, pc.a2}},
                                    {"fit", {fit.a0, fit.a1, fit.a2}},
                                    {"rel_error", {r0, r1, r2}},
                                    {"max_error_over_bound", worst_margin}});
        }
        c.detail = Json{{"D", D}, {"quads", per_quad}};
        checks.push_back(c);
    }

    Report r;
    bool all = true;
    Json list = Json::array();
    r.columns = {"check", "passed", "detail"};
    for (const auto& c : checks) {
        all = all && c.passed;
        list.push_back(Json{{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
        r.rows.push_back({c.name, c.passed, c.detail.dump()});
    }
    r.doc = Json{{"schema", kSchema}, {"command", "verify"}, {"params", params_json(p)}, {"seed", cfg.seed},
                 {"passed", all}, {"checks", list}};
    return r;
}

Report cmd_oracle(const RunConfig& cfg) {
    const ModelParams& p = cfg.params;
    require_small(p, "oracle");
    FockBasis basis(p);
    Propagator prop(p);
    auto sites = cfg.sites.empty() ? default_oracle_sites(p) : parse_sites(p, cfg.sites);
    const double D = decay_D(prop, 1e-10);
    const double radius = 1.0 / (27.0 * D);
    auto fit = coeff_fit(basis, p, sites, default_fit_grid(radius));
    EvalOptions opts;
    opts.threads = resolve_threads(cfg.threads);
    auto pc = coefficients(prop, {sites}, 2, opts)[0];

    Report r;
    r.doc = Json{{"schema", kSchema}, {"command", "oracle"}, {"params", params_json(p)}, {"sites", sites_json(sites)},
                 {"D", D}, {"radius", radius}};
    r.doc["fit"] = Json{{"a0", fit.a0}, {"a1", fit.a1}, {"a2", fit.a2},
                        {"stderr", {fit.se0, fit.se1, fit.se2}}, {"condition", fit.condition}};
    r.doc["perturbation"] = Json{{"a0", pc.a0}, {"a1", pc.a1}, {"a2", pc.a2}};
    r.columns = {"U", "exact", "series", "error", "remainder_bound", "partition_ratio"};
    Json rows = Json::array();
    for (double u : all_U(cfg)) {
        double ex = correlation_exact(basis, p, u, sites), se = series_eval(pc, u);
        Json bound = std::abs(u) <= radius ? Json(remainder_bound(2, std::abs(u), D)) : Json();
        double z = partition_ratio_exact(basis, p, u);
        rows.push_back(Json{{"U", u}, {"exact", ex}, {"series", se}, {"error", std::abs(ex - se)},
                            {"remainder_bound", bound}, {"partition_ratio", z}});
        r.rows.push_back({u, ex, se, std::abs(ex - se), bound, z});
    }
    r.doc["rows"] = rows;
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perturbation coefficients and tail bounds for the finite-temperature Hubbard model"};
    app.require_subcommand(1);
    app.set_help_flag("-h,--help", "print this help");
    app.set_help_all_flag("--help-all");

    RunConfig cfg;
    cfg.params = ModelParams{2, 10, 0.01, 0.01, 0.01, 1.0};

    auto add_common = [&](CLI::App* sub) {
        sub->set_help_flag("--help", "print this help");  // -h would clash with --h
        sub->add_option("--d", cfg.params.d, "space dimension");
        sub->add_option("--L", cfg.params.L, "edge length");
        sub->add_option("--t", cfg.params.t, "nearest-neighbour hopping");
        sub->add_option("--tprime", cfg.params.tprime, "next-nearest hopping");
        sub->add_option("--mu", cfg.params.mu, "chemical potential");
        sub->add_option("--beta", cfg.params.beta, "inverse temperature");
        sub->add_option("--sites", cfg.sites, "x1;x2;y1;y2 as 4*d comma separated integers");
        sub->add_option("--U", cfg.U, "coupling value (repeatable)");
        sub->add_option("--U-list", cfg.U_list, "comma separated coupling values");
        sub->add_option("--h", cfg.h, "time grid density (beta*h even)");
        sub->add_option("--n-max", cfg.n_max, "maximal order");
        sub->add_option("--threads", cfg.threads, "worker threads (default HUBBARD_PERT_THREADS or all cores)");
        sub->add_option("--seed", cfg.seed, "random seed");
        sub->add_option("--format", cfg.format, "json, csv or table")->check(CLI::IsMember({"json", "csv", "table"}));
        sub->add_option("--out", cfg.out, "write the report to FILE");
        sub->add_option("--budget", cfg.budget, "momentum tuple budget for the cost guard");
        sub->add_flag("--prop51", cfg.prop51, "use the rigorous two-dimensional bound for D");
        sub->add_option("--D", cfg.D, "decay constant to use");
    };

    auto* coeffs = app.add_subcommand("coeffs", "a0, a1, a2 and the truncated series");
    add_common(coeffs);
    coeffs->add_option("--checkpoint", cfg.checkpoint, "resume file for partial momentum sums");
    auto* etable = app.add_subcommand("error-table", "remainder bound for each |U|");
    add_common(etable);
    auto* bounds = app.add_subcommand("bounds", "decay constants, radii, coefficient bounds");
    add_common(bounds);
    auto* cov = app.add_subcommand("covariance", "free covariance, determinant identity, decay constants");
    add_common(cov);
    auto* verify = app.add_subcommand("verify", "run the oracle suites");
    add_common(verify);
    verify->add_option("--inject-sign-flip", cfg.inject_sign_flip)->group("");
    auto* oracle = app.add_subcommand("oracle", "exact diagonalization against the series");
    add_common(oracle);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    // small-system defaults for the oracle commands
    for (auto* sub : {verify, oracle}) {
        if (!sub->parsed()) continue;
        if (sub->count("--d") == 0) cfg.params.d = 1;
        if (sub->count("--L") == 0) cfg.params.L = 2;
        if (sub->count("--t") == 0) cfg.params.t = 1.0;
        if (sub->count("--tprime") == 0) cfg.params.tprime = 0.0;
        if (sub->count("--mu") == 0) cfg.params.mu = 0.0;
    }

    try {
        cfg.params.validate();
        Lattice(cfg.params.d, cfg.params.L);
        if (cfg.budget <= 0) throw ConfigError("--budget must be positive");
        if (cfg.threads < 0) throw ConfigError("--threads must be >= 0");
        Report r;
        if (coeffs->parsed()) r = cmd_coeffs(cfg);
        else if (etable->parsed()) r = cmd_error_table(cfg);
        else if (bounds->parsed()) r = cmd_bounds(cfg);
        else if (cov->parsed()) r = cmd_covariance(cfg);
        else if (verify->parsed()) r = cmd_verify(cfg);
        else r = cmd_oracle(cfg);
        emit(r, cfg);
        if (verify->parsed() && !r.doc["passed"].get<bool>()) return kVerifyFailed;
        return kOk;
    } catch (const CostGuard& e) {
        std::cerr << "cost guard: " << e.what() << "\n";
        return kCostGuard;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "verification failure: " << e.what() << "\n";
        return kVerifyFailed;
    }
}
