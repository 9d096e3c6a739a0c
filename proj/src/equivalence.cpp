#include "shs/equivalence.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace shs {

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::sdcpn: return "sdcpn";
        case Backend::gshs: return "gshs";
        case Backend::hsde: return "hsde";
    }
    return "?";
}

namespace {

struct RepResult {
    std::vector<int> modes;          // local catalog indices per grid time
    std::vector<std::vector<int>> local_tags;
    std::vector<double> states;
    int jump_count = 0;
    int dim = 0;
    std::string failure;
};

template <typename Simulate>
Ensemble run_ensemble_impl(Backend backend, std::uint64_t source_hash, Simulate&& simulate, int reps,
                           const ExecParams& params, std::uint64_t seed, int threads) {
    if (reps < 1) throw ConfigError("run_ensemble needs reps >= 1");
    Ensemble e;
    e.backend = backend;
    e.source_hash = source_hash;
    e.seed = seed;
    e.reps = reps;
    e.params = params;

    RandomBasis root = RandomBasis(seed).branch(static_cast<std::uint64_t>(backend) + 101);

    std::vector<RepResult> results(static_cast<std::size_t>(reps));
    int n_threads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    n_threads = std::min(n_threads, reps);

    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            int r = next.fetch_add(1);
            if (r >= reps) return;
            RepResult& res = results[static_cast<std::size_t>(r)];
            try {
                RandomBasis basis = root.replicate(static_cast<std::uint64_t>(r));
                HybridPath path = simulate(basis);
                res.jump_count = path.jump_count();
                res.local_tags = path.catalog.tags();
                res.modes.reserve(path.grid_modes.size());
                for (ModeId m : path.grid_modes) res.modes.push_back(m.index);
                res.dim = path.grid_states.empty() ? 0 : static_cast<int>(path.grid_states.front().size());
                for (const Vec& x : path.grid_states)
                    res.states.insert(res.states.end(), x.begin(), x.end());
            } catch (const std::exception& ex) {
                res.failure = "rep " + std::to_string(r) + " (seed " + std::to_string(seed) +
                              "): " + ex.what();
            }
        }
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }

    // Merge in replication order so the ensemble is identical for any thread
    // count.
    bool grid_set = false;
    for (int r = 0; r < reps; ++r) {
        RepResult& res = results[static_cast<std::size_t>(r)];
        if (!res.failure.empty()) {
            e.failures.push_back(res.failure);
            continue;
        }
        if (!grid_set) {
            ExecParams p = params;
            std::vector<double> grid{0.0};
            if (p.grid_dt > 0.0)
                for (int i = 1;; ++i) {
                    double t = static_cast<double>(i) * p.grid_dt;
                    if (t > p.horizon * (1.0 + 1e-12)) break;
                    grid.push_back(std::min(t, p.horizon));
                }
            if (grid.back() < p.horizon) grid.push_back(p.horizon);
            e.grid = grid;
            e.dim = res.dim;
            grid_set = true;
        }
        std::vector<int> remap(res.local_tags.size());
        for (std::size_t i = 0; i < res.local_tags.size(); ++i)
            remap[i] = e.catalog.intern(res.local_tags[i]).index;
        for (int m : res.modes) e.grid_modes.push_back(remap[static_cast<std::size_t>(m)]);
        e.grid_states.insert(e.grid_states.end(), res.states.begin(), res.states.end());
        e.jump_counts.push_back(res.jump_count);
    }
    if (!e.failures.empty())
        throw NumericalError("ensemble had failing replications, first: " + e.failures.front());
    e.reps = static_cast<int>(e.jump_counts.size());
    return e;
}

}  // namespace

Ensemble run_ensemble(const SdcpnModel& model, int reps, const ExecParams& params, std::uint64_t seed,
                      int threads) {
    return run_ensemble_impl(
        Backend::sdcpn, model.hash(),
        [&model, &params](RandomBasis& basis) { return simulate_sdcpn(model, params, basis); }, reps,
        params, seed, threads);
}

Ensemble run_ensemble(const GshsModel& model, int reps, const ExecParams& params, std::uint64_t seed,
                      int threads) {
    return run_ensemble_impl(
        Backend::gshs, model.source_hash,
        [&model, &params](RandomBasis& basis) { return simulate_gshs(model, params, basis); }, reps,
        params, seed, threads);
}

Ensemble run_ensemble(const HsdeModel& model, int reps, const ExecParams& params, std::uint64_t seed,
                      int threads) {
    return run_ensemble_impl(
        Backend::hsde, model.source_hash,
        [&model, &params](RandomBasis& basis) { return simulate_hsde(model, params, basis); }, reps,
        params, seed, threads);
}

// ---------------------------------------------------------------------------
// CTMC oracle
// ---------------------------------------------------------------------------

std::vector<double> ctmc_transient(const std::vector<std::vector<double>>& generator,
                                   const std::vector<double>& p0, double t, double tol) {
    std::size_t n = generator.size();
    if (p0.size() != n) throw ConfigError("ctmc_transient dimension mismatch");
    if (t < 0.0) throw ConfigError("ctmc_transient needs t >= 0");
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) q = std::max(q, -generator[i][i]);
    if (q == 0.0 || t == 0.0) return p0;

    // Uniformization: P(t) = sum_k Poisson(qt, k) * U^k p0 with
    // U = I + G/q; the truncation tail of the Poisson weights is below tol.
    std::vector<std::vector<double>> u(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) u[i][j] = (i == j ? 1.0 : 0.0) + generator[i][j] / q;

    double qt = q * t;
    // k limit from the Poisson tail bound
    int k_max = static_cast<int>(qt + 10.0 * std::sqrt(qt) + 50.0);
    for (int guard = 0; guard < 40; ++guard) {
        double log_tail = k_max * std::log(qt) - std::lgamma(k_max + 1.0) - qt;
        if (log_tail < std::log(tol) - 5.0) break;
        k_max += std::max(8, k_max / 4);
    }

    std::vector<double> vk = p0;  // U^k applied to p0 (row-vector convention)
    std::vector<double> acc(n, 0.0);
    double log_w = -qt;  // log Poisson(qt, 0)
    double wsum = 0.0;
    for (int k = 0;; ++k) {
        double w = std::exp(log_w);
        for (std::size_t i = 0; i < n; ++i) acc[i] += w * vk[i];
        wsum += w;
        if (k >= k_max && wsum > 1.0 - tol) break;
        if (k > k_max + 10000) break;
        // vk <- vk * U (distribution row vector times matrix)
        std::vector<double> nxt(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (vk[i] == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) nxt[j] += vk[i] * u[i][j];
        }
        vk = std::move(nxt);
        log_w += std::log(qt) - std::log(static_cast<double>(k + 1));
    }
    // compensate the truncated tail mass
    for (double& v : acc) v /= wsum;
    return acc;
}

CtmcOracle ctmc_oracle(double delta3, double delta4, double delta5, double delta6,
                       const std::vector<double>& t_grid, double tol) {
    for (double d : {delta3, delta4, delta5, delta6})
        if (!(d >= 0.0) || !std::isfinite(d)) throw ConfigError("ctmc_oracle needs finite rates >= 0");
    // states: 0=(W,W), 1=(N,W), 2=(N,N), 3=(W,N); engine W->N rate delta4,
    // N->W delta3; navigation W->N delta6, N->W delta5.
    std::vector<std::vector<double>> g(4, std::vector<double>(4, 0.0));
    auto set = [&g](int i, int j, double r) {
        g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += r;
        g[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] -= r;
    };
    set(0, 1, delta4);
    set(0, 3, delta6);
    set(1, 0, delta3);
    set(1, 2, delta6);
    set(2, 3, delta3);
    set(2, 1, delta5);
    set(3, 0, delta5);
    set(3, 2, delta4);

    CtmcOracle oracle;
    oracle.times = t_grid;
    std::vector<double> p0{1.0, 0.0, 0.0, 0.0};
    for (double t : t_grid) {
        std::vector<double> p = ctmc_transient(g, p0, t, tol);
        oracle.probs.push_back({p[0], p[1], p[2], p[3]});
    }
    return oracle;
}

int airtraffic_system_state(const std::vector<int>& marking) {
    // P3 occupied = engine Not working, P5 occupied = navigation Not working.
    bool engine_down = marking.size() > 2 && marking[2] > 0;
    bool nav_down = marking.size() > 4 && marking[4] > 0;
    if (!engine_down && !nav_down) return 0;
    if (engine_down && !nav_down) return 1;
    if (engine_down && nav_down) return 2;
    return 3;
}

// ---------------------------------------------------------------------------
// comparison
// ---------------------------------------------------------------------------

namespace {

void finalize_report(ComparisonReport& report) {
    report.tests_performed = 0;
    for (const TestRecord& r : report.records)
        if (!r.skipped) ++report.tests_performed;
    report.alpha_corrected =
        report.tests_performed > 0 ? report.alpha / static_cast<double>(report.tests_performed) : report.alpha;
    report.pass = true;
    for (TestRecord& r : report.records) {
        if (r.skipped) continue;
        r.reject = r.p_value < report.alpha_corrected;
        if (r.reject) report.pass = false;
    }
}

}  // namespace

ComparisonReport compare(const Ensemble& a, const Ensemble& b, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("compare needs alpha in (0,1)");
    if (a.grid != b.grid) throw ConfigError("compare needs identical output grids");
    ComparisonReport report;
    report.label = std::string(backend_name(a.backend)) + " vs " + backend_name(b.backend);
    report.alpha = alpha;
    if (a.source_hash != b.source_hash)
        report.notes.push_back("model hashes differ: no recorded mapping relates the ensembles");

    // Align the two catalogs on tag vectors.
    ModeCatalog joint;
    std::vector<int> map_a(static_cast<std::size_t>(a.catalog.size()));
    std::vector<int> map_b(static_cast<std::size_t>(b.catalog.size()));
    for (int i = 0; i < a.catalog.size(); ++i) map_a[static_cast<std::size_t>(i)] = joint.intern(a.catalog.tag(i)).index;
    for (int i = 0; i < b.catalog.size(); ++i) map_b[static_cast<std::size_t>(i)] = joint.intern(b.catalog.tag(i)).index;

    for (std::size_t g = 0; g < a.grid.size(); ++g) {
        std::vector<long long> ca(static_cast<std::size_t>(joint.size()), 0);
        std::vector<long long> cb(static_cast<std::size_t>(joint.size()), 0);
        for (int r = 0; r < a.reps; ++r)
            ++ca[static_cast<std::size_t>(map_a[static_cast<std::size_t>(a.mode_at(r, static_cast<int>(g)))])];
        for (int r = 0; r < b.reps; ++r)
            ++cb[static_cast<std::size_t>(map_b[static_cast<std::size_t>(b.mode_at(r, static_cast<int>(g)))])];
        stats::TestOutcome oc = stats::chi2_homogeneity(ca, cb);
        TestRecord rec;
        rec.time = a.grid[g];
        rec.kind = "occupancy-chi2";
        rec.statistic = oc.statistic;
        rec.p_value = oc.p_value;
        rec.skipped = oc.skipped;
        rec.note = oc.note;
        report.records.push_back(rec);
    }

    int dim = std::min(a.dim, b.dim);
    if (a.dim != b.dim)
        report.notes.push_back("continuous dimensions differ; comparing the common prefix");
    for (int k = 0; k < dim; ++k) {
        for (std::size_t g = 0; g < a.grid.size(); ++g) {
            std::vector<double> xa(static_cast<std::size_t>(a.reps));
            std::vector<double> xb(static_cast<std::size_t>(b.reps));
            for (int r = 0; r < a.reps; ++r) xa[static_cast<std::size_t>(r)] = a.state_at(r, static_cast<int>(g), k);
            for (int r = 0; r < b.reps; ++r) xb[static_cast<std::size_t>(r)] = b.state_at(r, static_cast<int>(g), k);
            stats::TestOutcome oc = stats::ks_two_sample(std::move(xa), std::move(xb));
            TestRecord rec;
            rec.time = a.grid[g];
            rec.kind = "ks[x_" + std::to_string(k + 1) + "]";
            rec.component = k;
            rec.statistic = oc.statistic;
            rec.p_value = oc.p_value;
            rec.skipped = oc.skipped;
            rec.note = oc.note;
            report.records.push_back(rec);
        }
    }

    {
        std::vector<double> ja(a.jump_counts.begin(), a.jump_counts.end());
        std::vector<double> jb(b.jump_counts.begin(), b.jump_counts.end());
        stats::TestOutcome oc = stats::welch_t(ja, jb);
        TestRecord rec;
        rec.time = a.params.horizon;
        rec.kind = "jump-count";
        rec.statistic = oc.statistic;
        rec.p_value = oc.p_value;
        rec.skipped = oc.skipped;
        rec.note = oc.note;
        report.records.push_back(rec);
    }

    finalize_report(report);
    return report;
}

ComparisonReport compare_to_oracle(const Ensemble& e, const CtmcOracle& oracle, double alpha,
                                   const std::function<int(const std::vector<int>&)>& project) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("compare_to_oracle needs alpha in (0,1)");
    if (oracle.times.size() != e.grid.size()) throw ConfigError("oracle grid does not match ensemble grid");
    ComparisonReport report;
    report.label = std::string(backend_name(e.backend)) + " vs ctmc-oracle";
    report.alpha = alpha;

    for (std::size_t g = 0; g < e.grid.size(); ++g) {
        if (e.grid[g] == 0.0) continue;  // the initial distribution is deterministic
        std::vector<long long> counts(4, 0);
        for (int r = 0; r < e.reps; ++r) {
            int state = project(e.catalog.tag(e.mode_at(r, static_cast<int>(g))));
            if (state < 0 || state > 3) throw ConfigError("system-state projection out of range");
            ++counts[static_cast<std::size_t>(state)];
        }
        std::vector<double> probs(oracle.probs[g].begin(), oracle.probs[g].end());
        stats::TestOutcome oc = stats::chi2_gof(counts, probs);
        TestRecord rec;
        rec.time = e.grid[g];
        rec.kind = "oracle-chi2";
        rec.statistic = oc.statistic;
        rec.p_value = oc.p_value;
        rec.skipped = oc.skipped;
        rec.note = oc.note;
        report.records.push_back(rec);
    }

    finalize_report(report);
    return report;
}

// ---------------------------------------------------------------------------
// report I/O
// ---------------------------------------------------------------------------

nlohmann::json ComparisonReport::to_json() const { return report_to_json(*this); }

nlohmann::json report_to_json(const ComparisonReport& report) {
    nlohmann::json j;
    j["label"] = report.label;
    j["alpha"] = report.alpha;
    j["tests_performed"] = report.tests_performed;
    j["alpha_corrected"] = report.alpha_corrected;
    j["pass"] = report.pass;
    j["notes"] = report.notes;
    nlohmann::json recs = nlohmann::json::array();
    for (const TestRecord& r : report.records) {
        nlohmann::json rj;
        rj["time"] = r.time;
        rj["kind"] = r.kind;
        if (r.component >= 0) rj["component"] = r.component;
        rj["statistic"] = r.statistic;
        rj["p_value"] = r.p_value;
        rj["skipped"] = r.skipped;
        rj["reject"] = r.reject;
        if (!r.note.empty()) rj["note"] = r.note;
        recs.push_back(rj);
    }
    j["records"] = recs;
    return j;
}

ComparisonReport report_from_json(const nlohmann::json& j) {
    ComparisonReport r;
    r.label = j.value("label", "");
    r.alpha = j.value("alpha", 0.0);
    r.tests_performed = j.value("tests_performed", 0);
    r.alpha_corrected = j.value("alpha_corrected", 0.0);
    r.pass = j.value("pass", false);
    if (j.contains("notes")) r.notes = j["notes"].get<std::vector<std::string>>();
    for (const auto& rj : j.value("records", nlohmann::json::array())) {
        TestRecord rec;
        rec.time = rj.value("time", 0.0);
        rec.kind = rj.value("kind", "");
        rec.component = rj.value("component", -1);
        rec.statistic = rj.value("statistic", 0.0);
        rec.p_value = rj.value("p_value", 1.0);
        rec.skipped = rj.value("skipped", false);
        rec.reject = rj.value("reject", false);
        rec.note = rj.value("note", "");
        r.records.push_back(rec);
    }
    return r;
}

std::string ComparisonReport::to_table() const {
    std::ostringstream out;
    out << label << "  alpha=" << alpha << "  tests=" << tests_performed
        << "  corrected=" << alpha_corrected << "  " << (pass ? "PASS" : "FAIL") << "\n";
    for (const std::string& n : notes) out << "  note: " << n << "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %10s  %-16s  %12s  %10s  %s\n", "t", "test", "statistic", "p",
                  "verdict");
    out << buf;
    for (const TestRecord& r : records) {
        std::snprintf(buf, sizeof buf, "  %10.4g  %-16s  %12.5g  %10.4g  %s%s\n", r.time,
                      r.kind.c_str(), r.statistic, r.p_value,
                      r.skipped ? "skipped" : (r.reject ? "REJECT" : "ok"),
                      r.note.empty() ? "" : (" (" + r.note + ")").c_str());
        out << buf;
    }
    return out.str();
}

}  // namespace shs
