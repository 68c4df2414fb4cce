// kbf: black-box endpoint fingerprinting and audit CLI.
//
// Exit codes: 0 = success / SAME, 1 = usage or config error,
//             2 = DIFFERENT, 3 = audit aborted.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "kbf/audit.hpp"
#include "kbf/config.hpp"
#include "kbf/enroll.hpp"
#include "kbf/errors.hpp"
#include "kbf/power.hpp"
#include "kbf/text.hpp"

namespace {

std::string now_utc() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw kbf::ConfigError("cannot write " + path);
    out << content;
}

std::vector<double> parse_grid(const std::string& text) {
    // "lo:hi:step" or a comma list
    std::vector<double> grid;
    if (text.find(':') != std::string::npos) {
        double lo = 0;
        double hi = 0;
        double step = 0;
        char c1 = 0;
        char c2 = 0;
        std::istringstream in(text);
        if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0) {
            throw kbf::ConfigError("bad grid spec: " + text);
        }
        for (double v = lo; v <= hi + 1e-12; v += step) grid.push_back(v);
    } else {
        std::istringstream in(text);
        std::string item;
        while (std::getline(in, item, ',')) grid.push_back(std::stod(item));
    }
    if (grid.empty()) throw kbf::ConfigError("empty grid");
    return grid;
}

std::vector<std::string> split_names(const std::string& text) {
    std::vector<std::string> names;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) names.push_back(item);
    }
    return names;
}

int cmd_enroll(const std::string& config_path, const std::string& reference,
               const std::string& contrast, const std::string& out_path) {
    auto config = kbf::load_config(config_path);
    auto registry = kbf::load_registry_for(config);
    kbf::EndpointSet endpoints(config, registry);

    kbf::EnrollOptions opts = config.enroll;
    if (!config.deterministic_time) opts.created_at = now_utc();

    kbf::Endpoint* contrast_ep = contrast.empty() ? nullptr : &endpoints.get(contrast);
    std::vector<kbf::DiscoveryState> trace;
    kbf::Fingerprint fp =
        kbf::enroll(endpoints.get(reference), contrast_ep, registry, opts, &trace);

    for (const auto& state : trace) {
        std::cout << state.domain_id << ": yields [";
        for (std::size_t i = 0; i < state.stable_count_history.size(); ++i) {
            if (i) std::cout << ", ";
            std::cout << state.stable_count_history[i];
        }
        std::cout << "]\n";
    }
    kbf::save_fingerprint(fp, out_path);
    std::cout << "enrolled N=" << fp.size() << " k_self=" << fp.k_self
              << " p0=" << kbf::format_double(fp.p0)
              << " digest=" << kbf::fingerprint_digest(fp) << "\n";
    std::cout << "fingerprint written to " << out_path << "\n";
    return 0;
}

int cmd_audit(const std::string& config_path, const std::string& suspect,
              const std::string& fingerprint_path, bool two_round, bool estimate_pi,
              const std::string& reference, const std::string& substitute,
              const std::string& pool_names, const std::string& pool_rates,
              const std::string& report_path, const std::string& markdown_path) {
    auto config = kbf::load_config(config_path);
    auto registry = kbf::load_registry_for(config);
    kbf::EndpointSet endpoints(config, registry);
    kbf::Fingerprint fp = kbf::load_fingerprint(fingerprint_path, registry);

    kbf::AuditOptions opts;
    opts.batch_size = config.batch_size;
    opts.max_in_flight = config.max_in_flight;

    kbf::Endpoint& sus = endpoints.get(suspect);

    std::optional<kbf::AuditOutcome> single;
    std::optional<kbf::TwoRoundOutcome> tr;
    if (two_round || estimate_pi) {
        tr = kbf::audit_two_round(sus, fp, registry, config.calibration, opts);
    } else {
        single = kbf::audit_once(sus, fp, registry, config.calibration, opts);
    }

    std::optional<kbf::stats::PiEstimate> pi;
    if (estimate_pi) {
        if (!substitute.empty()) {
            if (reference.empty()) {
                throw kbf::ConfigError("--estimate-pi with --substitute requires --reference "
                                       "for fresh reference queries");
            }
            auto table = kbf::build_mismatch_table(endpoints.get(reference),
                                                   endpoints.get(substitute), fp, registry, opts);
            auto est = kbf::stats::estimate_pi_known(table, tr->T, tr->W1);
            if (est.point) {
                est.se = kbf::stats::estimate_pi_se(table, *est.point, 2000, config.seed);
            }
            pi = est;
        } else if (!pool_names.empty() || !pool_rates.empty()) {
            std::vector<double> rates;
            if (!pool_rates.empty()) {
                for (const auto& r : split_names(pool_rates)) rates.push_back(std::stod(r));
            } else {
                for (const auto& name : split_names(pool_names)) {
                    auto outcome = kbf::audit_once(endpoints.get(name), fp, registry,
                                                   config.calibration, opts);
                    rates.push_back(outcome.r_disc);
                }
            }
            const double pR = static_cast<double>(fp.k_self) / static_cast<double>(fp.size());
            const double lo = *std::min_element(rates.begin(), rates.end());
            const double hi = *std::max_element(rates.begin(), rates.end());
            pi = kbf::stats::pi_interval_unknown(tr->W1, fp.size(), pR, lo, hi);
        } else {
            throw kbf::ConfigError("--estimate-pi requires --substitute or --pool/--pool-rates");
        }
    }

    const long long tokens = sus.budget().total_tokens();
    const std::string stamp = config.deterministic_time ? std::string() : now_utc();
    kbf::AuditReport report = kbf::assemble_report(fp, sus.identity(), std::move(single),
                                                   std::move(tr), std::move(pi),
                                                   config.calibration, tokens, stamp);

    const std::string json = kbf::report_to_json(report);
    const std::string markdown = kbf::report_to_markdown(report);
    if (!report_path.empty()) write_file(report_path, json);
    if (!markdown_path.empty()) write_file(markdown_path, markdown);
    std::cout << markdown;
    return kbf::report_exit_code(report);
}

int cmd_power(const std::string& profile_path, const std::vector<double>& from_table,
              const std::string& grid_spec, int trials, double alpha, double gamma,
              bool single_round, const std::string& pool_rates, uint64_t seed,
              const std::string& out_csv) {
    if (trials < 1) throw kbf::ConfigError("--trials must be >= 1");

    kbf::power::PairProfile profile;
    if (!profile_path.empty()) {
        profile = kbf::power::load_profile(profile_path);
    } else if (from_table.size() == 4) {
        profile = kbf::power::profile_from_rates(
            "from-table", static_cast<long long>(from_table[0]),
            static_cast<long long>(from_table[1]), from_table[2], from_table[3]);
    } else {
        throw kbf::ConfigError("provide --profile or --from-table N n01 pS pR");
    }

    const double p0 = kbf::power::simulation_p0(profile, gamma);
    std::vector<double> grid = parse_grid(grid_spec);

    auto power = kbf::power::mdr_curve(profile, p0, grid, trials, alpha, !single_round, seed,
                                       static_cast<int>(std::thread::hardware_concurrency()));

    kbf::power::CandidatePool pool;
    if (!pool_rates.empty()) {
        for (const auto& r : split_names(pool_rates)) {
            pool.substitute_rates.push_back(std::stod(r));
        }
    }
    std::vector<double> est_grid;
    for (double g : grid) {
        if (g <= 0.95 + 1e-12 && g >= 0.05 - 1e-12) est_grid.push_back(g);
    }
    auto sweep = kbf::power::estimator_sweep(profile, est_grid, trials, pool, seed,
                                             static_cast<int>(std::thread::hardware_concurrency()));

    const std::string csv = kbf::power::results_to_csv(power, sweep);
    if (!out_csv.empty()) write_file(out_csv, csv);

    std::cout << "profile " << profile.label << ": N=" << profile.N
              << " n01=" << profile.table.n01 << " n10=" << profile.table.n10
              << " n11=" << profile.table.n11 << " p0=" << kbf::format_double(p0) << "\n";
    const auto show = [](const char* name, const std::optional<double>& v) {
        std::cout << name << "=" << (v ? kbf::format_double(*v) : std::string("none")) << "\n";
    };
    show("MDR_65", power.mdr_65);
    show("MDR_80", power.mdr_80);
    show("MDR_95", power.mdr_95);
    if (out_csv.empty()) std::cout << csv;
    return 0;
}

int cmd_report(const std::string& in_path, const std::string& out_path) {
    std::ifstream in(in_path);
    if (!in) throw kbf::ConfigError("cannot open report: " + in_path);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto report = kbf::report_from_json(ss.str());
    const std::string markdown = kbf::report_to_markdown(report);
    if (!out_path.empty()) {
        write_file(out_path, markdown);
    } else {
        std::cout << markdown;
    }
    return 0;
}

int cmd_registry_lint(const std::string& registry_path) {
    try {
        auto registry = registry_path.empty() ? kbf::DomainRegistry::builtin()
                                              : kbf::DomainRegistry::load_file(registry_path);
        std::cout << "registry OK: " << registry.size() << " domains\n";
        return 0;
    } catch (const kbf::ConfigError& e) {
        std::cout << "registry INVALID: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-boundary fingerprinting and black-box endpoint auditing"};
    app.require_subcommand(1);

    // enroll
    auto* enroll = app.add_subcommand("enroll", "Build a reference fingerprint");
    std::string config_path;
    std::string reference;
    std::string contrast;
    std::string out_path = "fingerprint.json";
    enroll->add_option("--config", config_path, "Audit config file")->required();
    enroll->add_option("--reference", reference, "Reference endpoint name")->required();
    enroll->add_option("--contrast", contrast, "Contrast endpoint for screening");
    enroll->add_option("--out", out_path, "Fingerprint output path");

    // audit
    auto* audit = app.add_subcommand("audit", "Audit a suspect endpoint");
    std::string suspect;
    std::string fingerprint_path;
    bool two_round = false;
    bool estimate_pi = false;
    std::string audit_reference;
    std::string substitute;
    std::string pool_names;
    std::string pool_rates;
    std::string report_path;
    std::string markdown_path;
    audit->add_option("--config", config_path, "Audit config file")->required();
    audit->add_option("--suspect", suspect, "Suspect endpoint name")->required();
    audit->add_option("--fingerprint", fingerprint_path, "Fingerprint path")->required();
    audit->add_flag("--two-round", two_round, "Two-round audit for mixed routing");
    audit->add_flag("--estimate-pi", estimate_pi, "Estimate the routed fraction");
    audit->add_option("--reference", audit_reference,
                      "Reference endpoint (fresh queries for the mismatch table)");
    audit->add_option("--substitute", substitute, "Known substitute endpoint");
    audit->add_option("--pool", pool_names, "Candidate substitute endpoints, comma-separated");
    audit->add_option("--pool-rates", pool_rates,
                      "Candidate substitute mismatch rates, comma-separated");
    audit->add_option("--report-out", report_path, "Structured report output path");
    audit->add_option("--markdown-out", markdown_path, "Markdown report output path");

    // power
    auto* power = app.add_subcommand("power", "Monte Carlo routing-power analysis");
    std::string profile_path;
    std::vector<double> from_table;
    std::string grid_spec = "0.05:1.0:0.05";
    int trials = 10000;
    double alpha = 0.05;
    double gamma = 0.99;
    bool single_round = false;
    uint64_t seed = 0;
    std::string out_csv;
    power->add_option("--profile", profile_path, "Pair profile JSON");
    power->add_option("--from-table", from_table, "N n01 pS pR")->expected(4);
    power->add_option("--grid", grid_spec, "Routing-fraction grid (lo:hi:step or list)");
    power->add_option("--trials", trials, "Monte Carlo trials per grid point");
    power->add_option("--alpha", alpha, "Significance level");
    power->add_option("--gamma", gamma, "Calibration confidence for the simulated p0");
    power->add_flag("--single-round", single_round, "Use the single-round test");
    power->add_option("--pool-rates", pool_rates, "Scenario B pool rates, comma-separated");
    power->add_option("--seed", seed, "Simulation seed");
    power->add_option("--out", out_csv, "CSV output path");

    // report
    auto* report = app.add_subcommand("report", "Re-render a stored report as Markdown");
    std::string report_in;
    std::string report_md_out;
    report->add_option("--in", report_in, "Structured report path")->required();
    report->add_option("--out", report_md_out, "Markdown output path");

    // registry-lint
    auto* lint = app.add_subcommand("registry-lint", "Validate a domain registry file");
    std::string lint_registry_path;
    lint->add_option("--registry", lint_registry_path, "Registry path (default: builtin)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*enroll) return cmd_enroll(config_path, reference, contrast, out_path);
        if (*audit) {
            return cmd_audit(config_path, suspect, fingerprint_path, two_round, estimate_pi,
                             audit_reference, substitute, pool_names, pool_rates, report_path,
                             markdown_path);
        }
        if (*power) {
            return cmd_power(profile_path, from_table, grid_spec, trials, alpha, gamma,
                             single_round, pool_rates, seed, out_csv);
        }
        if (*report) return cmd_report(report_in, report_md_out);
        if (*lint) return cmd_registry_lint(lint_registry_path);
    } catch (const kbf::AuditAborted& e) {
        std::cerr << "audit aborted: " << e.what() << "\n";
        return 3;
    } catch (const kbf::EnrollmentFailed& e) {
        std::cerr << "enrollment failed: " << e.what() << "\n";
        return 1;
    } catch (const kbf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
