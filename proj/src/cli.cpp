#include "envkit/cli.hpp"

#include "envkit/certificates.hpp"
#include "envkit/conditions.hpp"
#include "envkit/errors.hpp"
#include "envkit/io.hpp"
#include "envkit/membrane.hpp"
#include "envkit/parallel.hpp"
#include "envkit/sampling.hpp"
#include "envkit/thin_film.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

namespace envkit::cli {

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level_from_env() {
    const char* v = std::getenv("ENVKIT_LOG");
    if (v == nullptr)
        return LogLevel::info;
    const std::string s(v);
    if (s == "quiet")
        return LogLevel::quiet;
    if (s == "debug")
        return LogLevel::debug;
    return LogLevel::info;
}

class Logger {
public:
    Logger(std::ostream& err, LogLevel level) : err_(err), level_(level) {}
    void info(const std::string& msg) const { emit(LogLevel::info, "info", msg); }
    void debug(const std::string& msg) const { emit(LogLevel::debug, "debug", msg); }

private:
    void emit(LogLevel at, const char* tag, const std::string& msg) const {
        if (static_cast<int>(level_) >= static_cast<int>(at))
            err_ << "envkit " << tag << ": " << msg << '\n';
    }
    std::ostream& err_;
    LogLevel level_;
};

/// Parsed command line shared by every subcommand.
struct Options {
    std::string density_path;
    std::string grid_path;
    std::string config_path;
    std::string film_path;
    std::string matrix;
    std::string out;
    std::string format;
    std::string suite = "all";
    int iters = 8;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> gamma;
    std::uint64_t seed = 0;
    int threads = 0;
};

struct Outcome {
    int status = kExitOk;
    std::string text; ///< artifact body
};

/// Job description hashed into config_digest; output paths are excluded so that
/// identical jobs written to different files carry the same digest.
nlohmann::json job_json(const std::string& command, const Options& o, const nlohmann::json& config) {
    nlohmann::json j = {{"command", command}, {"iters", o.iters}, {"seed", o.seed}};
    if (!o.density_path.empty())
        j["density"] = read_json_file(o.density_path);
    if (!o.grid_path.empty())
        j["grid"] = read_json_file(o.grid_path);
    if (!o.film_path.empty())
        j["film"] = read_json_file(o.film_path);
    if (!o.matrix.empty())
        j["matrix"] = o.matrix;
    if (o.alpha)
        j["alpha"] = *o.alpha;
    if (o.beta)
        j["beta"] = *o.beta;
    if (o.gamma)
        j["gamma"] = *o.gamma;
    if (command == "verify")
        j["suite"] = o.suite;
    if (!config.is_null())
        j["config"] = config;
    return j;
}

Density load_density(const std::string& path) {
    if (path.empty())
        throw ConfigError("--density is required");
    return make_density(density_spec_from_json(read_json_file(path)));
}

Mat require_matrix(const Options& o) {
    if (o.matrix.empty())
        throw ConfigError("--matrix is required");
    return parse_matrix_literal(o.matrix);
}

OptConfig opt_from(const nlohmann::json& config, const Options& o, OptConfig defaults = {}) {
    OptConfig cfg = config.contains("opt") ? opt_config_from_json(config["opt"], defaults) : defaults;
    cfg.seed = o.seed;
    return cfg;
}

std::string dump(nlohmann::json artifact, const nlohmann::json& job, std::uint64_t seed) {
    stamp_artifact(artifact, job, seed);
    return artifact.dump(2) + "\n";
}

bool want_csv(const Options& o, bool csv_default) {
    if (o.format.empty())
        return csv_default;
    return o.format == "csv";
}

double constant_or(const std::optional<double>& flag, const std::optional<double>& known, const char* name) {
    if (flag)
        return *flag;
    if (known)
        return *known;
    throw ConfigError(std::string("--") + name + " is required for this density");
}

// ---------------------------------------------------------------------------

Outcome cmd_envelope(const Options& o, const nlohmann::json& config, const nlohmann::json& job, const Logger& log) {
    const Density W = load_density(o.density_path);
    const OptConfig cfg = opt_from(config, o);
    Outcome out;
    if (!o.grid_path.empty()) {
        const GridSpec grid = grid_spec_from_json(read_json_file(o.grid_path));
        log.info("tabulating " + W.name() + " on " + std::to_string(grid.node_count()) + " nodes, " +
                 std::to_string(o.iters) + " iterations");
        const EnvelopeTable table = envelope_table(W, grid, o.iters, cfg);
        out.text = want_csv(o, true) ? table.to_csv() : dump(table.to_json(), job, o.seed);
        return out;
    }
    const Mat F = require_matrix(o);
    log.info("rank-one envelope of " + W.name() + " at [" + o.matrix + "]");
    const EnvelopeResult res = rank_one_envelope(W, F, o.iters, cfg);
    log.debug("mode " + res.mode + ", " + std::to_string(res.iterations) + " iterations");
    if (want_csv(o, false)) {
        std::ostringstream os;
        os << "iteration,value\n";
        for (std::size_t k = 0; k < res.iterates.size(); ++k)
            os << k << ',' << res.iterates[k].to_string() << '\n';
        out.text = os.str();
    } else {
        out.text = dump(to_json(res), job, o.seed);
    }
    return out;
}

Outcome cmd_laminate(const Options& o, const nlohmann::json& job, const Logger& log) {
    const Density W = load_density(o.density_path);
    const Mat F = require_matrix(o);
    const double alpha = constant_or(o.alpha, W.constants().alpha, "alpha");
    const double beta = constant_or(o.beta, W.constants().beta, "beta");
    Outcome out;
    nlohmann::json artifact;
    try {
        const GrowthCertificate c = growth_certificate(W, F, alpha, beta);
        artifact = to_json(c);
        log.info("certificate holds: bound " + format_double(c.bound_value) + " <= " + format_double(c.rhs));
    } catch (const CertificateFailure& e) {
        log.info(e.what());
        artifact = {{"holds", false}, {"failure", e.what()}, {"F", matrix_to_json(F)}, {"alpha", alpha},
                    {"beta", beta}, {"laminate", to_json(svd_split_laminate(F, alpha))}};
        out.status = kExitCheckFailed;
    }
    out.text = dump(artifact, job, o.seed);
    return out;
}

PlaneDensity plane_density(const Density& W, const nlohmann::json& config) {
    if (W.m() == 3 && W.n() == 2)
        return native_plane_density(W);
    const ReduceConfig rc = config.contains("reduce") ? reduce_config_from_json(config["reduce"]) : ReduceConfig{};
    return reduce_density(W, rc);
}

Outcome cmd_membrane(const Options& o, const nlohmann::json& config, const nlohmann::json& job, const Logger& log) {
    const Density W = load_density(o.density_path);
    const Mat xi = require_matrix(o);
    const PlaneDensity W0 = plane_density(W, config);
    BracketConfig bc;
    if (config.contains("opt"))
        bc.opt = opt_config_from_json(config["opt"], bc.opt);
    bc.opt.seed = o.seed;
    if (config.contains("bracket_iters"))
        bc.iterations = config["bracket_iters"].get<int>();
    if (config.contains("box"))
        bc.box = box_config_from_json(config["box"], 3, 2);

    Outcome out;
    const ReducedValue q = W0.query(xi);
    nlohmann::json artifact = {{"density", W0.density.name()},
                               {"provenance", W0.provenance},
                               {"xi", matrix_to_json(xi)},
                               {"w0", ext_to_json(q.value)}};
    if (W0.base)
        artifact["zeta"] = vector_to_json(Vec(q.zeta));
    log.info("bracketing QW0 at [" + o.matrix + "]");
    const Bracket b = qw0_bracket(W0, xi, bc);
    artifact["bracket"] = to_json(b);
    if (!b.consistent)
        out.status = kExitCheckFailed;

    if (o.alpha && (o.beta || o.gamma)) {
        try {
            if (o.beta) {
                artifact["four_triangle"] = to_json(four_triangle_composite(W0.density, xi, *o.alpha, *o.beta));
            } else {
                artifact["four_triangle_stage2"] =
                    to_json(four_triangle_bound_stage2(W0.density, xi, *o.alpha, *o.gamma));
            }
        } catch (const CertificateFailure& e) {
            artifact["four_triangle_failure"] = e.what();
            out.status = kExitCheckFailed;
        }
    }
    if (config.contains("commutation")) {
        const auto& cj = config["commutation"];
        SampleSpec ss = sample_spec_from_json(cj.value("sampler", nlohmann::json::object()),
                                              SampleSpec{3, 2, 2.0, 10, 0, o.seed});
        ss.m = 3;
        ss.n = 2;
        log.info("commutation diagnostic at " + std::to_string(ss.count + ss.structured) + " samples");
        artifact["commutation"] = to_json(commutation_check(W, generate_samples(ss)));
    }
    out.text = dump(artifact, job, o.seed);
    return out;
}

Outcome cmd_reduce(const Options& o, const nlohmann::json& config, const nlohmann::json& job, const Logger& log) {
    const Density W = load_density(o.density_path);
    if (W.m() != 3 || W.n() != 3)
        throw DimensionError("reduce: --density must be 3x3");
    const ReduceConfig rc = config.contains("reduce") ? reduce_config_from_json(config["reduce"]) : ReduceConfig{};
    std::vector<Mat> points;
    if (!o.matrix.empty()) {
        points.push_back(parse_matrix_literal(o.matrix));
    } else {
        SampleSpec ss = sample_spec_from_json(config.value("sampler", nlohmann::json::object()),
                                              SampleSpec{3, 2, 3.0, 20, 5, o.seed});
        ss.m = 3;
        ss.n = 2;
        points = generate_samples(ss);
    }
    log.info("reducing " + W.name() + " at " + std::to_string(points.size()) + " matrices");
    std::vector<ReducedValue> values(points.size());
    parallel_for(points.size(), [&](std::size_t i) { values[i] = reduce_at(W, points[i], rc); });

    Outcome out;
    if (want_csv(o, false)) {
        std::ostringstream os;
        os << "xi,w0,zeta1,zeta2,zeta3,feasible\n";
        for (std::size_t i = 0; i < points.size(); ++i)
            os << '"' << format_matrix_literal(points[i]) << "\"," << values[i].value.to_string() << ','
               << format_double(values[i].zeta(0)) << ',' << format_double(values[i].zeta(1)) << ','
               << format_double(values[i].zeta(2)) << ',' << (values[i].feasible ? 1 : 0) << '\n';
        out.text = os.str();
        return out;
    }
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < points.size(); ++i)
        rows.push_back({{"xi", matrix_to_json(points[i])},
                        {"w0", ext_to_json(values[i].value)},
                        {"zeta", vector_to_json(Vec(values[i].zeta))},
                        {"feasible", values[i].feasible},
                        {"evaluations", values[i].evaluations}});
    out.text = dump({{"density", "reduced_" + W.name()}, {"reduce", to_json(rc)}, {"values", rows}}, job, o.seed);
    return out;
}

Outcome cmd_film(const Options& o, const nlohmann::json& job, const Logger& log) {
    const Density W = load_density(o.density_path);
    if (o.film_path.empty())
        throw ConfigError("film: --film is required");
    const ThinFilmSpec spec = thin_film_spec_from_json(read_json_file(o.film_path));
    log.info("recovery energies of " + W.name() + " at " + std::to_string(spec.eps_list.size()) + " thicknesses");
    const RecoveryReport rep = recovery_convergence(W, spec);
    Outcome out;
    out.status = rep.passed() ? kExitOk : kExitCheckFailed;
    out.text = want_csv(o, false) ? rep.to_csv() : dump({{"film", to_json(spec)}, {"report", rep.to_json()}}, job, o.seed);
    return out;
}

// ---------------------------------------------------------------------------

Density catalog(const std::string& family, int m, int n, nlohmann::json params = nlohmann::json::object()) {
    DensitySpec s;
    s.family = family;
    s.m = m;
    s.n = n;
    s.params = std::move(params);
    return make_density(s);
}

struct SuiteEntry {
    std::string density;
    ConditionReport report;
};

SampleSpec sampler_for(const Density& W, const SampleSpec& base) {
    SampleSpec s = base;
    s.m = W.m();
    s.n = W.n();
    return s;
}

std::vector<SuiteEntry> suite_densities(const SampleSpec& base) {
    std::vector<SuiteEntry> out;
    for (const Density& W : {catalog("quadratic", 2, 2), catalog("quadratic", 3, 3), catalog("kohn_strang", 2, 2)}) {
        const SampleSpec s = sampler_for(W, base);
        out.push_back({W.name(), check_coercivity(W, s)});
        out.push_back({W.name(), check_growth_p(W, s)});
    }
    const Density q = catalog("quadratic", 2, 2);
    out.push_back({q.name(), check_continuity(q, sampler_for(q, base))});
    const Density dw = catalog("double_well", 2, 2);
    out.push_back({dw.name(), check_growth_p(dw, sampler_for(dw, base))});
    return out;
}

std::vector<SuiteEntry> suite_constraints(const SampleSpec& base) {
    std::vector<SuiteEntry> out;
    for (const Density& W : {catalog("det_barrier", 2, 2), catalog("det_barrier", 3, 3)}) {
        const SampleSpec s = sampler_for(W, base);
        out.push_back({W.name(), check_strong_dc(W, s)});
        out.push_back({W.name(), check_continuity(W, s)});
    }
    for (const Density& W : {catalog("weak_det_barrier", 2, 2), catalog("weak_det_barrier", 3, 3)})
        out.push_back({W.name(), check_condition_D(W, W.constants().alpha.value(), W.constants().beta.value(),
                                                   sampler_for(W, base))});
    const Density W0 = catalog("cross_barrier", 3, 2);
    const SampleSpec s = sampler_for(W0, base);
    out.push_back({W0.name(), check_cross_dc(W0, s)});
    out.push_back({W0.name(), check_condition_P1(W0, s)});
    out.push_back({W0.name(), check_condition_P(W0, W0.constants().alpha.value(), W0.constants().beta.value(), s)});
    out.push_back({W0.name(), check_continuity(W0, s, "P0")});
    return out;
}

std::vector<SuiteEntry> suite_ample(const SampleSpec& base) {
    SampleSpec small = base;
    small.count = std::min(small.count, 40);
    small.structured = std::min(small.structured, 8);
    std::vector<SuiteEntry> out;

    const Density q = catalog("quadratic", 2, 2);
    const MeshConfig mesh{{2}, 20, 0.25, 1e-4, false};
    out.push_back({q.name(), check_ampleness(
                                 q, [&](const Mat& F) { return z_envelope_estimate(q, F, mesh).value; },
                                 sampler_for(q, small))});

    const Density wd = catalog("weak_det_barrier", 2, 2);
    const double alpha = wd.constants().alpha.value();
    out.push_back({wd.name(), check_ampleness(
                                  wd, [&](const Mat& F) { return svd_split_laminate(F, alpha).value(wd); },
                                  sampler_for(wd, small))});
    return out;
}

Outcome cmd_verify(const Options& o, const nlohmann::json& config, const nlohmann::json& job, const Logger& log) {
    SampleSpec base;
    if (config.contains("sampler"))
        base = sample_spec_from_json(config["sampler"], base);
    base.seed = o.seed;

    std::vector<SuiteEntry> entries;
    auto add = [&](std::vector<SuiteEntry> more) {
        for (auto& e : more)
            entries.push_back(std::move(e));
    };
    const std::string& s = o.suite;
    if (s != "all" && s != "densities" && s != "constraints" && s != "ample")
        throw ConfigError("verify: unknown suite \"" + s + "\" (densities, constraints, ample, all)");
    if (s == "all" || s == "densities")
        add(suite_densities(base));
    if (s == "all" || s == "constraints")
        add(suite_constraints(base));
    if (s == "all" || s == "ample")
        add(suite_ample(base));

    nlohmann::json reports = nlohmann::json::array();
    std::size_t failed = 0;
    for (const auto& e : entries) {
        nlohmann::json r = to_json(e.report);
        r["density"] = e.density;
        reports.push_back(std::move(r));
        if (!e.report.passed()) {
            ++failed;
            log.info(e.density + " " + e.report.condition_id + ": " + std::to_string(e.report.violation_count) +
                     " violations");
        }
    }
    log.info(std::to_string(entries.size() - failed) + "/" + std::to_string(entries.size()) + " checks passed");
    Outcome out;
    out.status = failed == 0 ? kExitOk : kExitCheckFailed;
    out.text = dump({{"suite", s}, {"sampler", to_json(base)}, {"failed", failed}, {"reports", reports}}, job,
                    o.seed);
    return out;
}

std::string error_report(const std::string& kind, const std::string& message) {
    nlohmann::json j = {{"error", {{"type", kind}, {"message", message}}}, {"tool_version", kToolVersion}};
    return j.dump(2) + "\n";
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Relaxation envelopes of extended-real energy densities", "envkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON job configuration (opt, mesh, reduce, sampler, ...)")
            ->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output path (stdout when omitted)");
        sub->add_option("--seed", o.seed, "Random seed");
        sub->add_option("--threads", o.threads, "Worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);
        sub->add_option("--format", o.format, "Artifact format")->check(CLI::IsMember({"csv", "json"}));
    };
    auto density_opt = [&](CLI::App* sub) {
        sub->add_option("--density", o.density_path, "Density spec (JSON)")->required()->check(CLI::ExistingFile);
    };
    auto constants = [&](CLI::App* sub) {
        sub->add_option("--alpha", o.alpha, "Constant alpha");
        sub->add_option("--beta", o.beta, "Constant beta");
        sub->add_option("--gamma", o.gamma, "Constant gamma");
    };

    CLI::App* envelope = app.add_subcommand("envelope", "Kohn-Strang iterates on a grid or at one matrix");
    density_opt(envelope);
    envelope->add_option("--grid", o.grid_path, "Grid spec (JSON)")->check(CLI::ExistingFile);
    envelope->add_option("--matrix", o.matrix, "Matrix literal, rows split by ';' and entries by ','");
    envelope->add_option("--iters", o.iters, "Iteration count")->check(CLI::Range(0, 1000));
    common(envelope);

    CLI::App* membrane = app.add_subcommand("membrane", "Membrane density, QW0 bracket and four-triangle bounds");
    density_opt(membrane);
    membrane->add_option("--matrix", o.matrix, "3x2 matrix literal")->required();
    constants(membrane);
    common(membrane);

    CLI::App* laminate = app.add_subcommand("laminate", "Growth certificate from the singular-value laminate");
    density_opt(laminate);
    laminate->add_option("--matrix", o.matrix, "Matrix literal")->required();
    constants(laminate);
    common(laminate);

    CLI::App* verify = app.add_subcommand("verify", "Sampled condition checks over the density catalog");
    verify->add_option("--suite", o.suite, "densities, constraints, ample or all")
        ->check(CLI::IsMember({"densities", "constraints", "ample", "all"}));
    common(verify);

    CLI::App* reduce = app.add_subcommand("reduce", "Membrane reduction inf over the third column");
    density_opt(reduce);
    reduce->add_option("--matrix", o.matrix, "3x2 matrix literal (sampled set when omitted)");
    common(reduce);

    CLI::App* film = app.add_subcommand("film", "Thin-film recovery energies against their limit");
    density_opt(film);
    film->add_option("--film", o.film_path, "Thin-film setup (JSON)")->required()->check(CLI::ExistingFile);
    common(film);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "envkit: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    const Logger log(err, log_level_from_env());
    set_thread_limit(o.threads);
    const std::string command = app.get_subcommands().front()->get_name();

    nlohmann::json config;
    nlohmann::json job;
    try {
        config = o.config_path.empty() ? nlohmann::json::object() : read_json_file(o.config_path);
        if (!config.is_object())
            throw ConfigError("--config must hold a JSON object");
        job = job_json(command, o, config);
    } catch (const Error& e) {
        err << "envkit " << command << ": " << e.what() << '\n';
        return kExitUsage;
    }
    log.debug("config digest " + fnv1a_hex(job.dump()));

    Outcome result;
    try {
        if (command == "envelope")
            result = cmd_envelope(o, config, job, log);
        else if (command == "membrane")
            result = cmd_membrane(o, config, job, log);
        else if (command == "laminate")
            result = cmd_laminate(o, job, log);
        else if (command == "verify")
            result = cmd_verify(o, config, job, log);
        else if (command == "reduce")
            result = cmd_reduce(o, config, job, log);
        else
            result = cmd_film(o, job, log);
    } catch (const ConfigError& e) {
        err << "envkit " << command << ": " << e.what() << "\n\n" << app.get_subcommand(command)->help();
        return kExitUsage;
    } catch (const DimensionError& e) {
        err << "envkit " << command << ": " << e.what() << '\n';
        return kExitUsage;
    } catch (const PreconditionError& e) {
        out << error_report("precondition", e.what());
        return kExitError;
    } catch (const ResourceError& e) {
        out << error_report("resource", e.what());
        return kExitError;
    } catch (const std::exception& e) {
        out << error_report("numerical", e.what());
        return kExitError;
    }

    try {
        if (o.out.empty())
            out << result.text;
        else
            write_text_file(o.out, result.text);
    } catch (const Error& e) {
        out << error_report("io", e.what());
        return kExitError;
    }
    if (!o.out.empty())
        log.info("wrote " + o.out);
    return result.status;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

} // namespace envkit::cli
