// riccilab: batch experiment runner and report emitter.
//
//   riccilab <verb> --config FILE [--out DIR] [--jobs N] [--seed S]
//   riccilab report [RUN_DIR...] [--out DIR]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure (a
// diagnostic.txt is written next to the run's manifest).

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "cli/config.hpp"
#include "cli/experiments.hpp"

namespace fs = std::filesystem;
using namespace riccilab;
using namespace riccilab::cli;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string sha256(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    std::ostringstream o;
    for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return o.str();
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream o;
    o << in.rdbuf();
    return o.str();
}

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

// --- schema -----------------------------------------------------------------------

enum class T { number, integer, boolean, string, interval, modes, pairs, numbers };

using Schema = std::map<std::string, T>;

const std::map<std::string, Schema>& schemas() {
    static const Schema flow = {{"initial", T::modes},       {"initial_from", T::string}, {"tau", T::interval},
                                {"sample_dt", T::number},    {"rtol", T::number},         {"atol", T::number},
                                {"dt0", T::number},          {"fixed_step", T::boolean},  {"nonlinear", T::boolean},
                                {"entropy", T::boolean},     {"validity_threshold", T::number},
                                {"plot", T::boolean}};
    auto with = [](Schema s, Schema extra) {
        s.insert(extra.begin(), extra.end());
        return s;
    };
    static const std::map<std::string, Schema> m = {
        {"spectrum", {{"operator", T::string}, {"plot", T::boolean}, {"tolerance", T::number}}},
        {"commutators", {{"samples", T::integer}, {"tolerance", T::number}, {"inject_fault", T::string}}},
        {"entropy",
         {{"modes", T::modes}, {"s", T::numbers}, {"relative_tolerance", T::number}, {"generic_tolerance", T::number}}},
        {"flow", flow},
        {"rates", with(flow, {{"fit", T::interval}, {"quantity", T::string}, {"expect", T::interval},
                              {"compare_direct", T::boolean}})},
        {"dynamics", with(flow, {{"delta", T::number}, {"pairs", T::pairs}})},
        {"construct",
         {{"direction", T::string}, {"prescribed", T::modes}, {"compare", T::modes}, {"horizon", T::number},
          {"span", T::number}, {"step", T::number}, {"second_horizon", T::number}, {"plot", T::boolean}}},
    };
    return m;
}

void check_type(const Node& v, T t) {
    switch (t) {
        case T::number: v.as_number(); break;
        case T::integer: v.as_integer(); break;
        case T::boolean:
            if (!v.raw().is_boolean()) v.fail("expected a boolean");
            break;
        case T::string: v.as_string(); break;
        case T::interval: {
            const auto a = v.items();
            if (a.size() != 2) v.fail("expected [lo, hi]");
            if (!(a[0].as_number() < a[1].as_number())) v.fail("expected lo < hi");
            break;
        }
        case T::numbers:
            for (const Node& x : v.items()) x.as_number();
            break;
        case T::pairs:
            for (const Node& x : v.items()) {
                const auto a = x.items();
                if (a.size() != 2) x.fail("expected [V1, V2]");
                a[0].as_string();
                a[1].as_string();
            }
            break;
        case T::modes:
            for (const Node& x : v.items()) {
                x.allow({"l", "class", "index", "a"});
                x.number("a");
                if (x.has("index")) x.integer("index");
                else x.integer("l");
                if (x.has("class")) x.choice("class", "", {"essential", "generic"});
            }
            break;
    }
}

struct Experiment {
    RunContext ctx;
    json config;  // fully resolved experiment object
};

/// Validates the whole config file before anything runs.
std::vector<Experiment> parse_config(const json& root, const std::string& verb, const std::optional<std::uint64_t>& seed) {
    const Node top(root, "config");
    std::vector<std::pair<json, std::string>> raw;
    json defaults = json::object();
    if (top.has("experiments")) {
        top.allow({"experiments", "background", "seed"});
        if (top.has("background")) defaults["background"] = root["background"];
        if (top.has("seed")) defaults["seed"] = root["seed"];
        const auto list = top.at("experiments").items();
        if (list.empty()) top.at("experiments").fail("empty experiment list");
        for (const Node& e : list) raw.emplace_back(e.raw(), e.path());
    } else {
        raw.emplace_back(root, "config");
    }
    std::vector<Experiment> out;
    std::set<std::string> names;
    for (auto& [j, path] : raw) {
        json e = j;
        for (const auto& [k, v] : defaults.items())
            if (!e.contains(k)) e[k] = v;
        const Node n(e, path);
        n.allow({"name", "kind", "background", "seed", "params"});
        Experiment x;
        x.ctx.kind = n.string("kind", verb);
        if (x.ctx.kind != verb)
            throw ConfigError(path + ".kind: '" + x.ctx.kind + "' does not match verb '" + verb + "'");
        x.ctx.name = n.string("name", verb);
        if (x.ctx.name.empty() || x.ctx.name.find_first_of("/\\") != std::string::npos || x.ctx.name[0] == '.')
            n.at("name").fail("must be a plain directory name");
        if (!names.insert(x.ctx.name).second) n.at("name").fail("duplicate experiment name");
        if (n.has("background")) {
            const Node b = n.at("background");
            b.allow({"n", "lmax"});
            x.ctx.n = b.integer("n", 3);
            x.ctx.lmax = b.integer("lmax", 12);
        }
        if (x.ctx.n < 2 || x.ctx.n > 12) n.at("background").fail("n must lie in [2, 12]");
        if (x.ctx.lmax < 4 || x.ctx.lmax > 40) n.at("background").fail("lmax must lie in [4, 40]");
        x.ctx.seed = seed ? *seed : static_cast<std::uint64_t>(n.integer("seed", 1));
        const Schema& schema = schemas().at(verb);
        if (n.has("params")) {
            const Node p = n.at("params");
            if (!p.raw().is_object()) p.fail("expected an object");
            for (const auto& [k, v] : p.raw().items()) {
                const auto it = schema.find(k);
                if (it == schema.end()) throw ConfigError(p.path() + ": unknown key '" + k + "'");
                check_type(p.at(k), it->second);
            }
        } else {
            e["params"] = json::object();
        }
        if (verb == "construct" && !Node(e["params"], path + ".params").has("prescribed"))
            throw ConfigError(path + ".params: missing key 'prescribed'");
        e["name"] = x.ctx.name;
        e["kind"] = x.ctx.kind;
        e["background"] = {{"n", x.ctx.n}, {"lmax", x.ctx.lmax}};
        e["seed"] = x.ctx.seed;
        x.config = e;
        out.push_back(std::move(x));
    }
    return out;
}

// --- running ----------------------------------------------------------------------

json versions() {
    return {{"riccilab", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"cli11", CLI11_VERSION},
            {"compiler", __VERSION__}};
}

json checks_json(const std::vector<Check>& cs) {
    json a = json::array();
    for (const auto& c : cs) {
        auto num = [](double v) { return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : v < 0 ? "-inf" : "nan"); };
        a.push_back({{"name", c.name},
                     {"measured", num(c.measured)},
                     {"bound", num(c.bound)},
                     {"relation", c.relation},
                     {"status", c.status},
                     {"note", c.note}});
    }
    return a;
}

int run_one(const Experiment& x, const fs::path& root, std::mutex& log) {
    const fs::path dir = root / x.ctx.name;
    fs::create_directories(dir);
    const Node params(x.config.at("params"), x.ctx.name + ".params");
    Artifacts art;
    const auto t0 = std::chrono::steady_clock::now();
    int code = 0;
    std::string error_kind, error_message;
    try {
        const std::string& k = x.ctx.kind;
        if (k == "spectrum") run_spectrum(x.ctx, params, art);
        else if (k == "commutators") run_commutators(x.ctx, params, art);
        else if (k == "entropy") run_entropy(x.ctx, params, art);
        else if (k == "flow") run_flow(x.ctx, params, art);
        else if (k == "rates") run_rates(x.ctx, params, art);
        else if (k == "dynamics") run_dynamics(x.ctx, params, art);
        else if (k == "construct") run_construct(x.ctx, params, art);
    } catch (const ConfigError& e) {
        code = kExitConfig, error_kind = "ConfigError", error_message = e.what();
    } catch (const ParameterError& e) {
        code = kExitConfig, error_kind = "ParameterError", error_message = e.what();
    } catch (const NumericalError& e) {
        code = kExitNumerical, error_kind = "NumericalError", error_message = e.what();
    } catch (const DegenerateMetricError& e) {
        code = kExitNumerical, error_kind = "DegenerateMetricError", error_message = e.what();
    } catch (const CapabilityError& e) {
        code = kExitNumerical, error_kind = "CapabilityError", error_message = e.what();
    } catch (const std::exception& e) {
        code = kExitNumerical, error_kind = "std::exception", error_message = e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json files = json::object();
    std::string index;
    for (const auto& [name, content] : art.files) {
        write_file(dir / name, content);
        const std::string h = sha256(content);
        files[name] = h;
        index += name + ":" + h + "\n";
    }
    if (code != 0) {
        std::ostringstream d;
        d << "experiment: " << x.ctx.name << "\nkind: " << x.ctx.kind << "\nexit_code: " << code
          << "\nerror: " << error_kind << "\nmessage: " << error_message << "\nconfig:\n"
          << x.config.dump(2) << "\n";
        write_file(dir / "diagnostic.txt", d.str());
    }
    json manifest = {{"name", x.ctx.name},
                     {"kind", x.ctx.kind},
                     {"status", code == 0 ? "ok" : "error"},
                     {"exit_code", code},
                     {"config", x.config},
                     {"seed", x.ctx.seed},
                     {"versions", versions()},
                     {"wall_time_seconds", wall},
                     {"files", files},
                     {"content_hash", sha256(index)},
                     {"checks", checks_json(art.checks)}};
    if (code != 0) manifest["error"] = {{"type", error_kind}, {"message", error_message}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    int fails = 0;
    for (const auto& c : art.checks) fails += c.status == "FAIL";
    std::lock_guard<std::mutex> lk(log);
    std::cout << std::left << std::setw(28) << x.ctx.name << ' ' << std::setw(12) << x.ctx.kind
              << (code ? "ERROR " + error_kind + ": " + error_message
                       : std::to_string(art.checks.size()) + " checks, " + std::to_string(fails) + " failed")
              << "  (" << std::fixed << std::setprecision(2) << wall << " s)\n"
              << std::defaultfloat;
    return code;
}

int run_all(const std::vector<Experiment>& xs, const fs::path& root, int jobs) {
    std::atomic<std::size_t> next{0};
    std::atomic<int> worst{0};
    std::mutex log;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < xs.size();) {
            const int c = run_one(xs[i], root, log);
            int w = worst.load();
            while (c > w && !worst.compare_exchange_weak(w, c)) {
            }
        }
    };
    const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(xs.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return worst.load();
}

// --- report -----------------------------------------------------------------------

// Numbers print as JSON; non-finite values are stored as strings.
std::string show(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

int emit_report(std::vector<std::string> dirs, const fs::path& out) {
    if (dirs.empty()) {
        if (fs::is_directory(out))
            for (const auto& e : fs::directory_iterator(out))
                if (fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path().string());
        std::sort(dirs.begin(), dirs.end());
    }
    if (dirs.empty()) throw ConfigError("report: no run directories with a manifest.json under " + out.string());

    std::ostringstream r;
    int total = 0, fails = 0, na = 0, errors = 0;
    std::ostringstream body;
    for (const auto& d : dirs) {
        const fs::path mp = fs::path(d) / "manifest.json";
        if (!fs::exists(mp)) throw ConfigError("report: missing artifact " + mp.string());
        json m;
        try {
            m = json::parse(read_file(mp));
        } catch (const json::parse_error& e) {
            throw ConfigError("report: unreadable manifest " + mp.string());
        }
        body << "\n" << m.value("name", d) << "  [" << m.value("kind", "?") << "]  content "
             << m.value("content_hash", std::string("?")).substr(0, 16) << "\n";
        if (m.value("status", "") != "ok") {
            ++errors;
            body << "  ERROR  " << m["error"].value("type", "") << ": " << m["error"].value("message", "") << "\n";
        }
        // Artifact integrity: every hashed file must still match.
        for (const auto& [name, h] : m["files"].items()) {
            const fs::path f = fs::path(d) / name;
            const bool ok = fs::exists(f) && sha256(read_file(f)) == h.get<std::string>();
            ++total;
            if (!ok) {
                ++fails;
                body << "  FAIL   artifact_integrity  " << name << "\n";
            }
        }
        for (const auto& c : m["checks"]) {
            const std::string st = c.value("status", "");
            if (st == "INFO") {
                body << "  info   " << std::left << std::setw(40) << c.value("name", "") << ' ' << show(c["measured"]);
                if (!c.value("note", "").empty()) body << "  (" << c.value("note", "") << ")";
                body << "\n";
                continue;
            }
            ++total;
            fails += st == "FAIL";
            na += st == "N/A";
            body << "  " << std::left << std::setw(6) << st << ' ' << std::setw(40) << c.value("name", "") << ' '
                 << std::setw(14) << show(c["measured"]) << ' ' << c.value("relation", "");
            if (c.value("relation", "").rfind("in ", 0) != 0) body << ' ' << show(c["bound"]);
            if (!c.value("note", "").empty()) body << "  (" << c.value("note", "") << ")";
            body << "\n";
        }
    }
    r << "riccilab report\n"
      << "runs: " << dirs.size() << "  checks: " << total << "  failures: " << fails << "  not-applicable: " << na
      << "  run-errors: " << errors << "\n"
      << body.str() << "\nfailures: " << fails + errors << "\n";
    fs::create_directories(out);
    write_file(out / "report.txt", r.str());
    std::cout << r.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"riccilab: spectral, entropy, flow and construction experiments on round-sphere shrinkers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config, out = "riccilab_out";
    int jobs = 1;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> run_dirs;
    const std::vector<std::string> verbs = {"spectrum", "commutators", "entropy", "flow",
                                            "construct", "rates", "dynamics"};
    std::map<std::string, CLI::App*> subs;
    for (const auto& v : verbs) {
        CLI::App* s = app.add_subcommand(v, "run " + v + " experiments from a config file");
        s->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        s->add_option("--out", out, "output directory (env RICCILAB_OUT overrides)");
        s->add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);
        s->add_option("--seed", seed, "seed overriding the config");
        subs[v] = s;
    }
    CLI::App* rep = app.add_subcommand("report", "consolidate run manifests into report.txt");
    rep->add_option("runs", run_dirs, "run directories (default: every run under --out)");
    rep->add_option("--out", out, "directory holding runs and receiving report.txt");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    if (const char* env = std::getenv("RICCILAB_OUT"); env && *env) out = env;

    try {
        if (rep->parsed()) return emit_report(run_dirs, out);
        for (const auto& [verb, s] : subs) {
            if (!s->parsed()) continue;
            const std::vector<Experiment> xs = parse_config(load_json(config), verb, seed);
            fs::create_directories(out);
            return run_all(xs, out, jobs);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
