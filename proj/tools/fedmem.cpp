// Command-line front end: partition, train, generate, audit, sweep, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmem/harness.hpp"

namespace fs = std::filesystem;
using namespace fedmem;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> clients;
    std::vector<std::string> backend;
    std::string regime;
    std::string out_dir = "fedmem-out";
    std::string corpus;
    std::string task;
    std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_corpus)
{
    cmd->add_option("--config", f.config, "JSON config file");
    cmd->add_option("--seed", f.seed, "base seed (trials use seed + t)");
    cmd->add_option("--clients", f.clients, "number of clients L");
    cmd->add_option("--backend", f.backend, "builtin | http <url>")->expected(1, 2);
    cmd->add_option("--regime", f.regime, "fl | cl | both");
    cmd->add_option("--out-dir", f.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--task", f.task, "summarization | dialog | qa | classification");
    cmd->add_option("--workers", f.workers, "worker threads");
    auto* corpus = cmd->add_option("--corpus", f.corpus, "line-delimited JSON records");
    if (needs_corpus) corpus->required();
}

/// Config file, then FEDMEM_* variables, then flags.
AuditConfig resolve_config(const CommonFlags& f)
{
    std::optional<fs::path> path;
    if (!f.config.empty()) path = f.config;
    AuditConfig cfg = load_audit_config(path);
    if (f.seed) {
        cfg.seed = *f.seed;
        cfg.partition.seed = *f.seed;
        cfg.decoding.seed = *f.seed;
    }
    if (f.clients) cfg.partition.num_clients = *f.clients;
    if (f.workers) {
        cfg.workers = *f.workers;
        cfg.train.workers = *f.workers;
    }
    if (!f.regime.empty()) {
        auto r = parse_regime_selection(f.regime);
        if (!r) fail(ErrorCode::config_error, "unknown regime '" + f.regime + "'");
        cfg.regime = *r;
    }
    if (!f.task.empty()) {
        auto t = parse_task(f.task);
        if (!t) fail(ErrorCode::config_error, "unknown task '" + f.task + "'");
        cfg.task = *t;
    }
    if (!f.backend.empty()) {
        if (f.backend[0] == "builtin" && f.backend.size() == 1) {
            cfg.backend.kind = BackendConfig::Kind::builtin;
        } else if (f.backend[0] == "http" && f.backend.size() == 2) {
            cfg.backend.kind = BackendConfig::Kind::http;
            cfg.backend.url = f.backend[1];
        } else {
            fail(ErrorCode::config_error, "--backend expects 'builtin' or 'http <url>'");
        }
    }
    cfg.validate();
    return cfg;
}

/// Pre-partitioned records are grouped by their client field; others are
/// partitioned with the configured scheme.
std::vector<ClientDataset> load_clients(const std::string& path, const AuditConfig& cfg, bool explicit_clients)
{
    bool has_client = false;
    auto records = read_records_file(path, &has_client);
    if (records.empty()) fail(ErrorCode::data_error, path + " holds no records");
    if (!has_client) return partition(records, cfg.partition);
    auto clients = group_by_client(records);
    if (explicit_clients && clients.size() != cfg.partition.num_clients) {
        fail(ErrorCode::data_error, path + " is partitioned into " + std::to_string(clients.size()) +
                                        " clients, not " + std::to_string(cfg.partition.num_clients));
    }
    return clients;
}

std::unique_ptr<GenerationBackend> make_backend(const AuditConfig& cfg)
{
    if (cfg.backend.kind != BackendConfig::Kind::http) return nullptr;
    HttpBackend::Options o;
    o.retries = cfg.backend.retries;
    o.backoff = std::chrono::milliseconds(cfg.backend.backoff_ms);
    o.timeout = std::chrono::seconds(cfg.backend.timeout_s);
    return std::make_unique<HttpBackend>(cfg.backend.url, o);
}

void write_file(const fs::path& path, const std::string& content)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::data_error, "cannot write " + path.string());
    out << content;
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::data_error, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_report_files(const fs::path& dir, const std::string& stem, const AuditReport& report)
{
    write_file(dir / (stem + ".json"), emit_report(report, ReportFormat::structured));
    write_file(dir / (stem + "-pairs.csv"), csv_pairs(report));
    write_file(dir / (stem + "-categories.csv"), csv_categories(report));
    write_file(dir / (stem + "-aggregates.csv"), csv_aggregates(report));
}

struct Models {
    std::optional<NGramModel> fl;
    std::optional<NGramModel> cl;
};

Models load_models(const std::string& fl_path, const std::string& cl_path)
{
    Models m;
    if (!fl_path.empty()) m.fl = load_model_file(fl_path);
    if (!cl_path.empty()) m.cl = load_model_file(cl_path);
    return m;
}

AuditOptions audit_options(const GenerationBackend* backend, const Models& models, const fs::path& out_dir,
                           bool use_cache)
{
    AuditOptions o;
    o.backend = backend;
    o.fl_model = models.fl ? &*models.fl : nullptr;
    o.cl_model = models.cl ? &*models.cl : nullptr;
    if (use_cache) o.cache_dir = out_dir / "cache";
    return o;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Federated memorization audit toolkit"};
    app.require_subcommand(1);

    CommonFlags f;
    std::string fl_model, cl_model, format = "table", input, factor, mode;
    std::vector<std::string> values;
    bool no_cache = false;

    auto* partition_cmd = app.add_subcommand("partition", "split a corpus into client datasets");
    add_common(partition_cmd, f, true);
    partition_cmd->add_option("--mode", mode, "dirichlet | by_group");

    auto* train_cmd = app.add_subcommand("train", "train the FL (and/or CL) reference model");
    add_common(train_cmd, f, true);

    auto* generate_cmd = app.add_subcommand("generate", "sample prefixes and fill the generation cache");
    add_common(generate_cmd, f, true);

    auto* audit_cmd = app.add_subcommand("audit", "run the full memorization audit");
    add_common(audit_cmd, f, true);
    audit_cmd->add_flag("--no-cache", no_cache, "do not read or write the generation cache");

    auto* sweep_cmd = app.add_subcommand("sweep", "one audit per value of a factor");
    add_common(sweep_cmd, f, true);
    sweep_cmd->add_option("--factor", factor, "decoding | prefix_len | algorithm | rounds | model_order")->required();
    sweep_cmd->add_option("--values", values, "comma-separated values")->required()->delimiter(',');

    for (auto* cmd : {generate_cmd, audit_cmd, sweep_cmd}) {
        cmd->add_option("--model", fl_model, "pretrained FL model dump");
        cmd->add_option("--cl-model", cl_model, "pretrained CL model dump");
        cmd->add_option("--format", format, "table | csv | structured (stdout)")->capture_default_str();
    }

    auto* report_cmd = app.add_subcommand("report", "render a stored report");
    report_cmd->add_option("--input", input, "structured report file")->required();
    report_cmd->add_option("--format", format, "table | csv | structured")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const fs::path out_dir = f.out_dir;

        if (*report_cmd) {
            const auto report = audit_report_from_json(nlohmann::json::parse(read_file(input)));
            std::cout << emit_report(report, format);
            return 0;
        }

        if (!parse_report_format(format)) fail(ErrorCode::config_error, "unknown format '" + format + "'");
        AuditConfig cfg = resolve_config(f);

        if (*partition_cmd) {
            if (!mode.empty()) {
                auto m = parse_partition_mode(mode);
                if (!m) fail(ErrorCode::config_error, "unknown partition mode '" + mode + "'");
                cfg.partition.mode = *m;
            }
            cfg.validate();
            bool has_client = false;
            const auto records = read_records_file(f.corpus, &has_client);
            const auto clients = partition(records, cfg.partition);
            const auto path = out_dir / "clients.jsonl";
            fs::create_directories(out_dir);
            write_records_file(path.string(), flatten(clients));
            for (const auto& c : clients) std::cout << "client " << c.client << ": " << c.size() << " samples\n";
            std::cout << "wrote " << path.string() << '\n';
            return 0;
        }

        const auto clients = load_clients(f.corpus, cfg, f.clients.has_value());

        if (*train_cmd) {
            const auto texts = training_view(clients, cfg.task);
            fs::create_directories(out_dir);
            if (cfg.regime != RegimeSelection::cl) {
                const auto model = train_federated(texts, cfg.train);
                save_model_file((out_dir / "model-fl.txt").string(), model);
                std::cout << "FL model " << model_fingerprint(model) << " -> " << (out_dir / "model-fl.txt").string()
                          << '\n';
            }
            if (cfg.regime != RegimeSelection::fl) {
                const auto model = train_centralized(texts, cfg.train);
                save_model_file((out_dir / "model-cl.txt").string(), model);
                std::cout << "CL model " << model_fingerprint(model) << " -> " << (out_dir / "model-cl.txt").string()
                          << '\n';
            }
            return 0;
        }

        const auto backend = make_backend(cfg);
        const auto models = load_models(fl_model, cl_model);

        if (*generate_cmd) {
            auto options = audit_options(backend.get(), models, out_dir, true);
            options.generate_only = true;
            const auto report = run_audit(cfg, clients, options);
            for (const auto& r : report.regimes) {
                for (std::size_t t = 0; t < r.artifacts.size(); ++t) {
                    const auto path = out_dir / ("generations-" + std::string(to_string(r.regime)) + "-t" +
                                                 std::to_string(t) + ".jsonl");
                    std::ostringstream os;
                    write_generations(os, r.artifacts[t].generations);
                    write_file(path, os.str());
                    std::cout << "wrote " << path.string() << '\n';
                }
            }
            return 0;
        }

        if (*audit_cmd) {
            const auto report = run_audit(cfg, clients, audit_options(backend.get(), models, out_dir, !no_cache));
            write_report_files(out_dir, "report", report);
            std::cout << emit_report(report, format);
            return 0;
        }

        if (*sweep_cmd) {
            auto fac = parse_sweep_factor(factor);
            if (!fac) fail(ErrorCode::config_error, "unknown sweep factor '" + factor + "'");
            const auto reports =
                run_sweep(cfg, SweepSpec{*fac, values}, clients, audit_options(backend.get(), models, out_dir, true));
            for (std::size_t i = 0; i < reports.size(); ++i) {
                write_report_files(out_dir, "report-" + std::string(to_string(*fac)) + "-" + values[i], reports[i]);
                std::cout << emit_report(reports[i], format) << '\n';
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "fedmem: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "fedmem: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "fedmem: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
