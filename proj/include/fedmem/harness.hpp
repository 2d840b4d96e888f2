#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedmem/corpus.hpp"
#include "fedmem/detector.hpp"
#include "fedmem/error.hpp"
#include "fedmem/flsim.hpp"
#include "fedmem/generate.hpp"
#include "fedmem/index.hpp"
#include "fedmem/metrics.hpp"

namespace fedmem {

enum class RegimeSelection { fl, cl, both };

std::optional<RegimeSelection> parse_regime_selection(std::string_view name);
std::string_view to_string(RegimeSelection selection) noexcept;

struct BackendConfig {
    enum class Kind { builtin, http };
    Kind kind = Kind::builtin;
    std::string url;
    std::size_t retries = 3;
    std::size_t backoff_ms = 200;
    std::size_t timeout_s = 60;
};

/// Every knob of one audit. Defaults are the reference setting: 4000 sampled
/// prefixes of 30 tokens per client, top-10 retrieval, top-k (k = 40)
/// decoding, FedAvg with 3 rounds, 3 trials.
struct AuditConfig {
    std::size_t n = 4000;
    std::size_t n_prime = 10;
    std::size_t prefix_len = 30;
    std::size_t trials = 3;
    std::uint64_t seed = 0;
    std::optional<Task> task;
    RegimeSelection regime = RegimeSelection::fl;
    std::size_t workers = 1;
    /// An audit aborts when more than this fraction of generations fail.
    double max_failure_fraction = 0.05;

    DecodingConfig decoding;
    TrainConfig train;
    PartitionConfig partition;
    DetectorConfig detector;
    Bm25Params bm25;
    BackendConfig backend;

    void validate() const;
};

nlohmann::json to_json(const AuditConfig& cfg);

/// Fills an AuditConfig from a (possibly partial) JSON document; unknown
/// sections or keys are config errors.
AuditConfig audit_config_from_json(const nlohmann::json& doc);

/// Applies FEDMEM_<SECTION>_<KEY> overrides. `getenv` is injectable for tests.
nlohmann::json apply_env_overrides(nlohmann::json doc,
                                   const std::function<const char*(const char*)>& getenv = nullptr);

/// Defaults, then the file (if any), then environment overrides.
AuditConfig load_audit_config(const std::optional<std::filesystem::path>& path,
                              const std::function<const char*(const char*)>& getenv = nullptr);

// ---------------------------------------------------------------------------

struct TrialArtifacts {
    std::vector<EvalSet> eval_sets;
    std::vector<Generation> generations;
    std::vector<PairResult> pairs;
};

struct RegimeResult {
    Regime regime = Regime::fl;
    std::vector<MemReport> trials;
    MemReport mean;
    std::vector<TrialArtifacts> artifacts;
};

struct AuditReport {
    std::string label;
    std::vector<RegimeResult> regimes;

    const RegimeResult* find(Regime regime) const;
};

struct AuditOptions {
    /// External backend; when null each regime samples from its own n-gram model.
    const GenerationBackend* backend = nullptr;
    /// Pretrained models; trained on the fly when absent.
    const NGramModel* fl_model = nullptr;
    const NGramModel* cl_model = nullptr;
    /// Directory for generation caches; disabled when empty.
    std::optional<std::filesystem::path> cache_dir;
    /// Stop after generation (the `generate` stage).
    bool generate_only = false;
};

/// Texts used for training (template-formatted when a task is set).
std::vector<ClientDataset> training_view(const std::vector<ClientDataset>& clients, const std::optional<Task>& task);

/// Texts that are split into prefix and suffix (the task's audited field when
/// a task is set and the field is present).
std::vector<ClientDataset> audit_view(const std::vector<ClientDataset>& clients, const std::optional<Task>& task);

/// Runs the sample, generate, retrieve and discriminate stages for every
/// trial and requested regime.
AuditReport run_audit(const AuditConfig& cfg, const std::vector<ClientDataset>& clients,
                      const AuditOptions& options = {});

enum class SweepFactor { decoding, prefix_len, algorithm, rounds, model_order };

std::optional<SweepFactor> parse_sweep_factor(std::string_view name);
std::string_view to_string(SweepFactor factor) noexcept;

struct SweepSpec {
    SweepFactor factor = SweepFactor::prefix_len;
    std::vector<std::string> values;
};

/// The base config with one factor set to `value`; throws config_error for
/// out-of-range values.
AuditConfig with_factor(const AuditConfig& base, SweepFactor factor, const std::string& value);

/// One audit per value. Every value is validated before the first run.
std::vector<AuditReport> run_sweep(const AuditConfig& base, const SweepSpec& sweep,
                                   const std::vector<ClientDataset>& clients, const AuditOptions& options = {});

// ---------------------------------------------------------------------------

enum class ReportFormat { table, csv, structured };

std::optional<ReportFormat> parse_report_format(std::string_view name);

std::string emit_report(const AuditReport& report, ReportFormat format);
std::string emit_report(const AuditReport& report, std::string_view format);

nlohmann::json to_json(const MemReport& report);
MemReport mem_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AuditReport& report);
AuditReport audit_report_from_json(const nlohmann::json& j);

/// CSV tables: one row per (regime, report, source, target), one row per
/// (regime, report, category), one row per (regime, report).
std::string csv_pairs(const AuditReport& report);
std::string csv_categories(const AuditReport& report);
std::string csv_aggregates(const AuditReport& report);

/// Process exit code for an error: 2 config, 3 backend, 4 data.
int exit_code_for(ErrorCode code) noexcept;

}  // namespace fedmem
