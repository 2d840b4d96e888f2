#include <cstdio>
#include <sstream>

#include "fedmem/harness.hpp"

namespace fedmem {

using nlohmann::json;

namespace {

json agg_to_json(const Aggregates& a)
{
    return json{{"matrix", a.matrix}, {"mr_intra", a.mr_intra}, {"mr_inter", a.mr_inter}, {"mr_total", a.mr_total}};
}

Aggregates agg_from_json(const json& j)
{
    Aggregates a;
    a.matrix = j.at("matrix").get<Matrix>();
    a.mr_intra = j.at("mr_intra").get<double>();
    a.mr_inter = j.at("mr_inter").get<double>();
    a.mr_total = j.at("mr_total").get<double>();
    return a;
}

std::optional<Category> parse_category(std::string_view name)
{
    for (auto c : all_categories) {
        if (to_string(c) == name) return c;
    }
    return std::nullopt;
}

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string pct(double v, int width = 9)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%*.3f", width, 100.0 * v);
    return buf;
}

std::string pad(std::string s, std::size_t width)
{
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

/// Trials first, then the mean; a regime without a mean (generate-only) has none.
std::vector<const MemReport*> reports_of(const RegimeResult& r)
{
    std::vector<const MemReport*> out;
    for (const auto& t : r.trials) out.push_back(&t);
    if (!r.mean.label.empty()) out.push_back(&r.mean);
    return out;
}

void table_aggregates(std::ostringstream& os, const MemReport& m)
{
    os << "  " << pad("", 20) << "MR_Intra  MR_Inter  MR_Total\n";
    os << "  " << pad("any category", 20) << pct(m.overall.mr_intra, 8) << pct(m.overall.mr_inter, 10)
       << pct(m.overall.mr_total, 10) << '\n';
    for (auto c : all_categories) {
        auto it = m.per_category.find(c);
        const Aggregates a = it == m.per_category.end() ? Aggregates{} : it->second;
        os << "  " << pad(std::string(to_string(c)), 20) << pct(a.mr_intra, 8) << pct(a.mr_inter, 10)
           << pct(a.mr_total, 10) << '\n';
    }
}

void table_matrix(std::ostringstream& os, const MemReport& m)
{
    os << "  pairwise MR (rows: prefix client j, columns: suffix client k)\n";
    os << "  " << pad("", 8);
    for (std::size_t k = 0; k < m.overall.matrix.size(); ++k) os << pad("k=" + std::to_string(k), 9);
    os << '\n';
    for (std::size_t j = 0; j < m.overall.matrix.size(); ++j) {
        os << "  " << pad("j=" + std::to_string(j), 6);
        for (double v : m.overall.matrix[j]) os << pct(v);
        os << '\n';
    }
}

std::string emit_table(const AuditReport& report)
{
    std::ostringstream os;
    os << "audit " << (report.label.empty() ? "(unlabeled)" : report.label) << "\n";
    os << "all ratios in percent\n";
    for (const auto& r : report.regimes) {
        os << "\n[" << to_string(r.regime) << "] " << r.trials.size() << " trial(s)\n";
        if (r.mean.label.empty()) {
            os << "  generation only, no ratios\n";
            continue;
        }
        os << "  mean over trials\n";
        table_aggregates(os, r.mean);
        table_matrix(os, r.mean);
        os << "  per trial" << pad("", 11) << "MR_Intra  MR_Inter  MR_Total\n";
        for (const auto& t : r.trials) {
            os << "  " << pad(t.label, 20) << pct(t.overall.mr_intra, 8) << pct(t.overall.mr_inter, 10)
               << pct(t.overall.mr_total, 10) << '\n';
        }
        os << "  tallies summed over trials\n";
        os << "  client   sampled  evaluated  filtered  failed\n";
        for (const auto& t : r.mean.tallies) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "  %6zu %9zu %10zu %9zu %7zu\n", t.client, t.sampled, t.evaluated,
                          t.filtered, t.failed);
            os << buf;
        }
    }
    const auto* fl = report.find(Regime::fl);
    const auto* cl = report.find(Regime::cl);
    if (fl && cl && !fl->mean.label.empty() && !cl->mean.label.empty()) {
        os << "\nMR_TotalFL " << pct(fl->mean.overall.mr_total, 0) << "  MR_TotalCL "
           << pct(cl->mean.overall.mr_total, 0) << '\n';
    }
    return os.str();
}

}  // namespace

std::optional<ReportFormat> parse_report_format(std::string_view name)
{
    if (name == "table") return ReportFormat::table;
    if (name == "csv") return ReportFormat::csv;
    if (name == "structured" || name == "json") return ReportFormat::structured;
    return std::nullopt;
}

json to_json(const MemReport& report)
{
    json weights = json::array();
    for (const auto& w : report.weights) weights.push_back({{"client", w.client}, {"weight", w.weight}});
    json cats = json::object();
    for (const auto& [c, a] : report.per_category) cats[std::string(to_string(c))] = agg_to_json(a);
    json tallies = json::array();
    for (const auto& t : report.tallies) {
        tallies.push_back({{"client", t.client},
                           {"sampled", t.sampled},
                           {"evaluated", t.evaluated},
                           {"filtered", t.filtered},
                           {"failed", t.failed}});
    }
    return json{{"label", report.label},
                {"regime", std::string(to_string(report.regime))},
                {"num_clients", report.num_clients},
                {"weights", weights},
                {"overall", agg_to_json(report.overall)},
                {"per_category", cats},
                {"tallies", tallies}};
}

MemReport mem_report_from_json(const json& j)
{
    try {
        MemReport r;
        r.label = j.at("label").get<std::string>();
        auto regime = parse_regime(j.at("regime").get<std::string>());
        if (!regime) fail(ErrorCode::data_error, "unknown regime in report");
        r.regime = *regime;
        r.num_clients = j.at("num_clients").get<std::size_t>();
        for (const auto& w : j.at("weights")) {
            r.weights.push_back({w.at("client").get<ClientId>(), w.at("weight").get<double>()});
        }
        r.overall = agg_from_json(j.at("overall"));
        for (const auto& [name, a] : j.at("per_category").items()) {
            auto c = parse_category(name);
            if (!c) fail(ErrorCode::data_error, "unknown category '" + name + "' in report");
            r.per_category[*c] = agg_from_json(a);
        }
        for (const auto& t : j.at("tallies")) {
            r.tallies.push_back({t.at("client").get<ClientId>(), t.at("sampled").get<std::size_t>(),
                                 t.at("evaluated").get<std::size_t>(), t.at("filtered").get<std::size_t>(),
                                 t.at("failed").get<std::size_t>()});
        }
        return r;
    } catch (const json::exception& e) {
        fail(ErrorCode::data_error, std::string("malformed report: ") + e.what());
    }
}

json to_json(const AuditReport& report)
{
    json regimes = json::array();
    for (const auto& r : report.regimes) {
        json trials = json::array();
        for (const auto& t : r.trials) trials.push_back(to_json(t));
        json entry{{"regime", std::string(to_string(r.regime))}, {"trials", trials}};
        entry["mean"] = r.mean.label.empty() ? json(nullptr) : to_json(r.mean);
        regimes.push_back(std::move(entry));
    }
    return json{{"format", "fedmem-report"}, {"version", 1}, {"label", report.label}, {"regimes", regimes}};
}

AuditReport audit_report_from_json(const json& j)
{
    try {
        if (j.at("format") != "fedmem-report" || j.at("version") != 1) {
            fail(ErrorCode::data_error, "not a version 1 fedmem report");
        }
        AuditReport out;
        out.label = j.at("label").get<std::string>();
        for (const auto& r : j.at("regimes")) {
            RegimeResult rr;
            auto regime = parse_regime(r.at("regime").get<std::string>());
            if (!regime) fail(ErrorCode::data_error, "unknown regime in report");
            rr.regime = *regime;
            for (const auto& t : r.at("trials")) rr.trials.push_back(mem_report_from_json(t));
            if (!r.at("mean").is_null()) rr.mean = mem_report_from_json(r.at("mean"));
            out.regimes.push_back(std::move(rr));
        }
        return out;
    } catch (const json::exception& e) {
        fail(ErrorCode::data_error, std::string("malformed report: ") + e.what());
    }
}

std::string csv_pairs(const AuditReport& report)
{
    std::ostringstream os;
    os << "audit,regime,report,source,target,mr";
    for (auto c : all_categories) os << ',' << to_string(c);
    os << '\n';
    for (const auto& r : report.regimes) {
        for (const auto* m : reports_of(r)) {
            const auto n = m->overall.matrix.size();
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t k = 0; k < n; ++k) {
                    os << report.label << ',' << to_string(r.regime) << ',' << m->label << ',' << j << ',' << k << ','
                       << num(m->overall.matrix[j][k]);
                    for (auto c : all_categories) {
                        auto it = m->per_category.find(c);
                        os << ',' << num(it == m->per_category.end() ? 0.0 : it->second.matrix[j][k]);
                    }
                    os << '\n';
                }
            }
        }
    }
    return os.str();
}

std::string csv_categories(const AuditReport& report)
{
    std::ostringstream os;
    os << "audit,regime,report,category,mr_intra,mr_inter,mr_total\n";
    for (const auto& r : report.regimes) {
        for (const auto* m : reports_of(r)) {
            for (auto c : all_categories) {
                auto it = m->per_category.find(c);
                const Aggregates a = it == m->per_category.end() ? Aggregates{} : it->second;
                os << report.label << ',' << to_string(r.regime) << ',' << m->label << ',' << to_string(c) << ','
                   << num(a.mr_intra) << ',' << num(a.mr_inter) << ',' << num(a.mr_total) << '\n';
            }
        }
    }
    return os.str();
}

std::string csv_aggregates(const AuditReport& report)
{
    std::ostringstream os;
    os << "audit,regime,report,mr_intra,mr_inter,mr_total,sampled,evaluated,filtered,failed\n";
    for (const auto& r : report.regimes) {
        for (const auto* m : reports_of(r)) {
            ClientTally sum;
            for (const auto& t : m->tallies) {
                sum.sampled += t.sampled;
                sum.evaluated += t.evaluated;
                sum.filtered += t.filtered;
                sum.failed += t.failed;
            }
            os << report.label << ',' << to_string(r.regime) << ',' << m->label << ',' << num(m->overall.mr_intra)
               << ',' << num(m->overall.mr_inter) << ',' << num(m->overall.mr_total) << ',' << sum.sampled << ','
               << sum.evaluated << ',' << sum.filtered << ',' << sum.failed << '\n';
        }
    }
    return os.str();
}

std::string emit_report(const AuditReport& report, ReportFormat format)
{
    switch (format) {
    case ReportFormat::table: return emit_table(report);
    case ReportFormat::csv:
        return "# pairs\n" + csv_pairs(report) + "\n# categories\n" + csv_categories(report) + "\n# aggregates\n" +
               csv_aggregates(report);
    case ReportFormat::structured: return to_json(report).dump(2) + "\n";
    }
    return {};
}

std::string emit_report(const AuditReport& report, std::string_view format)
{
    auto f = parse_report_format(format);
    if (!f) fail(ErrorCode::invalid_argument, "unknown report format '" + std::string(format) + "'");
    return emit_report(report, *f);
}

}  // namespace fedmem
