#include "eagleeye/io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <stdexcept>

namespace eagleeye {

namespace {

std::FILE* open_or_throw(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("io: cannot open " + path);
    return f;
}

void close_or_throw(std::FILE* f, const std::string& path) {
    if (std::fclose(f) != 0) throw std::runtime_error("io: write failed for " + path);
}

}  // namespace

std::string attack_result_record(const AttackResult& res) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"kind\":\"%s\",\"success\":%s,\"amplitude\":%.17g,\"iterations\":%d,"
                  "\"class_before\":%d,\"class_after\":%d}",
                  attack_kind_name(res.kind), res.success ? "true" : "false", res.amplitude,
                  res.iterations, res.class_before, res.class_after);
    return buf;
}

void write_attack_results(const std::vector<AttackResult>& results, const std::string& path) {
    std::FILE* f = open_or_throw(path);
    for (const AttackResult& r : results) std::fprintf(f, "%s\n", attack_result_record(r).c_str());
    close_or_throw(f, path);
}

std::string detection_report_record(const DetectionReport& rep) {
    std::string s = "{\"version\":" + std::to_string(DetectionReport::kFormatVersion);
    char buf[128];
    std::snprintf(buf, sizeof(buf), ",\"input_id\":%d,\"class\":%d", rep.input_id,
                  rep.predicted_class);
    s += buf;
    if (rep.probe) {
        std::snprintf(buf, sizeof(buf), ",\"probe\":%.17g", *rep.probe);
        s += buf;
    } else {
        s += ",\"probe\":null";
    }
    s += ",\"shadow_probes\":[";
    for (std::size_t i = 0; i < rep.shadow_probes.size(); ++i) {
        if (i) s += ",";
        if (rep.shadow_probes[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", *rep.shadow_probes[i]);
            s += buf;
        } else {
            s += "null";
        }
    }
    s += "],\"shadow_classes\":[";
    for (std::size_t i = 0; i < rep.shadow_classes.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(rep.shadow_classes[i]);
    }
    std::snprintf(buf, sizeof(buf), "],\"score\":%.17g,\"verdict\":\"%s\"", rep.score,
                  rep.verdict == Verdict::Genuine ? "genuine" : "suspicious");
    s += buf;
    if (rep.recovered_class) s += ",\"recovered_class\":" + std::to_string(*rep.recovered_class);
    s += std::string(",\"indeterminate\":") + (rep.indeterminate ? "true" : "false") + "}";
    return s;
}

void write_detection_reports(const std::vector<DetectionReport>& reports,
                             const std::string& path) {
    std::FILE* f = open_or_throw(path);
    for (const DetectionReport& r : reports)
        std::fprintf(f, "%s\n", detection_report_record(r).c_str());
    close_or_throw(f, path);
}

void write_ratio_distribution(const RatioDistribution& dist, const std::string& path) {
    std::FILE* f = open_or_throw(path);
    std::fprintf(f, "ratio,cdf\n");
    const std::size_t n = dist.ratios.size();
    for (std::size_t i = 0; i < n; ++i)
        std::fprintf(f, "%.17g,%.17g\n", dist.ratios[i],
                     static_cast<double>(i + 1) / static_cast<double>(n));
    close_or_throw(f, path);
}

void write_resilience_matrix(const ResilienceMatrix& m, const std::string& json_path,
                             const std::string& table_path) {
    std::FILE* f = open_or_throw(json_path);
    std::fprintf(f, "{\"models\":[");
    for (std::size_t i = 0; i < m.model_names.size(); ++i)
        std::fprintf(f, "%s\"%s\"", i ? "," : "", m.model_names[i].c_str());
    std::fprintf(f, "],\"attacks\":[");
    for (std::size_t i = 0; i < m.attacks.size(); ++i)
        std::fprintf(f, "%s\"%s\"", i ? "," : "", attack_kind_name(m.attacks[i]));
    std::fprintf(f, "],\"success_rates\":[");
    for (std::size_t i = 0; i < m.success_rates.size(); ++i) {
        std::fprintf(f, "%s[", i ? "," : "");
        for (std::size_t j = 0; j < m.success_rates[i].size(); ++j)
            std::fprintf(f, "%s%.17g", j ? "," : "", m.success_rates[i][j]);
        std::fprintf(f, "]");
    }
    std::fprintf(f, "]}\n");
    close_or_throw(f, json_path);

    std::FILE* t = open_or_throw(table_path);
    std::fprintf(t, "%-24s", "model");
    for (AttackKind k : m.attacks) std::fprintf(t, "%10s", attack_kind_name(k));
    std::fprintf(t, "\n");
    for (std::size_t i = 0; i < m.model_names.size(); ++i) {
        std::fprintf(t, "%-24s", m.model_names[i].c_str());
        for (double v : m.success_rates[i]) std::fprintf(t, "%9.1f%%", 100.0 * v);
        std::fprintf(t, "\n");
    }
    close_or_throw(t, table_path);
}

void write_counter_outcome(const CounterOutcome& c, const std::string& json_path,
                           const std::string& table_path) {
    std::FILE* f = open_or_throw(json_path);
    std::fprintf(f, "{\"attacks\":[");
    for (std::size_t i = 0; i < c.attacks.size(); ++i)
        std::fprintf(f, "%s\"%s\"", i ? "," : "", attack_kind_name(c.attacks[i]));
    std::fprintf(f, "],\"failure_rates\":[");
    for (std::size_t i = 0; i < c.failure_rates.size(); ++i)
        std::fprintf(f, "%s%.17g", i ? "," : "", c.failure_rates[i]);
    std::fprintf(f, "],\"base_successes\":[");
    for (std::size_t i = 0; i < c.base_successes.size(); ++i)
        std::fprintf(f, "%s%d", i ? "," : "", c.base_successes[i]);
    std::fprintf(f, "],\"amplified_ratios\":[");
    for (std::size_t i = 0; i < c.amplified_ratios.ratios.size(); ++i)
        std::fprintf(f, "%s%.17g", i ? "," : "", c.amplified_ratios.ratios[i]);
    std::fprintf(f, "],\"random_ratios\":[");
    for (std::size_t i = 0; i < c.random_ratios.ratios.size(); ++i)
        std::fprintf(f, "%s%.17g", i ? "," : "", c.random_ratios.ratios[i]);
    std::fprintf(f, "]}\n");
    close_or_throw(f, json_path);

    std::FILE* t = open_or_throw(table_path);
    std::fprintf(t, "%-8s%16s%16s\n", "attack", "base success", "failure rate");
    for (std::size_t i = 0; i < c.attacks.size(); ++i)
        std::fprintf(t, "%-8s%16d%15.1f%%\n", attack_kind_name(c.attacks[i]), c.base_successes[i],
                     100.0 * c.failure_rates[i]);
    if (!c.amplified_ratios.empty())
        std::fprintf(t, "median amplified amplitude ratio: %.2f\n", c.amplified_ratios.median());
    if (!c.random_ratios.empty())
        std::fprintf(t, "median random amplitude ratio:    %.2f\n", c.random_ratios.median());
    close_or_throw(t, table_path);
}

void write_synergy_outcome(const SynergyOutcome& s, const std::string& json_path,
                           const std::string& table_path) {
    std::FILE* f = open_or_throw(json_path);
    std::fprintf(f, "{\"defended_cases\":%d,\"penetrating_cases\":%d", s.defended_cases,
                 s.penetrating_cases);
    if (s.defended_detection_rate)
        std::fprintf(f, ",\"defended_detection_rate\":%.17g", *s.defended_detection_rate);
    else
        std::fprintf(f, ",\"defended_detection_rate\":null");
    if (s.penetrating_detection_rate)
        std::fprintf(f, ",\"penetrating_detection_rate\":%.17g", *s.penetrating_detection_rate);
    else
        std::fprintf(f, ",\"penetrating_detection_rate\":null");
    std::fprintf(f, ",\"p_success_on_distilled\":%.17g,\"c_success_on_distilled\":%.17g}\n",
                 s.p_success_on_distilled, s.c_success_on_distilled);
    close_or_throw(f, json_path);

    std::FILE* t = open_or_throw(table_path);
    std::fprintf(t, "%-28s%10s%12s\n", "case", "count", "flagged");
    std::fprintf(t, "%-28s%10d%11.1f%%\n", "defended by distillation", s.defended_cases,
                 s.defended_detection_rate ? 100.0 * *s.defended_detection_rate : 0.0);
    std::fprintf(t, "%-28s%10d%11.1f%%\n", "uncaptured by distillation", s.penetrating_cases,
                 s.penetrating_detection_rate ? 100.0 * *s.penetrating_detection_rate : 0.0);
    std::fprintf(t, "P success on distilled: %.1f%%\n", 100.0 * s.p_success_on_distilled);
    std::fprintf(t, "C success on distilled: %.1f%%\n", 100.0 * s.c_success_on_distilled);
    close_or_throw(t, table_path);
}

void write_run_meta(const std::string& path, const std::string& command) {
    std::FILE* f = open_or_throw(path);
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char ts[64];
    std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    std::fprintf(f, "{\"command\":\"%s\",\"finished_at\":\"%s\"}\n", command.c_str(), ts);
    close_or_throw(f, path);
}

}  // namespace eagleeye
