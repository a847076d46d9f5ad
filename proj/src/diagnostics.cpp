#include "focal/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "focal/error.hpp"

namespace focal {

double entropy(std::span<const double> row) {
    double h = 0;
    for (double p : row) {
        if (p > 0) h -= p * std::log(p);
    }
    return h;
}

double top_k_mass(std::span<const double> row, std::size_t k) {
    if (k >= row.size()) {
        double s = 0;
        for (double p : row) s += p;
        return s;
    }
    std::vector<double> sorted(row.begin(), row.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                     std::greater<>());
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) s += sorted[i];
    return s;
}

double mass_on_relevant(const AttentionTrace& trace, std::span<const std::size_t> relevant) {
    double s = 0;
    for (std::size_t pos : relevant) {
        if (pos < trace.probs.size()) s += trace.probs[pos];
    }
    return s;
}

double SharpnessReport::value(std::size_t layer, int head, const std::string& metric) const {
    for (const ReportRow& r : rows) {
        if (r.layer == layer && r.head == head && r.metric == metric) return r.value;
    }
    throw UsageError("report has no cell (" + std::to_string(layer) + ", " + std::to_string(head) + ", " + metric +
                     ")");
}

bool SharpnessReport::has(std::size_t layer, int head, const std::string& metric) const {
    return std::any_of(rows.begin(), rows.end(),
                       [&](const ReportRow& r) { return r.layer == layer && r.head == head && r.metric == metric; });
}

std::size_t SharpnessReport::layers() const {
    std::size_t n = 0;
    for (const ReportRow& r : rows) n = std::max(n, r.layer + 1);
    return n;
}

namespace {

struct Accumulator {
    double entropy = 0, top1 = 0, topk = 0;
    std::size_t rows = 0;
    double relevant = 0;
    std::size_t relevant_rows = 0;

    void add(const Accumulator& o) {
        entropy += o.entropy;
        top1 += o.top1;
        topk += o.topk;
        rows += o.rows;
        relevant += o.relevant;
        relevant_rows += o.relevant_rows;
    }
};

void emit_cells(std::vector<ReportRow>& out, std::size_t layer, int head, const Accumulator& a, std::size_t k) {
    if (a.rows == 0) return;
    const double n = static_cast<double>(a.rows);
    out.push_back({layer, head, "entropy", a.entropy / n});
    out.push_back({layer, head, "top1_mass", a.top1 / n});
    out.push_back({layer, head, "top" + std::to_string(k) + "_mass", a.topk / n});
    if (a.relevant_rows > 0) {
        out.push_back({layer, head, "mass_on_relevant", a.relevant / static_cast<double>(a.relevant_rows)});
    }
    out.push_back({layer, head, "rows", n});
}

std::string format_value(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

}  // namespace

template <typename T>
SharpnessReport probe_model(const Model<T>& model, const std::vector<TaskInstance>& probes,
                            const ProbeOptions& options) {
    const std::size_t layers = model.blocks.size();
    const std::size_t heads = model.config().n_heads;
    std::vector<std::vector<Accumulator>> acc(layers, std::vector<Accumulator>(heads));
    std::vector<double> tau_sum(layers, 0);
    std::vector<std::size_t> tau_count(layers, 0);

    for (const TaskInstance& probe : probes) {
        const auto& tokens = probe.prompt_tokens;
        if (tokens.empty()) continue;
        Graph<T> g(false);
        ForwardCapture<T> capture;
        capture.keep_probs = true;
        capture.trace.final_row_only = options.final_row_only;
        capture.trace.max_rows = options.max_rows;
        model.forward(g, tokens, 1, tokens.size(), &capture);
        // Traces are consumed here and dropped with the capture.
        for (const AttentionTrace& t : capture.traces) {
            Accumulator& a = acc[t.layer][t.head];
            a.entropy += entropy(t.probs);
            a.top1 += top_k_mass(t.probs, 1);
            a.topk += top_k_mass(t.probs, options.top_k);
            ++a.rows;
            if (t.query + 1 == tokens.size() && !probe.relevant.empty()) {
                a.relevant += mass_on_relevant(t, probe.relevant);
                ++a.relevant_rows;
            }
        }
        for (std::size_t l = 0; l < layers; ++l) {
            for (T v : capture.tau[l]) tau_sum[l] += static_cast<double>(v);
            tau_count[l] += capture.tau[l].size();
        }
    }

    SharpnessReport report;
    for (std::size_t l = 0; l < layers; ++l) {
        Accumulator pooled;
        for (const Accumulator& a : acc[l]) pooled.add(a);
        emit_cells(report.rows, l, kAllHeads, pooled, options.top_k);
        if (tau_count[l] > 0) {
            report.rows.push_back({l, kAllHeads, "tau_mean", tau_sum[l] / static_cast<double>(tau_count[l])});
        }
        for (std::size_t h = 0; h < heads; ++h) emit_cells(report.rows, l, static_cast<int>(h), acc[l][h], options.top_k);
    }
    return report;
}

template <typename T>
SharpnessReport compare_policies(const Model<T>& model_a, const Model<T>& model_b,
                                 const std::vector<TaskInstance>& probes, const ProbeOptions& options) {
    const ModelConfig& ca = model_a.config();
    const ModelConfig& cb = model_b.config();
    if (ca.n_layers != cb.n_layers || ca.n_heads != cb.n_heads || ca.d_model != cb.d_model) {
        throw ConfigError("compare_policies: models differ in shape");
    }
    const SharpnessReport a = probe_model(model_a, probes, options);
    const SharpnessReport b = probe_model(model_b, probes, options);
    SharpnessReport out;
    for (const ReportRow& r : a.rows) out.rows.push_back({r.layer, r.head, "a:" + r.metric, r.value});
    for (const ReportRow& r : b.rows) out.rows.push_back({r.layer, r.head, "b:" + r.metric, r.value});
    for (const ReportRow& r : a.rows) {
        if (r.metric == "rows" || !b.has(r.layer, r.head, r.metric)) continue;
        out.rows.push_back({r.layer, r.head, "delta:" + r.metric, b.value(r.layer, r.head, r.metric) - r.value});
    }
    return out;
}

ReportFormat report_format_from_string(const std::string& name) {
    if (name == "csv") return ReportFormat::csv;
    if (name == "json") return ReportFormat::json;
    throw ConfigError("unknown report format '" + name + "' (expected csv or json)");
}

Json to_json(const SharpnessReport& report) {
    Json rows = Json::array();
    for (const ReportRow& r : report.rows) {
        Json j;
        j["layer"] = r.layer;
        if (r.head == kAllHeads) {
            j["head"] = "all";
        } else {
            j["head"] = r.head;
        }
        j["metric"] = r.metric;
        j["value"] = r.value;
        rows.push_back(j);
    }
    return rows;
}

void write_report(std::ostream& out, const SharpnessReport& report, ReportFormat format) {
    if (format == ReportFormat::json) {
        out << to_json(report).dump(2) << "\n";
        return;
    }
    out << "layer,head,metric,value\n";
    for (const ReportRow& r : report.rows) {
        out << r.layer << "," << (r.head == kAllHeads ? std::string("all") : std::to_string(r.head)) << ","
            << r.metric << "," << format_value(r.value) << "\n";
    }
}

void emit_report(const SharpnessReport& report, const std::filesystem::path& path, ReportFormat format) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report " + path.string());
    write_report(out, report, format);
    if (!out) throw IoError("short write on report " + path.string());
}

template SharpnessReport probe_model<float>(const Model<float>&, const std::vector<TaskInstance>&,
                                            const ProbeOptions&);
template SharpnessReport probe_model<double>(const Model<double>&, const std::vector<TaskInstance>&,
                                             const ProbeOptions&);
template SharpnessReport compare_policies<float>(const Model<float>&, const Model<float>&,
                                                 const std::vector<TaskInstance>&, const ProbeOptions&);
template SharpnessReport compare_policies<double>(const Model<double>&, const Model<double>&,
                                                  const std::vector<TaskInstance>&, const ProbeOptions&);

}  // namespace focal
