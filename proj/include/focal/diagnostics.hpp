#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "focal/attention.hpp"
#include "focal/config.hpp"
#include "focal/model.hpp"
#include "focal/tasks.hpp"

namespace focal {

/// -sum p ln p in nats, with 0 ln 0 = 0.
double entropy(std::span<const double> row);

/// Sum of the k largest probabilities (all of them when k >= row length).
double top_k_mass(std::span<const double> row, std::size_t k);

/// Probability the row assigns to `relevant` positions; positions past the
/// row's end are ignored.
double mass_on_relevant(const AttentionTrace& trace, std::span<const std::size_t> relevant);

constexpr int kAllHeads = -1;

/// One (layer, head, metric, value) cell. head == kAllHeads is the mean over
/// heads.
struct ReportRow {
    std::size_t layer = 0;
    int head = kAllHeads;
    std::string metric;
    double value = 0;
};

struct SharpnessReport {
    std::vector<ReportRow> rows;

    /// Throws UsageError when the cell is absent.
    double value(std::size_t layer, int head, const std::string& metric) const;
    bool has(std::size_t layer, int head, const std::string& metric) const;
    std::size_t layers() const;
};

struct ProbeOptions {
    bool final_row_only = false;
    std::size_t max_rows = 1u << 16;  // trace rows kept per probe
    std::size_t top_k = 8;
};

/// Averages sharpness statistics over every probe's attention rows.
/// Metrics per (layer, head) and per layer: entropy, top1_mass,
/// top<k>_mass, mass_on_relevant (final query row; probes that mark
/// relevant positions only) and rows. Learned layers add tau_mean per layer.
template <typename T>
SharpnessReport probe_model(const Model<T>& model, const std::vector<TaskInstance>& probes,
                            const ProbeOptions& options = {});

/// Both models see the same inputs. Rows are prefixed "a:", "b:" and
/// "delta:" (b minus a).
template <typename T>
SharpnessReport compare_policies(const Model<T>& model_a, const Model<T>& model_b,
                                 const std::vector<TaskInstance>& probes, const ProbeOptions& options = {});

enum class ReportFormat { csv, json };

ReportFormat report_format_from_string(const std::string& name);

/// CSV header "layer,head,metric,value"; head "all" marks head means.
void write_report(std::ostream& out, const SharpnessReport& report, ReportFormat format);
/// Throws IoError.
void emit_report(const SharpnessReport& report, const std::filesystem::path& path, ReportFormat format);
Json to_json(const SharpnessReport& report);

}  // namespace focal
