#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "focal/diagnostics.hpp"
#include "focal/error.hpp"
#include "test_util.hpp"

using namespace focal;
using focal::testing::TempDir;

namespace {

ModelConfig small_config() {
    ModelConfig c = model_preset("toy");
    c.n_layers = 2;
    c.d_model = 32;
    c.n_heads = 4;
    c.d_ffn = 64;
    c.max_context = 256;
    c.seed = 5;
    return c;
}

std::vector<double> softmax(const std::vector<double>& z, double t) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    std::vector<double> p(z.size());
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp((z[i] - mx) / t);
    for (double& v : p) v /= s;
    return p;
}

}  // namespace

TEST(Entropy, KnownDistributions) {
    EXPECT_EQ(entropy(std::vector<double>{1, 0, 0, 0}), 0.0);
    EXPECT_NEAR(entropy(std::vector<double>(8, 0.125)), std::log(8.0), 1e-12);
    EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5, 0, 0}), std::log(2.0), 1e-12);
}

TEST(TopKMass, OrderedAndBounded) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto z = focal::testing::normal_values(focal::testing::uniform_size(rng, 1, 64), rng, 2.0);
        const auto p = softmax(z, 1.0);
        double prev = 0;
        for (std::size_t k = 1; k <= p.size() + 1; ++k) {
            const double m = top_k_mass(p, k);
            EXPECT_GE(m, prev - 1e-15);
            prev = m;
        }
        EXPECT_NEAR(top_k_mass(p, p.size()), 1.0, 1e-12);
        EXPECT_DOUBLE_EQ(top_k_mass(p, 1), *std::max_element(p.begin(), p.end()));
    }
}

TEST(Sharpness, LowerTemperatureConcentratesRows) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto z = focal::testing::normal_values(focal::testing::uniform_size(rng, 2, 200), rng);
        double prev_h = INFINITY, prev_top = 0;
        for (double t : {2.0, 1.0, 0.6, 0.4, 0.3}) {
            const auto p = softmax(z, t);
            EXPECT_LT(entropy(p), prev_h);
            EXPECT_GE(top_k_mass(p, 1), prev_top);
            prev_h = entropy(p);
            prev_top = top_k_mass(p, 1);
        }
    }
}

TEST(MassOnRelevant, SumsListedPositionsWithinRow) {
    AttentionTrace t;
    t.query = 3;
    t.probs = {0.1, 0.2, 0.3, 0.4};
    EXPECT_NEAR(mass_on_relevant(t, std::vector<std::size_t>{1, 3}), 0.6, 1e-15);
    EXPECT_NEAR(mass_on_relevant(t, std::vector<std::size_t>{0, 9}), 0.1, 1e-15);
    EXPECT_EQ(mass_on_relevant(t, std::vector<std::size_t>{}), 0.0);
}

TEST(ProbeModel, ReportsEveryLayerAndHead) {
    const Model<float> model = init_params<float>(small_config());
    const auto probes = generate(TaskSpec{TaskKind::kv_recall, 128, 3, 0, 4, 1});
    ProbeOptions opt;
    opt.top_k = 4;
    const SharpnessReport r = probe_model(model, probes, opt);
    EXPECT_EQ(r.layers(), 2u);
    for (std::size_t l = 0; l < 2; ++l) {
        for (int h = kAllHeads; h < 4; ++h) {
            for (const char* m : {"entropy", "top1_mass", "top4_mass", "mass_on_relevant", "rows"}) {
                ASSERT_TRUE(r.has(l, h, m)) << l << " " << h << " " << m;
            }
            EXPECT_LE(r.value(l, h, "top1_mass"), r.value(l, h, "top4_mass"));
            EXPECT_GE(r.value(l, h, "entropy"), 0.0);
            const double rel = r.value(l, h, "mass_on_relevant");
            EXPECT_GE(rel, 0.0);
            EXPECT_LE(rel, 1.0 + 1e-9);
        }
    }
    EXPECT_FALSE(r.has(0, 0, "tau_mean"));
    EXPECT_THROW(r.value(5, 0, "entropy"), UsageError);

    // Head mean equals the mean of the per-head values.
    double mean = 0;
    for (int h = 0; h < 4; ++h) mean += r.value(1, h, "entropy") / 4.0;
    EXPECT_NEAR(r.value(1, kAllHeads, "entropy"), mean, 1e-9);
}

TEST(ProbeModel, LearnedLayersReportTauWithinBounds) {
    ModelConfig c = small_config();
    c.policy = TemperaturePolicy::focal_learned(5.0, 10.0);
    const Model<float> model = init_params<float>(c);
    const auto probes = generate(TaskSpec{TaskKind::copy, 64, 8, 0, 2, 1});
    const SharpnessReport r = probe_model(model, probes);
    for (std::size_t l = 0; l < 2; ++l) {
        const double tau = r.value(l, kAllHeads, "tau_mean");
        EXPECT_GE(tau, 5.0);
        EXPECT_LE(tau, 10.0);
    }
}

TEST(ComparePolicies, LowerTemperatureLowersEntropyInEveryLayer) {
    const Model<double> a = init_params<double>(small_config());
    Model<double> b = clone_model(a);
    set_temperature(b, TemperaturePolicy::focal_constant(0.4));
    const auto probes = generate(TaskSpec{TaskKind::kv_recall, 128, 3, 0, 4, 2});
    const SharpnessReport r = compare_policies(a, b, probes);
    for (std::size_t l = 0; l < 2; ++l) {
        EXPECT_LT(r.value(l, kAllHeads, "b:entropy"), r.value(l, kAllHeads, "a:entropy"));
        EXPECT_NEAR(r.value(l, kAllHeads, "delta:entropy"),
                    r.value(l, kAllHeads, "b:entropy") - r.value(l, kAllHeads, "a:entropy"), 1e-12);
        EXPECT_FALSE(r.has(l, kAllHeads, "delta:rows"));
    }
    ModelConfig other = small_config();
    other.n_layers = 1;
    EXPECT_THROW(compare_policies(a, init_params<double>(other), probes), ConfigError);
}

TEST(Report, CsvLayoutIsStable) {
    SharpnessReport r;
    r.rows = {{0, kAllHeads, "entropy", 1.5}, {0, 2, "top1_mass", 0.25}};
    std::ostringstream csv;
    write_report(csv, r, ReportFormat::csv);
    EXPECT_EQ(csv.str(), "layer,head,metric,value\n0,all,entropy,1.5\n0,2,top1_mass,0.25\n");

    std::ostringstream js;
    write_report(js, r, ReportFormat::json);
    const Json j = Json::parse(js.str());
    ASSERT_EQ(j.size(), 2u);
    EXPECT_EQ(j[0]["head"], "all");
    EXPECT_EQ(j[1]["head"], 2);
    EXPECT_EQ(j[1]["value"], 0.25);

    TempDir dir("report");
    emit_report(r, dir.path() / "r.csv", ReportFormat::csv);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "r.csv"));
    EXPECT_THROW(emit_report(r, dir.path() / "missing" / "r.csv", ReportFormat::csv), IoError);
    EXPECT_EQ(report_format_from_string("json"), ReportFormat::json);
    EXPECT_THROW(report_format_from_string("xml"), ConfigError);
}
