#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twindiag/errors.hpp"
#include "twindiag/report.hpp"

using namespace twindiag;
using namespace twindiag::report;
using faults::Direction;
using faults::FaultClass;

namespace {

EvidenceSummary evidence_for(std::vector<std::tuple<const char*, double>> entries) {
    EvidenceSummary ev;
    for (const auto& [name, z] : entries) {
        const int idx = channel_index(name);
        REQUIRE(idx >= 0);
        ev.z_mean(idx) = z;
        ev.significant.push_back({idx, z, z > 0 ? Direction::up : Direction::down});
    }
    std::sort(ev.significant.begin(), ev.significant.end(),
              [](const EvidenceItem& a, const EvidenceItem& b) {
                  return std::abs(a.z_mean) > std::abs(b.z_mean);
              });
    return ev;
}

}  // namespace

TEST_CASE("analyze_evidence thresholds and ordering") {
    Eigen::MatrixXf window = Eigen::MatrixXf::Zero(kNumMonitored, 100);
    const auto empty = analyze_evidence(window);
    CHECK(empty.significant.empty());

    window.row(channel_index("cht1")).setConstant(12.0f);
    window.row(channel_index("oil_press")).setConstant(-5.0f);
    window.row(channel_index("rpm")).setConstant(2.0f);  // below threshold
    const auto ev = analyze_evidence(window);
    REQUIRE(ev.significant.size() == 2);
    CHECK(ev.significant[0].channel == channel_index("cht1"));
    CHECK(ev.significant[0].direction == Direction::up);
    CHECK(ev.significant[1].channel == channel_index("oil_press"));
    CHECK(ev.significant[1].direction == Direction::down);
    CHECK(ev.z_mean(channel_index("rpm")) == doctest::Approx(2.0));
}

TEST_CASE("prompt is deterministic and kb block appears only with_fmea") {
    const std::vector<Candidate> topk = {{FaultClass::baffle_crack, 0.91},
                                         {FaultClass::baffle_loose, 0.05},
                                         {FaultClass::nominal, 0.02}};
    const auto ev = evidence_for({{"cht1", 11.5}});

    const auto with = build_prompt(topk, ev, KbMode::with_fmea);
    const auto with2 = build_prompt(topk, ev, KbMode::with_fmea);
    const auto without = build_prompt(topk, ev, KbMode::no_fmea);

    CHECK(with == with2);
    CHECK(with.find("FMEA KNOWLEDGE BASE RECORDS") != std::string::npos);
    CHECK(without.find("FMEA KNOWLEDGE BASE RECORDS") == std::string::npos);
    // KB block contains the causal chains of the non-nominal candidates.
    for (const auto& step : faults::fmea_lookup(FaultClass::baffle_crack).causal_chain)
        CHECK(with.find(step.text) != std::string::npos);
    // Identical except for the KB block.
    CHECK(without.find("CANDIDATES") != std::string::npos);
    CHECK(with.find(without.substr(0, without.find("FMEA"))) != std::string::npos);
}

TEST_CASE("template report: trailer round-trip, SEC=1, DC=1, CCC>=0.9, HR<=0.1") {
    const std::vector<Candidate> topk = {{FaultClass::oil_cooler_maintenance, 0.88},
                                         {FaultClass::engine_seal_loose, 0.08},
                                         {FaultClass::baffle_crack, 0.02}};
    const auto ev = evidence_for({{"oil_temp", 14.0}, {"oil_press", -16.0}});

    const auto rep = generate_template_report(topk, ev);
    CHECK(rep.conclusion == FaultClass::oil_cooler_maintenance);

    const auto parsed = parse_report_text(rep.full_text());
    REQUIRE(parsed.has_value());
    CHECK(parsed->conclusion == rep.conclusion);
    CHECK(parsed->evidence_lines == rep.evidence_lines);

    ReportTruth truth{FaultClass::oil_cooler_maintenance, FaultClass::oil_cooler_maintenance, ev};
    const auto score = score_report(*parsed, truth);
    CHECK(score.ccc >= 0.9);
    CHECK(score.sec == 1.0);
    CHECK(score.dc == 1.0);
    CHECK(score.hr <= 0.1);
}

TEST_CASE("template for a nominal conclusion avoids channel mentions") {
    const std::vector<Candidate> topk = {{FaultClass::nominal, 0.97},
                                         {FaultClass::engine_requires_maintenance, 0.03}};
    EvidenceSummary ev;  // empty
    const auto rep = generate_template_report(topk, ev);
    ReportTruth truth{FaultClass::nominal, FaultClass::nominal, ev};
    const auto score = score_report(rep, truth);
    CHECK(score.hr == 0.0);
    CHECK(score.sec == 1.0);
    CHECK(score.dc == 1.0);
}

TEST_CASE("fabricated channel mentions raise the hallucination rate") {
    const auto ev = evidence_for({{"cht1", 10.0}});
    DiagnosticReport rep;
    rep.body = "cht1 is elevated, and the oil_press reading collapsed dramatically.";
    rep.conclusion = FaultClass::baffle_crack;
    rep.evidence_lines = {{"cht1", Direction::up}};
    ReportTruth truth{FaultClass::baffle_crack, FaultClass::baffle_crack, ev};
    const auto score = score_report(rep, truth);
    CHECK(score.hr == doctest::Approx(0.5));  // oil_press named, not significant
    CHECK(score.sec == 1.0);
}

TEST_CASE("sec penalizes evidence lines that contradict the analyzer") {
    const auto ev = evidence_for({{"cht1", 10.0}});
    DiagnosticReport rep;
    rep.body = "analysis";
    rep.conclusion = FaultClass::baffle_crack;
    rep.evidence_lines = {{"cht1", Direction::up}, {"cht2", Direction::up}};
    ReportTruth truth{FaultClass::baffle_crack, FaultClass::baffle_crack, ev};
    CHECK(score_report(rep, truth).sec == doctest::Approx(0.5));
}

TEST_CASE("report parsing failures are contained") {
    CHECK(!parse_report_text("no trailer here").has_value());
    CHECK(!parse_report_text("CONCLUSION: not_a_class").has_value());
    const auto ok = parse_report_text("body\nCONCLUSION: engine_failure\nEVIDENCE: rpm down\n");
    REQUIRE(ok.has_value());
    CHECK(ok->conclusion == FaultClass::engine_failure);
    REQUIRE(ok->evidence_lines.size() == 1);
    CHECK(ok->evidence_lines[0].first == "rpm");
}

TEST_CASE("mock llm with and without kb: coverage gap and batch robustness") {
    const std::vector<Candidate> topk = {{FaultClass::baffle_crack, 0.9},
                                         {FaultClass::baffle_loose, 0.1}};
    const auto ev = evidence_for({{"cht1", 12.0}});
    ReportTruth truth{FaultClass::baffle_crack, FaultClass::baffle_crack, ev};

    MockChatClient mock(mock_llm_response);
    const auto with = generate_llm_report(mock, build_prompt(topk, ev, KbMode::with_fmea),
                                          "mock-model");
    const auto without = generate_llm_report(mock, build_prompt(topk, ev, KbMode::no_fmea),
                                             "mock-model");
    REQUIRE(with.status == LlmReportOutcome::Status::ok);
    REQUIRE(without.status == LlmReportOutcome::Status::ok);

    const auto s_with = score_report(*with.report, truth);
    const auto s_without = score_report(*without.report, truth);
    CHECK(s_with.ccc > s_without.ccc);
    CHECK(s_with.dc == 1.0);

    // A client that never produces a trailer is recorded as unparseable and
    // does not abort the batch.
    MockChatClient broken([](const ChatRequest&) { return std::string("free text only"); });
    const auto bad = generate_llm_report(mock, "x", "m");
    const auto bad2 = generate_llm_report(broken, build_prompt(topk, ev, KbMode::no_fmea), "m");
    CHECK(bad2.status == LlmReportOutcome::Status::unparseable);

    std::vector<std::optional<DiagnosticReport>> reports = {with.report, std::nullopt};
    std::vector<ReportTruth> truths = {truth, truth};
    const auto agg = score_reports(reports, truths);
    CHECK(agg.scored == 1);
    CHECK(agg.excluded == 1);
}

TEST_CASE("repair retry recovers a missing trailer") {
    int calls = 0;
    MockChatClient flaky([&](const ChatRequest& req) {
        ++calls;
        if (calls == 1) return std::string("report without a trailer");
        return mock_llm_response(req);
    });
    const std::vector<Candidate> topk = {{FaultClass::engine_failure, 0.99}};
    const auto ev = evidence_for({{"rpm", -20.0}});
    const auto out = generate_llm_report(flaky, build_prompt(topk, ev, KbMode::with_fmea), "m");
    CHECK(calls == 2);
    CHECK(out.status == LlmReportOutcome::Status::ok);
    CHECK(out.report->conclusion == FaultClass::engine_failure);
}

TEST_CASE("aggregate scoring reports mean and spread") {
    const auto ev = evidence_for({{"cht1", 10.0}});
    ReportTruth truth{FaultClass::baffle_crack, FaultClass::baffle_crack, ev};
    DiagnosticReport a;
    a.body = "cht1 rises";
    a.conclusion = FaultClass::baffle_crack;
    DiagnosticReport b = a;
    b.conclusion = FaultClass::baffle_loose;  // dc = 0
    const auto agg =
        score_reports({std::optional<DiagnosticReport>(a), std::optional<DiagnosticReport>(b)},
                      {truth, truth});
    CHECK(agg.mean.dc == doctest::Approx(0.5));
    CHECK(agg.stddev.dc == doctest::Approx(0.5));
}

TEST_CASE("prompts and reports never embed the api key from the environment") {
    setenv("TWINDIAG_API_KEY", "supersecret-key-123", 1);
    const std::vector<Candidate> topk = {{FaultClass::engine_failure, 0.99}};
    const auto ev = evidence_for({{"rpm", -20.0}});
    const auto prompt = build_prompt(topk, ev, KbMode::with_fmea);
    CHECK(prompt.find("supersecret") == std::string::npos);
    const auto rep = generate_template_report(topk, ev);
    CHECK(rep.full_text().find("supersecret") == std::string::npos);
    unsetenv("TWINDIAG_API_KEY");
}
