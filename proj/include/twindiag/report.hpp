#pragma once

#include <functional>
#include <optional>

#include "twindiag/fmea.hpp"
#include "twindiag/residual.hpp"

namespace twindiag::report {

struct EvidenceItem {
    int channel = 0;
    double z_mean = 0.0;
    faults::Direction direction = faults::Direction::up;
};

struct EvidenceSummary {
    Eigen::VectorXd z_mean = Eigen::VectorXd::Zero(kNumMonitored);
    std::vector<EvidenceItem> significant;  // |z| > threshold, ranked, top M
};

// Mean normalized residual per channel over the window; channels whose |mean|
// exceeds the threshold form the significant set.
EvidenceSummary analyze_evidence(const Eigen::MatrixXf& normalized_window, int top_m = 8,
                                 double threshold = 3.0);

struct Candidate {
    faults::FaultClass fault_class = faults::FaultClass::nominal;
    double probability = 0.0;
};

enum class KbMode { with_fmea, no_fmea };

// Deterministic prompt: role preamble, candidate table, evidence table, the
// FMEA records of the top-K candidates (with_fmea only), and the output
// contract (five sections plus the machine-readable trailer).
std::string build_prompt(const std::vector<Candidate>& topk, const EvidenceSummary& evidence,
                         KbMode mode);

struct DiagnosticReport {
    std::string body;  // the five free-text sections
    faults::FaultClass conclusion = faults::FaultClass::nominal;
    std::vector<std::pair<std::string, faults::Direction>> evidence_lines;

    std::string full_text() const;  // body + trailer
};

DiagnosticReport generate_template_report(const std::vector<Candidate>& topk,
                                          const EvidenceSummary& evidence);

// Parses body + trailer; nullopt when the trailer is missing or invalid.
std::optional<DiagnosticReport> parse_report_text(const std::string& text);

// --- chat-completions client -----------------------------------------------

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.2;
    int max_tokens = 1200;
};

struct ChatResult {
    enum class Status { ok, transport_error, rate_limited, bad_response };
    Status status = Status::ok;
    std::string content;
    std::string error;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual ChatResult complete(const ChatRequest& request) = 0;
};

struct ChatClientConfig {
    std::string base_url;  // e.g. https://api.deepseek.com
    std::string path = "/v1/chat/completions";
    std::string model = "deepseek-chat";
    std::string api_key_env = "TWINDIAG_API_KEY";  // secret read from env only
    double temperature = 0.2;
    int max_tokens = 1200;
    int timeout_seconds = 60;
};

class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(ChatClientConfig config);
    ChatResult complete(const ChatRequest& request) override;

private:
    ChatClientConfig config_;
};

// Deterministic stand-in used by tests and the offline ablation harness.
class MockChatClient : public ChatClient {
public:
    explicit MockChatClient(std::function<std::string(const ChatRequest&)> fn)
        : fn_(std::move(fn)) {}
    ChatResult complete(const ChatRequest& request) override {
        return {ChatResult::Status::ok, fn_(request), ""};
    }

private:
    std::function<std::string(const ChatRequest&)> fn_;
};

// A mock response generator that behaves like a compliant model: it follows
// the prompt's output contract and quotes KB causal chains when present.
std::string mock_llm_response(const ChatRequest& request);

struct LlmReportOutcome {
    enum class Status { ok, transport_error, rate_limited, unparseable };
    Status status = Status::ok;
    std::optional<DiagnosticReport> report;
    std::string raw_response;
    std::string error;
};

// One retry with a repair instruction when the trailer fails to parse.
LlmReportOutcome generate_llm_report(ChatClient& client, const std::string& prompt,
                                     const std::string& model, double temperature = 0.2,
                                     int max_tokens = 1200);

// --- scoring -----------------------------------------------------------------

struct ReportTruth {
    faults::FaultClass true_class = faults::FaultClass::nominal;
    faults::FaultClass classifier_top1 = faults::FaultClass::nominal;
    EvidenceSummary evidence;
};

struct ReportScore {
    double ccc = 0.0;  // causal chain coverage of the true class entry
    double sec = 0.0;  // trailer evidence consistency with the analyzer
    double dc = 0.0;   // conclusion equals classifier top-1
    double hr = 0.0;   // channels named in the body outside the significant set
};

struct ScoreAggregate {
    ReportScore mean;
    ReportScore stddev;
    int scored = 0;
    int excluded = 0;  // unparseable reports
    nlohmann::json to_json() const;
};

ReportScore score_report(const DiagnosticReport& report, const ReportTruth& truth);
ScoreAggregate score_reports(const std::vector<std::optional<DiagnosticReport>>& reports,
                             const std::vector<ReportTruth>& truths);

// Channel-name lexicon (canonical names plus prose aliases) used by HR.
const std::vector<std::vector<std::string>>& channel_lexicon();

}  // namespace twindiag::report
