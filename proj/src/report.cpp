#include "twindiag/report.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "twindiag/errors.hpp"

namespace twindiag::report {

using faults::Direction;
using faults::FaultClass;

namespace {

std::string fold(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string fmt_double(double v, int precision = 2) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

}  // namespace

EvidenceSummary analyze_evidence(const Eigen::MatrixXf& normalized_window, int top_m,
                                 double threshold) {
    if (normalized_window.rows() != kNumMonitored)
        throw InputError("analyze_evidence: expected 23 residual channels");
    EvidenceSummary out;
    for (int c = 0; c < kNumMonitored; ++c)
        out.z_mean(c) = normalized_window.row(c).cast<double>().mean();

    std::vector<EvidenceItem> items;
    for (int c = 0; c < kNumMonitored; ++c) {
        if (std::abs(out.z_mean(c)) > threshold)
            items.push_back({c, out.z_mean(c),
                             out.z_mean(c) > 0 ? Direction::up : Direction::down});
    }
    std::sort(items.begin(), items.end(), [](const EvidenceItem& a, const EvidenceItem& b) {
        return std::abs(a.z_mean) > std::abs(b.z_mean);
    });
    if (static_cast<int>(items.size()) > top_m) items.resize(static_cast<std::size_t>(top_m));
    out.significant = std::move(items);
    return out;
}

std::string build_prompt(const std::vector<Candidate>& topk, const EvidenceSummary& evidence,
                         KbMode mode) {
    std::string p;
    p += "You are an aircraft powerplant diagnostic assistant for a light piston aircraft.\n";
    p += "Fuse the classifier candidates, the residual-analysis evidence and, when provided,\n";
    p += "the FMEA knowledge records into a diagnostic report.\n\n";

    p += "CANDIDATES (classifier top-K):\n";
    for (std::size_t i = 0; i < topk.size(); ++i)
        p += std::to_string(i + 1) + ". " + faults::to_string(topk[i].fault_class) +
             " p=" + fmt_double(topk[i].probability, 4) + "\n";

    p += "\nEVIDENCE (significant residual channels, |z| > 3):\n";
    if (evidence.significant.empty()) {
        p += "(none above threshold)\n";
    } else {
        for (const auto& e : evidence.significant)
            p += canonical_channels()[static_cast<std::size_t>(e.channel)].name + " " +
                 faults::to_string(e.direction) + " z=" + fmt_double(e.z_mean, 1) + "\n";
    }

    if (mode == KbMode::with_fmea) {
        p += "\nFMEA KNOWLEDGE BASE RECORDS:\n";
        for (const auto& c : topk) {
            if (c.fault_class == FaultClass::nominal) continue;
            p += faults::export_entry_text(faults::fmea_lookup(c.fault_class));
            p += "---\n";
        }
    }

    p += "\nWrite the report with exactly these five sections:\n";
    p += "1. Primary conclusion with confidence\n";
    p += "2. Physical mechanism analysis grounded in the causal chain\n";
    p += "3. Cross-validation of sensor evidence against the causal chain\n";
    p += "4. Differential diagnosis over the remaining candidates\n";
    p += "5. Maintenance recommendation\n";
    p += "Finish with a machine-readable trailer, exactly:\n";
    p += "CONCLUSION: <fault_class>\n";
    p += "EVIDENCE: <channel> <up|down>   (one line per significant channel you rely on)\n";
    return p;
}

std::string DiagnosticReport::full_text() const {
    std::string out = body;
    if (!out.empty() && out.back() != '\n') out += '\n';
    out += "\nCONCLUSION: " + faults::to_string(conclusion) + "\n";
    for (const auto& [ch, dir] : evidence_lines)
        out += "EVIDENCE: " + ch + " " + faults::to_string(dir) + "\n";
    return out;
}

DiagnosticReport generate_template_report(const std::vector<Candidate>& topk,
                                          const EvidenceSummary& evidence) {
    if (topk.empty()) throw InputError("generate_template_report: no candidates");
    const auto& chans = canonical_channels();
    const FaultClass top1 = topk[0].fault_class;
    const bool top1_nominal = top1 == FaultClass::nominal;
    const faults::FmeaEntry* entry = top1_nominal ? nullptr : &faults::fmea_lookup(top1);

    auto in_significant = [&](const std::string& channel, Direction dir, bool any_dir) {
        for (const auto& e : evidence.significant) {
            if (chans[static_cast<std::size_t>(e.channel)].name != channel) continue;
            if (any_dir || dir == Direction::oscillating || e.direction == dir) return true;
        }
        return false;
    };

    std::string b;
    b += "DIAGNOSTIC REPORT\n\n";

    b += "1. Primary conclusion\n";
    if (top1_nominal) {
        b += "The engine is assessed as operating normally (nominal), confidence " +
             fmt_double(topk[0].probability) + ".\n\n";
    } else {
        b += "The most likely condition is " + faults::to_string(top1) + ", confidence " +
             fmt_double(topk[0].probability) + ".\n\n";
    }

    b += "2. Physical mechanism analysis\n";
    if (top1_nominal) {
        b += "All monitored parameters track their expected operating bands; no fault "
             "mechanism is indicated.\n\n";
    } else {
        b += entry->mechanism + "\n";
        b += "Causal progression: ";
        for (std::size_t i = 0; i < entry->causal_chain.size(); ++i) {
            if (i) b += " -> ";
            b += entry->causal_chain[i].text;
        }
        b += ".\n\n";
    }

    b += "3. Sensor evidence cross-validation\n";
    if (evidence.significant.empty()) {
        b += "No channel exceeded the significance threshold, consistent with a weak or "
             "early-stage condition.\n\n";
    } else {
        for (const auto& e : evidence.significant) {
            const auto& name = chans[static_cast<std::size_t>(e.channel)].name;
            b += "- " + name + " " + faults::to_string(e.direction) +
                 " (z=" + fmt_double(e.z_mean, 1) + ")";
            bool expected = false;
            if (entry)
                for (const auto& ks : entry->key_sensors)
                    if (ks.channel == name &&
                        (ks.direction == Direction::oscillating || ks.direction == e.direction))
                        expected = true;
            b += expected ? ": matches the expected response for the concluded fault.\n"
                          : ": observed alongside the primary signature.\n";
        }
        b += "\n";
    }

    b += "4. Differential diagnosis\n";
    if (topk.size() < 2) {
        b += "No competing candidate was proposed by the classifier.\n\n";
    } else {
        for (std::size_t i = 1; i < topk.size(); ++i) {
            const auto cls = topk[i].fault_class;
            b += "- " + faults::to_string(cls) + " (p=" + fmt_double(topk[i].probability, 4) +
                 "): ";
            if (cls == FaultClass::nominal) {
                b += evidence.significant.empty()
                         ? "cannot be excluded on residual evidence alone.\n"
                         : "excluded because significant residual deviations are present.\n";
                continue;
            }
            // Name a discriminating channel only when it is already part of the
            // significant evidence; otherwise describe the absence generically.
            const auto& alt = faults::fmea_lookup(cls);
            std::string contradiction;
            for (const auto& ks : alt.key_sensors) {
                if (ks.direction == Direction::oscillating) continue;
                for (const auto& e : evidence.significant) {
                    if (chans[static_cast<std::size_t>(e.channel)].name == ks.channel &&
                        e.direction != ks.direction) {
                        contradiction = "the observed " + ks.channel + " " +
                                        faults::to_string(e.direction) +
                                        " contradicts the " + faults::to_string(ks.direction) +
                                        " response it would require";
                        break;
                    }
                }
                if (!contradiction.empty()) break;
            }
            if (!contradiction.empty()) {
                b += "ruled less likely because " + contradiction + ".\n";
            } else {
                bool supported = false;
                for (const auto& ks : alt.key_sensors)
                    if (in_significant(ks.channel, ks.direction, false)) supported = true;
                b += supported ? "partially consistent with the evidence but ranked below the "
                                 "primary conclusion by the classifier.\n"
                               : "ruled less likely because its expected primary sensor "
                                 "response is absent from the significant evidence.\n";
            }
        }
        b += "\n";
    }

    b += "5. Maintenance recommendation\n";
    b += top1_nominal ? "No corrective action required; continue routine monitoring.\n"
                      : entry->maintenance_recommendation + "\n";

    DiagnosticReport r;
    r.body = std::move(b);
    r.conclusion = top1;
    for (const auto& e : evidence.significant)
        r.evidence_lines.push_back(
            {chans[static_cast<std::size_t>(e.channel)].name, e.direction});
    return r;
}

std::optional<DiagnosticReport> parse_report_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string body;
    std::optional<FaultClass> conclusion;
    std::vector<std::pair<std::string, Direction>> evidence;

    while (std::getline(in, line)) {
        if (line.rfind("CONCLUSION:", 0) == 0) {
            std::string name = line.substr(11);
            name.erase(0, name.find_first_not_of(" \t"));
            name.erase(name.find_last_not_of(" \t\r") + 1);
            try {
                conclusion = faults::fault_class_from_string(name);
            } catch (const InputError&) {
                return std::nullopt;
            }
        } else if (line.rfind("EVIDENCE:", 0) == 0) {
            std::istringstream ls(line.substr(9));
            std::string ch, dir;
            if (!(ls >> ch >> dir)) continue;
            if (channel_index(ch) < 0) continue;
            try {
                evidence.push_back({ch, faults::direction_from_string(dir)});
            } catch (const InputError&) {
                continue;
            }
        } else if (!conclusion) {
            body += line + "\n";
        }
    }
    if (!conclusion) return std::nullopt;

    DiagnosticReport r;
    r.body = std::move(body);
    r.conclusion = *conclusion;
    r.evidence_lines = std::move(evidence);
    return r;
}

// --- chat client -------------------------------------------------------------

HttpChatClient::HttpChatClient(ChatClientConfig config) : config_(std::move(config)) {}

ChatResult HttpChatClient::complete(const ChatRequest& request) {
    const char* key = config_.api_key_env.empty() ? nullptr
                                                  : std::getenv(config_.api_key_env.c_str());
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});
    const nlohmann::json payload = {{"model", request.model},
                                    {"messages", messages},
                                    {"temperature", request.temperature},
                                    {"max_tokens", request.max_tokens}};

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (key) headers.emplace("Authorization", std::string("Bearer ") + key);

    const auto res = client.Post(config_.path, headers, payload.dump(), "application/json");
    if (!res)
        return {ChatResult::Status::transport_error, "",
                "transport: " + httplib::to_string(res.error())};
    if (res->status == 429)
        return {ChatResult::Status::rate_limited, "", "rate limited (429)"};
    if (res->status < 200 || res->status >= 300)
        return {ChatResult::Status::bad_response, "",
                "http " + std::to_string(res->status) + ": " + res->body};

    const auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty() ||
        !doc["choices"][0].contains("message"))
        return {ChatResult::Status::bad_response, "", "malformed chat-completions response"};
    return {ChatResult::Status::ok,
            doc["choices"][0]["message"].value("content", ""), ""};
}

std::string mock_llm_response(const ChatRequest& request) {
    // Behaves like a compliant model: echoes the candidate/evidence tables into
    // prose and quotes the causal chains only when the KB block is present.
    // On a repair turn the diagnostic prompt is an earlier message.
    static const std::string empty;
    const std::string* prompt_ptr = &empty;
    for (const auto& m : request.messages)
        if (m.content.find("CANDIDATES") != std::string::npos) prompt_ptr = &m.content;
    const std::string& prompt = *prompt_ptr;

    auto section = [&](const std::string& begin, const std::string& end) -> std::string {
        const auto b = prompt.find(begin);
        if (b == std::string::npos) return "";
        const auto e = prompt.find(end, b);
        if (e == std::string::npos) return "";
        return prompt.substr(b, e - b);
    };

    const std::string candidates = section("CANDIDATES", "\nEVIDENCE");
    const std::string evidence = section("EVIDENCE (", "\nFMEA");
    const std::string evidence_only =
        evidence.empty() ? section("EVIDENCE (", "\nWrite the report") : evidence;
    const std::string kb = section("FMEA KNOWLEDGE BASE RECORDS:", "\nWrite the report");

    std::string top1 = "nominal";
    {
        const auto pos = candidates.find("1. ");
        if (pos != std::string::npos) {
            const auto sp = candidates.find(' ', pos + 3);
            top1 = candidates.substr(pos + 3, sp - pos - 3);
        }
    }

    std::string out;
    out += "1. Primary conclusion\nThe evidence points to " + top1 + ".\n\n";
    out += "2. Physical mechanism analysis\n";
    if (!kb.empty()) {
        // Quote the mechanism and causal chains supplied in the KB block.
        out += kb.substr(std::string("FMEA KNOWLEDGE BASE RECORDS:\n").size());
        out += "\n";
    } else {
        out += "The engine exhibits abnormal behaviour consistent with the leading "
               "candidate; without reference records the mechanism is inferred from "
               "general engine knowledge.\n\n";
    }
    out += "3. Sensor evidence cross-validation\n" + evidence_only + "\n";
    out += "4. Differential diagnosis\nThe remaining candidates received lower "
           "probabilities from the classifier.\n\n";
    out += "5. Maintenance recommendation\nInvestigate per standard practice for " + top1 +
           ".\n\n";
    out += "CONCLUSION: " + top1 + "\n";

    // Echo the evidence lines in the required trailer format.
    std::istringstream ev(evidence_only);
    std::string line;
    std::getline(ev, line);  // header
    while (std::getline(ev, line)) {
        std::istringstream ls(line);
        std::string ch, dir;
        if (ls >> ch >> dir) {
            if (channel_index(ch) >= 0 && (dir == "up" || dir == "down"))
                out += "EVIDENCE: " + ch + " " + dir + "\n";
        }
    }
    return out;
}

LlmReportOutcome generate_llm_report(ChatClient& client, const std::string& prompt,
                                     const std::string& model, double temperature,
                                     int max_tokens) {
    ChatRequest req;
    req.model = model;
    req.temperature = temperature;
    req.max_tokens = max_tokens;
    req.messages = {{"system", "You write structured aircraft diagnostic reports."},
                    {"user", prompt}};

    LlmReportOutcome out;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto res = client.complete(req);
        if (res.status == ChatResult::Status::transport_error) {
            out.status = LlmReportOutcome::Status::transport_error;
            out.error = res.error;
            return out;
        }
        if (res.status == ChatResult::Status::rate_limited) {
            out.status = LlmReportOutcome::Status::rate_limited;
            out.error = res.error;
            return out;
        }
        if (res.status == ChatResult::Status::bad_response) {
            out.status = LlmReportOutcome::Status::unparseable;
            out.error = res.error;
            return out;
        }
        out.raw_response = res.content;
        auto parsed = parse_report_text(res.content);
        if (parsed) {
            out.status = LlmReportOutcome::Status::ok;
            out.report = std::move(parsed);
            return out;
        }
        // One repair attempt: restate the trailer contract.
        req.messages.push_back({"assistant", res.content});
        req.messages.push_back(
            {"user",
             "Your previous response was missing the machine-readable trailer. Repeat the "
             "report and finish with lines 'CONCLUSION: <fault_class>' and 'EVIDENCE: "
             "<channel> <up|down>'."});
    }
    out.status = LlmReportOutcome::Status::unparseable;
    out.error = "trailer missing after retry";
    return out;
}

// --- scoring -----------------------------------------------------------------

const std::vector<std::vector<std::string>>& channel_lexicon() {
    static const std::vector<std::vector<std::string>> lex = [] {
        std::vector<std::vector<std::string>> out(kNumMonitored);
        const auto& chans = canonical_channels();
        for (int c = 0; c < kNumMonitored; ++c) out[static_cast<std::size_t>(c)] = {chans[static_cast<std::size_t>(c)].name};
        auto add = [&](const char* name, const char* alias) {
            out[static_cast<std::size_t>(channel_index(name))].push_back(alias);
        };
        add("bus_voltage", "bus voltage");
        add("alternator_amps", "alternator current");
        add("battery_voltage", "battery voltage");
        add("battery_amps", "battery current");
        add("fuel_qty", "fuel quantity");
        add("fuel_flow", "fuel flow");
        add("fuel_pressure", "fuel pressure");
        add("oil_temp", "oil temperature");
        add("oil_press", "oil pressure");
        add("cht1", "cylinder 1 head temperature");
        add("cht2", "cylinder 2 head temperature");
        add("cht3", "cylinder 3 head temperature");
        add("cht4", "cylinder 4 head temperature");
        add("indicated_airspeed", "indicated airspeed");
        add("indicated_airspeed", "airspeed");
        add("climb_rate", "climb rate");
        add("outside_air_temp", "outside air temperature");
        return out;
    }();
    return lex;
}

ReportScore score_report(const DiagnosticReport& report, const ReportTruth& truth) {
    ReportScore s;
    const std::string body = fold(report.body);
    const auto& chans = canonical_channels();

    // CCC: fraction of the true-class causal chain steps with a keyword hit.
    if (truth.true_class == FaultClass::nominal) {
        s.ccc = 1.0;  // no chain to cover
    } else {
        const auto& entry = faults::fmea_lookup(truth.true_class);
        int covered = 0;
        for (const auto& step : entry.causal_chain) {
            bool hit = false;
            for (const auto& kw : step.keywords)
                if (body.find(fold(kw)) != std::string::npos) {
                    hit = true;
                    break;
                }
            covered += hit;
        }
        s.ccc = entry.causal_chain.empty()
                    ? 1.0
                    : static_cast<double>(covered) /
                          static_cast<double>(entry.causal_chain.size());
    }

    // SEC: trailer evidence lines consistent with the analyzer output.
    if (report.evidence_lines.empty()) {
        s.sec = 1.0;  // vacuously consistent
    } else {
        int agree = 0;
        for (const auto& [ch, dir] : report.evidence_lines) {
            for (const auto& e : truth.evidence.significant) {
                if (chans[static_cast<std::size_t>(e.channel)].name == ch &&
                    e.direction == dir) {
                    ++agree;
                    break;
                }
            }
        }
        s.sec = static_cast<double>(agree) / static_cast<double>(report.evidence_lines.size());
    }

    s.dc = report.conclusion == truth.classifier_top1 ? 1.0 : 0.0;

    // HR: distinct channels named in the body that are not significant.
    const auto& lex = channel_lexicon();
    int named = 0, outside = 0;
    for (int c = 0; c < kNumMonitored; ++c) {
        bool mentioned = false;
        for (const auto& alias : lex[static_cast<std::size_t>(c)])
            if (body.find(fold(alias)) != std::string::npos) {
                mentioned = true;
                break;
            }
        if (!mentioned) continue;
        ++named;
        bool significant = false;
        for (const auto& e : truth.evidence.significant)
            if (e.channel == c) significant = true;
        if (!significant) ++outside;
    }
    s.hr = named > 0 ? static_cast<double>(outside) / static_cast<double>(named) : 0.0;
    return s;
}

nlohmann::json ScoreAggregate::to_json() const {
    auto sc = [](const ReportScore& s) {
        return nlohmann::json{{"ccc", s.ccc}, {"sec", s.sec}, {"dc", s.dc}, {"hr", s.hr}};
    };
    return {{"mean", sc(mean)}, {"stddev", sc(stddev)}, {"scored", scored},
            {"excluded", excluded}};
}

ScoreAggregate score_reports(const std::vector<std::optional<DiagnosticReport>>& reports,
                             const std::vector<ReportTruth>& truths) {
    if (reports.size() != truths.size())
        throw InputError("score_reports: reports/truths size mismatch");
    ScoreAggregate agg;
    std::vector<ReportScore> scored;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (!reports[i]) {
            ++agg.excluded;
            continue;
        }
        scored.push_back(score_report(*reports[i], truths[i]));
    }
    agg.scored = static_cast<int>(scored.size());
    if (scored.empty()) return agg;

    auto accumulate = [&](auto member) {
        double sum = 0.0;
        for (const auto& s : scored) sum += s.*member;
        const double mean = sum / static_cast<double>(scored.size());
        double var = 0.0;
        for (const auto& s : scored) var += (s.*member - mean) * (s.*member - mean);
        return std::pair<double, double>(mean,
                                         std::sqrt(var / static_cast<double>(scored.size())));
    };
    std::tie(agg.mean.ccc, agg.stddev.ccc) = accumulate(&ReportScore::ccc);
    std::tie(agg.mean.sec, agg.stddev.sec) = accumulate(&ReportScore::sec);
    std::tie(agg.mean.dc, agg.stddev.dc) = accumulate(&ReportScore::dc);
    std::tie(agg.mean.hr, agg.stddev.hr) = accumulate(&ReportScore::hr);
    return agg;
}

}  // namespace twindiag::report
