#include "evoderm/model_adapters.hpp"

#include "evoderm/util.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <semaphore>
#include <sstream>
#include <thread>

namespace evoderm {

using nlohmann::json;

std::vector<CandidateDiagnosis> classify_top5(const ClassifierPort& classifier, const ImageInput& image,
                                              std::span<const std::string> label_space) {
    if (label_space.empty()) throw Error(ErrorCode::InvalidArgument, "label space is empty");
    std::vector<double> dist = classifier.classify(image, label_space);
    if (dist.size() != label_space.size()) {
        throw Error(ErrorCode::DistributionInvalid, "distribution has " + std::to_string(dist.size()) +
                                                        " entries for " + std::to_string(label_space.size()) +
                                                        " labels");
    }
    double total = 0.0;
    for (double p : dist) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw Error(ErrorCode::DistributionInvalid, "probability outside [0,1]");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorCode::DistributionInvalid, "distribution sums to " + format_double(total));
    }

    std::vector<CandidateDiagnosis> candidates;
    candidates.reserve(label_space.size());
    for (std::size_t i = 0; i < label_space.size(); ++i) candidates.push_back({label_space[i], dist[i]});
    sort_candidates(candidates);
    candidates.resize(std::min<std::size_t>(5, candidates.size()));
    return candidates;
}

void BackendProfile::validate() const {
    if (!(temperature >= 0.0)) throw Error(ErrorCode::ConfigError, "temperature must be >= 0");
    if (max_tokens < 1) throw Error(ErrorCode::ConfigError, "max_tokens must be >= 1");
    if (timeout_ms < 1) throw Error(ErrorCode::ConfigError, "timeout_ms must be >= 1");
    if (max_retries < 0) throw Error(ErrorCode::ConfigError, "max_retries must be >= 0");
    if (backoff_base_ms < 0) throw Error(ErrorCode::ConfigError, "backoff_base_ms must be >= 0");
    if (endpoint_url.rfind("http://", 0) != 0 && endpoint_url.rfind("https://", 0) != 0) {
        throw Error(ErrorCode::ConfigError, "endpoint_url must start with http:// or https://");
    }
}

std::string sniff_mime_type(std::span<const std::uint8_t> d) {
    auto starts = [&](std::initializer_list<std::uint8_t> magic) {
        return d.size() >= magic.size() && std::equal(magic.begin(), magic.end(), d.begin());
    };
    if (starts({0x89, 'P', 'N', 'G'})) return "image/png";
    if (starts({0xFF, 0xD8, 0xFF})) return "image/jpeg";
    if (starts({'G', 'I', 'F', '8'})) return "image/gif";
    if (starts({'P', '6'}) || starts({'P', '3'})) return "image/x-portable-pixmap";
    if (starts({'R', 'I', 'F', 'F'}) && d.size() >= 12 && d[8] == 'W' && d[9] == 'E' && d[10] == 'B' && d[11] == 'P') {
        return "image/webp";
    }
    return "application/octet-stream";
}

json build_chat_request(const BackendProfile& profile, std::span<const ChatMessage> messages,
                        std::span<const Attachment> attachments) {
    json msgs = json::array();
    std::ptrdiff_t last_user = -1;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (messages[i].role == "user") last_user = static_cast<std::ptrdiff_t>(i);
    }
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const auto& m = messages[i];
        if (static_cast<std::ptrdiff_t>(i) == last_user && !attachments.empty()) {
            json parts = json::array({json{{"type", "text"}, {"text", m.content}}});
            for (const auto& a : attachments) {
                parts.push_back(json{{"type", "image_url"},
                                     {"image_url", {{"url", "data:" + a.mime_type + ";base64," + base64_encode(a.data)}}}});
            }
            msgs.push_back(json{{"role", m.role}, {"content", std::move(parts)}});
        } else {
            msgs.push_back(json{{"role", m.role}, {"content", m.content}});
        }
    }
    return json{{"model", profile.model_name},
                {"messages", std::move(msgs)},
                {"temperature", profile.temperature},
                {"max_tokens", profile.max_tokens}};
}

std::chrono::milliseconds backoff_ceiling(const BackendProfile& profile, int retry) {
    int shift = std::clamp(retry - 1, 0, 20);
    return std::chrono::milliseconds(static_cast<long long>(profile.backoff_base_ms) << shift);
}

// --- client ----------------------------------------------------------------

struct HttpChatClient::Limiter {
    explicit Limiter(std::size_t n, std::uint64_t seed)
        : slots(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, n))), jitter(seed) {}
    std::counting_semaphore<1024> slots;
    std::mutex rng_mutex;
    std::mt19937_64 jitter;
};

HttpChatClient::HttpChatClient(BackendProfile profile, std::size_t max_in_flight)
    : profile_(std::move(profile)),
      limiter_(std::make_unique<Limiter>(std::min<std::size_t>(max_in_flight, 1024), profile_.jitter_seed)) {
    profile_.validate();
}

HttpChatClient::~HttpChatClient() = default;

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = url.substr(0, path_start);
    out.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

std::string api_path(const std::string& prefix, const std::string& suffix) {
    if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0) return prefix + suffix;
    return prefix + "/v1" + suffix;
}

}  // namespace

json HttpChatClient::post_json(const std::string& path_suffix, const json& body, int& attempts) const {
    httplib::Headers headers;
    if (!profile_.auth_token_env_var.empty()) {
        const char* token = std::getenv(profile_.auth_token_env_var.c_str());
        if (token == nullptr || *token == '\0') {
            throw Error(ErrorCode::AuthMissing, "environment variable " + profile_.auth_token_env_var + " is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    SplitUrl url = split_url(profile_.endpoint_url);
    std::string path = api_path(url.prefix, path_suffix);
    std::string payload = body.dump();
    auto timeout = std::chrono::milliseconds(profile_.timeout_ms);

    int last_status = 0;
    bool last_timed_out = false;
    std::string last_error;
    attempts = 0;
    for (int attempt = 0; attempt <= profile_.max_retries; ++attempt) {
        if (attempt > 0) {
            auto ceiling = backoff_ceiling(profile_, attempt);
            std::chrono::milliseconds delay{0};
            {
                std::lock_guard lock(limiter_->rng_mutex);
                delay = std::chrono::milliseconds(static_cast<long long>(
                    unit_interval(limiter_->jitter()) * static_cast<double>(ceiling.count() + 1)));
            }
            std::this_thread::sleep_for(delay);
        }

        httplib::Client client(url.origin);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        auto started = std::chrono::steady_clock::now();
        limiter_->slots.acquire();
        auto res = client.Post(path, headers, payload, "application/json");
        limiter_->slots.release();
        ++attempts;

        if (!res) {
            auto elapsed = std::chrono::steady_clock::now() - started;
            last_status = 0;
            last_error = httplib::to_string(res.error());
            last_timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                             (res.error() == httplib::Error::Read && elapsed >= timeout);
            continue;
        }
        last_timed_out = false;
        last_status = res->status;
        if (res->status >= 500 || res->status == 429) {
            last_error = "server returned " + std::to_string(res->status);
            continue;
        }
        if (res->status >= 400) {
            throw BackendError(res->status, attempts, "request to " + path + " rejected: " + res->body.substr(0, 200));
        }
        try {
            return json::parse(res->body);
        } catch (const json::exception&) {
            throw BackendError(res->status, attempts, "response from " + path + " is not JSON");
        }
    }
    if (last_timed_out) {
        throw Error(ErrorCode::Timeout, path + " timed out after " + std::to_string(attempts) + " attempts");
    }
    throw BackendError(last_status, attempts, "request to " + url.origin + path + " failed: " + last_error);
}

ChatResult HttpChatClient::chat(std::span<const ChatMessage> messages, std::span<const Attachment> attachments) const {
    ChatResult result;
    json response = post_json("/chat/completions", build_chat_request(profile_, messages, attachments), result.attempts);
    try {
        const json& content = response.at("choices").at(0).at("message").at("content");
        result.text = content.is_string() ? content.get<std::string>() : content.dump();
    } catch (const json::exception&) {
        throw BackendError(200, result.attempts, "chat response lacks choices[0].message.content");
    }
    return result;
}

std::vector<Embedding> HttpChatClient::embed(std::span<const std::string> inputs) const {
    int attempts = 0;
    json body{{"model", profile_.model_name}, {"input", std::vector<std::string>(inputs.begin(), inputs.end())}};
    json response = post_json("/embeddings", body, attempts);
    std::vector<Embedding> out;
    try {
        for (const auto& item : response.at("data")) out.emplace_back(item.at("embedding").get<std::vector<double>>());
    } catch (const json::exception&) {
        throw BackendError(200, attempts, "embedding response lacks data[].embedding");
    }
    if (out.size() != inputs.size()) throw BackendError(200, attempts, "embedding count mismatch");
    return out;
}

std::string http_chat(const BackendProfile& profile, std::span<const ChatMessage> messages,
                      std::span<const Attachment> attachments) {
    HttpChatClient client(profile);
    return client.chat(messages, attachments).text;
}

json extract_json_object(std::string_view text) {
    auto open = text.find('{');
    auto close = text.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        throw Error(ErrorCode::BackendFailure, "model output contains no JSON object");
    }
    try {
        return json::parse(text.substr(open, close - open + 1));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendFailure, std::string("model output JSON unparsable: ") + e.what());
    }
}

// --- role ports ---------------------------------------------------------------

namespace {

std::vector<Attachment> image_attachment(const ImageInput& image) {
    if (image.bytes.empty()) return {};
    return {Attachment{sniff_mime_type(image.bytes), image.bytes}};
}

}  // namespace

std::string HttpVisionDescriber::describe(const ImageInput& image, std::string_view morphology_prompt) const {
    std::vector<ChatMessage> messages{
        {"system", "You are a dermatology vision assistant. Report observable morphology only."},
        {"user", std::string(morphology_prompt)},
    };
    return trim(client_->chat(messages, image_attachment(image)).text);
}

std::vector<double> HttpClassifier::classify(const ImageInput& image, std::span<const std::string> label_space) const {
    json labels = std::vector<std::string>(label_space.begin(), label_space.end());
    std::vector<ChatMessage> messages{
        {"system",
         "You are a dermatology image classifier. Answer with a single JSON object mapping every candidate "
         "label to its probability. Probabilities are non-negative and sum to 1."},
        {"user", "Candidate labels: " + labels.dump()},
    };
    json answer = extract_json_object(client_->chat(messages, image_attachment(image)).text);
    std::vector<double> dist(label_space.size(), 0.0);
    for (std::size_t i = 0; i < label_space.size(); ++i) {
        if (answer.contains(label_space[i]) && answer[label_space[i]].is_number()) {
            dist[i] = answer[label_space[i]].get<double>();
        }
    }
    return dist;
}

ReviewOutcome HttpReviewer::review(const EvidenceBundle& bundle, std::span<const CaseHit> history,
                                   std::span<const GuidelineVersion> guidelines) const {
    std::ostringstream prompt;
    prompt << "Visual findings:\n" << bundle.visual_findings << "\n\nCandidate diagnoses (label, confidence):\n";
    for (const auto& c : bundle.candidates) prompt << "- " << c.label << ": " << format_double(c.confidence) << "\n";
    prompt << "\nTextbook standards per candidate:\n";
    for (const auto& c : bundle.candidates) {
        const auto& slot = bundle.textbook_priors.at(c.label);
        prompt << "- " << c.label << ": " << (slot ? slot->text : std::string("(no snippet found)")) << "\n";
    }
    prompt << "\nSelf-evolved guidelines:\n";
    if (guidelines.empty()) prompt << "(none)\n";
    for (const auto& g : guidelines) prompt << "- " << g.category << " v" << g.version << ": " << g.text << "\n";
    prompt << "\nSimilar confirmed historical cases:\n";
    if (history.empty()) prompt << "(none)\n";
    for (const auto& h : history) {
        prompt << "- " << h.diagnosis << " (similarity " << format_double(h.score) << "): " << h.key_findings << "\n";
    }
    prompt << "\nFollow the five review stages in order:\n";
    for (std::size_t i = 0; i < kStageNames.size(); ++i) prompt << i + 1 << ". " << kStageNames[i] << "\n";
    prompt << "When statistical candidates conflict with clinical guidelines, prioritize the guidelines. "
              "The final diagnosis must be one of the candidate labels. Reply with one JSON object: "
              "{\"validated_findings\": string, \"stages\": [{\"stage_index\": 1..5, \"decision\": string}], "
              "\"final_diagnosis\": string}.";

    std::vector<ChatMessage> messages{
        {"system", "You are a senior dermatologist reviewing multi-source diagnostic evidence."},
        {"user", prompt.str()},
    };
    json answer = extract_json_object(client_->chat(messages).text);

    ReviewOutcome out;
    out.validated_findings = answer.value("validated_findings", bundle.visual_findings);
    std::map<int, std::string> decisions;
    if (answer.contains("stages") && answer["stages"].is_array()) {
        for (const auto& s : answer["stages"]) {
            if (s.contains("stage_index") && s["stage_index"].is_number_integer() && s.contains("decision")) {
                decisions[s["stage_index"].get<int>()] =
                    s["decision"].is_string() ? s["decision"].get<std::string>() : s["decision"].dump();
            }
        }
    }
    std::string proposed = answer.value("final_diagnosis", std::string{});
    proposed = normalize_label(trim(proposed));
    bool in_candidates = std::any_of(bundle.candidates.begin(), bundle.candidates.end(),
                                     [&](const CandidateDiagnosis& c) { return c.label == proposed; });
    out.final_diagnosis = in_candidates ? proposed : bundle.candidates.front().label;

    std::string digest = hex_digest(prompt.str());
    for (std::size_t i = 0; i < kStageNames.size(); ++i) {
        int index = static_cast<int>(i) + 1;
        auto it = decisions.find(index);
        std::string decision = it != decisions.end() ? it->second : "(not reported by reviewer)";
        if (index == 5 && !in_candidates) {
            decision += " [reviewer proposed '" + proposed + "' outside the candidate set; fell back to top candidate]";
        }
        out.stages.push_back({index, std::string(kStageNames[i]), digest, decision, std::nullopt});
    }
    return out;
}

std::string HttpSummarizer::summarize(const std::optional<std::string>& previous,
                                      std::span<const std::string> findings) const {
    std::ostringstream prompt;
    if (previous) {
        prompt << "Current diagnostic guideline:\n" << *previous << "\n\n---\n\nNew confirmed case findings:\n";
    } else {
        prompt << "Confirmed case findings for one disease category:\n";
    }
    for (const auto& f : findings) prompt << "- " << f << "\n";
    prompt << "\nWrite the " << (previous ? "updated" : "initial")
           << " diagnostic guideline for this category. Merge the new evidence, resolve contradictions, keep "
              "discriminative morphological features, and reply with the guideline text only.";
    std::vector<ChatMessage> messages{
        {"system", "You synthesize dermatological diagnostic guidelines from confirmed cases."},
        {"user", prompt.str()},
    };
    return trim(client_->chat(messages).text);
}

Embedding HttpTextEmbedder::embed_text(std::string_view text) const {
    std::vector<std::string> inputs{std::string(text)};
    Embedding e = client_->embed(inputs).front();
    if (e.dim() != dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "text embedder returned dim " + std::to_string(e.dim()) + ", expected " + std::to_string(dim_));
    }
    return e;
}

Embedding HttpFeatureExtractor::extract(const ImageInput& image) const {
    std::vector<std::string> inputs{"data:" + sniff_mime_type(image.bytes) + ";base64," + base64_encode(image.bytes)};
    Embedding e = client_->embed(inputs).front();
    if (e.dim() != dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "feature extractor returned dim " + std::to_string(e.dim()) + ", expected " + std::to_string(dim_));
    }
    return e;
}

}  // namespace evoderm
