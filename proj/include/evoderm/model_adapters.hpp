#pragma once

#include "evoderm/error.hpp"
#include "evoderm/ports.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace evoderm {

/// Top min(5, |labels|) of the classifier's distribution, ordered by
/// confidence then label. Throws DistributionInvalid if the distribution is
/// misaligned, negative, non-finite, or does not sum to 1 within 1e-9.
std::vector<CandidateDiagnosis> classify_top5(const ClassifierPort& classifier, const ImageInput& image,
                                              std::span<const std::string> label_space);

/// Connection and generation settings for one OpenAI-compatible endpoint.
struct BackendProfile {
    std::string endpoint_url = "http://127.0.0.1:8000";
    std::string model_name;
    double temperature = 0.3;
    int max_tokens = 4096;
    int timeout_ms = 120000;
    int max_retries = 3;
    std::string auth_token_env_var;  // name of the variable, never the token itself
    int backoff_base_ms = 250;
    std::uint64_t jitter_seed = 0;

    void validate() const;
};

/// BackendFailure with the last HTTP status (0 for transport errors) and
/// the number of attempts made.
class BackendError : public Error {
public:
    BackendError(int status, int attempts, const std::string& message)
        : Error(ErrorCode::BackendFailure,
                message + " (status " + std::to_string(status) + ", attempts " + std::to_string(attempts) + ")"),
          status_(status),
          attempts_(attempts) {}

    int status() const noexcept { return status_; }
    int attempts() const noexcept { return attempts_; }

private:
    int status_;
    int attempts_;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct Attachment {
    std::string mime_type;
    Bytes data;
};

struct ChatResult {
    std::string text;
    int attempts = 0;
};

/// Guess a MIME type from magic bytes; application/octet-stream otherwise.
std::string sniff_mime_type(std::span<const std::uint8_t> data);

/// Request body for POST /v1/chat/completions. Attachments are appended to
/// the last user message as base64 data URLs.
nlohmann::json build_chat_request(const BackendProfile& profile, std::span<const ChatMessage> messages,
                                  std::span<const Attachment> attachments);

/// Upper bound of the delay before retry number `retry` (1-based):
/// base * 2^(retry-1). The actual delay is drawn uniformly from [0, bound].
std::chrono::milliseconds backoff_ceiling(const BackendProfile& profile, int retry);

/// Client for one endpoint. Transport errors, 429 and 5xx are retried up to
/// max_retries times with full-jitter exponential backoff; other 4xx fail
/// immediately. At most `max_in_flight` requests run concurrently per client.
class HttpChatClient {
public:
    explicit HttpChatClient(BackendProfile profile, std::size_t max_in_flight = 4);
    ~HttpChatClient();
    HttpChatClient(const HttpChatClient&) = delete;
    HttpChatClient& operator=(const HttpChatClient&) = delete;

    const BackendProfile& profile() const noexcept { return profile_; }

    ChatResult chat(std::span<const ChatMessage> messages, std::span<const Attachment> attachments = {}) const;
    std::vector<Embedding> embed(std::span<const std::string> inputs) const;

private:
    struct Limiter;

    BackendProfile profile_;
    std::unique_ptr<Limiter> limiter_;

    nlohmann::json post_json(const std::string& path_suffix, const nlohmann::json& body, int& attempts) const;
};

/// One-shot chat completion; returns the assistant text.
std::string http_chat(const BackendProfile& profile, std::span<const ChatMessage> messages,
                      std::span<const Attachment> attachments = {});

// --- HTTP-backed role ports -------------------------------------------------

class HttpVisionDescriber final : public VisionDescriberPort {
public:
    explicit HttpVisionDescriber(std::shared_ptr<const HttpChatClient> client) : client_(std::move(client)) {}
    std::string describe(const ImageInput& image, std::string_view morphology_prompt) const override;

private:
    std::shared_ptr<const HttpChatClient> client_;
};

class HttpClassifier final : public ClassifierPort {
public:
    explicit HttpClassifier(std::shared_ptr<const HttpChatClient> client) : client_(std::move(client)) {}
    std::vector<double> classify(const ImageInput& image, std::span<const std::string> label_space) const override;

private:
    std::shared_ptr<const HttpChatClient> client_;
};

class HttpReviewer final : public ReviewerPort {
public:
    explicit HttpReviewer(std::shared_ptr<const HttpChatClient> client) : client_(std::move(client)) {}
    ReviewOutcome review(const EvidenceBundle& bundle, std::span<const CaseHit> history,
                         std::span<const GuidelineVersion> guidelines) const override;

private:
    std::shared_ptr<const HttpChatClient> client_;
};

class HttpSummarizer final : public SummarizerPort {
public:
    explicit HttpSummarizer(std::shared_ptr<const HttpChatClient> client) : client_(std::move(client)) {}
    std::string summarize(const std::optional<std::string>& previous,
                          std::span<const std::string> findings) const override;

private:
    std::shared_ptr<const HttpChatClient> client_;
};

class HttpTextEmbedder final : public TextEmbedderPort {
public:
    HttpTextEmbedder(std::shared_ptr<const HttpChatClient> client, std::size_t dim)
        : client_(std::move(client)), dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    Embedding embed_text(std::string_view text) const override;

private:
    std::shared_ptr<const HttpChatClient> client_;
    std::size_t dim_;
};

/// Sends the image as a data URL to the embeddings endpoint.
class HttpFeatureExtractor final : public FeatureExtractorPort {
public:
    HttpFeatureExtractor(std::shared_ptr<const HttpChatClient> client, std::size_t dim)
        : client_(std::move(client)), dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    Embedding extract(const ImageInput& image) const override;

private:
    std::shared_ptr<const HttpChatClient> client_;
    std::size_t dim_;
};

/// Pulls the first {...} object out of model output (tolerates code fences).
nlohmann::json extract_json_object(std::string_view text);

}  // namespace evoderm
