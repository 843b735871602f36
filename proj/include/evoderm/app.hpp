#pragma once

#include "evoderm/config.hpp"
#include "evoderm/knowledge_base.hpp"
#include "evoderm/memory_store.hpp"
#include "evoderm/orchestrator.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace evoderm {

/// Ports for every role, mock or HTTP per the config.
PipelinePorts build_ports(const AppConfig& config);
std::shared_ptr<const TextEmbedderPort> build_text_embedder(const AppConfig& config);

struct DiagnoseOutcome {
    DiagnosisResult result;
    nlohmann::json report;
    std::optional<AddResult> added;
};

/// The wired engine shared by the CLI and the HTTP service: ports, the
/// durable memory graph, and the knowledge base.
class App {
public:
    explicit App(AppConfig config);

    const AppConfig& config() const noexcept { return config_; }
    const PipelinePorts& ports() const noexcept { return ports_; }
    MemoryGraph& memory() noexcept { return memory_; }
    const MemoryGraph& memory() const noexcept { return memory_; }
    KnowledgeBase& kb() noexcept { return *kb_; }

    /// Configured labels, or the labels the memory graph knows about.
    std::vector<std::string> label_space() const;
    PipelineConfig pipeline_config() const;

    /// Runs the pipeline; with `confirm`, writes the case back to memory
    /// under `case_id` (derived from the image when empty).
    DiagnoseOutcome diagnose(const ImageInput& image, bool confirm = false, std::string case_id = {});

    /// Embedding of an image through the configured image embedder.
    Embedding embed_image(const ImageInput& image) const;

    void save_kb() const;

private:
    AppConfig config_;
    PipelinePorts ports_;
    MemoryGraph memory_;
    std::unique_ptr<KnowledgeBase> kb_;
};

/// Default case id for a confirmed image: "case-" + digest of its bytes.
std::string default_case_id(const ImageInput& image);

}  // namespace evoderm
