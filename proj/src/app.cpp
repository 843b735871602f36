#include "evoderm/app.hpp"

#include "evoderm/mock_backends.hpp"
#include "evoderm/model_adapters.hpp"
#include "evoderm/util.hpp"

#include <filesystem>

namespace evoderm {

namespace fs = std::filesystem;

namespace {

std::shared_ptr<const HttpChatClient> client_for(const AppConfig& config, std::string_view role) {
    const auto& rc = config.roles.at(std::string(role));
    if (rc.mode != BackendMode::Http) return nullptr;
    return std::make_shared<const HttpChatClient>(rc.profile, config.max_in_flight);
}

}  // namespace

std::shared_ptr<const TextEmbedderPort> build_text_embedder(const AppConfig& config) {
    if (auto client = client_for(config, "text_embedder")) {
        return std::make_shared<HttpTextEmbedder>(client, config.evolution.dim);
    }
    return std::make_shared<MockTextEmbedder>(config.evolution.dim, config.mock_seed);
}

PipelinePorts build_ports(const AppConfig& config) {
    PipelinePorts ports;
    if (auto c = client_for(config, "image_embedder")) {
        ports.extractor = std::make_shared<HttpFeatureExtractor>(c, config.evolution.dim);
    } else {
        ports.extractor = std::make_shared<MockFeatureExtractor>(config.evolution.dim, config.mock_seed);
    }
    if (auto c = client_for(config, "vision")) {
        ports.describer = std::make_shared<HttpVisionDescriber>(c);
    } else {
        ports.describer = std::make_shared<MockVisionDescriber>();
    }
    if (auto c = client_for(config, "classifier")) {
        ports.classifier = std::make_shared<HttpClassifier>(c);
    } else {
        ports.classifier = std::make_shared<MockClassifier>(config.mock_seed, config.planted_boost);
    }
    if (auto c = client_for(config, "reviewer")) {
        ports.reviewer = std::make_shared<HttpReviewer>(c);
    } else {
        ports.reviewer = std::make_shared<MockReviewer>(config.weights);
    }
    if (auto c = client_for(config, "summarizer")) {
        ports.summarizer = std::make_shared<HttpSummarizer>(c);
    } else {
        ports.summarizer = std::make_shared<MockSummarizer>();
    }
    return ports;
}

App::App(AppConfig config)
    : config_((config.validate(), std::move(config))),
      ports_(build_ports(config_)),
      memory_(MemoryGraph::open(config_.memory_dir, config_.evolution, config_.snapshot_every)),
      kb_(std::make_unique<KnowledgeBase>(build_text_embedder(config_))) {
    if (!config_.labels.empty()) memory_.register_labels(config_.labels);

    std::error_code ec;
    if (!config_.kb_path.empty() && fs::exists(config_.kb_path, ec)) {
        kb_->load(config_.kb_path);
    } else if (!config_.handbook_dir.empty()) {
        kb_->ingest_directory(config_.handbook_dir, config_.chunk_policy, true);
        if (!config_.kb_path.empty()) save_kb();
    }
}

std::vector<std::string> App::label_space() const {
    if (!config_.labels.empty()) return config_.labels;
    const auto& known = memory_.snapshot()->labels();
    return {known.begin(), known.end()};
}

PipelineConfig App::pipeline_config() const {
    PipelineConfig pc;
    pc.label_space = label_space();
    pc.history_k = config_.history_k;
    pc.prior_k = config_.prior_k;
    pc.use_memory = config_.use_memory;
    return pc;
}

DiagnoseOutcome App::diagnose(const ImageInput& image, bool confirm, std::string case_id) {
    DiagnoseOutcome out;
    out.result = evoderm::diagnose(image, ports_, &memory_, kb_.get(), pipeline_config());
    out.report = report_to_json(out.result);
    if (confirm) {
        if (case_id.empty()) case_id = default_case_id(image);
        out.added = confirm_case(memory_, out.result, case_id, *ports_.summarizer);
    }
    return out;
}

Embedding App::embed_image(const ImageInput& image) const {
    if (image.embedding) return *image.embedding;
    return ports_.extractor->extract(image);
}

void App::save_kb() const {
    if (config_.kb_path.empty()) return;
    auto parent = fs::path(config_.kb_path).parent_path();
    std::error_code ec;
    if (!parent.empty()) fs::create_directories(parent, ec);
    kb_->save(config_.kb_path);
}

std::string default_case_id(const ImageInput& image) {
    std::string key(reinterpret_cast<const char*>(image.bytes.data()), image.bytes.size());
    if (image.embedding) {
        for (double v : image.embedding->values()) key += format_double(v) + ",";
    }
    return "case-" + hex_digest(key);
}

}  // namespace evoderm
