#pragma once

#include "evoderm/metrics.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evoderm::eval {

struct ManifestRecord {
    std::string sample_id;
    std::string image_path;
    std::string label;
    std::optional<std::string> sub_label;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

using Manifest = std::vector<ManifestRecord>;

/// CSV with header `sample_id,image_path,label[,sub_label]`. Throws
/// MalformedInput on a bad header, short row, or duplicate sample_id.
Manifest parse_manifest(std::string_view csv_text);
Manifest read_manifest(const std::string& path);
std::string format_manifest(const Manifest& manifest);

/// Model output CSV `sample_id,predicted_label` with header.
std::map<std::string, std::string> parse_predictions(std::string_view csv_text);
std::map<std::string, std::string> read_predictions(const std::string& path);

/// Joins gold labels with predictions. Throws MalformedInput when a
/// manifest sample has no prediction.
std::vector<LabeledPrediction> join_predictions(const Manifest& gold, const std::map<std::string, std::string>& predicted);

/// Gold labels in order of first appearance.
std::vector<std::string> label_space_of(const Manifest& manifest);

struct RemapRule {
    enum class Match { Substring, Exact };
    std::string pattern;
    std::string target;
    Match match = Match::Substring;
};

/// JSON array of {"pattern", "target", "match": "substring" | "exact"}.
std::vector<RemapRule> parse_remap_rules(std::string_view json_text);

struct RemapResult {
    Manifest manifest;
    std::map<std::string, std::size_t> counts;  // per resulting label
    std::size_t dropped = 0;
};

/// Matches each record's sub_label (its label when there is none) against
/// the rules case-insensitively; the first match sets the label.
RemapResult remap_labels(const Manifest& manifest, std::span<const RemapRule> rules, bool drop_unmatched);

struct SplitResult {
    Manifest train;
    Manifest test;
};

/// Seeded split. Stratified mode takes floor(ratio * N_i) of every class
/// into train. Both parts keep the input order. Throws EmptyManifest and
/// InvalidArgument for a ratio outside (0, 1).
SplitResult split(const Manifest& manifest, double train_ratio, std::uint64_t seed, bool stratified);

}  // namespace evoderm::eval
