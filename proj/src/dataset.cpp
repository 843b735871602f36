#include "evoderm/dataset.hpp"

#include "evoderm/csv.hpp"
#include "evoderm/domain.hpp"
#include "evoderm/error.hpp"
#include "evoderm/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_map>

namespace evoderm::eval {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

Manifest parse_manifest(std::string_view csv_text) {
    auto rows = csv::parse(csv_text);
    if (rows.empty()) throw Error(ErrorCode::MalformedInput, "manifest is empty");
    const auto& header = rows.front();
    bool has_sub = header.size() == 4 && header[3] == "sub_label";
    if (header.size() < 3 || header[0] != "sample_id" || header[1] != "image_path" || header[2] != "label" ||
        (header.size() == 4 && !has_sub) || header.size() > 4) {
        throw Error(ErrorCode::MalformedInput, "manifest header must be sample_id,image_path,label[,sub_label]");
    }
    Manifest out;
    std::set<std::string> ids;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != header.size()) {
            throw Error(ErrorCode::MalformedInput, "manifest row " + std::to_string(i + 1) + " has " +
                                                       std::to_string(r.size()) + " fields, expected " +
                                                       std::to_string(header.size()));
        }
        if (r[0].empty() || r[2].empty()) {
            throw Error(ErrorCode::MalformedInput, "manifest row " + std::to_string(i + 1) + " lacks id or label");
        }
        if (!ids.insert(r[0]).second) throw Error(ErrorCode::MalformedInput, "duplicate sample_id " + r[0]);
        ManifestRecord rec{r[0], r[1], normalize_label(r[2]), std::nullopt};
        if (has_sub && !r[3].empty()) rec.sub_label = r[3];
        out.push_back(std::move(rec));
    }
    return out;
}

Manifest read_manifest(const std::string& path) { return parse_manifest(read_file_text(path)); }

std::string format_manifest(const Manifest& manifest) {
    bool has_sub = std::any_of(manifest.begin(), manifest.end(), [](const auto& r) { return r.sub_label.has_value(); });
    std::string out = has_sub ? "sample_id,image_path,label,sub_label\n" : "sample_id,image_path,label\n";
    for (const auto& r : manifest) {
        csv::Row row{r.sample_id, r.image_path, r.label};
        if (has_sub) row.push_back(r.sub_label.value_or(""));
        out += csv::format_row(row);
        out += '\n';
    }
    return out;
}

std::map<std::string, std::string> parse_predictions(std::string_view csv_text) {
    auto rows = csv::parse(csv_text);
    if (rows.empty() || rows.front().size() != 2 || rows.front()[0] != "sample_id" ||
        rows.front()[1] != "predicted_label") {
        throw Error(ErrorCode::MalformedInput, "predictions header must be sample_id,predicted_label");
    }
    std::map<std::string, std::string> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 2) {
            throw Error(ErrorCode::MalformedInput, "predictions row " + std::to_string(i + 1) + " needs 2 fields");
        }
        if (!out.emplace(rows[i][0], normalize_label(rows[i][1])).second) {
            throw Error(ErrorCode::MalformedInput, "duplicate prediction for " + rows[i][0]);
        }
    }
    return out;
}

std::map<std::string, std::string> read_predictions(const std::string& path) {
    return parse_predictions(read_file_text(path));
}

std::vector<LabeledPrediction> join_predictions(const Manifest& gold, const std::map<std::string, std::string>& predicted) {
    std::vector<LabeledPrediction> out;
    out.reserve(gold.size());
    for (const auto& r : gold) {
        auto it = predicted.find(r.sample_id);
        if (it == predicted.end()) throw Error(ErrorCode::MalformedInput, "no prediction for sample " + r.sample_id);
        out.push_back({r.sample_id, r.label, it->second});
    }
    return out;
}

std::vector<std::string> label_space_of(const Manifest& manifest) {
    std::vector<std::string> labels;
    std::set<std::string> seen;
    for (const auto& r : manifest) {
        if (seen.insert(r.label).second) labels.push_back(r.label);
    }
    return labels;
}

std::vector<RemapRule> parse_remap_rules(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedInput, std::string("remap rules: ") + e.what());
    }
    if (!j.is_array()) throw Error(ErrorCode::MalformedInput, "remap rules must be a JSON array");
    std::vector<RemapRule> rules;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("pattern") || !item.contains("target") ||
            !item["pattern"].is_string() || !item["target"].is_string()) {
            throw Error(ErrorCode::MalformedInput, "each remap rule needs string pattern and target");
        }
        RemapRule rule{item["pattern"].get<std::string>(), normalize_label(item["target"].get<std::string>())};
        std::string match = item.value("match", std::string("substring"));
        if (match == "exact") {
            rule.match = RemapRule::Match::Exact;
        } else if (match != "substring") {
            throw Error(ErrorCode::MalformedInput, "unknown match kind '" + match + "'");
        }
        if (rule.pattern.empty() || rule.target.empty()) {
            throw Error(ErrorCode::MalformedInput, "remap rule pattern and target must be non-empty");
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

RemapResult remap_labels(const Manifest& manifest, std::span<const RemapRule> rules, bool drop_unmatched) {
    std::vector<std::string> patterns;
    for (const auto& r : rules) patterns.push_back(lower(r.pattern));

    RemapResult out;
    for (const auto& rec : manifest) {
        std::string source = lower(rec.sub_label.value_or(rec.label));
        const RemapRule* hit = nullptr;
        for (std::size_t i = 0; i < rules.size() && !hit; ++i) {
            bool matches = rules[i].match == RemapRule::Match::Exact ? source == patterns[i]
                                                                      : source.find(patterns[i]) != std::string::npos;
            if (matches) hit = &rules[i];
        }
        if (!hit && drop_unmatched) {
            ++out.dropped;
            continue;
        }
        ManifestRecord next = rec;
        if (hit) next.label = hit->target;
        ++out.counts[next.label];
        out.manifest.push_back(std::move(next));
    }
    return out;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& engine) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(engine, i)]);
}

std::size_t train_count(double ratio, std::size_t n) {
    return std::min(n, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9)));
}

}  // namespace

SplitResult split(const Manifest& manifest, double train_ratio, std::uint64_t seed, bool stratified) {
    if (manifest.empty()) throw Error(ErrorCode::EmptyManifest, "cannot split an empty manifest");
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw Error(ErrorCode::InvalidArgument, "train_ratio must be in (0,1)");

    std::vector<bool> in_train(manifest.size(), false);
    auto pick = [&](std::vector<std::size_t> members, std::uint64_t stream) {
        std::mt19937_64 engine(derive_seed(seed, stream));
        shuffle_indices(members, engine);
        std::size_t take = train_count(train_ratio, members.size());
        for (std::size_t i = 0; i < take; ++i) in_train[members[i]] = true;
    };

    if (stratified) {
        std::map<std::string, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < manifest.size(); ++i) by_class[manifest[i].label].push_back(i);
        for (auto& [label, members] : by_class) pick(std::move(members), stable_hash(label));
    } else {
        std::vector<std::size_t> all(manifest.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        pick(std::move(all), 0);
    }

    SplitResult out;
    for (std::size_t i = 0; i < manifest.size(); ++i) (in_train[i] ? out.train : out.test).push_back(manifest[i]);
    return out;
}

}  // namespace evoderm::eval
