#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace evoderm::eval {

struct LabeledPrediction {
    std::string sample_id;
    std::string gold;
    std::string predicted;
};

/// L x L counts, rows = gold, columns = predicted, in label-space order.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::vector<std::string> labels);

    /// Throws UnknownLabel (naming the sample) for labels outside the space.
    static ConfusionMatrix from_predictions(std::span<const LabeledPrediction> preds,
                                            const std::vector<std::string>& labels);

    void add(std::size_t gold, std::size_t predicted, std::uint64_t count = 1);
    std::uint64_t at(std::size_t gold, std::size_t predicted) const { return counts_[gold * size() + predicted]; }
    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::size_t index_of(const std::string& label) const;  // throws UnknownLabel

    std::uint64_t total() const noexcept;
    std::uint64_t row_total(std::size_t gold) const;
    std::uint64_t col_total(std::size_t predicted) const;
    std::uint64_t trace() const;

private:
    std::vector<std::string> labels_;
    std::vector<std::uint64_t> counts_;
};

// Each metric throws EmptyInput on an empty matrix. Zero denominators give 0.
double accuracy(const ConfusionMatrix& m);
std::vector<double> per_class_f1(const ConfusionMatrix& m);
double macro_f1(const ConfusionMatrix& m);
double weighted_f1(const ConfusionMatrix& m);
double mcc(const ConfusionMatrix& m);
double kappa(const ConfusionMatrix& m);
/// Mean recall over classes present in gold.
double balanced_accuracy(const ConfusionMatrix& m);

/// True when the metric fell back to 0 on a vanishing denominator.
bool mcc_degenerate(const ConfusionMatrix& m);
bool kappa_degenerate(const ConfusionMatrix& m);

enum class Metric { Accuracy, MacroF1, WeightedF1, Mcc, Kappa, BalancedAccuracy };

inline constexpr Metric kAllMetrics[] = {Metric::Accuracy, Metric::MacroF1, Metric::WeightedF1,
                                         Metric::Mcc,      Metric::Kappa,   Metric::BalancedAccuracy};

std::string metric_name(Metric metric);
double compute(Metric metric, const ConfusionMatrix& m);

using MetricFn = std::function<double(const ConfusionMatrix&)>;

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Percentile bootstrap. Resample r draws n indices from an mt19937_64
/// seeded with derive_seed(seed, r), each as floor(unit_interval(x) * n);
/// bounds are type-7 quantiles of the sorted resample statistics.
/// Throws TooFewSamples (n < 2) and InvalidArgument (resamples < 100 or
/// level outside (0, 1)).
Interval bootstrap_ci(std::span<const LabeledPrediction> preds, const std::vector<std::string>& labels,
                      const MetricFn& metric, std::size_t resamples, std::uint64_t seed, double level = 0.95);

/// Linear interpolation between closest ranks over sorted data.
double quantile_type7(std::span<const double> sorted, double q);

struct TTestResult {
    double t_stat = 0.0;
    double p_value = 1.0;
    std::size_t df = 0;
    double mean_diff = 0.0;
    bool zero_variance = false;
};

/// Two-sided paired t-test on a - b. Throws LengthMismatch and TooFewSamples.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

struct MetricValue {
    std::string name;
    double value = 0.0;
    std::optional<Interval> ci;
    bool degenerate = false;
};

struct MetricReport {
    std::size_t n = 0;
    std::size_t label_count = 0;
    std::vector<MetricValue> metrics;
    std::optional<TTestResult> comparison;
    std::size_t bootstrap_resamples = 0;
    std::uint64_t seed = 0;
};

/// All metrics, with bootstrap intervals when resamples > 0.
MetricReport evaluate(std::span<const LabeledPrediction> preds, const std::vector<std::string>& labels,
                      std::size_t resamples, std::uint64_t seed);

nlohmann::json to_json(const MetricReport& report);
std::string format_table(const MetricReport& report);

}  // namespace evoderm::eval
