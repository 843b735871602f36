#include "evoderm/metrics.hpp"

#include "evoderm/error.hpp"
#include "evoderm/util.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace evoderm::eval {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw Error(ErrorCode::InvalidArgument, "label space is empty");
    std::vector<std::string> sorted = labels_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(ErrorCode::InvalidArgument, "label space has duplicates");
    }
    counts_.assign(labels_.size() * labels_.size(), 0);
}

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const LabeledPrediction> preds,
                                                  const std::vector<std::string>& labels) {
    ConfusionMatrix m(labels);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], i);
    for (const auto& p : preds) {
        auto g = index.find(p.gold);
        auto q = index.find(p.predicted);
        if (g == index.end() || q == index.end()) {
            const std::string& bad = g == index.end() ? p.gold : p.predicted;
            throw Error(ErrorCode::UnknownLabel, "sample " + p.sample_id + ": label '" + bad + "' not in label space");
        }
        m.add(g->second, q->second);
    }
    return m;
}

void ConfusionMatrix::add(std::size_t gold, std::size_t predicted, std::uint64_t count) {
    if (gold >= size() || predicted >= size()) throw Error(ErrorCode::InvalidArgument, "class index out of range");
    counts_[gold * size() + predicted] += count;
}

std::size_t ConfusionMatrix::index_of(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw Error(ErrorCode::UnknownLabel, "label '" + label + "' not in label space");
    return static_cast<std::size_t>(it - labels_.begin());
}

std::uint64_t ConfusionMatrix::total() const noexcept {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_total(std::size_t gold) const {
    std::uint64_t t = 0;
    for (std::size_t p = 0; p < size(); ++p) t += at(gold, p);
    return t;
}

std::uint64_t ConfusionMatrix::col_total(std::size_t predicted) const {
    std::uint64_t t = 0;
    for (std::size_t g = 0; g < size(); ++g) t += at(g, predicted);
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < size(); ++i) t += at(i, i);
    return t;
}

namespace {

std::uint64_t require_samples(const ConfusionMatrix& m) {
    std::uint64_t n = m.total();
    if (n == 0) throw Error(ErrorCode::EmptyInput, "no samples in confusion matrix");
    return n;
}

// Integer pieces of the multiclass MCC: numerator c*s - sum(p_k t_k) and the
// two denominator factors s^2 - sum(p_k^2), s^2 - sum(t_k^2).
struct MccParts {
    long double cov_xy = 0, cov_xx = 0, cov_yy = 0;
};

MccParts mcc_parts(const ConfusionMatrix& m) {
    long double s = static_cast<long double>(m.total());
    long double c = static_cast<long double>(m.trace());
    long double pt = 0, pp = 0, tt = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        long double p = static_cast<long double>(m.col_total(k));
        long double t = static_cast<long double>(m.row_total(k));
        pt += p * t;
        pp += p * p;
        tt += t * t;
    }
    return {c * s - pt, s * s - pp, s * s - tt};
}

}  // namespace

double accuracy(const ConfusionMatrix& m) {
    auto n = require_samples(m);
    return static_cast<double>(m.trace()) / static_cast<double>(n);
}

std::vector<double> per_class_f1(const ConfusionMatrix& m) {
    require_samples(m);
    std::vector<double> f1(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        double tp = static_cast<double>(m.at(i, i));
        double fp = static_cast<double>(m.col_total(i)) - tp;
        double fn = static_cast<double>(m.row_total(i)) - tp;
        double denom = 2 * tp + fp + fn;
        f1[i] = denom > 0 ? 2 * tp / denom : 0.0;
    }
    return f1;
}

double macro_f1(const ConfusionMatrix& m) {
    auto f1 = per_class_f1(m);
    return std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(f1.size());
}

double weighted_f1(const ConfusionMatrix& m) {
    auto f1 = per_class_f1(m);
    double n = static_cast<double>(m.total());
    double sum = 0.0;
    for (std::size_t i = 0; i < f1.size(); ++i) sum += f1[i] * static_cast<double>(m.row_total(i));
    return sum / n;
}

double mcc(const ConfusionMatrix& m) {
    require_samples(m);
    auto parts = mcc_parts(m);
    if (parts.cov_xx == 0 || parts.cov_yy == 0) return 0.0;
    return static_cast<double>(parts.cov_xy / std::sqrt(parts.cov_xx * parts.cov_yy));
}

bool mcc_degenerate(const ConfusionMatrix& m) {
    if (m.total() == 0) return true;
    auto parts = mcc_parts(m);
    return parts.cov_xx == 0 || parts.cov_yy == 0;
}

double kappa(const ConfusionMatrix& m) {
    auto n = static_cast<long double>(require_samples(m));
    long double chance = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        chance += static_cast<long double>(m.row_total(i)) * static_cast<long double>(m.col_total(i));
    }
    long double denom = n * n - chance;
    if (denom == 0) return 0.0;
    return static_cast<double>((n * static_cast<long double>(m.trace()) - chance) / denom);
}

bool kappa_degenerate(const ConfusionMatrix& m) {
    if (m.total() == 0) return true;
    long double n = static_cast<long double>(m.total());
    long double chance = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        chance += static_cast<long double>(m.row_total(i)) * static_cast<long double>(m.col_total(i));
    }
    return n * n == chance;
}

double balanced_accuracy(const ConfusionMatrix& m) {
    require_samples(m);
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        auto row = m.row_total(i);
        if (row == 0) continue;
        sum += static_cast<double>(m.at(i, i)) / static_cast<double>(row);
        ++present;
    }
    return sum / static_cast<double>(present);
}

std::string metric_name(Metric metric) {
    switch (metric) {
        case Metric::Accuracy: return "accuracy";
        case Metric::MacroF1: return "macro_f1";
        case Metric::WeightedF1: return "weighted_f1";
        case Metric::Mcc: return "mcc";
        case Metric::Kappa: return "kappa";
        case Metric::BalancedAccuracy: return "balanced_accuracy";
    }
    return "unknown";
}

double compute(Metric metric, const ConfusionMatrix& m) {
    switch (metric) {
        case Metric::Accuracy: return accuracy(m);
        case Metric::MacroF1: return macro_f1(m);
        case Metric::WeightedF1: return weighted_f1(m);
        case Metric::Mcc: return mcc(m);
        case Metric::Kappa: return kappa(m);
        case Metric::BalancedAccuracy: return balanced_accuracy(m);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown metric");
}

double quantile_type7(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "quantile of empty data");
    double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

Interval bootstrap_ci(std::span<const LabeledPrediction> preds, const std::vector<std::string>& labels,
                      const MetricFn& metric, std::size_t resamples, std::uint64_t seed, double level) {
    if (preds.size() < 2) throw Error(ErrorCode::TooFewSamples, "bootstrap needs at least 2 samples");
    if (resamples < 100) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 100 resamples");
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "confidence level must be in (0,1)");

    // Validates labels once and gives each sample its (gold, predicted) cell.
    ConfusionMatrix full = ConfusionMatrix::from_predictions(preds, labels);
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    cells.reserve(preds.size());
    for (const auto& p : preds) cells.emplace_back(full.index_of(p.gold), full.index_of(p.predicted));

    const std::size_t n = cells.size();
    std::vector<double> stats;
    stats.reserve(resamples);
    for (std::size_t r = 0; r < resamples; ++r) {
        std::mt19937_64 engine(derive_seed(seed, r));
        ConfusionMatrix m(labels);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& [g, q] = cells[uniform_index(engine, n)];
            m.add(g, q);
        }
        stats.push_back(metric(m));
    }
    std::sort(stats.begin(), stats.end());
    double tail = (1.0 - level) / 2.0;
    return {quantile_type7(stats, tail), quantile_type7(stats, 1.0 - tail)};
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    "paired samples differ in length: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    if (a.size() < 2) throw Error(ErrorCode::TooFewSamples, "paired t-test needs at least 2 pairs");

    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];

    TTestResult r;
    r.df = n - 1;
    r.mean_diff = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    if (std::all_of(d.begin(), d.end(), [&](double x) { return x == d.front(); })) {
        r.zero_variance = true;
        return r;
    }
    double ss = 0.0;
    for (double x : d) ss += (x - r.mean_diff) * (x - r.mean_diff);
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    r.t_stat = r.mean_diff / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(static_cast<double>(r.df));
    r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_stat))));
    return r;
}

MetricReport evaluate(std::span<const LabeledPrediction> preds, const std::vector<std::string>& labels,
                      std::size_t resamples, std::uint64_t seed) {
    ConfusionMatrix m = ConfusionMatrix::from_predictions(preds, labels);
    require_samples(m);
    MetricReport report;
    report.n = preds.size();
    report.label_count = labels.size();
    report.bootstrap_resamples = resamples;
    report.seed = seed;
    for (Metric metric : kAllMetrics) {
        MetricValue v;
        v.name = metric_name(metric);
        v.value = compute(metric, m);
        if (metric == Metric::Mcc) v.degenerate = mcc_degenerate(m);
        if (metric == Metric::Kappa) v.degenerate = kappa_degenerate(m);
        if (resamples > 0) {
            v.ci = bootstrap_ci(preds, labels, [metric](const ConfusionMatrix& cm) { return compute(metric, cm); },
                                resamples, seed);
        }
        report.metrics.push_back(std::move(v));
    }
    return report;
}

json to_json(const MetricReport& report) {
    json metrics = json::object();
    for (const auto& v : report.metrics) {
        json j{{"value", v.value}, {"degenerate", v.degenerate}};
        if (v.ci) {
            j["ci_low"] = v.ci->low;
            j["ci_high"] = v.ci->high;
            j["value_within_ci"] = v.ci->low <= v.value && v.value <= v.ci->high;
        }
        metrics[v.name] = std::move(j);
    }
    json out{{"n", report.n}, {"label_count", report.label_count}, {"metrics", std::move(metrics)}};
    if (report.bootstrap_resamples > 0) {
        out["bootstrap"] = {{"resamples", report.bootstrap_resamples}, {"seed", report.seed}, {"level", 0.95}};
    }
    if (report.comparison) {
        const auto& t = *report.comparison;
        out["paired_ttest"] = {{"t_stat", t.t_stat},   {"p_value", t.p_value},         {"df", t.df},
                               {"mean_diff", t.mean_diff}, {"zero_variance", t.zero_variance}};
    }
    return out;
}

std::string format_table(const MetricReport& report) {
    auto fixed = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", x);
        return std::string(buf);
    };
    std::size_t width = 6;
    for (const auto& v : report.metrics) width = std::max(width, v.name.size());

    std::ostringstream out;
    out << "n=" << report.n << "  labels=" << report.label_count << "\n";
    auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
    out << pad("metric", width) << "  " << pad("value", 8) << "  " << pad("ci_low", 8) << "  ci_high\n";
    for (const auto& v : report.metrics) {
        out << pad(v.name, width) << "  " << pad(fixed(v.value), 8) << "  "
            << pad(v.ci ? fixed(v.ci->low) : "-", 8) << "  " << (v.ci ? fixed(v.ci->high) : "-");
        if (v.degenerate) out << "  (degenerate: 0 by convention)";
        out << "\n";
    }
    if (report.comparison) {
        const auto& t = *report.comparison;
        out << "paired t-test: t=" << fixed(t.t_stat) << " df=" << t.df << " p=" << fixed(t.p_value);
        if (t.zero_variance) out << " (zero variance)";
        out << "\n";
    }
    return out.str();
}

}  // namespace evoderm::eval
