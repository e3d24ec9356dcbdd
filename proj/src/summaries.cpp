// summaries.cpp

#include "pclick/summaries.hpp"

#include <algorithm>
#include <cmath>

namespace pclick {

std::string to_string(SummaryKind k) {
    switch (k) {
        case SummaryKind::TotalTime: return "total_time";
        case SummaryKind::MeanWaitingTime: return "mean_waiting_time";
        case SummaryKind::Histogram: return "histogram";
    }
    return "?";
}

SummaryKind summary_kind_from_string(const std::string& s) {
    if (s == "total_time") return SummaryKind::TotalTime;
    if (s == "mean_waiting_time") return SummaryKind::MeanWaitingTime;
    if (s == "histogram") return SummaryKind::Histogram;
    fail(ErrorKind::Usage, "unknown summary statistic: " + s);
}

SummarySpec uniform_histogram_spec(double upper, int bins) {
    if (!(upper > 0.0) || bins < 2)
        fail(ErrorKind::Usage, "histogram spec needs upper > 0 and bins >= 2");
    SummarySpec spec;
    spec.kind = SummaryKind::Histogram;
    spec.bin_edges = RVec::LinSpaced(bins + 1, 0.0, upper);
    return spec;
}

SummaryVector compute_summaries(const PhotoclickRecord& record,
                                const std::vector<SummarySpec>& specs) {
    if (record.clicks() == 0) fail(ErrorKind::InvalidRecord, "summaries need a nonempty record");
    if (specs.empty()) fail(ErrorKind::Usage, "no summary statistics requested");

    std::vector<double> sorted = record.waiting_times;
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (double w : sorted) total += w;  // sorted sum: permutation independent

    SummaryVector out;
    out.parts.reserve(specs.size());
    for (const auto& spec : specs) {
        switch (spec.kind) {
            case SummaryKind::TotalTime: {
                RVec v(1);
                v << total;
                out.parts.push_back(v);
                break;
            }
            case SummaryKind::MeanWaitingTime: {
                RVec v(1);
                v << total / static_cast<double>(sorted.size());
                out.parts.push_back(v);
                break;
            }
            case SummaryKind::Histogram: {
                const auto& e = spec.bin_edges;
                if (e.size() < 2)
                    fail(ErrorKind::Usage, "histogram statistic without bin edges");
                RVec counts = RVec::Zero(e.size());
                for (double w : sorted) {
                    auto it = std::upper_bound(e.data(), e.data() + e.size(), w);
                    Eigen::Index bin = std::max<Eigen::Index>(0, it - e.data() - 1);
                    counts[std::min<Eigen::Index>(bin, e.size() - 1)] += 1.0;
                }
                out.parts.push_back(std::move(counts));
                break;
            }
        }
    }
    return out;
}

double summary_distance(const RVec& a, const RVec& b, SummaryKind kind) {
    if (a.size() != b.size())
        fail(ErrorKind::Compatibility, "summary vectors have mismatched sizes");
    if (kind == SummaryKind::Histogram) return (a - b).norm();
    return std::abs(a[0] - b[0]);
}

}  // namespace pclick
