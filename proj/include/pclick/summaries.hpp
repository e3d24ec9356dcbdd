// summaries.hpp — Summary statistics for ABC and feature frontends.
// All statistics are symmetric functions of the waiting times; sums run
// over sorted copies so permuted records produce bit-identical vectors.

#pragma once

#include <vector>

#include "pclick/common.hpp"
#include "pclick/trajectory.hpp"

namespace pclick {

enum class SummaryKind { TotalTime, MeanWaitingTime, Histogram };

std::string to_string(SummaryKind k);
SummaryKind summary_kind_from_string(const std::string& s);

struct SummarySpec {
    SummaryKind kind = SummaryKind::TotalTime;
    // Histogram only: ordered edges e_0 < ... < e_K; bins [e_i, e_{i+1})
    // plus a final overflow bin [e_K, inf). Counts have K+1 entries.
    RVec bin_edges;
};

struct SummaryVector {
    std::vector<RVec> parts;  // one block per statistic, in spec order
};

// Uniform histogram spec: `bins` bins on [0, upper] plus overflow.
SummarySpec uniform_histogram_spec(double upper, int bins);

SummaryVector compute_summaries(const PhotoclickRecord& record,
                                const std::vector<SummarySpec>& specs);

// |a - b| for scalar statistics, Euclidean norm on histogram counts.
double summary_distance(const RVec& a, const RVec& b, SummaryKind kind);

}  // namespace pclick
