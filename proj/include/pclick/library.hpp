// library.hpp — Persistent trajectory libraries shared by ABC and neural
// training. Binary format "PCLB": magic, version, length-prefixed JSON
// metadata, then per entry the parameter point, click count, waiting times
// (IEEE-754 double, little-endian) and one label byte per click.

#pragma once

#include <string>
#include <vector>

#include "pclick/quantum.hpp"
#include "pclick/summaries.hpp"
#include "pclick/trajectory.hpp"

namespace pclick {

struct PriorRange {
    std::string name;
    double lo = 0.0, hi = 1.0;
};

struct LibraryMetadata {
    std::string model_family;                 // "tls" | "optomech"
    std::map<std::string, double> control;    // fixed model parameters
    std::vector<int> dims;                    // Fock truncation (optomech)
    std::vector<PriorRange> prior;            // uniform prior over theta
    int n_clicks = 0;                         // detected clicks per record
    std::uint64_t seed = 0;
    std::string draw_mode = "prior";          // "prior" | "grid"
    double dark_rate = 0.0;                   // Poisson background injected
    std::vector<std::string> label_legend;    // label byte -> channel label
    RVec histogram_edges;                     // frozen summary bin spec
    double mean_waiting_time = 0.0;           // library-wide normalization
    double mean_total_time = 0.0;
    std::string truncation_note;              // recorded truncation report

    std::string id() const;  // hash over everything above
};

struct LibraryEntry {
    ParameterPoint theta;
    PhotoclickRecord record;
    SummaryVector summaries;  // cached; reproducible bit-exactly from record
};

struct TrajectoryLibrary {
    LibraryMetadata meta;
    std::vector<LibraryEntry> entries;

    std::size_t size() const { return entries.size(); }
    // the library's default statistics (TotalTime + frozen-bin Histogram)
    std::vector<SummarySpec> default_statistics() const;
    void recompute_summaries();

    void save(const std::string& path, bool overwrite = false) const;
    static TrajectoryLibrary load(const std::string& path);
};

struct GenerationConfig {
    int n_entries = 0;
    int n_clicks = 0;
    std::uint64_t seed = 0;
    std::string draw_mode = "prior";  // "prior" draws theta per entry; "grid"
                                      // cycles a uniform grid over the prior box
    int grid_points = 0;              // per axis, draw_mode == "grid"
    double dark_rate = 0.0;
    int histogram_bins = 40;
    int threads = 0;
    std::uint64_t stream_offset = 0;  // disjoint stream block (test sets)
};

// Builds a model from a parameter point plus fixed metadata. Thread-safe.
using LibraryModelFactory = std::function<ModelSpec(const ParameterPoint&)>;

TrajectoryLibrary generate_library(const LibraryModelFactory& factory,
                                   const LibraryMetadata& base_meta,
                                   const GenerationConfig& cfg);

}  // namespace pclick
