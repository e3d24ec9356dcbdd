// library.cpp — PCLB persistence and library generation

#include "pclick/library.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pclick/rng.hpp"

namespace pclick {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'L', 'B'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json meta_to_json(const LibraryMetadata& m) {
    nlohmann::json j;
    j["model_family"] = m.model_family;
    j["control"] = m.control;
    j["dims"] = m.dims;
    nlohmann::json prior = nlohmann::json::array();
    for (const auto& p : m.prior) prior.push_back({{"name", p.name}, {"lo", p.lo}, {"hi", p.hi}});
    j["prior"] = prior;
    j["n_clicks"] = m.n_clicks;
    j["seed"] = m.seed;
    j["draw_mode"] = m.draw_mode;
    j["dark_rate"] = m.dark_rate;
    j["label_legend"] = m.label_legend;
    j["histogram_edges"] = std::vector<double>(m.histogram_edges.data(),
                                               m.histogram_edges.data() + m.histogram_edges.size());
    j["mean_waiting_time"] = m.mean_waiting_time;
    j["mean_total_time"] = m.mean_total_time;
    j["truncation_note"] = m.truncation_note;
    return j;
}

LibraryMetadata meta_from_json(const nlohmann::json& j) {
    LibraryMetadata m;
    m.model_family = j.at("model_family").get<std::string>();
    m.control = j.at("control").get<std::map<std::string, double>>();
    m.dims = j.at("dims").get<std::vector<int>>();
    for (const auto& p : j.at("prior"))
        m.prior.push_back({p.at("name").get<std::string>(), p.at("lo").get<double>(),
                           p.at("hi").get<double>()});
    m.n_clicks = j.at("n_clicks").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.draw_mode = j.at("draw_mode").get<std::string>();
    m.dark_rate = j.at("dark_rate").get<double>();
    m.label_legend = j.at("label_legend").get<std::vector<std::string>>();
    auto edges = j.at("histogram_edges").get<std::vector<double>>();
    m.histogram_edges = Eigen::Map<const RVec>(edges.data(), static_cast<Eigen::Index>(edges.size()));
    m.mean_waiting_time = j.at("mean_waiting_time").get<double>();
    m.mean_total_time = j.at("mean_total_time").get<double>();
    m.truncation_note = j.value("truncation_note", "");
    return m;
}

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail(ErrorKind::Io, "truncated library file");
    return v;
}

}  // namespace

std::string LibraryMetadata::id() const {
    return "lib-" + hex64(fnv1a(meta_to_json(*this).dump()));
}

std::vector<SummarySpec> TrajectoryLibrary::default_statistics() const {
    SummarySpec total;
    total.kind = SummaryKind::TotalTime;
    SummarySpec hist;
    hist.kind = SummaryKind::Histogram;
    hist.bin_edges = meta.histogram_edges;
    return {total, hist};
}

void TrajectoryLibrary::recompute_summaries() {
    auto specs = default_statistics();
    for (auto& e : entries) e.summaries = compute_summaries(e.record, specs);
}

void TrajectoryLibrary::save(const std::string& path, bool overwrite) const {
    if (!overwrite && std::filesystem::exists(path))
        fail(ErrorKind::Usage, "refusing to overwrite " + path + " (pass overwrite)");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");

    os.write(kMagic, 4);
    write_pod(os, kVersion);
    std::string meta_json = meta_to_json(meta).dump();
    write_pod(os, static_cast<std::uint64_t>(meta_json.size()));
    os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
    write_pod(os, static_cast<std::uint64_t>(entries.size()));

    auto label_byte = [&](const std::string& label) -> std::uint8_t {
        for (std::size_t i = 0; i < meta.label_legend.size(); ++i)
            if (meta.label_legend[i] == label) return static_cast<std::uint8_t>(i);
        fail(ErrorKind::Io, "record label not in library legend: " + label);
    };

    for (const auto& e : entries) {
        write_pod(os, static_cast<std::uint32_t>(e.theta.values.size()));
        os.write(reinterpret_cast<const char*>(e.theta.values.data()),
                 static_cast<std::streamsize>(sizeof(double) * e.theta.values.size()));
        write_pod(os, static_cast<std::uint32_t>(e.record.clicks()));
        os.write(reinterpret_cast<const char*>(e.record.waiting_times.data()),
                 static_cast<std::streamsize>(sizeof(double) * e.record.clicks()));
        for (const auto& label : e.record.channel_labels) {
            std::uint8_t b = label_byte(label);
            write_pod(os, b);
        }
    }
    if (!os) fail(ErrorKind::Io, "write failure on " + path);
}

TrajectoryLibrary TrajectoryLibrary::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Io, "cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        fail(ErrorKind::Io, path + " is not a PCLB library");
    auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion) fail(ErrorKind::Io, "unsupported PCLB version");

    auto meta_len = read_pod<std::uint64_t>(is);
    std::string meta_json(meta_len, '\0');
    is.read(meta_json.data(), static_cast<std::streamsize>(meta_len));
    if (!is) fail(ErrorKind::Io, "truncated metadata block");

    TrajectoryLibrary lib;
    lib.meta = meta_from_json(nlohmann::json::parse(meta_json));

    auto count = read_pod<std::uint64_t>(is);
    lib.entries.resize(count);
    std::vector<std::string> names;
    for (const auto& p : lib.meta.prior) names.push_back(p.name);
    for (auto& e : lib.entries) {
        auto theta_dim = read_pod<std::uint32_t>(is);
        e.theta.names = names;
        e.theta.values.resize(theta_dim);
        is.read(reinterpret_cast<char*>(e.theta.values.data()), sizeof(double) * theta_dim);
        auto clicks = read_pod<std::uint32_t>(is);
        e.record.waiting_times.resize(clicks);
        is.read(reinterpret_cast<char*>(e.record.waiting_times.data()), sizeof(double) * clicks);
        e.record.channel_labels.resize(clicks);
        double total = 0.0;
        for (auto& label : e.record.channel_labels) {
            auto b = read_pod<std::uint8_t>(is);
            if (b >= lib.meta.label_legend.size())
                fail(ErrorKind::Io, "label byte outside the legend");
            label = lib.meta.label_legend[b];
        }
        for (double w : e.record.waiting_times) total += w;
        e.record.total_time = total;
        if (!is) fail(ErrorKind::Io, "truncated entry block");
    }
    lib.recompute_summaries();
    return lib;
}

TrajectoryLibrary generate_library(const LibraryModelFactory& factory,
                                   const LibraryMetadata& base_meta,
                                   const GenerationConfig& cfg) {
    if (cfg.n_entries < 1 || cfg.n_clicks < 1)
        fail(ErrorKind::Usage, "library generation needs entries and clicks >= 1");
    if (base_meta.prior.empty()) fail(ErrorKind::Usage, "library prior is empty");
    for (const auto& p : base_meta.prior)
        if (!(p.hi > p.lo)) fail(ErrorKind::Usage, "degenerate prior range for " + p.name);

    TrajectoryLibrary lib;
    lib.meta = base_meta;
    lib.meta.n_clicks = cfg.n_clicks;
    lib.meta.seed = cfg.seed;
    lib.meta.draw_mode = cfg.draw_mode;
    lib.meta.dark_rate = cfg.dark_rate;
    lib.entries.resize(cfg.n_entries);

    const auto d = static_cast<Eigen::Index>(base_meta.prior.size());
    auto theta_for = [&](std::size_t idx) {
        ParameterPoint p;
        p.values.resize(d);
        for (const auto& pr : base_meta.prior) p.names.push_back(pr.name);
        if (cfg.draw_mode == "grid") {
            int gp = cfg.grid_points > 1 ? cfg.grid_points : 11;
            std::size_t rem = idx;
            for (Eigen::Index a = 0; a < d; ++a) {
                int cell = static_cast<int>(rem % gp);
                rem /= gp;
                const auto& pr = base_meta.prior[a];
                p.values[a] = pr.lo + (pr.hi - pr.lo) * (cell + 0.5) / gp;
            }
        } else {
            CounterRng rng(cfg.seed ^ 0x74686574616472ull, cfg.stream_offset + idx);
            for (Eigen::Index a = 0; a < d; ++a) {
                const auto& pr = base_meta.prior[a];
                p.values[a] = pr.lo + (pr.hi - pr.lo) * rng.u01();
            }
        }
        return p;
    };

    parallel_for(static_cast<std::size_t>(cfg.n_entries), [&](std::size_t i) {
        LibraryEntry& e = lib.entries[i];
        e.theta = theta_for(i);
        ModelSpec model = factory(e.theta);
        TrajectoryEngine engine(model);
        e.record = engine.sample(cfg.n_clicks, {cfg.seed, cfg.stream_offset + i});
        if (cfg.dark_rate > 0.0)
            e.record = inject_dark_counts(e.record, {cfg.dark_rate},
                                          {cfg.seed ^ 0x6461726bull, cfg.stream_offset + i});
    }, cfg.threads);

    // legend: union of labels in file order of first appearance
    for (const auto& e : lib.entries)
        for (const auto& label : e.record.channel_labels)
            if (std::find(lib.meta.label_legend.begin(), lib.meta.label_legend.end(), label) ==
                lib.meta.label_legend.end())
                lib.meta.label_legend.push_back(label);

    // frozen histogram spec: 99th-percentile waiting time across the library
    std::vector<double> all_waits;
    double total_sum = 0.0, wait_sum = 0.0;
    std::size_t wait_count = 0;
    for (const auto& e : lib.entries) {
        all_waits.insert(all_waits.end(), e.record.waiting_times.begin(),
                         e.record.waiting_times.end());
        total_sum += e.record.total_time;
        for (double w : e.record.waiting_times) wait_sum += w;
        wait_count += e.record.clicks();
    }
    std::sort(all_waits.begin(), all_waits.end());
    double tau99 = all_waits[static_cast<std::size_t>(0.99 * (all_waits.size() - 1))];
    lib.meta.histogram_edges = uniform_histogram_spec(tau99, cfg.histogram_bins).bin_edges;
    lib.meta.mean_waiting_time = wait_sum / static_cast<double>(wait_count);
    lib.meta.mean_total_time = total_sum / static_cast<double>(lib.entries.size());

    lib.recompute_summaries();
    return lib;
}

}  // namespace pclick
