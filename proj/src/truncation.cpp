// truncation.cpp — Fock-truncation adequacy probe

#include <cmath>
#include <sstream>

#include "pclick/posterior.hpp"
#include "pclick/trajectory.hpp"

namespace pclick {

TruncationReport truncation_check(const ModelSpec& model, int n_clicks, int n_probe,
                                  const Numerics& num) {
    if (model.family != "optomech")
        fail(ErrorKind::UnsupportedModel, "truncation_check needs an optomech model");
    if (n_clicks < 1 || n_probe < 1)
        fail(ErrorKind::Usage, "truncation_check needs n_clicks, n_probe >= 1");

    TruncationReport report;
    report.probe_clicks = n_clicks;

    SamplerOptions opts;
    opts.numerics = num;
    opts.numerics.max_sim_time = std::min(num.max_sim_time, 1e5);
    TrajectoryEngine engine(model, opts);

    PhotoclickRecord probe_record;
    bool have_probe = false;
    report.per_subsystem.assign(model.space.subsystem_dims.size(), 0.0);
    for (int k = 0; k < n_probe; ++k) {
        std::vector<double> pops;
        try {
            PhotoclickRecord rec =
                engine.sample_tracked(n_clicks, {0x7472756e63ull, static_cast<std::uint64_t>(k)},
                                      &pops);
            if (!have_probe) {
                probe_record = rec;
                have_probe = true;
            }
        } catch (const Error& e) {
            if (e.kind != ErrorKind::Timeout) throw;
            // dark models keep their population in the initial state; the
            // partial tracking is still valid
        }
        for (std::size_t s = 0; s < pops.size(); ++s)
            report.per_subsystem[s] = std::max(report.per_subsystem[s], pops[s]);
    }
    for (double p : report.per_subsystem)
        report.max_top_population = std::max(report.max_top_population, p);

    bool pop_ok = report.max_top_population < 1e-4;

    bool likelihood_ok = true;
    if (have_probe) {
        const int cav = model.space.subsystem_dims[0];
        const int mech = model.space.subsystem_dims[1];
        std::map<std::string, double> params = model.control;
        params["Delta"] = model.theta.get("Delta");
        ModelSpec enlarged = build_optomech_model(params, cav + 2, mech + 4);

        double base = record_likelihood(model, probe_record);
        PhotoclickRecord relabeled = probe_record;  // labels already match
        double wide = record_likelihood(enlarged, relabeled);
        double scale = std::max(std::abs(base), 1.0);
        report.likelihood_rel_change = std::abs(base - wide) / scale;
        likelihood_ok = report.likelihood_rel_change < 1e-3;
    }

    report.pass = pop_ok && likelihood_ok;
    std::ostringstream os;
    os << "max top-level population " << report.max_top_population
       << (pop_ok ? " < 1e-4" : " >= 1e-4 (leakage)") << "; probe likelihood rel change "
       << report.likelihood_rel_change << (likelihood_ok ? " < 1e-3" : " >= 1e-3");
    report.detail = os.str();
    return report;
}

}  // namespace pclick
