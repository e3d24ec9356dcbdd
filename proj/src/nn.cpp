// nn.cpp — feature frontends, hand-rolled backprop, adaptive-moment training

#include "pclick/nn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "pclick/rng.hpp"

namespace pclick {

namespace {

constexpr double kLeak = 0.01;  // leaky-relu slope

double lrelu(double x) { return x > 0.0 ? x : kLeak * x; }
double lrelu_grad(double x) { return x > 0.0 ? 1.0 : kLeak; }

// ---- weight layout ----------------------------------------------------------

struct Layout {
    bool recurrent = false;
    int H = 0;           // recurrent units
    int in_dim = 0;      // dense-stack input width
    int wf = 0, uf = 0, bf = 0, wh = 0, uh = 0, bh = 0;  // recurrent offsets
    std::vector<int> widths;                // dense widths, head appended
    std::vector<int> w_off, b_off;
    int total = 0;
};

int head_width(const ArchitectureSpec& arch) {
    switch (arch.head) {
        case HeadKind::Point: return arch.target_dim();
        case HeadKind::Gaussian:
            return arch.target_dim() + arch.target_dim() * (arch.target_dim() + 1) / 2;
        case HeadKind::Categorical: return static_cast<int>(arch.grid_values.size());
    }
    return 0;
}

Layout make_layout(const ArchitectureSpec& arch, const Normalization& norm) {
    Layout l;
    int cursor = 0;
    if (arch.frontend == Frontend::SequenceEncoder) {
        l.recurrent = true;
        l.H = arch.recurrent_units;
        l.wf = cursor; cursor += l.H;
        l.uf = cursor; cursor += l.H * l.H;
        l.bf = cursor; cursor += l.H;
        l.wh = cursor; cursor += l.H;
        l.uh = cursor; cursor += l.H * l.H;
        l.bh = cursor; cursor += l.H;
        l.in_dim = l.H;
    } else {
        l.in_dim = static_cast<int>(norm.histogram_edges.size()) + 1;  // counts + total
    }
    l.widths = arch.dense_widths;
    l.widths.push_back(head_width(arch));
    int prev = l.in_dim;
    for (int w : l.widths) {
        l.w_off.push_back(cursor); cursor += w * prev;
        l.b_off.push_back(cursor); cursor += w;
        prev = w;
    }
    l.total = cursor;
    return l;
}

using WMap = Eigen::Map<const RMat>;
using WMapMut = Eigen::Map<RMat>;

// ---- forward/backward caches ------------------------------------------------

struct Forward {
    // recurrent caches (per step)
    std::vector<double> u;
    std::vector<RVec> h, f, g, c;  // h has T+1 entries (h[0] = 0)
    // dense caches
    RVec features;
    std::vector<RVec> pre, post;
    RVec out;
};

RVec histogram_features(const Normalization& norm, const PhotoclickRecord& record) {
    SummarySpec hist;
    hist.kind = SummaryKind::Histogram;
    hist.bin_edges = norm.histogram_edges;
    SummarySpec total;
    total.kind = SummaryKind::TotalTime;
    SummaryVector s = compute_summaries(record, {hist, total});
    RVec x(s.parts[0].size() + 1);
    x.head(s.parts[0].size()) =
        s.parts[0] / static_cast<double>(record.clicks());
    x[x.size() - 1] = s.parts[1][0] / norm.total_scale;
    return x;
}

void forward_pass(const Layout& l, const RVec& w, const Normalization& norm,
                  const PhotoclickRecord& record, Forward& fw) {
    if (l.recurrent) {
        const int T = static_cast<int>(record.clicks());
        const int H = l.H;
        fw.u.resize(T);
        fw.h.assign(T + 1, RVec::Zero(H));
        fw.f.assign(T, RVec(H));
        fw.g.assign(T, RVec(H));
        fw.c.assign(T, RVec(H));
        WMap Uf(w.data() + l.uf, H, H), Uh(w.data() + l.uh, H, H);
        auto Wf = w.segment(l.wf, H), Wh = w.segment(l.wh, H);
        auto bf = w.segment(l.bf, H), bh = w.segment(l.bh, H);
        for (int t = 0; t < T; ++t) {
            fw.u[t] = record.waiting_times[t] / norm.wait_scale;
            RVec a = Wf * fw.u[t] + Uf * fw.h[t] + bf;
            for (int i = 0; i < H; ++i) fw.f[t](i) = 1.0 / (1.0 + std::exp(-a(i)));
            fw.c[t] = fw.f[t].cwiseProduct(fw.h[t]);
            RVec d = Wh * fw.u[t] + Uh * fw.c[t] + bh;
            fw.g[t] = d.array().tanh();
            fw.h[t + 1] =
                (RVec::Ones(H) - fw.f[t]).cwiseProduct(fw.h[t]) + fw.f[t].cwiseProduct(fw.g[t]);
        }
        fw.features = fw.h[T];
    } else {
        fw.features = histogram_features(norm, record);
    }

    const auto nlayers = l.widths.size();
    fw.pre.assign(nlayers, RVec());
    fw.post.assign(nlayers, RVec());
    RVec x = fw.features;
    int prev = l.in_dim;
    for (std::size_t k = 0; k < nlayers; ++k) {
        WMap W(w.data() + l.w_off[k], l.widths[k], prev);
        fw.pre[k] = W * x + w.segment(l.b_off[k], l.widths[k]);
        if (k + 1 < nlayers) {
            fw.post[k] = fw.pre[k].unaryExpr([](double v) { return lrelu(v); });
            x = fw.post[k];
        } else {
            fw.post[k] = fw.pre[k];  // linear head
        }
        prev = l.widths[k];
    }
    fw.out = fw.post.back();
}

// gradient of the scalar loss with respect to every weight, given dL/dout
void backward_pass(const Layout& l, const RVec& w, const Forward& fw, const RVec& dout,
                   RVec& grad) {
    const auto nlayers = l.widths.size();
    RVec delta = dout;
    for (int k = static_cast<int>(nlayers) - 1; k >= 0; --k) {
        if (k + 1 < static_cast<int>(nlayers))
            for (Eigen::Index i = 0; i < delta.size(); ++i)
                delta(i) *= lrelu_grad(fw.pre[k](i));
        const RVec& input = k == 0 ? fw.features : fw.post[k - 1];
        const int prev = static_cast<int>(input.size());
        WMapMut gW(grad.data() + l.w_off[k], l.widths[k], prev);
        gW.noalias() += delta * input.transpose();
        grad.segment(l.b_off[k], l.widths[k]) += delta;
        WMap W(w.data() + l.w_off[k], l.widths[k], prev);
        delta = (W.transpose() * delta).eval();
    }
    if (!l.recurrent) return;

    // backpropagation through time
    const int H = l.H;
    const int T = static_cast<int>(fw.u.size());
    WMap Uf(w.data() + l.uf, H, H), Uh(w.data() + l.uh, H, H);
    WMapMut gUf(grad.data() + l.uf, H, H), gUh(grad.data() + l.uh, H, H);
    RVec dh = delta;  // gradient on h_T
    for (int t = T - 1; t >= 0; --t) {
        const RVec& h_prev = fw.h[t];
        RVec dg = dh.cwiseProduct(fw.f[t]);
        RVec df = dh.cwiseProduct(fw.g[t] - h_prev);
        RVec dd = dg.cwiseProduct(RVec::Ones(H) - fw.g[t].cwiseProduct(fw.g[t]));
        grad.segment(l.wh, H) += dd * fw.u[t];
        grad.segment(l.bh, H) += dd;
        gUh.noalias() += dd * fw.c[t].transpose();
        RVec dc = Uh.transpose() * dd;
        df += dc.cwiseProduct(h_prev);
        RVec da =
            df.cwiseProduct(fw.f[t]).cwiseProduct(RVec::Ones(H) - fw.f[t]);
        grad.segment(l.wf, H) += da * fw.u[t];
        grad.segment(l.bf, H) += da;
        gUf.noalias() += da * h_prev.transpose();
        dh = (RVec::Ones(H) - fw.f[t]).cwiseProduct(dh) + dc.cwiseProduct(fw.f[t]) +
             Uf.transpose() * da;
    }
}

// ---- heads -------------------------------------------------------------------

struct GaussianView {
    RVec mean;
    RMat chol;
};

GaussianView unpack_gaussian(const RVec& out, int d) {
    GaussianView g;
    g.mean = out.head(d);
    g.chol = RMat::Zero(d, d);
    int idx = d;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j, ++idx)
            g.chol(i, j) = (i == j) ? std::exp(out[idx]) : out[idx];
    return g;
}

// loss and dL/dout for one sample at the head, in standardized target space
double head_loss(const ArchitectureSpec& arch, bool nll_standard, const RVec& out,
                 const RVec& truth, int true_bin, RVec& dout,
                 std::uint64_t* clamp_count) {
    switch (arch.head) {
        case HeadKind::Point: {
            RVec r = out - truth;
            dout = 2.0 * r;
            return r.squaredNorm();
        }
        case HeadKind::Gaussian: {
            const int d = arch.target_dim();
            GaussianView g = unpack_gaussian(out, d);
            RVec r = g.mean - truth;
            RVec v = g.chol.triangularView<Eigen::Lower>().solve(r);
            const double q = nll_standard ? 0.5 : 1.0;
            double loss = q * v.squaredNorm();
            for (int i = 0; i < d; ++i) loss += std::log(g.chol(i, i));
            // dL/dmean = 2q A^-T v ; dL/dA = -(dL/dmean) v^T + diag terms
            RVec dmean =
                g.chol.transpose().triangularView<Eigen::Upper>().solve((2.0 * q) * v);
            RMat dA = -dmean * v.transpose();
            dout.setZero(out.size());
            dout.head(d) = dmean;
            int idx = d;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j <= i; ++j, ++idx) {
                    if (i == j)
                        dout[idx] = dA(i, i) * g.chol(i, i) + 1.0;  // exp reparam + logdet
                    else
                        dout[idx] = dA(i, j);
                }
            if (!std::isfinite(loss)) loss = std::numeric_limits<double>::infinity();
            return loss;
        }
        case HeadKind::Categorical: {
            // softmax + cross-entropy
            RVec z = out;
            double zmax = z.maxCoeff();
            RVec q = (z.array() - zmax).exp();
            q /= q.sum();
            double p_true = q[true_bin];
            if (p_true < 1e-30) {
                p_true = 1e-30;
                if (clamp_count) ++(*clamp_count);
            }
            dout = q;
            dout[true_bin] -= 1.0;
            return -std::log(p_true);
        }
    }
    fail(ErrorKind::Usage, "unknown head");
}

int bin_of(const RVec& grid, double value) {
    Eigen::Index best = 0;
    double dist = std::abs(grid[0] - value);
    for (Eigen::Index i = 1; i < grid.size(); ++i) {
        double d = std::abs(grid[i] - value);
        if (d < dist) {
            dist = d;
            best = i;
        }
    }
    return static_cast<int>(best);
}

}  // namespace

int ArchitectureSpec::head_dim() const { return head_width(*this); }

std::string to_string(Frontend f) {
    return f == Frontend::HistogramFeatures ? "histogram" : "sequence";
}
std::string to_string(LossKind l) {
    switch (l) {
        case LossKind::MSE: return "mse";
        case LossKind::NLL: return "nll";
        case LossKind::CE: return "ce";
        case LossKind::MSE_Lambda: return "mse_lambda";
    }
    return "?";
}
std::string to_string(HeadKind h) {
    switch (h) {
        case HeadKind::Point: return "point";
        case HeadKind::Gaussian: return "gaussian";
        case HeadKind::Categorical: return "categorical";
    }
    return "?";
}

// ---- public losses ------------------------------------------------------------

double loss_mse(const RVec& pred, const RVec& truth) {
    if (pred.size() != truth.size()) fail(ErrorKind::ShapeMismatch, "loss_mse size mismatch");
    return (pred - truth).squaredNorm();
}

double loss_nll(const GaussianPrediction& pred, const RVec& truth, bool standard_form) {
    if (pred.mean.size() != truth.size()) fail(ErrorKind::ShapeMismatch, "loss_nll size mismatch");
    RVec r = pred.mean - truth;
    RVec v = pred.chol.triangularView<Eigen::Lower>().solve(r);
    double quad = (standard_form ? 0.5 : 1.0) * v.squaredNorm();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < pred.chol.rows(); ++i) logdet += std::log(pred.chol(i, i));
    double loss = quad + logdet;  // logdet = (1/2) ln|Sigma|
    if (!std::isfinite(loss)) fail(ErrorKind::Numerics, "non-finite NLL");
    return loss;
}

double loss_ce(const RVec& probs, int true_bin) {
    if (true_bin < 0 || true_bin >= probs.size()) fail(ErrorKind::ShapeMismatch, "bad bin");
    double p = std::max(probs[true_bin], 1e-30);
    return -std::log(p);
}

double loss_mse_lambda(const std::vector<RVec>& preds, const RVec& truth, double lambda) {
    if (preds.empty()) fail(ErrorKind::Usage, "empty bucket");
    if (preds.size() == 1) return loss_mse(preds[0], truth);  // singleton fallback
    RVec mean = RVec::Zero(truth.size());
    for (const auto& p : preds) mean += p;
    mean /= static_cast<double>(preds.size());
    double var = 0.0;
    for (const auto& p : preds) var += (p - mean).squaredNorm();
    var /= static_cast<double>(preds.size());
    return lambda * var + (mean - truth).squaredNorm();
}

// ---- model io -------------------------------------------------------------------

namespace {

nlohmann::json arch_to_json(const NeuralModel& m) {
    nlohmann::json j;
    j["frontend"] = to_string(m.arch.frontend);
    j["recurrent_units"] = m.arch.recurrent_units;
    j["dense_widths"] = m.arch.dense_widths;
    j["head"] = to_string(m.arch.head);
    j["target_names"] = m.arch.target_names;
    j["grid_values"] = std::vector<double>(m.arch.grid_values.data(),
                                           m.arch.grid_values.data() + m.arch.grid_values.size());
    j["loss"] = to_string(m.loss);
    j["nll_standard_form"] = m.nll_standard_form;
    j["wait_scale"] = m.norm.wait_scale;
    j["total_scale"] = m.norm.total_scale;
    j["n_clicks"] = m.norm.n_clicks;
    j["histogram_edges"] = std::vector<double>(
        m.norm.histogram_edges.data(),
        m.norm.histogram_edges.data() + m.norm.histogram_edges.size());
    j["target_offset"] = std::vector<double>(m.target_offset.data(),
                                             m.target_offset.data() + m.target_offset.size());
    j["target_scale"] = std::vector<double>(m.target_scale.data(),
                                            m.target_scale.data() + m.target_scale.size());
    return j;
}

RVec vec_from(const std::vector<double>& v) {
    return Eigen::Map<const RVec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void NeuralModel::save(const std::string& path, bool overwrite) const {
    if (!overwrite && std::filesystem::exists(path))
        fail(ErrorKind::Usage, "refusing to overwrite " + path);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot open " + path);
    os.write("PCNM", 4);
    std::uint32_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 4);
    std::string header = arch_to_json(*this).dump();
    std::uint64_t hlen = header.size();
    os.write(reinterpret_cast<const char*>(&hlen), 8);
    os.write(header.data(), static_cast<std::streamsize>(hlen));
    std::uint64_t nw = weights.size();
    os.write(reinterpret_cast<const char*>(&nw), 8);
    os.write(reinterpret_cast<const char*>(weights.data()),
             static_cast<std::streamsize>(8 * nw));
    if (!os) fail(ErrorKind::Io, "write failure on " + path);
}

NeuralModel NeuralModel::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Io, "cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "PCNM") fail(ErrorKind::Io, "not a model file");
    std::uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) fail(ErrorKind::Io, "unsupported model version");
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 8);
    std::string header(hlen, '\0');
    is.read(header.data(), static_cast<std::streamsize>(hlen));
    auto j = nlohmann::json::parse(header);

    NeuralModel m;
    m.arch.frontend = j.at("frontend") == "sequence" ? Frontend::SequenceEncoder
                                                     : Frontend::HistogramFeatures;
    m.arch.recurrent_units = j.at("recurrent_units").get<int>();
    m.arch.dense_widths = j.at("dense_widths").get<std::vector<int>>();
    std::string head = j.at("head");
    m.arch.head = head == "point" ? HeadKind::Point
                  : head == "gaussian" ? HeadKind::Gaussian
                                       : HeadKind::Categorical;
    m.arch.target_names = j.at("target_names").get<std::vector<std::string>>();
    m.arch.grid_values = vec_from(j.at("grid_values").get<std::vector<double>>());
    std::string loss = j.at("loss");
    m.loss = loss == "mse" ? LossKind::MSE
             : loss == "nll" ? LossKind::NLL
             : loss == "ce" ? LossKind::CE
                            : LossKind::MSE_Lambda;
    m.nll_standard_form = j.at("nll_standard_form").get<bool>();
    m.norm.wait_scale = j.at("wait_scale").get<double>();
    m.norm.total_scale = j.at("total_scale").get<double>();
    m.norm.n_clicks = j.at("n_clicks").get<int>();
    m.norm.histogram_edges = vec_from(j.at("histogram_edges").get<std::vector<double>>());
    m.target_offset = vec_from(j.at("target_offset").get<std::vector<double>>());
    m.target_scale = vec_from(j.at("target_scale").get<std::vector<double>>());

    std::uint64_t nw = 0;
    is.read(reinterpret_cast<char*>(&nw), 8);
    m.weights.resize(static_cast<Eigen::Index>(nw));
    is.read(reinterpret_cast<char*>(m.weights.data()), static_cast<std::streamsize>(8 * nw));
    if (!is) fail(ErrorKind::Io, "truncated model file");
    return m;
}

// ---- inference -------------------------------------------------------------------

namespace {

void check_record(const NeuralModel& m, const PhotoclickRecord& record) {
    record.validate();
    if (record.clicks() == 0) fail(ErrorKind::ShapeMismatch, "empty record");
    if (m.norm.n_clicks > 0 &&
        record.clicks() != static_cast<std::size_t>(m.norm.n_clicks))
        fail(ErrorKind::ShapeMismatch,
             "record length " + std::to_string(record.clicks()) +
                 " does not match the model's training length " +
                 std::to_string(m.norm.n_clicks));
}

RVec raw_output(const NeuralModel& m, const PhotoclickRecord& record) {
    Layout l = make_layout(m.arch, m.norm);
    if (m.weights.size() != l.total)
        fail(ErrorKind::ShapeMismatch, "weight vector does not match the architecture");
    Forward fw;
    forward_pass(l, m.weights, m.norm, record, fw);
    return fw.out;
}

}  // namespace

RVec extract_features(const NeuralModel& model, const PhotoclickRecord& record) {
    check_record(model, record);
    if (model.arch.frontend == Frontend::HistogramFeatures)
        return histogram_features(model.norm, record);
    return sequence_encoder_forward(model, record);
}

RVec sequence_encoder_forward(const NeuralModel& model, const PhotoclickRecord& record) {
    if (model.arch.frontend != Frontend::SequenceEncoder)
        fail(ErrorKind::Usage, "model has no sequence encoder");
    record.validate();
    Layout l = make_layout(model.arch, model.norm);
    Forward fw;
    forward_pass(l, model.weights, model.norm, record, fw);
    return fw.features;
}

ParameterPoint predict_point(const NeuralModel& model, const PhotoclickRecord& record) {
    check_record(model, record);
    RVec out = raw_output(model, record);
    ParameterPoint p;
    p.names = model.arch.target_names;
    if (model.arch.head == HeadKind::Point || model.arch.head == HeadKind::Gaussian) {
        const int d = model.arch.target_dim();
        p.values = out.head(d).cwiseProduct(model.target_scale) + model.target_offset;
    } else {
        fail(ErrorKind::Usage, "categorical models expose point estimates via the posterior");
    }
    return p;
}

GaussianPrediction predict_gaussian(const NeuralModel& model, const PhotoclickRecord& record) {
    if (model.arch.head != HeadKind::Gaussian)
        fail(ErrorKind::Usage, "model has no gaussian head");
    check_record(model, record);
    RVec out = raw_output(model, record);
    GaussianView g = unpack_gaussian(out, model.arch.target_dim());
    GaussianPrediction pred;
    pred.mean = g.mean.cwiseProduct(model.target_scale) + model.target_offset;
    pred.chol = model.target_scale.asDiagonal() * g.chol;
    return pred;
}

PosteriorGrid predict_posterior(const NeuralModel& model, const PhotoclickRecord& record) {
    if (model.arch.head != HeadKind::Categorical)
        fail(ErrorKind::Usage, "model has no categorical head");
    check_record(model, record);
    RVec z = raw_output(model, record);
    double zmax = z.maxCoeff();
    RVec q = (z.array() - zmax).exp();
    q /= q.sum();
    PosteriorGrid grid;
    grid.axes = {GridAxis{model.arch.target_names[0], model.arch.grid_values}};
    grid.weights = q;
    grid.log_evidence = 0.0;
    return grid;
}

double loss_and_gradient(const NeuralModel& model, const PhotoclickRecord& record,
                         const RVec& truth_standardized, RVec& grad) {
    Layout l = make_layout(model.arch, model.norm);
    if (model.weights.size() != l.total)
        fail(ErrorKind::ShapeMismatch, "weight vector does not match the architecture");
    Forward fw;
    forward_pass(l, model.weights, model.norm, record, fw);
    int true_bin = 0;
    if (model.arch.head == HeadKind::Categorical) {
        double raw = truth_standardized[0] * model.target_scale[0] + model.target_offset[0];
        true_bin = bin_of(model.arch.grid_values, raw);
    }
    RVec dout;
    double loss = head_loss(model.arch, model.nll_standard_form, fw.out, truth_standardized,
                            true_bin, dout, nullptr);
    grad.setZero(l.total);
    backward_pass(l, model.weights, fw, dout, grad);
    return loss;
}

// ---- training -------------------------------------------------------------------

NeuralModel train(const TrajectoryLibrary& library, const ArchitectureSpec& arch,
                  LossKind loss, const TrainConfig& cfg, TrainingCurve* curve) {
    if (library.size() < 10) fail(ErrorKind::Usage, "library too small to train on");
    if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 0.5))
        fail(ErrorKind::Usage, "validation fraction must lie in (0, 0.5)");
    if (cfg.lambda_bias < 0.0 || cfg.lambda_bias > 1.0)
        fail(ErrorKind::Usage, "lambda must lie in [0, 1]");
    if (arch.target_names.empty()) fail(ErrorKind::Usage, "no target names configured");
    if (arch.head == HeadKind::Categorical && arch.grid_values.size() < 2)
        fail(ErrorKind::Usage, "categorical head needs a grid");

    NeuralModel model;
    model.arch = arch;
    model.loss = loss;
    model.nll_standard_form = cfg.nll_standard_form;
    model.norm.histogram_edges = library.meta.histogram_edges;
    model.norm.wait_scale = library.meta.mean_waiting_time;
    model.norm.total_scale = library.meta.mean_total_time;
    model.norm.n_clicks = library.meta.dark_rate > 0.0 ? 0 : library.meta.n_clicks;

    const auto n = library.size();
    const int d = arch.target_dim();

    // standardized targets
    RMat targets(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a)
            targets(static_cast<Eigen::Index>(i), a) =
                library.entries[i].theta.get(arch.target_names[a]);
    model.target_offset = targets.colwise().mean();
    model.target_scale.resize(d);
    for (int a = 0; a < d; ++a) {
        double var = (targets.col(a).array() - model.target_offset[a]).square().mean();
        model.target_scale[a] = std::max(std::sqrt(var), 1e-12);
    }
    RMat std_targets = (targets.rowwise() - model.target_offset.transpose()) *
                       model.target_scale.cwiseInverse().asDiagonal();

    // validation split
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng split_rng(cfg.seed, 0xa11c);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[split_rng.next_u64() % i]);
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                           cfg.validation_fraction * n));
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
    std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());

    // weight init
    Layout l = make_layout(arch, model.norm);
    model.weights.resize(l.total);
    CounterRng init_rng(cfg.seed, 0x1317);
    auto init_block = [&](int off, int rows, int cols) {
        double scale = 1.0 / std::sqrt(static_cast<double>(std::max(cols, 1)));
        for (int k = 0; k < rows * cols; ++k)
            model.weights[off + k] = scale * init_rng.normal();
    };
    model.weights.setZero();
    if (l.recurrent) {
        init_block(l.wf, l.H, 1);
        init_block(l.uf, l.H, l.H);
        init_block(l.wh, l.H, 1);
        init_block(l.uh, l.H, l.H);
    }
    int prev = l.in_dim;
    for (std::size_t k = 0; k < l.widths.size(); ++k) {
        init_block(l.w_off[k], l.widths[k], prev);
        prev = l.widths[k];
    }

    // MSE_lambda buckets: group by the discretized target (first component)
    std::map<int, std::vector<std::size_t>> buckets;
    RVec bucket_grid;
    if (loss == LossKind::MSE_Lambda) {
        bucket_grid = arch.grid_values.size() >= 2
                          ? arch.grid_values
                          : RVec(RVec::LinSpaced(101, targets.col(0).minCoeff(),
                                                 targets.col(0).maxCoeff()));
        for (std::size_t i : train_idx)
            buckets[bin_of(bucket_grid, targets(static_cast<Eigen::Index>(i), 0))].push_back(i);
    }

    RVec adam_m = RVec::Zero(l.total), adam_v = RVec::Zero(l.total);
    std::uint64_t adam_t = 0;
    RVec grad(l.total), sample_grad(l.total), dout;
    Forward fw;
    TrainingCurve local_curve;
    TrainingCurve& tc = curve ? *curve : local_curve;

    auto truth_of = [&](std::size_t i) { return std_targets.row(static_cast<Eigen::Index>(i)).transpose(); };
    auto bin_true = [&](std::size_t i) {
        return arch.head == HeadKind::Categorical
                   ? bin_of(arch.grid_values, targets(static_cast<Eigen::Index>(i), 0))
                   : 0;
    };

    auto eval_loss = [&](const std::vector<std::size_t>& idx) {
        if (loss == LossKind::MSE_Lambda) {
            std::map<int, std::vector<RVec>> pred_buckets;
            std::map<int, RVec> truth_buckets;
            for (std::size_t i : idx) {
                forward_pass(l, model.weights, model.norm, library.entries[i].record, fw);
                int b = bin_of(bucket_grid, targets(static_cast<Eigen::Index>(i), 0));
                pred_buckets[b].push_back(fw.out);
                truth_buckets[b] = truth_of(i);
            }
            double acc = 0.0;
            for (auto& [b, preds] : pred_buckets) {
                if (preds.size() == 1) ++tc.singleton_buckets;
                acc += loss_mse_lambda(preds, truth_buckets[b], cfg.lambda_bias) * preds.size();
            }
            return acc / static_cast<double>(idx.size());
        }
        double acc = 0.0;
        for (std::size_t i : idx) {
            forward_pass(l, model.weights, model.norm, library.entries[i].record, fw);
            acc += head_loss(arch, cfg.nll_standard_form, fw.out, truth_of(i), bin_true(i),
                             dout, nullptr);
        }
        return acc / static_cast<double>(idx.size());
    };

    auto adam_step = [&](const RVec& g) {
        ++adam_t;
        adam_m = cfg.beta1 * adam_m + (1.0 - cfg.beta1) * g;
        adam_v = cfg.beta2 * adam_v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
        for (Eigen::Index k = 0; k < model.weights.size(); ++k)
            model.weights[k] -= cfg.learning_rate * (adam_m[k] / bc1) /
                                (std::sqrt(adam_v[k] / bc2) + 1e-8);
    };

    RVec best_weights = model.weights;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1, stale = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        CounterRng epoch_rng(cfg.seed, 0xe000 + static_cast<std::uint64_t>(epoch));
        double train_acc = 0.0;
        std::size_t train_count = 0;
        bool bad = false;

        if (loss == LossKind::MSE_Lambda) {
            std::vector<int> keys;
            for (auto& [b, v] : buckets) keys.push_back(b);
            for (std::size_t i = keys.size(); i > 1; --i)
                std::swap(keys[i - 1], keys[epoch_rng.next_u64() % i]);
            std::vector<int> batch;
            std::size_t batch_n = 0;
            auto flush = [&]() {
                if (batch.empty()) return;
                grad.setZero();
                double batch_loss = 0.0;
                std::size_t count = 0;
                for (int b : keys) {
                    if (std::find(batch.begin(), batch.end(), b) == batch.end()) continue;
                    auto& idxs = buckets[b];
                    std::vector<Forward> fws(idxs.size());
                    RVec mean = RVec::Zero(head_width(arch));
                    for (std::size_t k = 0; k < idxs.size(); ++k) {
                        forward_pass(l, model.weights, model.norm,
                                     library.entries[idxs[k]].record, fws[k]);
                        mean += fws[k].out;
                    }
                    mean /= static_cast<double>(idxs.size());
                    RVec truth = truth_of(idxs[0]);
                    double kk = static_cast<double>(idxs.size());
                    if (idxs.size() == 1) ++tc.singleton_buckets;
                    for (std::size_t k = 0; k < idxs.size(); ++k) {
                        RVec dk;
                        if (idxs.size() == 1) {
                            dk = 2.0 * (fws[k].out - truth);
                            batch_loss += (fws[k].out - truth).squaredNorm();
                        } else {
                            dk = cfg.lambda_bias * 2.0 * (fws[k].out - mean) / kk +
                                 2.0 * (mean - truth) / kk;
                        }
                        sample_grad.setZero();
                        backward_pass(l, model.weights, fws[k], dk, sample_grad);
                        grad += sample_grad;
                    }
                    if (idxs.size() > 1) {
                        std::vector<RVec> preds;
                        for (auto& f : fws) preds.push_back(f.out);
                        batch_loss +=
                            loss_mse_lambda(preds, truth, cfg.lambda_bias) * kk;
                    }
                    count += idxs.size();
                }
                grad /= static_cast<double>(std::max<std::size_t>(count, 1));
                adam_step(grad);
                train_acc += batch_loss;
                train_count += count;
                batch.clear();
                batch_n = 0;
            };
            for (int b : keys) {
                batch.push_back(b);
                batch_n += buckets[b].size();
                if (batch_n >= static_cast<std::size_t>(cfg.batch_size)) flush();
            }
            flush();
        } else {
            std::vector<std::size_t> idx = train_idx;
            for (std::size_t i = idx.size(); i > 1; --i)
                std::swap(idx[i - 1], idx[epoch_rng.next_u64() % i]);
            for (std::size_t start = 0; start < idx.size();
                 start += static_cast<std::size_t>(cfg.batch_size)) {
                std::size_t stop =
                    std::min(idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
                grad.setZero();
                double batch_loss = 0.0;
                for (std::size_t k = start; k < stop; ++k) {
                    std::size_t i = idx[k];
                    forward_pass(l, model.weights, model.norm, library.entries[i].record, fw);
                    double li = head_loss(arch, cfg.nll_standard_form, fw.out, truth_of(i),
                                          bin_true(i), dout, &tc.clamped_ce_outputs);
                    batch_loss += li;
                    sample_grad.setZero();
                    backward_pass(l, model.weights, fw, dout, sample_grad);
                    grad += sample_grad;
                }
                grad /= static_cast<double>(stop - start);
                if (!grad.allFinite() || !std::isfinite(batch_loss)) {
                    bad = true;
                    break;
                }
                adam_step(grad);
                train_acc += batch_loss;
                train_count += stop - start;
            }
        }

        double train_loss = train_acc / static_cast<double>(std::max<std::size_t>(train_count, 1));
        double val_loss = eval_loss(val_idx);
        tc.train_loss.push_back(train_loss);
        tc.val_loss.push_back(val_loss);
        if (bad || !std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            tc.diverged = true;
            break;
        }
        if (val_loss < best_val - 1e-12) {
            best_val = val_loss;
            best_weights = model.weights;
            best_epoch = epoch;
            stale = 0;
        } else if (++stale > cfg.patience) {
            break;
        }
    }
    model.weights = best_weights;
    tc.best_epoch = best_epoch;
    return model;
}

}  // namespace pclick
