// nn.hpp — Minimal trainable networks for likelihood-free inference:
// point regression (MSE), probabilistic regression (Gaussian NLL via a
// Cholesky-parametrized covariance), grid classification (cross-entropy),
// and the bias-weighted MSE_lambda variant. Two feature frontends: a
// histogram layer sharing the ABC bin spec, and an order-sensitive gated
// recurrent encoder trained by backpropagation through time.

#pragma once

#include <string>
#include <vector>

#include "pclick/library.hpp"
#include "pclick/posterior.hpp"

namespace pclick {

enum class Frontend { HistogramFeatures, SequenceEncoder };
enum class LossKind { MSE, NLL, CE, MSE_Lambda };
enum class HeadKind { Point, Gaussian, Categorical };

std::string to_string(Frontend f);
std::string to_string(LossKind l);
std::string to_string(HeadKind h);

struct ArchitectureSpec {
    Frontend frontend = Frontend::HistogramFeatures;
    int recurrent_units = 40;             // sequence encoder width
    std::vector<int> dense_widths = {64, 16};
    HeadKind head = HeadKind::Point;
    std::vector<std::string> target_names;  // predicted theta components
    RVec grid_values;                       // categorical head: cell centers

    int target_dim() const { return static_cast<int>(target_names.size()); }
    int head_dim() const;  // raw network output width
};

struct Normalization {
    double wait_scale = 1.0;   // divides waiting times (sequence input)
    double total_scale = 1.0;  // divides the total time feature
    RVec histogram_edges;      // histogram frontend bins (from the library)
    int n_clicks = 0;          // training record length
};

struct GaussianPrediction {
    RVec mean;
    RMat chol;  // lower triangular, positive diagonal
    RMat covariance() const { return chol * chol.transpose(); }
};

struct NeuralModel {
    ArchitectureSpec arch;
    LossKind loss = LossKind::MSE;
    bool nll_standard_form = false;  // 1/2-weighted quadratic when true
    Normalization norm;
    RVec target_offset, target_scale;  // output standardization
    RVec weights;

    void save(const std::string& path, bool overwrite = false) const;
    static NeuralModel load(const std::string& path);
};

struct TrainConfig {
    int epochs = 500;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9, beta2 = 0.999;  // adaptive-moment parameters
    std::uint64_t seed = 1;
    double validation_fraction = 0.1;
    double lambda_bias = 0.8;  // MSE_lambda weighting
    int patience = 20;
    bool nll_standard_form = false;
};

struct TrainingCurve {
    std::vector<double> train_loss, val_loss;
    int best_epoch = -1;
    bool diverged = false;
    std::uint64_t clamped_ce_outputs = 0;   // zero-probability warnings
    std::uint64_t singleton_buckets = 0;    // MSE_lambda fallback warnings
};

// ---- losses (exposed for direct tests and gradient checks) ---------------

double loss_mse(const RVec& pred, const RVec& truth);
// paper-form NLL: r^T Sigma^-1 r + (1/2) ln|Sigma|; standard form halves the
// quadratic term
double loss_nll(const GaussianPrediction& pred, const RVec& truth, bool standard_form);
double loss_ce(const RVec& probs, int true_bin);
// lambda * Var(preds) + (mean pred - truth)^2 for a same-truth bucket
double loss_mse_lambda(const std::vector<RVec>& preds, const RVec& truth, double lambda);

// ---- training and inference ----------------------------------------------

NeuralModel train(const TrajectoryLibrary& library, const ArchitectureSpec& arch,
                  LossKind loss, const TrainConfig& cfg, TrainingCurve* curve = nullptr);

RVec extract_features(const NeuralModel& model, const PhotoclickRecord& record);
ParameterPoint predict_point(const NeuralModel& model, const PhotoclickRecord& record);
GaussianPrediction predict_gaussian(const NeuralModel& model, const PhotoclickRecord& record);
PosteriorGrid predict_posterior(const NeuralModel& model, const PhotoclickRecord& record);

// final hidden state of the recurrent encoder (unit tests, PCA diagnostics)
RVec sequence_encoder_forward(const NeuralModel& model, const PhotoclickRecord& record);

// raw network output and gradient of the configured loss with respect to
// every weight; the finite-difference oracle in the test suite checks this.
double loss_and_gradient(const NeuralModel& model, const PhotoclickRecord& record,
                         const RVec& truth_standardized, RVec& grad);

}  // namespace pclick
