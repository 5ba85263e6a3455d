#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tplscan/features.hpp"

namespace tplscan {

// Structure2vec graph encoder shared by both sides of the Siamese setup.
// One message-passing round per node v:
//   mu_v <- tanh(W1 * x_v + P1 * relu(P2 * sum_{u in N(v)} mu_u))
// with N(v) the undirected block neighborhood and node states initialized to
// zero. x_v is the block attribute vector compressed elementwise with
// log1p, keeping large instruction counts inside tanh's responsive range.
// The graph vector is W2 * sum_v mu_v, L2-normalized at emission.
struct EmbeddingModel {
    int input_dim = kBlockAttrCount;  // d
    int embed_dim = 64;               // p
    int iterations = 5;               // T
    std::uint64_t seed = 0;

    Eigen::MatrixXd w_input;    // p x d
    Eigen::MatrixXd mlp_outer;  // p x p
    Eigen::MatrixXd mlp_inner;  // p x p
    Eigen::MatrixXd w_output;   // p x p

    // Uniform init in [-1/sqrt(p), 1/sqrt(p)], seeded.
    static EmbeddingModel initialize(int embed_dim, int iterations,
                                     std::uint64_t seed,
                                     int input_dim = kBlockAttrCount);

    void save(const std::string& path) const;
    static EmbeddingModel load(const std::string& path);
};

// Bit-exact parameter comparison.
bool models_identical(const EmbeddingModel& a, const EmbeddingModel& b);

struct FunctionVector {
    std::string function_id;
    std::string unit_id;
    Eigen::VectorXd vector;  // unit L2 norm
};

// Deterministic forward pass; throws ShapeError on an attribute-count
// mismatch and DomainError when the graph vector degenerates to zero
// (forced at T = 0 by the zero initialization).
Eigen::VectorXd embed_acfg(const Acfg& acfg, const EmbeddingModel& model);

// Throws DomainError on a zero vector.
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct TrainingPair {
    Acfg first;
    Acfg second;
    int label = 1;  // +1 similar, -1 dissimilar
};

// Sum over pairs of 1/2 (1+Y)(1-S)^2 + 1/2 (1-Y)(1+S)^2, S = cosine of the
// two embeddings. Each pair contributes a value in [0, 4].
double contrastive_loss(std::span<const TrainingPair> pairs,
                        const EmbeddingModel& model);

struct ModelGradient {
    Eigen::MatrixXd w_input;
    Eigen::MatrixXd mlp_outer;
    Eigen::MatrixXd mlp_inner;
    Eigen::MatrixXd w_output;

    static ModelGradient zeros(const EmbeddingModel& model);
    void add_scaled(const ModelGradient& other, double scale);
    double squared_norm() const;
};

// Exact analytic gradient of contrastive_loss w.r.t. every parameter matrix.
// Returns the loss value as well.
double loss_gradient(std::span<const TrainingPair> pairs,
                     const EmbeddingModel& model, ModelGradient& grad);

struct TrainConfig {
    int epochs = 40;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double validation_fraction = 0.1;
    std::uint64_t seed = 1;
    int embed_dim = 64;
    int iterations = 5;
};

struct TrainResult {
    EmbeddingModel model;  // checkpoint with the best validation loss
    std::vector<double> train_losses;
    std::vector<double> validation_losses;
};

// Adam on the contrastive loss; deterministic under cfg.seed. Throws
// ConfigError when the dataset does not contain both labels. When
// warm_start is given its weights seed the optimization instead of a
// fresh initialization (its dimensions override cfg.embed_dim /
// cfg.iterations).
TrainResult train(const std::vector<TrainingPair>& dataset,
                  const TrainConfig& cfg,
                  const EmbeddingModel* warm_start = nullptr);

}  // namespace tplscan
